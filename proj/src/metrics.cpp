#include "helioflux/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <stdexcept>

namespace helioflux {

double surface_mae(const HeliostatSurface& a, const HeliostatSurface& b) {
  double total = 0.0;
  for (std::size_t k = 0; k < a.facets.size(); ++k) {
    double facet = 0.0;
    for (std::size_t n = 0; n < kControlPoints; ++n) facet += std::abs(a.facets[k].control_z[n] - b.facets[k].control_z[n]);
    total += facet / kControlPoints;
  }
  return total / static_cast<double>(a.facets.size());
}

double surface_ssim(const HeliostatSurface& a, const HeliostatSurface& b, const SsimConstants& k) {
  if (!(k.dynamic_range > 0.0)) throw std::invalid_argument("SSIM dynamic range must be positive");
  constexpr double n = kFacetCount * kControlPoints;
  double ma = 0.0, mb = 0.0;
  for (std::size_t f = 0; f < kFacetCount; ++f)
    for (std::size_t i = 0; i < kControlPoints; ++i) {
      ma += a.facets[f].control_z[i];
      mb += b.facets[f].control_z[i];
    }
  ma /= n;
  mb /= n;
  double va = 0.0, vb = 0.0, cov = 0.0;
  for (std::size_t f = 0; f < kFacetCount; ++f)
    for (std::size_t i = 0; i < kControlPoints; ++i) {
      const double da = a.facets[f].control_z[i] - ma;
      const double db = b.facets[f].control_z[i] - mb;
      va += da * da;
      vb += db * db;
      cov += da * db;
    }
  va /= n;
  vb /= n;
  cov /= n;
  const double c1 = k.c1(), c2 = k.c2();
  return ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
}

SsimClass ssim_band(double s) {
  SsimBand band;
  if (s >= 0.75)
    band = SsimBand::kVeryHigh;
  else if (s >= 0.5)
    band = SsimBand::kHigh;
  else if (s >= 0.25)
    band = SsimBand::kMedium;
  else if (s > -0.25)
    band = SsimBand::kNone;
  else
    band = SsimBand::kNegative;
  return {band, s < 0.25};
}

std::string band_label(SsimBand band) {
  switch (band) {
    case SsimBand::kVeryHigh: return "very_high";
    case SsimBand::kHigh: return "high";
    case SsimBand::kMedium: return "medium";
    case SsimBand::kNone: return "none";
    case SsimBand::kNegative: return "negative";
  }
  return "none";
}

double flux_accuracy(const std::vector<double>& p, const std::vector<double>& r) {
  if (p.size() != r.size()) throw GeometryMismatch("flux_accuracy: grid sizes differ");
  double sp = 0.0, sr = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    sp += p[i];
    sr += r[i];
  }
  if (!(sp > 0.0) || !(sr > 0.0)) throw std::domain_error("flux_accuracy: empty flux image");
  double tv = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) tv += std::abs(p[i] / sp - r[i] / sr);
  return std::clamp(1.0 - 0.5 * tv, 0.0, 1.0);
}

double flux_accuracy(const FluxImage& pred, const FluxImage& ref) {
  if (pred.geometry != ref.geometry || pred.width != ref.width || pred.height != ref.height)
    throw GeometryMismatch("flux_accuracy: images do not share geometry");
  return flux_accuracy(std::vector<double>(pred.raw.begin(), pred.raw.end()),
                       std::vector<double>(ref.raw.begin(), ref.raw.end()));
}

SummaryStats summarize(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("summarize: no values");
  std::sort(v.begin(), v.end());
  auto q = [&](double p) {
    const double pos = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  SummaryStats s;
  s.min = v.front();
  s.max = v.back();
  s.q1 = q(0.25);
  s.median = q(0.5);
  s.q3 = q(0.75);
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  return s;
}

std::vector<DistanceBin> distance_trend(const std::vector<HeliostatScore>& scores, double width) {
  if (!(width > 0.0)) throw std::invalid_argument("distance_trend: bin width must be positive");
  std::map<long, std::pair<std::vector<double>, std::vector<double>>> bins;
  for (const auto& s : scores) {
    auto& b = bins[static_cast<long>(std::floor(s.distance / width))];
    b.first.push_back(s.mae);
    b.second.push_back(s.ssim);
  }
  std::vector<DistanceBin> out;
  for (const auto& [k, vals] : bins) {
    DistanceBin b;
    b.lo = static_cast<double>(k) * width;
    b.hi = b.lo + width;
    b.count = vals.first.size();
    b.mae = summarize(vals.first);
    b.ssim = summarize(vals.second);
    out.push_back(b);
  }
  return out;
}

std::string fmt_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

namespace {

void stats_cells(std::ostream& out, const SummaryStats& s) {
  out << fmt_num(s.min) << ',' << fmt_num(s.q1) << ',' << fmt_num(s.median) << ',' << fmt_num(s.mean) << ','
      << fmt_num(s.q3) << ',' << fmt_num(s.max);
}

}  // namespace

void write_distance_trend_csv(std::ostream& out, const std::vector<DistanceBin>& bins) {
  out << "bin_lo_m,bin_hi_m,count,mae_min,mae_q1,mae_median,mae_mean,mae_q3,mae_max,"
         "ssim_min,ssim_q1,ssim_median,ssim_mean,ssim_q3,ssim_max\n";
  for (const auto& b : bins) {
    out << fmt_num(b.lo) << ',' << fmt_num(b.hi) << ',' << b.count << ',';
    stats_cells(out, b.mae);
    out << ',';
    stats_cells(out, b.ssim);
    out << '\n';
  }
}

void write_evaluation_csv(std::ostream& out, const std::vector<EvaluationRow>& rows) {
  out << "sample,heliostat_id,distance_m,mae_mm,ssim,band,flux_acc_target,flux_acc_receiver,baseline_mae_mm,"
         "flux_acc_ideal_receiver\n";
  for (const auto& r : rows)
    out << r.sample << ',' << r.heliostat_id << ',' << fmt_num(r.distance) << ',' << fmt_num(r.mae) << ',' << fmt_num(r.ssim) << ','
        << band_label(ssim_band(r.ssim).band) << ',' << fmt_num(r.flux_acc_target) << ','
        << fmt_num(r.flux_acc_receiver) << ',' << fmt_num(r.baseline_mae) << ','
        << fmt_num(r.flux_acc_ideal_receiver) << '\n';
}

void print_summary_table(std::ostream& out, const std::vector<std::pair<std::string, SummaryStats>>& rows) {
  std::size_t w = 6;
  for (const auto& r : rows) w = std::max(w, r.first.size());
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s %9s %9s %9s %9s %9s %9s\n", static_cast<int>(w), "", "min", "q1", "median",
                "mean", "q3", "max");
  out << buf;
  for (const auto& [label, s] : rows) {
    std::snprintf(buf, sizeof buf, "%-*s %9.4f %9.4f %9.4f %9.4f %9.4f %9.4f\n", static_cast<int>(w), label.c_str(),
                  s.min, s.q1, s.median, s.mean, s.q3, s.max);
    out << buf;
  }
}

}  // namespace helioflux
