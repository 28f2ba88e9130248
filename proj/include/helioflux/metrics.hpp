#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "helioflux/flux_image.hpp"
#include "helioflux/nurbs.hpp"

namespace helioflux {

/// Mean over facets of the per-facet mean absolute control-point error, mm.
double surface_mae(const HeliostatSurface& a, const HeliostatSurface& b);

struct SsimConstants {
  double dynamic_range = 5.0;  // mm
  double c1() const { return (0.01 * dynamic_range) * (0.01 * dynamic_range); }
  double c2() const { return (0.03 * dynamic_range) * (0.03 * dynamic_range); }
};

/// Global SSIM over all 256 control points, population moments.
double surface_ssim(const HeliostatSurface& a, const HeliostatSurface& b, const SsimConstants& k = {});

enum class SsimBand { kVeryHigh, kHigh, kMedium, kNone, kNegative };

struct SsimClass {
  SsimBand band;
  bool misprediction;
};

SsimClass ssim_band(double ssim);
std::string band_label(SsimBand band);

/// 1 - TV distance between the two grids rescaled to unit mass. Throws
/// std::domain_error when either grid is all zero.
double flux_accuracy(const std::vector<double>& pred, const std::vector<double>& ref);
/// Uses the raw grids; throws GeometryMismatch on differing geometry.
double flux_accuracy(const FluxImage& pred, const FluxImage& ref);

struct SummaryStats {
  double min = 0, q1 = 0, median = 0, mean = 0, q3 = 0, max = 0;
};

/// Linear-interpolation quantiles at position p * (n - 1).
SummaryStats summarize(std::vector<double> values);

struct HeliostatScore {
  double distance = 0.0;  // m
  double mae = 0.0;
  double ssim = 0.0;
};

struct DistanceBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  SummaryStats mae;
  SummaryStats ssim;
};

/// Fixed-width distance bins; empty bins are omitted.
std::vector<DistanceBin> distance_trend(const std::vector<HeliostatScore>& scores, double bin_width = 50.0);
void write_distance_trend_csv(std::ostream& out, const std::vector<DistanceBin>& bins);

struct EvaluationRow {
  int sample = 0;
  std::string heliostat_id;
  double distance = 0.0;
  double mae = 0.0;
  double ssim = 0.0;
  double flux_acc_target = 0.0;
  double flux_acc_receiver = 0.0;
  double baseline_mae = 0.0;             // dataset-mean surface vs truth
  double flux_acc_ideal_receiver = 0.0;  // flat canted surface vs truth
};

void write_evaluation_csv(std::ostream& out, const std::vector<EvaluationRow>& rows);

/// Fixed-precision number formatting shared by all CSV writers.
std::string fmt_num(double v);

/// Aligned text table of labelled summary rows.
void print_summary_table(std::ostream& out, const std::vector<std::pair<std::string, SummaryStats>>& rows);

}  // namespace helioflux
