#include "helioflux/sunshape.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace helioflux {

BuieCoefficients buie_coefficients(double chi) {
  if (!(chi > 0.0)) return {};
  return {0.9 * std::log(13.5 * chi) * std::pow(chi, -0.3), 2.2 * std::log(0.52 * chi) * std::pow(chi, 0.43) - 0.1};
}

double calibrated_chi(double csr) {
  if (!(csr > 0.0)) return 0.0;
  const double c2 = csr * csr;
  if (csr > 0.1) return 1.973 * c2 * c2 - 2.481 * c2 * csr + 0.607 * c2 + 1.151 * csr - 0.020;
  return -2.245e3 * c2 * c2 + 5.207e2 * c2 * csr - 3.939e1 * c2 + 1.891 * csr + 8e-3;
}

double buie_pdf(double theta_mrad, double chi, double theta_max, double disc_edge) {
  if (theta_mrad < 0.0) throw std::domain_error("buie_pdf: theta must be nonnegative");
  if (theta_mrad <= disc_edge) return std::cos(0.326 * theta_mrad) / std::cos(0.308 * theta_mrad);
  if (theta_mrad > theta_max || !(chi > 0.0)) return 0.0;
  const BuieCoefficients c = buie_coefficients(chi);
  return std::exp(c.kappa) * std::pow(theta_mrad, c.gamma);
}

namespace {

// 5-point Gauss-Legendre on [a, b] of buie_pdf(t) * t.
double bin_mass(double a, double b, double chi, const SunshapeConfig& cfg) {
  static constexpr double kNodes[5] = {0.0, -0.5384693101056831, 0.5384693101056831, -0.9061798459386640,
                                       0.9061798459386640};
  static constexpr double kWeights[5] = {0.5688888888888889, 0.4786286704993665, 0.4786286704993665,
                                         0.2369268850561891, 0.2369268850561891};
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  double s = 0.0;
  for (int i = 0; i < 5; ++i) {
    const double t = mid + half * kNodes[i];
    s += kWeights[i] * buie_pdf(t, chi, cfg.theta_max, cfg.disc_edge) * t;
  }
  return s * half;
}

}  // namespace

BuieSampler::BuieSampler(const SunshapeConfig& config) : config_(config) {
  if (!(config.csr >= 0.0 && config.csr <= kMaxCsr)) throw std::invalid_argument("csr must lie in [0, 0.15]");
  if (!(config.disc_edge > 0.0 && config.theta_max > config.disc_edge))
    throw std::invalid_argument("sunshape requires 0 < disc_edge < theta_max");
  chi_ = config.calibrate ? calibrated_chi(config.csr) : config.csr;

  const int disc_bins =
      std::clamp(static_cast<int>(std::lround(kBins * config.disc_edge / config.theta_max)), 1, kBins - 1);
  const int aureole_bins = kBins - disc_bins;
  edges_.resize(kBins + 1);
  for (int i = 0; i <= disc_bins; ++i) edges_[static_cast<std::size_t>(i)] = config.disc_edge * i / disc_bins;
  for (int i = 1; i <= aureole_bins; ++i)
    edges_[static_cast<std::size_t>(disc_bins + i)] =
        config.disc_edge + (config.theta_max - config.disc_edge) * i / aureole_bins;
  edges_[static_cast<std::size_t>(disc_bins)] = config.disc_edge;

  cdf_.assign(kBins + 1, 0.0);
  for (std::size_t i = 0; i < static_cast<std::size_t>(kBins); ++i) {
    cdf_[i + 1] = cdf_[i] + bin_mass(edges_[i], edges_[i + 1], chi_, config_);
  }
  const double total = cdf_.back();
  for (double& c : cdf_) c /= total;
  cdf_.back() = 1.0;
}

AngularDeviation BuieSampler::sample(double u_theta, double u_phi) const {
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u_theta);
  std::size_t k = static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - cdf_.begin(), 1)) - 1;
  k = std::min(k, static_cast<std::size_t>(kBins - 1));
  const double mass = cdf_[k + 1] - cdf_[k];
  const double t = mass > 0.0 ? (u_theta - cdf_[k]) / mass : 0.0;
  const double theta = edges_[k] + std::clamp(t, 0.0, 1.0) * (edges_[k + 1] - edges_[k]);
  return {theta, 2.0 * std::numbers::pi * u_phi};
}

double BuieSampler::circumsolar_mass() const {
  const auto it = std::lower_bound(edges_.begin(), edges_.end(), config_.disc_edge);
  return 1.0 - cdf_[static_cast<std::size_t>(it - edges_.begin())];
}

AngularDeviation buie_sample(const BuieSampler& sampler, Rng& rng) { return sampler.sample(rng); }

Vec3 perturb_direction(const Vec3& axis, const AngularDeviation& dev) {
  const Vec3 helper = std::abs(axis.u) < 0.9 ? Vec3{0, 0, 1} : Vec3{1, 0, 0};
  const Vec3 e1 = normalize(cross(axis, helper));
  const Vec3 e2 = cross(axis, e1);
  const double th = dev.theta * 1e-3;
  const double st = std::sin(th);
  return axis * std::cos(th) + (e1 * std::cos(dev.phi) + e2 * std::sin(dev.phi)) * st;
}

}  // namespace helioflux
