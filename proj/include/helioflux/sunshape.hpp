#pragma once

#include <vector>

#include "helioflux/geometry.hpp"
#include "helioflux/rng.hpp"

namespace helioflux {

inline constexpr double kSolarDiscEdgeMrad = 4.65;
inline constexpr double kDefaultThetaMaxMrad = 43.6;

struct SunshapeConfig {
  double csr = 0.0;
  double theta_max = kDefaultThetaMaxMrad;  // mrad
  double disc_edge = kSolarDiscEdgeMrad;    // mrad
  /// When set, `csr` is the target circumsolar ratio and is mapped to the
  /// Buie shape parameter by the SolTrace calibration polynomial; otherwise
  /// `csr` is used as chi directly.
  bool calibrate = true;
};

/// Buie shape parameter chi that yields circumsolar ratio `csr`; zero stays zero.
double calibrated_chi(double csr);

/// Circumsolar branch parameters of the Buie profile phi = exp(kappa) * theta^gamma.
struct BuieCoefficients {
  double kappa = 0.0;
  double gamma = 0.0;
};
BuieCoefficients buie_coefficients(double chi);

/// Unnormalized Buie radiance profile at angle `theta_mrad` from the sun center.
double buie_pdf(double theta_mrad, double chi, double theta_max = kDefaultThetaMaxMrad,
                double disc_edge = kSolarDiscEdgeMrad);

struct AngularDeviation {
  double theta = 0.0;  // mrad
  double phi = 0.0;    // rad
};

/// Inverse-CDF sampler for theta ~ buie_pdf(theta) * theta over a 4096-bin
/// table. The disc edge is a bin boundary so the disc/aureole split is exact.
class BuieSampler {
 public:
  static constexpr int kBins = 4096;

  explicit BuieSampler(const SunshapeConfig& config);

  const SunshapeConfig& config() const { return config_; }
  /// Shape parameter actually used by the profile.
  double chi() const { return chi_; }

  /// Maps two uniforms in [0, 1) to a deviation.
  AngularDeviation sample(double u_theta, double u_phi) const;

  template <class Engine>
  AngularDeviation sample(Engine& rng) const {
    const double a = next_uniform(rng);
    const double b = next_uniform(rng);
    return sample(a, b);
  }

  /// Probability mass of theta > disc edge implied by the table.
  double circumsolar_mass() const;

  const std::vector<double>& edges() const { return edges_; }
  const std::vector<double>& cdf() const { return cdf_; }

 private:
  static double next_uniform(CounterRng& rng) { return rng.uniform(); }
  static double next_uniform(Rng& rng) { return uniform01(rng); }

  SunshapeConfig config_;
  double chi_ = 0.0;
  std::vector<double> edges_;  // kBins + 1
  std::vector<double> cdf_;    // kBins + 1, cdf_[0] = 0, cdf_.back() = 1
};

AngularDeviation buie_sample(const BuieSampler& sampler, Rng& rng);

/// Unit vector at angular deviation `dev` from unit `axis`.
Vec3 perturb_direction(const Vec3& axis, const AngularDeviation& dev);

}  // namespace helioflux
