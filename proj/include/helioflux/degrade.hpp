#pragma once

#include <utility>
#include <vector>

#include <json.hpp>

#include "helioflux/datagen.hpp"
#include "helioflux/rng.hpp"

namespace helioflux {

/// Domain randomization applied to training samples and, at full strength,
/// used as the synthetic real-world degradation.
struct RandomizationConfig {
  bool dropout = true;
  bool position_jitter = true;
  bool label_noise = true;
  bool clamp = true;
  bool background = true;
  bool contrast = true;
  bool crop = true;
  bool deform = true;
  bool smooth = true;

  std::pair<double, double> clamp_range{0.9, 1.0};
  double heliostat_jitter_sigma = 0.05;  // m
  double sun_jitter_sigma = 0.1;         // deg
  double surface_noise_sigma = 0.02;     // mm
  double background_noise_max = 0.02;    // fraction of peak
  std::pair<double, double> contrast_gamma_range{0.8, 1.25};
  double deform_amp = 0.5;  // px
  int smooth_kernel = 2;    // px
  double apply_prob = 0.5;

  /// Every transform disabled.
  static RandomizationConfig none();
};

void validate(const RandomizationConfig& c);
nlohmann::json to_json(const RandomizationConfig& c);
RandomizationConfig randomization_from_json(const nlohmann::json& j);

/// Row-major normalized flux grid.
using Grid = std::vector<double>;

/// Scales so the maximum is 1; an all-zero grid stays zero.
void renormalize(Grid& g);

Grid clamp_overexpose(const Grid& img, double threshold);
Grid clamp_overexpose(const Grid& img, Rng& rng, std::pair<double, double> range = {0.9, 1.0});

/// Adds i.i.d. Uniform(0, level) per pixel, then renormalizes.
Grid background_noise(const Grid& img, double level, Rng& rng);
Grid background_noise(const Grid& img, Rng& rng, double max_level);

Grid adjust_contrast(const Grid& img, double gamma);
Grid adjust_contrast(const Grid& img, Rng& rng, std::pair<double, double> gamma_range = {0.8, 1.25});

enum CropEdge : unsigned { kCropLeft = 1, kCropRight = 2, kCropTop = 4, kCropBottom = 8 };

/// Drops one pixel row or column per edge in `edges`, then resamples back to
/// w x h with bilinear interpolation on pixel centres. edges = 0 is the identity.
Grid crop_rescale(const Grid& img, int w, int h, unsigned edges);
Grid crop_rescale(const Grid& img, int w, int h, Rng& rng);

/// Affine displacement field, coefficients for (1, x, y) with x, y in [-1, 1].
struct Displacement {
  double dx[3] = {0, 0, 0};
  double dy[3] = {0, 0, 0};
};

/// Bilinear warp out(p) = img(p + d(p)), zero outside the grid.
Grid deform_flux(const Grid& img, int w, int h, const Displacement& d);
/// Random displacement with |d| <= amp pixels everywhere.
Grid deform_flux(const Grid& img, int w, int h, Rng& rng, double amp);

/// Separable triangular kernel with weights (k - |d|) / k^2 for |d| < k.
Grid smooth_flux(const Grid& img, int w, int h, int kernel_px);

/// Observation dropout, metadata jitter, label noise, then the six image
/// transforms, each gated by apply_prob. Never leaves fewer than one
/// observation and never touches flux geometry.
DatasetSample randomize_sample(const DatasetSample& sample, const RandomizationConfig& config, Rng& rng);

}  // namespace helioflux
