#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "helioflux/datagen.hpp"
#include "helioflux/nn.hpp"
#include "helioflux/nurbs.hpp"

namespace helioflux {

struct ModelConfig {
  int image_size = 64;
  int patch_size = 16;
  int embed_dim = 64;
  int encoder_depth = 4;
  int encoder_heads = 4;
  int fusion_depth = 4;
  int fusion_heads = 4;
  int mlp_ratio = 4;
  int latent_blocks = 3;
  int latent_dim = 32;
  int gen_channels = 32;
  double dropout = 0.2;

  int patches_per_image() const { return (image_size / patch_size) * (image_size / patch_size); }
  int tokens_per_image() const { return patches_per_image() + 1; }
  int latent_size() const { return latent_blocks * latent_dim; }

  /// Image 32, patch 16, width 8; used for gradient checks.
  static ModelConfig tiny();
};

void validate(const ModelConfig& c);
nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

inline constexpr int kPositionFeatures = 12;
inline constexpr int kSurfaceMapSize = 16;
inline constexpr int kSurfaceOutputs = kSurfaceMapSize * kSurfaceMapSize;

struct ObservationInput {
  const std::vector<double>* flux = nullptr;  // image_size^2, row-major, max 1
  Vec3 sun;
  Vec3 aim_point;
  Vec3 target_center;
};

struct SampleInput {
  Vec3 heliostat_position;
  std::vector<ObservationInput> observations;
};

/// Views into `sample`; the sample must outlive the result.
SampleInput make_input(const DatasetSample& sample);

/// Sun (3), heliostat position / 100 (3), aim offset from the target centre
/// (3), target centre / 50 (3).
std::array<double, kPositionFeatures> position_features(const ObservationInput& o, const Vec3& heliostat_position);

/// w+ latent, latent_blocks rows of latent_dim.
struct LatentW {
  int blocks = 0;
  int dim = 0;
  std::vector<double> values;
};

/// Generator output (16 x 16, row r along facet height from the bottom,
/// column c along the width) to facets: quadrant (r / 8, c / 8) is facet
/// 2 * (r / 8) + c / 8, point (i, j) = (c % 8, r % 8).
HeliostatSurface surface_from_map(const double* map);
void surface_to_map(const HeliostatSurface& s, double* map);

class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  /// Tokens of every image stacked: (n_images * (P + 1)) x embed_dim.
  nn::Var patch_embed(nn::Tape& t, const std::vector<const std::vector<double>*>& images);
  /// One transformer block (pre-norm attention + MLP, residual) over segments.
  nn::Var block(nn::Tape& t, nn::Var x, const std::string& prefix, const std::vector<int>& segments, int heads,
                Rng* dropout_rng);
  /// w+ for each sample: batch x latent_size.
  nn::Var encode(nn::Tape& t, const std::vector<SampleInput>& batch, Rng* dropout_rng);
  /// Surface map for each w+ row: batch x 256.
  nn::Var generate(nn::Tape& t, nn::Var w_plus);

  LatentW encode(const SampleInput& sample);
  HeliostatSurface generate(const LatentW& w);
  /// generate(encode(...)) without dropout.
  HeliostatSurface predict(const SampleInput& sample);

 private:
  nn::Var p(nn::Tape& t, const std::string& name) { return t.param(params_.get(name)); }
  void init_block(const std::string& prefix, Rng& rng);

  ModelConfig config_;
  nn::ParamStore params_;
};

/// Mean over facets of the per-facet mean absolute error, mm.
double loss_mae(const HeliostatSurface& pred, const HeliostatSurface& truth);

/// Control-point map target for a batch of surfaces.
nn::Mat surface_targets(const std::vector<const HeliostatSurface*>& truths);

}  // namespace helioflux
