#include "helioflux/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "helioflux/metrics.hpp"
#include "helioflux/optics.hpp"

namespace helioflux {

using nn::Mat;
using nn::Tape;
using nn::Var;

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.image_size = 32;
  c.patch_size = 16;
  c.embed_dim = 8;
  c.encoder_depth = 1;
  c.encoder_heads = 2;
  c.fusion_depth = 1;
  c.fusion_heads = 2;
  c.mlp_ratio = 2;
  c.latent_dim = 8;
  c.gen_channels = 4;
  return c;
}

void validate(const ModelConfig& c) {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("model config: " + what);
  };
  require(c.image_size > 0 && c.patch_size > 0, "sizes must be positive");
  require(c.image_size % c.patch_size == 0, "image_size must be divisible by patch_size");
  require(c.embed_dim > 0 && c.encoder_heads > 0 && c.fusion_heads > 0, "widths must be positive");
  require(c.embed_dim % c.encoder_heads == 0, "embed_dim must be divisible by encoder_heads");
  require(c.embed_dim % c.fusion_heads == 0, "embed_dim must be divisible by fusion_heads");
  require(c.encoder_depth >= 0 && c.fusion_depth >= 0 && c.mlp_ratio > 0, "depths must be non-negative");
  require(c.latent_blocks == 3, "the generator has exactly three style blocks");
  require(c.latent_dim > 0 && c.gen_channels > 0, "latent_dim and gen_channels must be positive");
  require(c.dropout >= 0.0 && c.dropout < 1.0, "dropout must be in [0, 1)");
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"image_size", c.image_size},       {"patch_size", c.patch_size},       {"embed_dim", c.embed_dim},
          {"encoder_depth", c.encoder_depth}, {"encoder_heads", c.encoder_heads}, {"fusion_depth", c.fusion_depth},
          {"fusion_heads", c.fusion_heads},   {"mlp_ratio", c.mlp_ratio},         {"latent_blocks", c.latent_blocks},
          {"latent_dim", c.latent_dim},       {"gen_channels", c.gen_channels},   {"dropout", c.dropout}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.image_size = j.value("image_size", c.image_size);
  c.patch_size = j.value("patch_size", c.patch_size);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.encoder_depth = j.value("encoder_depth", c.encoder_depth);
  c.encoder_heads = j.value("encoder_heads", c.encoder_heads);
  c.fusion_depth = j.value("fusion_depth", c.fusion_depth);
  c.fusion_heads = j.value("fusion_heads", c.fusion_heads);
  c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
  c.latent_blocks = j.value("latent_blocks", c.latent_blocks);
  c.latent_dim = j.value("latent_dim", c.latent_dim);
  c.gen_channels = j.value("gen_channels", c.gen_channels);
  c.dropout = j.value("dropout", c.dropout);
  validate(c);
  return c;
}

SampleInput make_input(const DatasetSample& sample) {
  SampleInput in;
  in.heliostat_position = sample.heliostat.position;
  for (const auto& o : sample.observations)
    in.observations.push_back({&o.flux.normalized, o.sun.direction, o.aim_point, geometry_center(o.flux.geometry)});
  return in;
}

std::array<double, kPositionFeatures> position_features(const ObservationInput& o, const Vec3& heliostat_position) {
  const Vec3 offset = o.aim_point - o.target_center;
  return {o.sun.e,
          o.sun.n,
          o.sun.u,
          heliostat_position.e / 100.0,
          heliostat_position.n / 100.0,
          heliostat_position.u / 100.0,
          offset.e,
          offset.n,
          offset.u,
          o.target_center.e / 50.0,
          o.target_center.n / 50.0,
          o.target_center.u / 50.0};
}

HeliostatSurface surface_from_map(const double* map) {
  HeliostatSurface s;
  for (int r = 0; r < kSurfaceMapSize; ++r)
    for (int c = 0; c < kSurfaceMapSize; ++c)
      s.facets[static_cast<std::size_t>((r / 8) * 2 + c / 8)].at(c % 8, r % 8) = map[r * kSurfaceMapSize + c];
  return s;
}

void surface_to_map(const HeliostatSurface& s, double* map) {
  for (int r = 0; r < kSurfaceMapSize; ++r)
    for (int c = 0; c < kSurfaceMapSize; ++c)
      map[r * kSurfaceMapSize + c] = s.facets[static_cast<std::size_t>((r / 8) * 2 + c / 8)].at(c % 8, r % 8);
}

double loss_mae(const HeliostatSurface& pred, const HeliostatSurface& truth) { return surface_mae(pred, truth); }

Mat surface_targets(const std::vector<const HeliostatSurface*>& truths) {
  Mat m(static_cast<Eigen::Index>(truths.size()), kSurfaceOutputs);
  for (std::size_t i = 0; i < truths.size(); ++i) surface_to_map(*truths[i], m.row(static_cast<Eigen::Index>(i)).data());
  return m;
}

namespace {

Mat normal_init(int rows, int cols, double std, Rng& rng) {
  std::normal_distribution<double> g(0.0, std);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

Mat fan_in_init(int rows, int cols, Rng& rng) { return normal_init(rows, cols, 1.0 / std::sqrt(rows), rng); }

}  // namespace

Model::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  validate(config_);
  Rng rng(seed);
  const int d = config_.embed_dim;
  const int patch_in = config_.patch_size * config_.patch_size;
  const int c = config_.gen_channels;

  params_.add("patch.w1", fan_in_init(patch_in, d, rng));
  params_.add("patch.b1", Mat::Zero(1, d));
  params_.add("patch.w2", fan_in_init(d, d, rng));
  params_.add("patch.b2", Mat::Zero(1, d));
  params_.add("cls", normal_init(1, d, 0.02, rng));
  params_.add("pos", normal_init(config_.tokens_per_image(), d, 0.02, rng));
  for (int l = 0; l < config_.encoder_depth; ++l) init_block("enc" + std::to_string(l), rng);
  params_.add("enc.ln.g", Mat::Ones(1, d));
  params_.add("enc.ln.b", Mat::Zero(1, d));

  params_.add("posmlp.w1", fan_in_init(kPositionFeatures, d, rng));
  params_.add("posmlp.b1", Mat::Zero(1, d));
  params_.add("posmlp.w2", fan_in_init(d, d, rng));
  params_.add("posmlp.b2", Mat::Zero(1, d));
  for (int l = 0; l < config_.fusion_depth; ++l) init_block("fus" + std::to_string(l), rng);
  params_.add("head.ln.g", Mat::Ones(1, d));
  params_.add("head.ln.b", Mat::Zero(1, d));
  params_.add("head.w", fan_in_init(d, config_.latent_size(), rng));
  params_.add("head.b", Mat::Zero(1, config_.latent_size()));

  params_.add("gen.const", normal_init(1, c * 16, 1.0, rng));
  for (int k = 0; k < config_.latent_blocks; ++k) {
    const std::string p = "gen" + std::to_string(k);
    params_.add(p + ".affine.w", fan_in_init(config_.latent_dim, c, rng));
    params_.add(p + ".affine.b", Mat::Ones(1, c));
    params_.add(p + ".conv.w", normal_init(c, c * 9, 1.0, rng));
    params_.add(p + ".conv.b", Mat::Zero(1, c));
  }
  params_.add("gen.out.w", fan_in_init(c, 1, rng).transpose());
  params_.add("gen.out.b", Mat::Zero(1, 1));
  params_.add("gen.gain", Mat::Ones(1, kSurfaceOutputs));
}

void Model::init_block(const std::string& prefix, Rng& rng) {
  const int d = config_.embed_dim;
  const int hidden = d * config_.mlp_ratio;
  params_.add(prefix + ".ln1.g", Mat::Ones(1, d));
  params_.add(prefix + ".ln1.b", Mat::Zero(1, d));
  params_.add(prefix + ".qkv.w", fan_in_init(d, 3 * d, rng));
  params_.add(prefix + ".qkv.b", Mat::Zero(1, 3 * d));
  params_.add(prefix + ".proj.w", fan_in_init(d, d, rng));
  params_.add(prefix + ".proj.b", Mat::Zero(1, d));
  params_.add(prefix + ".ln2.g", Mat::Ones(1, d));
  params_.add(prefix + ".ln2.b", Mat::Zero(1, d));
  params_.add(prefix + ".mlp.w1", fan_in_init(d, hidden, rng));
  params_.add(prefix + ".mlp.b1", Mat::Zero(1, hidden));
  params_.add(prefix + ".mlp.w2", fan_in_init(hidden, d, rng));
  params_.add(prefix + ".mlp.b2", Mat::Zero(1, d));
}

Var Model::patch_embed(Tape& t, const std::vector<const std::vector<double>*>& images) {
  const int n = config_.image_size;
  const int ps = config_.patch_size;
  const int per_row = n / ps;
  const int per_image = config_.patches_per_image();
  Mat patches(static_cast<Eigen::Index>(images.size()) * per_image, ps * ps);
  for (std::size_t k = 0; k < images.size(); ++k) {
    const auto& img = *images[k];
    if (img.size() != static_cast<std::size_t>(n) * n)
      throw std::invalid_argument("patch_embed: image is " + std::to_string(img.size()) + " pixels, expected " +
                                  std::to_string(n * n));
    for (int p = 0; p < per_image; ++p) {
      const int py = p / per_row, px = p % per_row;
      auto row = patches.row(static_cast<Eigen::Index>(k) * per_image + p);
      for (int y = 0; y < ps; ++y)
        for (int x = 0; x < ps; ++x) row(y * ps + x) = img[static_cast<std::size_t>((py * ps + y) * n + px * ps + x)];
    }
  }
  Var h = nn::linear(t, t.constant(std::move(patches)), p(t, "patch.w1"), p(t, "patch.b1"));
  h = nn::linear(t, nn::gelu(t, h), p(t, "patch.w2"), p(t, "patch.b2"));
  return nn::build_tokens(t, h, p(t, "cls"), p(t, "pos"), per_image);
}

Var Model::block(Tape& t, Var x, const std::string& prefix, const std::vector<int>& segments, int heads,
                 Rng* dropout_rng) {
  const double drop = config_.dropout;
  Var h = nn::layer_norm(t, x, p(t, prefix + ".ln1.g"), p(t, prefix + ".ln1.b"));
  h = nn::linear(t, h, p(t, prefix + ".qkv.w"), p(t, prefix + ".qkv.b"));
  h = nn::attention(t, h, segments, heads);
  h = nn::linear(t, h, p(t, prefix + ".proj.w"), p(t, prefix + ".proj.b"));
  x = nn::add(t, x, nn::dropout(t, h, drop, dropout_rng));
  h = nn::layer_norm(t, x, p(t, prefix + ".ln2.g"), p(t, prefix + ".ln2.b"));
  h = nn::gelu(t, nn::linear(t, h, p(t, prefix + ".mlp.w1"), p(t, prefix + ".mlp.b1")));
  h = nn::linear(t, h, p(t, prefix + ".mlp.w2"), p(t, prefix + ".mlp.b2"));
  return nn::add(t, x, nn::dropout(t, h, drop, dropout_rng));
}

Var Model::encode(Tape& t, const std::vector<SampleInput>& batch, Rng* dropout_rng) {
  if (batch.empty()) throw std::invalid_argument("encode: empty batch");
  std::vector<const std::vector<double>*> images;
  std::vector<int> per_sample;
  for (const auto& s : batch) {
    const auto n = s.observations.size();
    if (n == 0) throw std::invalid_argument("encode: sample without observations");
    if (n > static_cast<std::size_t>(kMaxObservations))
      throw std::invalid_argument("encode: more than " + std::to_string(kMaxObservations) + " observations");
    per_sample.push_back(static_cast<int>(n));
    for (const auto& o : s.observations) images.push_back(o.flux);
  }
  const int tokens = config_.tokens_per_image();
  const std::vector<int> token_segments(images.size(), tokens);

  Var x = patch_embed(t, images);
  for (int l = 0; l < config_.encoder_depth; ++l)
    x = block(t, x, "enc" + std::to_string(l), token_segments, config_.encoder_heads, dropout_rng);
  x = nn::take_rows(t, x, tokens, 0);
  x = nn::layer_norm(t, x, p(t, "enc.ln.g"), p(t, "enc.ln.b"));

  Mat features(static_cast<Eigen::Index>(images.size()), kPositionFeatures);
  Eigen::Index row = 0;
  for (const auto& s : batch)
    for (const auto& o : s.observations) {
      const auto f = position_features(o, s.heliostat_position);
      for (int i = 0; i < kPositionFeatures; ++i) features(row, i) = f[static_cast<std::size_t>(i)];
      ++row;
    }
  Var pe = nn::linear(t, t.constant(std::move(features)), p(t, "posmlp.w1"), p(t, "posmlp.b1"));
  pe = nn::linear(t, nn::gelu(t, pe), p(t, "posmlp.w2"), p(t, "posmlp.b2"));
  x = nn::add(t, x, pe);

  for (int l = 0; l < config_.fusion_depth; ++l)
    x = block(t, x, "fus" + std::to_string(l), per_sample, config_.fusion_heads, dropout_rng);
  x = nn::segment_mean(t, x, per_sample);
  x = nn::layer_norm(t, x, p(t, "head.ln.g"), p(t, "head.ln.b"));
  return nn::linear(t, x, p(t, "head.w"), p(t, "head.b"));
}

Var Model::generate(Tape& t, Var w_plus) {
  const int c = config_.gen_channels;
  const int n = static_cast<int>(t.value(w_plus).rows());
  if (t.value(w_plus).cols() != config_.latent_size()) throw std::invalid_argument("generate: latent size mismatch");
  Var x = nn::tile_rows(t, p(t, "gen.const"), n);
  int size = 4;
  for (int k = 0; k < config_.latent_blocks; ++k) {
    const std::string pre = "gen" + std::to_string(k);
    if (k > 0) {
      x = nn::upsample2x(t, x, c, size);
      size *= 2;
    }
    Var style = nn::slice_cols(t, w_plus, k * config_.latent_dim, config_.latent_dim);
    style = nn::linear(t, style, p(t, pre + ".affine.w"), p(t, pre + ".affine.b"));
    x = nn::modconv3x3(t, x, p(t, pre + ".conv.w"), style, p(t, pre + ".conv.b"), c, c, size);
    x = nn::leaky_relu(t, x);
  }
  x = nn::channel_mix(t, x, p(t, "gen.out.w"), p(t, "gen.out.b"), c, size * size);
  return nn::mul_row_broadcast(t, x, p(t, "gen.gain"));
}

LatentW Model::encode(const SampleInput& sample) {
  Tape t(false);
  const Mat& w = t.value(encode(t, {sample}, nullptr));
  LatentW out{config_.latent_blocks, config_.latent_dim, std::vector<double>(w.data(), w.data() + w.size())};
  return out;
}

HeliostatSurface Model::generate(const LatentW& w) {
  if (w.blocks != config_.latent_blocks || w.dim != config_.latent_dim ||
      w.values.size() != static_cast<std::size_t>(config_.latent_size()))
    throw std::invalid_argument("generate: latent shape mismatch");
  Tape t(false);
  Mat m(1, config_.latent_size());
  for (int i = 0; i < m.cols(); ++i) m(0, i) = w.values[static_cast<std::size_t>(i)];
  return surface_from_map(t.value(generate(t, t.constant(std::move(m)))).data());
}

HeliostatSurface Model::predict(const SampleInput& sample) {
  Tape t(false);
  return surface_from_map(t.value(generate(t, encode(t, {sample}, nullptr))).data());
}

}  // namespace helioflux
