#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "helioflux/binary_io.hpp"
#include "helioflux/checkpoint.hpp"
#include "helioflux/metrics.hpp"
#include "helioflux/model.hpp"
#include "helioflux/train.hpp"

using namespace helioflux;
using nn::Mat;

namespace {

FluxImage random_flux(int size, Rng& rng, double fill = -1.0) {
  TargetPlane plane;
  plane.res_x = plane.res_y = size;
  FluxImage img = FluxImage::empty(plane, 1000);
  img.normalized.assign(static_cast<std::size_t>(size) * size, fill);
  if (fill < 0)
    for (auto& v : img.normalized) v = uniform01(rng);
  img.no_hits = false;
  return img;
}

DatasetSample random_sample(int image_size, int n_obs, Rng& rng) {
  DatasetSample s;
  s.heliostat = make_heliostat("H001", {20.0 * uniform01(rng), 80.0 + 40.0 * uniform01(rng), 1.5}, 90.0);
  std::normal_distribution<double> g(0.0, 0.5);
  for (auto& f : s.truth.facets)
    for (double& z : f.control_z) z = g(rng);
  for (int k = 0; k < n_obs; ++k) {
    Observation o;
    o.sun.direction = normalize(Vec3{uniform01(rng) - 0.5, -0.5 - uniform01(rng), 0.3 + uniform01(rng)});
    o.aim_point = Vec3{uniform01(rng) - 0.5, 0.0, 36.0 + uniform01(rng) - 0.5};
    o.flux = random_flux(image_size, rng);
    s.observations.push_back(std::move(o));
  }
  return s;
}

ModelConfig no_dropout(ModelConfig c) {
  c.dropout = 0.0;
  return c;
}

double max_abs_diff(const HeliostatSurface& a, const HeliostatSurface& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t i = 0; i < kControlPoints; ++i)
      m = std::max(m, std::abs(a.facets[k].control_z[i] - b.facets[k].control_z[i]));
  return m;
}

bool all_finite(const HeliostatSurface& s) {
  for (const auto& f : s.facets)
    for (double z : f.control_z)
      if (!std::isfinite(z)) return false;
  return true;
}

}  // namespace

TEST(ModelConfig, ValidationAndJson) {
  ModelConfig c;
  EXPECT_NO_THROW(validate(c));
  c.patch_size = 15;
  EXPECT_THROW(validate(c), std::invalid_argument);
  c = ModelConfig{};
  c.fusion_heads = 5;
  EXPECT_THROW(validate(c), std::invalid_argument);
  c = ModelConfig{};
  c.embed_dim = 128;
  c.encoder_depth = 8;
  c.fusion_depth = 8;
  const ModelConfig back = model_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(ModelConfig{}.tokens_per_image(), 17);
  EXPECT_EQ(ModelConfig{}.latent_size(), 96);
}

TEST(ModelConfig, FullScaleParameterCount) {
  ModelConfig full;
  full.embed_dim = 128;
  full.encoder_depth = 8;
  full.fusion_depth = 8;
  const Model m(full, 1);
  const Model toy(ModelConfig{}, 1);
  // Logged rather than asserted against a reference count.
  std::cout << "parameters: toy " << toy.params().scalar_count() << ", full-width "
            << m.params().scalar_count() << "\n";
  EXPECT_GT(m.params().scalar_count(), toy.params().scalar_count());
}

TEST(SurfaceMap, QuadrantsFollowFacetOrder) {
  std::vector<double> map(kSurfaceOutputs);
  for (int i = 0; i < kSurfaceOutputs; ++i) map[static_cast<std::size_t>(i)] = i;
  const HeliostatSurface s = surface_from_map(map.data());
  EXPECT_EQ(s.facets[0].at(0, 0), 0.0);                       // lower left
  EXPECT_EQ(s.facets[1].at(0, 0), 8.0);                       // lower right
  EXPECT_EQ(s.facets[2].at(0, 0), 8.0 * 16);                  // upper left
  EXPECT_EQ(s.facets[3].at(7, 7), 255.0);                     // upper right
  EXPECT_EQ(s.facets[0].at(3, 5), 5.0 * 16 + 3);              // i along width, j along height
  std::vector<double> back(kSurfaceOutputs);
  surface_to_map(s, back.data());
  EXPECT_EQ(back, map);
}

TEST(PatchEmbed, ZeroImageGivesPositionalEmbeddings) {
  Model m(ModelConfig{}, 3);
  const std::vector<double> zero(64 * 64, 0.0);
  nn::Tape t(false);
  const Mat tokens = t.value(m.patch_embed(t, {&zero}));
  ASSERT_EQ(tokens.rows(), 17);
  ASSERT_EQ(tokens.cols(), 64);
  const Mat& pos = m.params().get("pos").value;
  EXPECT_TRUE(tokens.bottomRows(16).isApprox(pos.bottomRows(16), 1e-15));
  EXPECT_TRUE(tokens.row(0).isApprox(pos.row(0) + m.params().get("cls").value.row(0), 1e-15));
}

TEST(PatchEmbed, SwappingPatchesSwapsTokens) {
  Model m(ModelConfig{}, 4);
  Rng rng(4);
  std::vector<double> img(64 * 64);
  for (auto& v : img) v = uniform01(rng);
  std::vector<double> swapped = img;
  // Patch 0 (rows 0-15, cols 0-15) with patch 5 (rows 16-31, cols 16-31).
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) std::swap(swapped[y * 64 + x], swapped[(16 + y) * 64 + 16 + x]);
  nn::Tape t(false);
  const Mat& pos = m.params().get("pos").value;
  const Mat a = t.value(m.patch_embed(t, {&img})) - pos;
  const Mat b = t.value(m.patch_embed(t, {&swapped})) - pos;
  EXPECT_TRUE(a.row(1).isApprox(b.row(6), 1e-12));
  EXPECT_TRUE(a.row(6).isApprox(b.row(1), 1e-12));
  EXPECT_TRUE(a.row(2).isApprox(b.row(2), 1e-12));
}

TEST(PatchEmbed, WrongImageSizeThrows) {
  Model m(ModelConfig{}, 5);
  const std::vector<double> small(32 * 32, 0.0);
  nn::Tape t(false);
  EXPECT_THROW(m.patch_embed(t, {&small}), std::invalid_argument);
}

TEST(Encode, ShapeForEveryObservationCount) {
  Model m(ModelConfig{}, 6);
  Rng rng(6);
  for (int n = 1; n <= kMaxObservations; ++n) {
    const DatasetSample s = random_sample(64, n, rng);
    const LatentW w = m.encode(make_input(s));
    EXPECT_EQ(w.blocks, 3);
    EXPECT_EQ(w.dim, 32);
    ASSERT_EQ(w.values.size(), 96u);
    for (double v : w.values) EXPECT_TRUE(std::isfinite(v));
  }
  SampleInput empty;
  EXPECT_THROW(m.encode(empty), std::invalid_argument);
}

TEST(Encode, ObservationOrderDoesNotMatter) {
  Model m(ModelConfig{}, 7);
  Rng rng(7);
  DatasetSample s = random_sample(64, 5, rng);
  const LatentW a = m.encode(make_input(s));
  std::reverse(s.observations.begin(), s.observations.end());
  std::swap(s.observations[0], s.observations[3]);
  const LatentW b = m.encode(make_input(s));
  for (std::size_t i = 0; i < a.values.size(); ++i) EXPECT_NEAR(a.values[i], b.values[i], 1e-6);
}

TEST(Encode, DuplicatedObservationsStayFinite) {
  Model m(ModelConfig{}, 8);
  Rng rng(8);
  const DatasetSample base = random_sample(64, 1, rng);
  for (int copies : {4, 8}) {
    DatasetSample s = base;
    s.observations.assign(static_cast<std::size_t>(copies), base.observations[0]);
    EXPECT_TRUE(all_finite(m.predict(make_input(s))));
  }
}

TEST(Encode, BatchedMatchesSingle) {
  Model m(ModelConfig{}, 9);
  Rng rng(9);
  const DatasetSample a = random_sample(64, 2, rng), b = random_sample(64, 4, rng);
  nn::Tape t(false);
  const Mat both = t.value(m.encode(t, {make_input(a), make_input(b)}, nullptr));
  const LatentW wa = m.encode(make_input(a)), wb = m.encode(make_input(b));
  for (int i = 0; i < 96; ++i) {
    EXPECT_NEAR(both(0, i), wa.values[static_cast<std::size_t>(i)], 1e-12);
    EXPECT_NEAR(both(1, i), wb.values[static_cast<std::size_t>(i)], 1e-12);
  }
}

TEST(Generate, DistinctLatentsGiveDistinctSurfaces) {
  Model m(ModelConfig{}, 10);
  Rng rng(10);
  LatentW a{3, 32, std::vector<double>(96)}, b = a;
  for (auto& v : a.values) v = uniform01(rng) - 0.5;
  for (auto& v : b.values) v = uniform01(rng) - 0.5;
  const HeliostatSurface sa = m.generate(a), sb = m.generate(b);
  EXPECT_GT(max_abs_diff(sa, sb), 1e-6);
  EXPECT_THROW(m.generate(LatentW{3, 31, std::vector<double>(93)}), std::invalid_argument);
}

TEST(Predict, FiniteAndDeterministic) {
  Model m(ModelConfig{}, 11);
  Rng rng(11);
  for (double fill : {0.0, 1.0, -1.0}) {
    DatasetSample s = random_sample(64, 3, rng);
    for (auto& o : s.observations) o.flux = random_flux(64, rng, fill);
    const HeliostatSurface a = m.predict(make_input(s));
    const HeliostatSurface b = m.predict(make_input(s));
    EXPECT_TRUE(all_finite(a));
    EXPECT_EQ(a, b);
  }
}

TEST(LossMae, SharedWithSurfaceMaeAndFacetPermutationInvariant) {
  Rng rng(12);
  const DatasetSample s1 = random_sample(32, 1, rng), s2 = random_sample(32, 1, rng);
  EXPECT_EQ(loss_mae(s1.truth, s2.truth), surface_mae(s1.truth, s2.truth));
  HeliostatSurface a = s1.truth, b = s2.truth;
  std::swap(a.facets[1], a.facets[3]);
  std::swap(b.facets[1], b.facets[3]);
  EXPECT_NEAR(loss_mae(a, b), loss_mae(s1.truth, s2.truth), 1e-15);
  // The batched tape loss equals loss_mae.
  nn::Tape t(false);
  Mat pred(1, kSurfaceOutputs);
  surface_to_map(s1.truth, pred.data());
  const double tape = t.value(nn::mae_loss(t, t.constant(pred), surface_targets({&s2.truth})))(0, 0);
  EXPECT_NEAR(tape, loss_mae(s1.truth, s2.truth), 1e-12);
}

TEST(GradientCheck, TinyConfigMatchesCentralDifferences) {
  Model m(ModelConfig::tiny(), 13);
  Rng rng(13);
  const DatasetSample a = random_sample(32, 3, rng), b = random_sample(32, 2, rng);
  const std::vector<SampleInput> batch{make_input(a), make_input(b)};
  const Mat target = surface_targets({&a.truth, &b.truth});
  auto loss = [&](bool backward) {
    nn::Tape t(backward);
    const nn::Var l = nn::mae_loss(t, m.generate(t, m.encode(t, batch, nullptr)), target);
    if (backward) t.backward(l);
    return t.value(l)(0, 0);
  };
  m.params().zero_grad();
  loss(true);

  std::vector<std::pair<nn::Param*, Eigen::Index>> candidates;
  for (auto& p : m.params().all())
    for (Eigen::Index i = 0; i < p.grad.size(); ++i)
      if (std::abs(p.grad.data()[i]) > 1e-5) candidates.emplace_back(&p, i);
  std::shuffle(candidates.begin(), candidates.end(), rng);
  ASSERT_GE(candidates.size(), 20u);

  const double h = 1e-4;
  int checked = 0;
  for (int k = 0; k < 20; ++k) {
    auto [p, i] = candidates[static_cast<std::size_t>(k)];
    const double keep = p->value.data()[i];
    p->value.data()[i] = keep + h;
    const double up = loss(false);
    p->value.data()[i] = keep - h;
    const double down = loss(false);
    p->value.data()[i] = keep;
    const double fd = (up - down) / (2 * h);
    const double an = p->grad.data()[i];
    EXPECT_LT(std::abs(an - fd) / std::max(std::abs(an), std::abs(fd)), 1e-3) << p->name << "[" << i << "]";
    ++checked;
  }
  EXPECT_GE(checked, 5);
}

TEST(Schedule, LearningRateAtEpochTen) {
  EXPECT_NEAR(learning_rate_at(TrainConfig{}, 10), 0.000951, 5e-7);
  EXPECT_DOUBLE_EQ(learning_rate_at(TrainConfig{}, 0), 1e-3);
}

TEST(AdamW, FirstStepMovesBySignedLearningRate) {
  nn::ParamStore store;
  auto& p = store.add("p", Mat::Constant(1, 3, 2.0));
  p.grad << 0.5, -3.0, 0.0;
  TrainConfig c;
  c.weight_decay = 0.0;
  AdamW opt(c);
  opt.step(store, 0.01);
  EXPECT_NEAR(p.value(0, 0), 1.99, 1e-9);
  EXPECT_NEAR(p.value(0, 1), 2.01, 1e-9);
  EXPECT_DOUBLE_EQ(p.value(0, 2), 2.0);
  // Decoupled decay acts on the value even with a zero gradient.
  c.weight_decay = 0.1;
  AdamW decay(c);
  p.grad.setZero();
  p.m.setZero();
  p.v.setZero();
  decay.step(store, 0.01);
  EXPECT_NEAR(p.value(0, 2), 2.0 * (1 - 0.001), 1e-12);
}

TEST(Train, SingleSampleOverfit) {
  Model m(no_dropout(ModelConfig{}), 14);
  Rng rng(14);
  const DatasetSample s = random_sample(64, 3, rng);
  AdamW opt(TrainConfig{});
  double loss = 1e9;
  int step = 0;
  for (; step < 2000 && loss >= 0.05; ++step) loss = train_step(m, opt, {&s}, 1e-3, nullptr);
  std::cout << "overfit: " << loss << " mm after " << step << " steps\n";
  EXPECT_LT(loss, 0.05);
}

namespace {

LoadedDataset toy_dataset(int n, std::uint64_t seed) {
  Rng rng(seed);
  LoadedDataset d;
  for (int i = 0; i < n; ++i) {
    d.samples.push_back(random_sample(64, 1 + i % 3, rng));
    d.splits.push_back(i < n - 2 ? Split::kTrain : Split::kVal);
  }
  return d;
}

}  // namespace

TEST(Train, SameSeedSameHistory) {
  const LoadedDataset d = toy_dataset(8, 15);
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 3;
  std::vector<EpochRecord> runs[2];
  for (auto& h : runs) {
    Model m(ModelConfig{}, 15);
    h = train(m, d, c, 99);
  }
  ASSERT_EQ(runs[0].size(), 2u);
  for (std::size_t e = 0; e < 2; ++e) {
    EXPECT_EQ(runs[0][e].train_mae, runs[1][e].train_mae);
    EXPECT_EQ(runs[0][e].val_mae, runs[1][e].val_mae);
  }
  EXPECT_DOUBLE_EQ(runs[0][1].lr, 1e-3 * 0.995);
  std::ostringstream csv;
  write_history_csv(csv, runs[0]);
  EXPECT_EQ(csv.str().substr(0, 27), "epoch,train_mae,val_mae,lr\n");
}

TEST(Train, ThreadCountDoesNotChangeHistory) {
  const LoadedDataset d = toy_dataset(6, 16);
  TrainConfig c;
  c.epochs = 1;
  c.batch_size = 4;
  Model a(ModelConfig{}, 16), b(ModelConfig{}, 16);
  const auto ha = train(a, d, c, 5);
  c.threads = 3;
  const auto hb = train(b, d, c, 5);
  EXPECT_EQ(ha[0].train_mae, hb[0].train_mae);
  EXPECT_EQ(ha[0].val_mae, hb[0].val_mae);
}

TEST(Train, ErrorsOnEmptySplitAndDivergence) {
  LoadedDataset d = toy_dataset(3, 17);
  for (auto& s : d.splits) s = Split::kVal;
  Model m(ModelConfig{}, 17);
  EXPECT_THROW(train(m, d, TrainConfig{}, 1), std::invalid_argument);

  Model bad(ModelConfig{}, 18);
  bad.params().get("gen.gain").value.setConstant(std::nan(""));
  AdamW opt(TrainConfig{});
  EXPECT_THROW(train_step(bad, opt, {&d.samples[0]}, 1e-3, nullptr), DivergenceError);
}

TEST(Checkpoint, RoundTripPreservesPredictions) {
  Model m(ModelConfig{}, 19);
  Rng rng(19);
  const DatasetSample s = random_sample(64, 2, rng);
  m.params().get("gen.gain").value *= 1.5;
  std::stringstream buf;
  write_checkpoint(buf, m, {{"dataset_hash", "abc"}});
  LoadedCheckpoint ck = read_checkpoint(buf);
  EXPECT_EQ(ck.extra.at("dataset_hash"), "abc");
  EXPECT_EQ(ck.model.predict(make_input(s)), m.predict(make_input(s)));

  std::string bytes = buf.str();
  bytes[0] = 'X';
  std::stringstream corrupt(bytes);
  EXPECT_THROW(read_checkpoint(corrupt), io::FormatError);
  std::stringstream truncated(buf.str().substr(0, buf.str().size() / 2));
  EXPECT_THROW(read_checkpoint(truncated), io::FormatError);
}
