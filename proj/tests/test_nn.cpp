#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "helioflux/nn.hpp"

using namespace helioflux;
using namespace helioflux::nn;

namespace {

Mat randn(int r, int c, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

// sum(out .* weights), so every output element gets a distinct gradient.
Var weighted_sum(Tape& t, Var out, const Mat& weights) {
  Mat v(1, 1);
  v(0, 0) = t.value(out).cwiseProduct(weights).sum();
  return t.push(
      std::move(v), [&t, out, weights](const Mat& g) { t.grad(out) += weights * g(0, 0); }, t.needs(out));
}

using Builder = std::function<Var(Tape&, std::vector<Var>&)>;

double evaluate(std::vector<Param>& params, const Builder& build, const Mat& weights) {
  Tape t(false);
  std::vector<Var> vars;
  for (auto& p : params) vars.push_back(t.param(p));
  const Var out = build(t, vars);
  return t.value(out).cwiseProduct(weights).sum();
}

// Central differences against the tape for every entry of every input.
void check_gradients(std::vector<Mat> inputs, const Builder& build, std::uint64_t seed, double tol = 1e-6) {
  Rng rng(seed);
  std::vector<Param> params(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    params[i].value = inputs[i];
    params[i].grad = Mat::Zero(inputs[i].rows(), inputs[i].cols());
  }
  Mat weights;
  {
    Tape t;
    std::vector<Var> vars;
    for (auto& p : params) vars.push_back(t.param(p));
    const Var out = build(t, vars);
    weights = randn(static_cast<int>(t.value(out).rows()), static_cast<int>(t.value(out).cols()), rng);
    t.backward(weighted_sum(t, out, weights));
  }
  const double h = 1e-6;
  for (auto& p : params) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      const double keep = p.value.data()[i];
      p.value.data()[i] = keep + h;
      const double up = evaluate(params, build, weights);
      p.value.data()[i] = keep - h;
      const double down = evaluate(params, build, weights);
      p.value.data()[i] = keep;
      const double fd = (up - down) / (2 * h);
      const double an = p.grad.data()[i];
      EXPECT_NEAR(an, fd, tol * std::max(1.0, std::abs(fd))) << "entry " << i;
    }
  }
}

}  // namespace

TEST(NnGrad, Dense) {
  Rng rng(1);
  check_gradients({randn(3, 4, rng), randn(4, 5, rng), randn(1, 5, rng)},
                  [](Tape& t, std::vector<Var>& v) { return linear(t, v[0], v[1], v[2]); }, 11);
  check_gradients({randn(3, 4, rng), randn(3, 4, rng)},
                  [](Tape& t, std::vector<Var>& v) { return add(t, v[0], v[1]); }, 12);
}

TEST(NnGrad, Activations) {
  Rng rng(2);
  check_gradients({randn(4, 6, rng, 2.0)}, [](Tape& t, std::vector<Var>& v) { return gelu(t, v[0]); }, 21);
  check_gradients({randn(4, 6, rng, 2.0)}, [](Tape& t, std::vector<Var>& v) { return leaky_relu(t, v[0]); }, 22);
}

TEST(NnGrad, LayerNorm) {
  Rng rng(3);
  check_gradients({randn(5, 8, rng, 3.0), randn(1, 8, rng), randn(1, 8, rng)},
                  [](Tape& t, std::vector<Var>& v) { return layer_norm(t, v[0], v[1], v[2]); }, 31);
}

TEST(NnGrad, Attention) {
  Rng rng(4);
  const std::vector<int> segments{3, 1, 4};
  check_gradients({randn(8, 12, rng)},
                  [&](Tape& t, std::vector<Var>& v) { return attention(t, v[0], segments, 2); }, 41);
}

TEST(NnGrad, RowPlumbing) {
  Rng rng(5);
  check_gradients({randn(6, 3, rng), randn(1, 3, rng), randn(4, 3, rng)},
                  [](Tape& t, std::vector<Var>& v) { return build_tokens(t, v[0], v[1], v[2], 3); }, 51);
  check_gradients({randn(7, 3, rng)}, [](Tape& t, std::vector<Var>& v) { return take_rows(t, v[0], 3, 1); }, 52);
  check_gradients({randn(6, 3, rng)},
                  [](Tape& t, std::vector<Var>& v) { return segment_mean(t, v[0], {2, 4}); }, 53);
  check_gradients({randn(2, 6, rng)}, [](Tape& t, std::vector<Var>& v) { return slice_cols(t, v[0], 2, 3); }, 54);
  check_gradients({randn(1, 4, rng)}, [](Tape& t, std::vector<Var>& v) { return tile_rows(t, v[0], 3); }, 55);
  check_gradients({randn(3, 4, rng), randn(1, 4, rng)},
                  [](Tape& t, std::vector<Var>& v) { return mul_row_broadcast(t, v[0], v[1]); }, 56);
}

TEST(NnGrad, ModulatedConvolution) {
  Rng rng(6);
  const int cin = 2, cout = 3, size = 4;
  for (bool demod : {true, false}) {
    check_gradients({randn(2, cin * size * size, rng), randn(cout, cin * 9, rng), randn(2, cin, rng) + Mat::Ones(2, cin),
                     randn(1, cout, rng)},
                    [&](Tape& t, std::vector<Var>& v) {
                      return modconv3x3(t, v[0], v[1], v[2], v[3], cin, cout, size, demod);
                    },
                    61);
  }
}

TEST(NnGrad, UpsampleAndMix) {
  Rng rng(7);
  check_gradients({randn(2, 2 * 9, rng)}, [](Tape& t, std::vector<Var>& v) { return upsample2x(t, v[0], 2, 3); },
                  71);
  check_gradients({randn(2, 3 * 5, rng), randn(1, 3, rng), randn(1, 1, rng)},
                  [](Tape& t, std::vector<Var>& v) { return channel_mix(t, v[0], v[1], v[2], 3, 5); }, 72);
}

TEST(NnGrad, MaeLoss) {
  Rng rng(8);
  const Mat target = randn(3, 5, rng);
  check_gradients({randn(3, 5, rng)}, [&](Tape& t, std::vector<Var>& v) { return mae_loss(t, v[0], target); }, 81);
}

TEST(NnGrad, ReusedParameterAccumulates) {
  Param p{"p", Mat::Constant(1, 1, 3.0), Mat::Zero(1, 1), {}, {}};
  Tape t;
  const Var a = t.param(p);
  const Var b = t.param(p);
  t.backward(mae_loss(t, add(t, a, b), Mat::Zero(1, 1)));
  EXPECT_DOUBLE_EQ(p.grad(0, 0), 2.0);
}

TEST(Attention, RowsAreDistributions) {
  Rng rng(9);
  Tape t(false);
  std::vector<Mat> probs;
  attention(t, t.constant(randn(9, 18, rng, 3.0)), {4, 5}, 3, &probs);
  ASSERT_EQ(probs.size(), 6u);
  for (const auto& p : probs) {
    EXPECT_GE(p.minCoeff(), 0.0);
    for (Eigen::Index r = 0; r < p.rows(); ++r) EXPECT_NEAR(p.row(r).sum(), 1.0, 1e-12);
  }
}

TEST(Attention, SingletonSegmentReturnsValue) {
  Rng rng(10);
  Tape t(false);
  const Mat qkv = randn(1, 6, rng);
  const Mat out = t.value(attention(t, t.constant(qkv), {1}, 2));
  EXPECT_TRUE(out.isApprox(qkv.rightCols(2), 1e-14));
}

TEST(Attention, PermutationEquivariantWithinSegment) {
  Rng rng(11);
  const Mat qkv = randn(5, 12, rng);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(5);
  perm.indices() << 3, 0, 4, 1, 2;
  Tape t(false);
  const Mat a = t.value(attention(t, t.constant(qkv), {5}, 2));
  const Mat b = t.value(attention(t, t.constant(perm * qkv), {5}, 2));
  EXPECT_TRUE((perm * a).isApprox(b, 1e-12));
}

TEST(Attention, SegmentsAreIsolated) {
  Rng rng(12);
  Mat qkv = randn(6, 6, rng);
  Tape t(false);
  const Mat a = t.value(attention(t, t.constant(qkv), {2, 4}, 1));
  qkv.bottomRows(4) = randn(4, 6, rng);
  const Mat b = t.value(attention(t, t.constant(qkv), {2, 4}, 1));
  EXPECT_TRUE(a.topRows(2).isApprox(b.topRows(2), 1e-15));
}

TEST(Demodulation, UnitWeightsExample) {
  for (int cin : {1, 4, 32}) {
    const Mat w = Mat::Ones(3, cin * 9);
    const Eigen::VectorXd d = demodulation_scale(w);
    for (Eigen::Index i = 0; i < d.size(); ++i) EXPECT_NEAR(d[i], 1.0 / std::sqrt(9.0 * cin + 1e-8), 1e-15);
  }
}

TEST(Demodulation, OutputScaleIndependentOfStyleMagnitude) {
  Rng rng(13);
  const int cin = 2, cout = 2, size = 3;
  const Mat x = randn(1, cin * size * size, rng);
  const Mat w = randn(cout, cin * 9, rng);
  const Mat b = Mat::Zero(1, cout);
  const Mat s = randn(1, cin, rng);
  Tape t(false);
  const Mat a = t.value(modconv3x3(t, t.constant(x), t.constant(w), t.constant(s), t.constant(b), cin, cout, size));
  const Mat c =
      t.value(modconv3x3(t, t.constant(x), t.constant(w), t.constant(s * 50.0), t.constant(b), cin, cout, size));
  EXPECT_TRUE(a.isApprox(c, 1e-9));
}

TEST(Upsample, PreservesConstantsAndMean) {
  Tape t(false);
  const Mat c = Mat::Constant(1, 16, 0.7);
  EXPECT_TRUE(t.value(upsample2x(t, t.constant(c), 1, 4)).isApprox(Mat::Constant(1, 64, 0.7)));
  // Linear ramp stays a ramp away from the clamped border.
  Mat ramp(1, 16);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) ramp(0, y * 4 + x) = x;
  const Mat up = t.value(upsample2x(t, t.constant(ramp), 1, 4));
  EXPECT_NEAR(up(0, 2) - up(0, 1), 0.5, 1e-12);
}

TEST(Dropout, InvertedScalingAndDeterminism) {
  Rng a(14), b(14);
  Tape t(false);
  const Mat x = Mat::Ones(200, 200);
  const Mat da = t.value(dropout(t, t.constant(x), 0.2, &a));
  const Mat db = t.value(dropout(t, t.constant(x), 0.2, &b));
  EXPECT_EQ(da, db);
  EXPECT_NEAR(da.mean(), 1.0, 0.02);
  const int zeros = static_cast<int>((da.array() == 0.0).count());
  EXPECT_NEAR(zeros / 40000.0, 0.2, 0.01);
  EXPECT_EQ(t.value(dropout(t, t.constant(x), 0.2, nullptr)), x);
}

TEST(Tape, ShapeErrorsThrow) {
  Tape t;
  EXPECT_THROW(matmul(t, t.constant(Mat::Zero(2, 3)), t.constant(Mat::Zero(2, 3))), std::invalid_argument);
  EXPECT_THROW(attention(t, t.constant(Mat::Zero(3, 6)), {2}, 1), std::invalid_argument);
  EXPECT_THROW(attention(t, t.constant(Mat::Zero(3, 6)), {3}, 4), std::invalid_argument);
  EXPECT_THROW(t.backward(t.constant(Mat::Zero(2, 2))), std::invalid_argument);
}
