#pragma once

// Minimal reverse-mode autodiff over dense row-major matrices.

#include <Eigen/Dense>
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "helioflux/rng.hpp"

namespace helioflux::nn {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Param {
  std::string name;
  Mat value;
  Mat grad;
  Mat m;  // optimizer first moment
  Mat v;  // optimizer second moment
};

/// Named parameters with stable addresses, iterated in insertion order.
class ParamStore {
 public:
  Param& add(const std::string& name, Mat init);
  Param& get(const std::string& name);
  const Param& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::deque<Param>& all() { return params_; }
  const std::deque<Param>& all() const { return params_; }
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::deque<Param> params_;
  std::map<std::string, std::size_t> index_;
};

struct Var {
  int id = -1;
};

class Tape {
 public:
  /// A tape built with record = false only evaluates (no backward closures).
  explicit Tape(bool record = true) : record_(record) {}

  Var constant(Mat value);
  Var param(Param& p);
  /// Adds a computed node. `backward` receives the node's gradient and is
  /// dropped when no input requires a gradient or the tape is not recording.
  Var push(Mat value, std::function<void(const Mat&)> backward, bool needs_grad);

  const Mat& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
  /// Gradient buffer, zero-initialized on first access.
  Mat& grad(Var v);
  bool has_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].grad.size() != 0; }
  bool recording() const { return record_; }
  bool needs(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].needs; }

  /// Seeds d(loss)/d(loss) = 1, runs closures in reverse, and adds the
  /// results into the gradients of the parameters used.
  void backward(Var loss);

 private:
  struct Node {
    Mat value;
    Mat grad;
    std::function<void(const Mat&)> backward;
    Param* param = nullptr;
    bool needs = false;
  };
  std::vector<Node> nodes_;
  bool record_;
};

// Elementwise and dense ops. Shapes are checked; mismatches throw std::invalid_argument.
Var matmul(Tape& t, Var x, Var w);
Var add_bias(Tape& t, Var x, Var b);
Var linear(Tape& t, Var x, Var w, Var b);
Var add(Tape& t, Var a, Var b);
Var gelu(Tape& t, Var x);
Var leaky_relu(Tape& t, Var x, double slope = 0.2);
Var layer_norm(Tape& t, Var x, Var gamma, Var beta, double eps = 1e-5);
/// Inverted dropout; identity when rng is null or p == 0.
Var dropout(Tape& t, Var x, double p, Rng* rng);

/// Scaled dot-product attention. qkv holds [Q | K | V] column blocks; rows
/// are grouped into consecutive segments that attend only within themselves.
/// When `probs` is given it receives each (segment, head) softmax matrix.
Var attention(Tape& t, Var qkv, const std::vector<int>& segments, int heads, std::vector<Mat>* probs = nullptr);

/// Rows (offset, offset + stride, ...) of x.
Var take_rows(Tape& t, Var x, int stride, int offset);
/// Interleaves a class row before every group of `per_image` patch rows and
/// adds pos (rows = per_image + 1) to every group.
Var build_tokens(Tape& t, Var patches, Var cls, Var pos, int per_image);
Var segment_mean(Tape& t, Var x, const std::vector<int>& segments);
Var slice_cols(Tape& t, Var x, int begin, int count);
Var tile_rows(Tape& t, Var x, int n);
Var mul_row_broadcast(Tape& t, Var x, Var g);

/// 1 / sqrt(sum of squared modulated weights + 1e-8) per output channel.
Eigen::VectorXd demodulation_scale(const Mat& modulated);

/// Modulated 3x3 convolution, zero padding. x rows hold cin x size x size
/// maps, w is cout x (cin * 9) with column ci * 9 + ky * 3 + kx, style is
/// n x cin, bias is 1 x cout.
Var modconv3x3(Tape& t, Var x, Var w, Var style, Var bias, int cin, int cout, int size, bool demodulate = true);

/// Bilinear 2x upsampling with half-pixel centres, edge clamped.
Var upsample2x(Tape& t, Var x, int channels, int size);

/// 1x1 convolution down to one channel: out = sum_c w_c x_c + b.
Var channel_mix(Tape& t, Var x, Var w, Var b, int channels, int pixels);

/// Mean absolute error against a constant target of the same shape.
Var mae_loss(Tape& t, Var pred, const Mat& target);

}  // namespace helioflux::nn
