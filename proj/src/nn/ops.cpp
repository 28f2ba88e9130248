#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "helioflux/nn.hpp"

namespace helioflux::nn {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("nn: ") + what);
}

using RowMap = Eigen::Map<Mat>;
using ConstRowMap = Eigen::Map<const Mat>;

/// Bilinear upsampling matrix (2s x s), half-pixel centres.
Mat upsample_matrix(int s) {
  Mat u = Mat::Zero(2 * s, s);
  for (int o = 0; o < 2 * s; ++o) {
    const double src = std::clamp((o + 0.5) / 2.0 - 0.5, 0.0, static_cast<double>(s - 1));
    const int i0 = static_cast<int>(std::floor(src));
    const int i1 = std::min(i0 + 1, s - 1);
    const double f = src - i0;
    u(o, i0) += 1.0 - f;
    u(o, i1) += f;
  }
  return u;
}

/// Patch matrix (cin * 9) x (size * size) for one zero-padded input map.
void im2col(const double* x, int cin, int size, Mat& cols) {
  cols.setZero(cin * 9, size * size);
  for (int c = 0; c < cin; ++c)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const int row = c * 9 + ky * 3 + kx;
        for (int y = 0; y < size; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= size) continue;
          for (int xx = 0; xx < size; ++xx) {
            const int sx = xx + kx - 1;
            if (sx < 0 || sx >= size) continue;
            cols(row, y * size + xx) = x[(c * size + sy) * size + sx];
          }
        }
      }
}

void col2im_add(const Mat& cols, int cin, int size, double* dx) {
  for (int c = 0; c < cin; ++c)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const int row = c * 9 + ky * 3 + kx;
        for (int y = 0; y < size; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= size) continue;
          for (int xx = 0; xx < size; ++xx) {
            const int sx = xx + kx - 1;
            if (sx < 0 || sx >= size) continue;
            dx[(c * size + sy) * size + sx] += cols(row, y * size + xx);
          }
        }
      }
}

}  // namespace

Var matmul(Tape& t, Var x, Var w) {
  const Mat& X = t.value(x);
  const Mat& W = t.value(w);
  require(X.cols() == W.rows(), "matmul shape mismatch");
  return t.push(
      X * W,
      [&t, x, w](const Mat& g) {
        if (t.needs(x)) t.grad(x).noalias() += g * t.value(w).transpose();
        if (t.needs(w)) t.grad(w).noalias() += t.value(x).transpose() * g;
      },
      t.needs(x) || t.needs(w));
}

Var add_bias(Tape& t, Var x, Var b) {
  const Mat& X = t.value(x);
  const Mat& B = t.value(b);
  require(B.rows() == 1 && B.cols() == X.cols(), "bias shape mismatch");
  Mat out = X;
  out.rowwise() += B.row(0);
  return t.push(
      std::move(out),
      [&t, x, b](const Mat& g) {
        if (t.needs(x)) t.grad(x) += g;
        if (t.needs(b)) t.grad(b) += g.colwise().sum();
      },
      t.needs(x) || t.needs(b));
}

Var linear(Tape& t, Var x, Var w, Var b) { return add_bias(t, matmul(t, x, w), b); }

Var add(Tape& t, Var a, Var b) {
  require(t.value(a).rows() == t.value(b).rows() && t.value(a).cols() == t.value(b).cols(), "add shape mismatch");
  return t.push(
      t.value(a) + t.value(b),
      [&t, a, b](const Mat& g) {
        if (t.needs(a)) t.grad(a) += g;
        if (t.needs(b)) t.grad(b) += g;
      },
      t.needs(a) || t.needs(b));
}

Var gelu(Tape& t, Var x) {
  const Mat& X = t.value(x);
  Mat out(X.rows(), X.cols());
  for (Eigen::Index i = 0; i < X.size(); ++i) {
    const double v = X.data()[i];
    out.data()[i] = 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2));
  }
  return t.push(
      std::move(out),
      [&t, x](const Mat& g) {
        const Mat& X = t.value(x);
        Mat& dx = t.grad(x);
        for (Eigen::Index i = 0; i < X.size(); ++i) {
          const double v = X.data()[i];
          const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
          const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
          dx.data()[i] += g.data()[i] * (cdf + v * pdf);
        }
      },
      t.needs(x));
}

Var leaky_relu(Tape& t, Var x, double slope) {
  const Mat& X = t.value(x);
  Mat out = X.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
  return t.push(
      std::move(out),
      [&t, x, slope](const Mat& g) {
        const Mat& X = t.value(x);
        Mat& dx = t.grad(x);
        for (Eigen::Index i = 0; i < X.size(); ++i) dx.data()[i] += g.data()[i] * (X.data()[i] > 0.0 ? 1.0 : slope);
      },
      t.needs(x));
}

Var layer_norm(Tape& t, Var x, Var gamma, Var beta, double eps) {
  const Mat& X = t.value(x);
  const Mat& G = t.value(gamma);
  const Mat& B = t.value(beta);
  require(G.rows() == 1 && G.cols() == X.cols() && B.rows() == 1 && B.cols() == X.cols(),
          "layer_norm parameter shape");
  const auto n = static_cast<double>(X.cols());
  Mat xhat(X.rows(), X.cols());
  Eigen::VectorXd inv_std(X.rows());
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    const double mu = X.row(r).mean();
    const double var = (X.row(r).array() - mu).square().sum() / n;
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (X.row(r).array() - mu) * inv_std(r);
  }
  Mat out = (xhat.array().rowwise() * G.row(0).array()).rowwise() + B.row(0).array();
  return t.push(
      std::move(out),
      [&t, x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), n](const Mat& g) {
        if (t.needs(gamma)) t.grad(gamma) += (g.array() * xhat.array()).colwise().sum().matrix();
        if (t.needs(beta)) t.grad(beta) += g.colwise().sum();
        if (!t.needs(x)) return;
        const Mat dxhat = g.array().rowwise() * t.value(gamma).row(0).array();
        Mat& dx = t.grad(x);
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
          const double m1 = dxhat.row(r).sum() / n;
          const double m2 = dxhat.row(r).dot(xhat.row(r)) / n;
          dx.row(r).array() += inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
        }
      },
      t.needs(x) || t.needs(gamma) || t.needs(beta));
}

Var dropout(Tape& t, Var x, double p, Rng* rng) {
  if (rng == nullptr || p <= 0.0) return x;
  require(p < 1.0, "dropout probability must be below 1");
  const Mat& X = t.value(x);
  Mat mask(X.rows(), X.cols());
  const double keep = 1.0 / (1.0 - p);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = uniform01(*rng) >= p ? keep : 0.0;
  Mat out = X.cwiseProduct(mask);
  return t.push(
      std::move(out), [&t, x, mask = std::move(mask)](const Mat& g) { t.grad(x) += g.cwiseProduct(mask); },
      t.needs(x));
}

Var attention(Tape& t, Var qkv, const std::vector<int>& segments, int heads, std::vector<Mat>* probs) {
  const Mat& A = t.value(qkv);
  require(A.cols() % 3 == 0, "attention expects [Q | K | V]");
  const Eigen::Index d = A.cols() / 3;
  require(heads > 0 && d % heads == 0, "embed dim must be divisible by heads");
  const Eigen::Index dh = d / heads;
  Eigen::Index total = 0;
  for (int s : segments) {
    require(s > 0, "empty attention segment");
    total += s;
  }
  require(total == A.rows(), "segments do not cover the rows");
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Mat out(A.rows(), d);
  std::vector<Mat> saved;
  saved.reserve(segments.size() * static_cast<std::size_t>(heads));
  Eigen::Index r0 = 0;
  for (int len : segments) {
    for (int h = 0; h < heads; ++h) {
      const auto q = A.block(r0, h * dh, len, dh);
      const auto k = A.block(r0, d + h * dh, len, dh);
      const auto v = A.block(r0, 2 * d + h * dh, len, dh);
      Mat s = (q * k.transpose()) * scale;
      for (Eigen::Index i = 0; i < s.rows(); ++i) {
        const double m = s.row(i).maxCoeff();
        s.row(i) = (s.row(i).array() - m).exp();
        s.row(i) /= s.row(i).sum();
      }
      out.block(r0, h * dh, len, dh).noalias() = s * v;
      saved.push_back(std::move(s));
    }
    r0 += len;
  }
  if (probs) *probs = saved;
  return t.push(
      std::move(out),
      [&t, qkv, segments, heads, d, dh, scale, saved = std::move(saved)](const Mat& g) {
        const Mat& A = t.value(qkv);
        Mat& dA = t.grad(qkv);
        Eigen::Index r0 = 0;
        std::size_t idx = 0;
        for (int len : segments) {
          for (int h = 0; h < heads; ++h, ++idx) {
            const Mat& p = saved[idx];
            const auto q = A.block(r0, h * dh, len, dh);
            const auto k = A.block(r0, d + h * dh, len, dh);
            const auto v = A.block(r0, 2 * d + h * dh, len, dh);
            const auto go = g.block(r0, h * dh, len, dh);
            const Mat dp = go * v.transpose();
            dA.block(r0, 2 * d + h * dh, len, dh).noalias() += p.transpose() * go;
            Mat ds = p.cwiseProduct(dp);
            const Eigen::VectorXd rows = ds.rowwise().sum();
            ds -= p.cwiseProduct(rows.replicate(1, p.cols()));
            ds *= scale;
            dA.block(r0, h * dh, len, dh).noalias() += ds * k;
            dA.block(r0, d + h * dh, len, dh).noalias() += ds.transpose() * q;
          }
          r0 += len;
        }
      },
      t.needs(qkv));
}

Var take_rows(Tape& t, Var x, int stride, int offset) {
  const Mat& X = t.value(x);
  require(stride > 0 && offset >= 0 && offset < stride, "take_rows stride/offset");
  const Eigen::Index n = (X.rows() - offset + stride - 1) / stride;
  Mat out(n, X.cols());
  for (Eigen::Index i = 0; i < n; ++i) out.row(i) = X.row(offset + i * stride);
  return t.push(
      std::move(out),
      [&t, x, stride, offset](const Mat& g) {
        Mat& dx = t.grad(x);
        for (Eigen::Index i = 0; i < g.rows(); ++i) dx.row(offset + i * stride) += g.row(i);
      },
      t.needs(x));
}

Var build_tokens(Tape& t, Var patches, Var cls, Var pos, int per_image) {
  const Mat& P = t.value(patches);
  const Mat& C = t.value(cls);
  const Mat& E = t.value(pos);
  require(per_image > 0 && P.rows() % per_image == 0, "patch rows not a multiple of per_image");
  require(C.rows() == 1 && C.cols() == P.cols() && E.rows() == per_image + 1 && E.cols() == P.cols(),
          "token parameter shape");
  const Eigen::Index images = P.rows() / per_image;
  const Eigen::Index group = per_image + 1;
  Mat out(images * group, P.cols());
  for (Eigen::Index g = 0; g < images; ++g) {
    out.row(g * group) = C.row(0) + E.row(0);
    out.block(g * group + 1, 0, per_image, P.cols()) =
        P.block(g * per_image, 0, per_image, P.cols()) + E.block(1, 0, per_image, P.cols());
  }
  return t.push(
      std::move(out),
      [&t, patches, cls, pos, per_image, images, group](const Mat& g) {
        const Eigen::Index cols = g.cols();
        for (Eigen::Index k = 0; k < images; ++k) {
          const auto body = g.block(k * group + 1, 0, per_image, cols);
          if (t.needs(cls)) t.grad(cls) += g.row(k * group);
          if (t.needs(pos)) {
            t.grad(pos).row(0) += g.row(k * group);
            t.grad(pos).block(1, 0, per_image, cols) += body;
          }
          if (t.needs(patches)) t.grad(patches).block(k * per_image, 0, per_image, cols) += body;
        }
      },
      t.needs(patches) || t.needs(cls) || t.needs(pos));
}

Var segment_mean(Tape& t, Var x, const std::vector<int>& segments) {
  const Mat& X = t.value(x);
  Mat out(static_cast<Eigen::Index>(segments.size()), X.cols());
  Eigen::Index r0 = 0;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    require(segments[s] > 0, "empty segment");
    out.row(static_cast<Eigen::Index>(s)) = X.block(r0, 0, segments[s], X.cols()).colwise().sum() / segments[s];
    r0 += segments[s];
  }
  require(r0 == X.rows(), "segments do not cover the rows");
  return t.push(
      std::move(out),
      [&t, x, segments](const Mat& g) {
        Mat& dx = t.grad(x);
        Eigen::Index r0 = 0;
        for (std::size_t s = 0; s < segments.size(); ++s) {
          for (int i = 0; i < segments[s]; ++i) dx.row(r0 + i) += g.row(static_cast<Eigen::Index>(s)) / segments[s];
          r0 += segments[s];
        }
      },
      t.needs(x));
}

Var slice_cols(Tape& t, Var x, int begin, int count) {
  const Mat& X = t.value(x);
  require(begin >= 0 && count > 0 && begin + count <= X.cols(), "slice_cols range");
  return t.push(
      X.middleCols(begin, count),
      [&t, x, begin, count](const Mat& g) { t.grad(x).middleCols(begin, count) += g; }, t.needs(x));
}

Var tile_rows(Tape& t, Var x, int n) {
  const Mat& X = t.value(x);
  require(X.rows() == 1 && n > 0, "tile_rows expects a single row");
  return t.push(
      X.replicate(n, 1), [&t, x](const Mat& g) { t.grad(x) += g.colwise().sum(); }, t.needs(x));
}

Var mul_row_broadcast(Tape& t, Var x, Var gvar) {
  const Mat& X = t.value(x);
  const Mat& G = t.value(gvar);
  require(G.rows() == 1 && G.cols() == X.cols(), "mul_row_broadcast shape");
  Mat out = X.array().rowwise() * G.row(0).array();
  return t.push(
      std::move(out),
      [&t, x, gvar](const Mat& g) {
        if (t.needs(x)) t.grad(x).array() += g.array().rowwise() * t.value(gvar).row(0).array();
        if (t.needs(gvar)) t.grad(gvar) += (g.array() * t.value(x).array()).colwise().sum().matrix();
      },
      t.needs(x) || t.needs(gvar));
}

Eigen::VectorXd demodulation_scale(const Mat& modulated) {
  return (modulated.rowwise().squaredNorm().array() + 1e-8).rsqrt().matrix();
}

Var modconv3x3(Tape& t, Var x, Var w, Var style, Var bias, int cin, int cout, int size, bool demodulate) {
  const Mat& X = t.value(x);
  const Mat& W = t.value(w);
  const Mat& S = t.value(style);
  const Mat& B = t.value(bias);
  const Eigen::Index n = X.rows();
  const int pix = size * size;
  require(X.cols() == cin * pix, "modconv input shape");
  require(W.rows() == cout && W.cols() == cin * 9, "modconv weight shape");
  require(S.rows() == n && S.cols() == cin, "modconv style shape");
  require(B.rows() == 1 && B.cols() == cout, "modconv bias shape");

  Mat out(n, static_cast<Eigen::Index>(cout) * pix);
  Mat cols;
  for (Eigen::Index s = 0; s < n; ++s) {
    Mat wm = W;
    for (int c = 0; c < cin; ++c) wm.middleCols(c * 9, 9) *= S(s, c);
    if (demodulate) wm = demodulation_scale(wm).asDiagonal() * wm;
    im2col(X.row(s).data(), cin, size, cols);
    RowMap o(out.row(s).data(), cout, pix);
    o.noalias() = wm * cols;
    o.colwise() += B.row(0).transpose();
  }
  return t.push(
      std::move(out),
      [&t, x, w, style, bias, cin, cout, size, pix, demodulate](const Mat& g) {
        const Mat& X = t.value(x);
        const Mat& W = t.value(w);
        const Mat& S = t.value(style);
        Mat cols;
        for (Eigen::Index s = 0; s < X.rows(); ++s) {
          const ConstRowMap go(g.row(s).data(), cout, pix);
          if (t.needs(bias)) t.grad(bias) += go.rowwise().sum().transpose();
          Mat wm = W;
          for (int c = 0; c < cin; ++c) wm.middleCols(c * 9, 9) *= S(s, c);
          Eigen::VectorXd d = Eigen::VectorXd::Ones(cout);
          if (demodulate) d = demodulation_scale(wm);
          const Mat wd = d.asDiagonal() * wm;
          if (t.needs(x)) {
            const Mat dcols = wd.transpose() * go;
            Mat& dx = t.grad(x);
            col2im_add(dcols, cin, size, dx.row(s).data());
          }
          if (!t.needs(w) && !t.needs(style)) continue;
          im2col(X.row(s).data(), cin, size, cols);
          const Mat dwd = go * cols.transpose();
          Mat dwm = d.asDiagonal() * dwd;
          if (demodulate) {
            const Eigen::VectorXd dd = dwd.cwiseProduct(wm).rowwise().sum();
            const Eigen::VectorXd coef = -(dd.array() * d.array().cube()).matrix();
            dwm += coef.asDiagonal() * wm;
          }
          if (t.needs(w)) {
            Mat& dw = t.grad(w);
            for (int c = 0; c < cin; ++c) dw.middleCols(c * 9, 9) += dwm.middleCols(c * 9, 9) * S(s, c);
          }
          if (t.needs(style)) {
            Mat& ds = t.grad(style);
            for (int c = 0; c < cin; ++c)
              ds(s, c) += dwm.middleCols(c * 9, 9).cwiseProduct(W.middleCols(c * 9, 9)).sum();
          }
        }
      },
      t.needs(x) || t.needs(w) || t.needs(style) || t.needs(bias));
}

Var upsample2x(Tape& t, Var x, int channels, int size) {
  const Mat& X = t.value(x);
  require(X.cols() == channels * size * size, "upsample input shape");
  const Mat u = upsample_matrix(size);
  const int big = 2 * size;
  Mat out(X.rows(), static_cast<Eigen::Index>(channels) * big * big);
  for (Eigen::Index s = 0; s < X.rows(); ++s)
    for (int c = 0; c < channels; ++c) {
      const ConstRowMap in(X.row(s).data() + c * size * size, size, size);
      RowMap o(out.row(s).data() + c * big * big, big, big);
      o.noalias() = u * in * u.transpose();
    }
  return t.push(
      std::move(out),
      [&t, x, channels, size, big, u](const Mat& g) {
        Mat& dx = t.grad(x);
        for (Eigen::Index s = 0; s < g.rows(); ++s)
          for (int c = 0; c < channels; ++c) {
            const ConstRowMap go(g.row(s).data() + c * big * big, big, big);
            RowMap d(dx.row(s).data() + c * size * size, size, size);
            d.noalias() += u.transpose() * go * u;
          }
      },
      t.needs(x));
}

Var channel_mix(Tape& t, Var x, Var w, Var b, int channels, int pixels) {
  const Mat& X = t.value(x);
  const Mat& W = t.value(w);
  require(X.cols() == channels * pixels, "channel_mix input shape");
  require(W.rows() == 1 && W.cols() == channels && t.value(b).size() == 1, "channel_mix weight shape");
  Mat out(X.rows(), pixels);
  for (Eigen::Index s = 0; s < X.rows(); ++s) {
    const ConstRowMap in(X.row(s).data(), channels, pixels);
    out.row(s) = W * in;
    out.row(s).array() += t.value(b)(0, 0);
  }
  return t.push(
      std::move(out),
      [&t, x, w, b, channels, pixels](const Mat& g) {
        const Mat& X = t.value(x);
        for (Eigen::Index s = 0; s < X.rows(); ++s) {
          const ConstRowMap in(X.row(s).data(), channels, pixels);
          if (t.needs(w)) t.grad(w).noalias() += g.row(s) * in.transpose();
          if (t.needs(x)) {
            RowMap d(t.grad(x).row(s).data(), channels, pixels);
            d.noalias() += t.value(w).transpose() * g.row(s);
          }
        }
        if (t.needs(b)) t.grad(b)(0, 0) += g.sum();
      },
      t.needs(x) || t.needs(w) || t.needs(b));
}

Var mae_loss(Tape& t, Var pred, const Mat& target) {
  const Mat& P = t.value(pred);
  require(P.rows() == target.rows() && P.cols() == target.cols(), "mae_loss shape mismatch");
  Mat out(1, 1);
  out(0, 0) = (P - target).cwiseAbs().mean();
  return t.push(
      std::move(out),
      [&t, pred, target](const Mat& g) {
        const Mat& P = t.value(pred);
        const double scale = g(0, 0) / static_cast<double>(P.size());
        t.grad(pred).array() += (P - target).array().sign() * scale;
      },
      t.needs(pred));
}

}  // namespace helioflux::nn
