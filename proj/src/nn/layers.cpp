#include "dyslab/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dyslab/error.hpp"
#include "gemm.hpp"

namespace dyslab::nn {

namespace {

void require_rank3(const Tensor& x, const char* who) {
  if (x.rank() != 3) {
    throw Error(ErrorCode::ShapeMismatch,
                std::string(who) + " expects [C x H x W], got " + shape_to_string(x.shape()));
  }
}

struct ConvGeometry {
  std::size_t cin, h, w, cout, k, pad, oh, ow;
};

ConvGeometry conv_geometry(const Tensor& x, const Tensor& kernel, Padding padding) {
  require_rank3(x, "conv2d");
  if (kernel.rank() != 4 || kernel.dim(2) != kernel.dim(3) || kernel.dim(2) % 2 == 0) {
    throw Error(ErrorCode::ShapeMismatch, "conv2d kernel must be [C_out x C_in x k x k] with odd k");
  }
  if (kernel.dim(1) != x.dim(0)) {
    throw Error(ErrorCode::ShapeMismatch, "conv2d input has " + std::to_string(x.dim(0)) +
                                              " channels, kernel expects " + std::to_string(kernel.dim(1)));
  }
  ConvGeometry g{};
  g.cin = x.dim(0);
  g.h = x.dim(1);
  g.w = x.dim(2);
  g.cout = kernel.dim(0);
  g.k = kernel.dim(2);
  g.pad = padding == Padding::Same ? g.k / 2 : 0;
  if (padding == Padding::Valid && (g.h < g.k || g.w < g.k)) {
    throw Error(ErrorCode::ShapeMismatch, "valid conv input smaller than kernel");
  }
  g.oh = conv_output_extent(g.h, g.k, padding);
  g.ow = conv_output_extent(g.w, g.k, padding);
  return g;
}

// Output columns ox whose input column ox + kx - pad lies inside the image.
std::pair<std::size_t, std::size_t> valid_columns(const ConvGeometry& g, std::size_t kx) {
  const std::size_t lo = kx < g.pad ? g.pad - kx : 0;
  const std::size_t hi = std::min(g.ow, g.w + g.pad - kx);
  return {std::min(lo, hi), hi};
}

// cols: [(cin*k*k) x (oh*ow)]
void im2col(const real* x, const ConvGeometry& g, real* cols) {
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t c = 0; c < g.cin; ++c) {
    const real* plane = x + c * g.h * g.w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        real* row = cols + ((c * g.k + ky) * g.k + kx) * g.oh * g.ow;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy + ky) - pad;
          real* dst = row + oy * g.ow;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(dst, dst + g.ow, 0.0f);
            continue;
          }
          const real* src = plane + static_cast<std::size_t>(iy) * g.w;
          const auto [lo, hi] = valid_columns(g, kx);
          std::fill(dst, dst + lo, 0.0f);
          std::copy(src + lo + kx - g.pad, src + hi + kx - g.pad, dst + lo);
          std::fill(dst + hi, dst + g.ow, 0.0f);
        }
      }
    }
  }
}

void col2im(const real* cols, const ConvGeometry& g, real* dx) {
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t c = 0; c < g.cin; ++c) {
    real* plane = dx + c * g.h * g.w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const real* row = cols + ((c * g.k + ky) * g.k + kx) * g.oh * g.ow;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy + ky) - pad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          real* dst = plane + static_cast<std::size_t>(iy) * g.w;
          const real* src = row + oy * g.ow;
          const auto [lo, hi] = valid_columns(g, kx);
          real* d = dst + kx - g.pad;
          for (std::size_t ox = lo; ox < hi; ++ox) d[ox] += src[ox];
        }
      }
    }
  }
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t k, Padding padding) {
  return padding == Padding::Same ? in : in - k + 1;
}

Tensor conv2d_forward(const Tensor& x, const Tensor& kernel, const Tensor& bias, Padding padding) {
  const auto g = conv_geometry(x, kernel, padding);
  if (bias.size() != g.cout) throw Error(ErrorCode::ShapeMismatch, "conv2d bias size mismatch");

  const std::size_t spatial = g.oh * g.ow;
  const std::size_t patch = g.cin * g.k * g.k;
  Tensor y({g.cout, g.oh, g.ow});
  for (std::size_t o = 0; o < g.cout; ++o) std::fill_n(y.data() + o * spatial, spatial, bias[o]);

  if (g.k == 1 && g.pad == 0) {
    detail::gemm(false, false, static_cast<int>(g.cout), static_cast<int>(spatial), static_cast<int>(patch),
                 1.0f, kernel.data(), x.data(), 1.0f, y.data());
    return y;
  }
  std::vector<real> cols(patch * spatial);
  im2col(x.data(), g, cols.data());
  detail::gemm(false, false, static_cast<int>(g.cout), static_cast<int>(spatial), static_cast<int>(patch), 1.0f,
               kernel.data(), cols.data(), 1.0f, y.data());
  return y;
}

Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& kernel, Padding padding, const Tensor& dy) {
  const auto g = conv_geometry(x, kernel, padding);
  if (dy.shape() != Shape{g.cout, g.oh, g.ow}) {
    throw Error(ErrorCode::ShapeMismatch, "conv2d_backward upstream gradient shape mismatch");
  }
  const std::size_t spatial = g.oh * g.ow;
  const std::size_t patch = g.cin * g.k * g.k;
  const auto M = static_cast<int>(g.cout), N = static_cast<int>(spatial), K = static_cast<int>(patch);

  Conv2dGrads out{Tensor(x.shape()), Tensor(kernel.shape()), Tensor({g.cout})};
  for (std::size_t o = 0; o < g.cout; ++o) {
    const real* row = dy.data() + o * spatial;
    double s = 0.0;
    for (std::size_t i = 0; i < spatial; ++i) s += row[i];
    out.dbias[o] = static_cast<real>(s);
  }

  if (g.k == 1 && g.pad == 0) {
    detail::gemm(false, true, M, K, N, 1.0f, dy.data(), x.data(), 0.0f, out.dkernel.data());
    detail::gemm(true, false, K, N, M, 1.0f, kernel.data(), dy.data(), 0.0f, out.dx.data());
    return out;
  }
  std::vector<real> cols(patch * spatial);
  im2col(x.data(), g, cols.data());
  // dK = dy * cols^T
  detail::gemm(false, true, M, K, N, 1.0f, dy.data(), cols.data(), 0.0f, out.dkernel.data());
  // dcols = K^T * dy, reusing the buffer
  detail::gemm(true, false, K, N, M, 1.0f, kernel.data(), dy.data(), 0.0f, cols.data());
  col2im(cols.data(), g, out.dx.data());
  return out;
}

PoolResult maxpool2d_forward(const Tensor& x, int pool) {
  require_rank3(x, "maxpool2d");
  if (pool < 1) throw Error(ErrorCode::InvalidArgument, "pool must be positive");
  const std::size_t p = static_cast<std::size_t>(pool);
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t oh = (h + p - 1) / p, ow = (w + p - 1) / p;

  PoolResult r{Tensor({c, oh, ow}), std::vector<std::uint32_t>(c * oh * ow)};
  std::size_t out_i = 0;
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox, ++out_i) {
        real best = -std::numeric_limits<real>::infinity();
        std::size_t best_i = (ch * h + oy * p) * w + ox * p;
        for (std::size_t dy = 0; dy < p; ++dy) {
          const std::size_t iy = oy * p + dy;
          if (iy >= h) break;
          for (std::size_t dx = 0; dx < p; ++dx) {
            const std::size_t ix = ox * p + dx;
            if (ix >= w) break;
            const std::size_t idx = (ch * h + iy) * w + ix;
            if (x[idx] > best) {
              best = x[idx];
              best_i = idx;
            }
          }
        }
        r.y[out_i] = best;
        r.argmax[out_i] = static_cast<std::uint32_t>(best_i);
      }
    }
  }
  return r;
}

Tensor maxpool2d_backward(const Tensor& dy, std::span<const std::uint32_t> argmax, const Shape& input_shape) {
  if (dy.size() != argmax.size()) throw Error(ErrorCode::ShapeMismatch, "maxpool argmax size mismatch");
  Tensor dx(input_shape);
  for (std::size_t i = 0; i < dy.size(); ++i) dx[argmax[i]] += dy[i];
  return dx;
}

Tensor dense_forward(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2 || weight.dim(1) != x.size() || bias.size() != weight.dim(0)) {
    throw Error(ErrorCode::ShapeMismatch, "dense: input of " + std::to_string(x.size()) +
                                              " values vs weight " + shape_to_string(weight.shape()));
  }
  const std::size_t units = weight.dim(0);
  Tensor y({units}, std::vector<real>(bias.values().begin(), bias.values().end()));
  detail::gemv(false, static_cast<int>(units), static_cast<int>(x.size()), 1, weight.data(), x.data(), 1, y.data());
  return y;
}

DenseGrads dense_backward(const Tensor& x, const Tensor& weight, const Tensor& dy) {
  if (weight.rank() != 2 || weight.dim(1) != x.size() || dy.size() != weight.dim(0)) {
    throw Error(ErrorCode::ShapeMismatch, "dense_backward shape mismatch");
  }
  const auto units = static_cast<int>(weight.dim(0));
  const auto in = static_cast<int>(weight.dim(1));
  DenseGrads g{Tensor(x.shape()), Tensor(weight.shape()), Tensor({weight.dim(0)})};
  std::copy(dy.values().begin(), dy.values().end(), g.dbias.data());
  detail::ger(units, in, 1, dy.data(), x.data(), g.dweight.data());
  detail::gemv(true, units, in, 1, weight.data(), dy.data(), 0, g.dx.data());
  return g;
}

Tensor relu_forward(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
  return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& dy) {
  require_same_shape(x, dy, "relu_backward");
  Tensor dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0f ? dy[i] : 0.0f;
  return dx;
}

Tensor sigmoid_forward(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const real v = x[i];
    // split on sign so exp never overflows
    if (v >= 0.0f) {
      y[i] = 1.0f / (1.0f + std::exp(-v));
    } else {
      const real e = std::exp(v);
      y[i] = e / (1.0f + e);
    }
  }
  return y;
}

Tensor sigmoid_backward(const Tensor& y, const Tensor& dy) {
  require_same_shape(y, dy, "sigmoid_backward");
  Tensor dx(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] = dy[i] * y[i] * (1.0f - y[i]);
  return dx;
}

Tensor softmax_forward(const Tensor& x) {
  if (x.empty()) throw Error(ErrorCode::ShapeMismatch, "softmax of an empty tensor");
  const real m = x.max();
  Tensor y(x.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = std::exp(x[i] - m);
    total += y[i];
  }
  for (auto& v : y.values()) v = static_cast<real>(v / total);
  return y;
}

Tensor softmax_backward(const Tensor& y, const Tensor& dy) {
  require_same_shape(y, dy, "softmax_backward");
  double dot = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) dot += static_cast<double>(y[i]) * dy[i];
  Tensor dx(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] = static_cast<real>(y[i] * (dy[i] - dot));
  return dx;
}

DropoutResult dropout_forward(const Tensor& x, real rate, bool training, Rng& rng) {
  if (!(rate >= 0.0f && rate < 1.0f)) throw Error(ErrorCode::InvalidArgument, "dropout rate must be in [0,1)");
  if (!training || rate == 0.0f) return {x, {}};
  DropoutResult r{Tensor(x.shape()), std::vector<std::uint8_t>(x.size())};
  std::uniform_real_distribution<real> u(0.0f, 1.0f);
  const real scale = 1.0f / (1.0f - rate);
  for (std::size_t i = 0; i < x.size(); ++i) {
    r.keep[i] = u(rng) >= rate ? 1 : 0;
    r.y[i] = r.keep[i] ? x[i] * scale : 0.0f;
  }
  return r;
}

Tensor dropout_backward(const Tensor& dy, std::span<const std::uint8_t> keep, real rate) {
  if (keep.empty()) return dy;
  if (keep.size() != dy.size()) throw Error(ErrorCode::ShapeMismatch, "dropout mask size mismatch");
  const real scale = 1.0f / (1.0f - rate);
  Tensor dx(dy.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = keep[i] ? dy[i] * scale : 0.0f;
  return dx;
}

Tensor upsample_nn_forward(const Tensor& x) {
  require_rank3(x, "upsample_nn");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor y({c, 2 * h, 2 * w});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t r = 0; r < 2 * h; ++r)
      for (std::size_t col = 0; col < 2 * w; ++col) y.at(ch, r, col) = x.at(ch, r / 2, col / 2);
  return y;
}

Tensor upsample_nn_backward(const Tensor& dy) {
  require_rank3(dy, "upsample_nn_backward");
  if (dy.dim(1) % 2 || dy.dim(2) % 2) throw Error(ErrorCode::ShapeMismatch, "upsample gradient must be even");
  const std::size_t c = dy.dim(0), h = dy.dim(1) / 2, w = dy.dim(2) / 2;
  Tensor dx({c, h, w});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t r = 0; r < 2 * h; ++r)
      for (std::size_t col = 0; col < 2 * w; ++col) dx.at(ch, r / 2, col / 2) += dy.at(ch, r, col);
  return dx;
}

Tensor concat_forward(const Tensor& a, const Tensor& b) {
  require_rank3(a, "concat");
  require_rank3(b, "concat");
  if (a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2)) {
    throw Error(ErrorCode::ShapeMismatch,
                "concat spatial mismatch " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  }
  Tensor y({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
  std::copy(a.values().begin(), a.values().end(), y.data());
  std::copy(b.values().begin(), b.values().end(), y.data() + a.size());
  return y;
}

std::pair<Tensor, Tensor> concat_backward(const Tensor& dy, std::size_t channels_a) {
  require_rank3(dy, "concat_backward");
  if (channels_a > dy.dim(0)) throw Error(ErrorCode::ShapeMismatch, "concat split beyond channel count");
  const std::size_t plane = dy.dim(1) * dy.dim(2);
  Tensor da({channels_a, dy.dim(1), dy.dim(2)});
  Tensor db({dy.dim(0) - channels_a, dy.dim(1), dy.dim(2)});
  std::copy_n(dy.data(), channels_a * plane, da.data());
  std::copy(dy.data() + channels_a * plane, dy.data() + dy.size(), db.data());
  return {std::move(da), std::move(db)};
}

}  // namespace dyslab::nn
