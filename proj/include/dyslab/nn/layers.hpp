#pragma once

// Forward and hand-derived backward kernels for every layer kind. Inputs to
// spatial layers are single samples laid out [channels x rows x cols].

#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "dyslab/tensor.hpp"

namespace dyslab::nn {

using Rng = std::mt19937_64;

enum class Padding { Same, Valid };

/// kernel: [C_out x C_in x k x k], bias: [C_out], stride 1, odd k.
Tensor conv2d_forward(const Tensor& x, const Tensor& kernel, const Tensor& bias, Padding padding);

struct Conv2dGrads {
  Tensor dx;
  Tensor dkernel;
  Tensor dbias;
};
Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& kernel, Padding padding, const Tensor& dy);

/// Output spatial size of a conv with kernel k.
std::size_t conv_output_extent(std::size_t in, std::size_t k, Padding padding);

struct PoolResult {
  Tensor y;
  std::vector<std::uint32_t> argmax;  // flat input index per output cell
};

/// Non-overlapping max pooling (stride = pool). Odd extents are padded on the
/// right/bottom with -inf. Ties go to the first index in row-major order.
PoolResult maxpool2d_forward(const Tensor& x, int pool = 2);
Tensor maxpool2d_backward(const Tensor& dy, std::span<const std::uint32_t> argmax, const Shape& input_shape);

/// y = W x + b with W: [units x in], x flattened.
Tensor dense_forward(const Tensor& x, const Tensor& weight, const Tensor& bias);

struct DenseGrads {
  Tensor dx;  // same shape as x
  Tensor dweight;
  Tensor dbias;
};
DenseGrads dense_backward(const Tensor& x, const Tensor& weight, const Tensor& dy);

Tensor relu_forward(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& dy);

Tensor sigmoid_forward(const Tensor& x);
/// Uses the forward output y.
Tensor sigmoid_backward(const Tensor& y, const Tensor& dy);

/// Softmax over the whole (flattened) tensor.
Tensor softmax_forward(const Tensor& x);
Tensor softmax_backward(const Tensor& y, const Tensor& dy);

struct DropoutResult {
  Tensor y;
  std::vector<std::uint8_t> keep;  // empty in eval mode
};

/// Inverted dropout: survivors are scaled by 1/(1-rate) in training, eval is the identity.
DropoutResult dropout_forward(const Tensor& x, real rate, bool training, Rng& rng);
Tensor dropout_backward(const Tensor& dy, std::span<const std::uint8_t> keep, real rate);

/// Nearest-neighbour 2x upsampling of [C x H x W].
Tensor upsample_nn_forward(const Tensor& x);
Tensor upsample_nn_backward(const Tensor& dy);

/// Channel concatenation [Ca x H x W] ++ [Cb x H x W].
Tensor concat_forward(const Tensor& a, const Tensor& b);
std::pair<Tensor, Tensor> concat_backward(const Tensor& dy, std::size_t channels_a);

}  // namespace dyslab::nn
