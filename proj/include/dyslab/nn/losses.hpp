#pragma once

#include "dyslab/tensor.hpp"

namespace dyslab::nn {

struct LossResult {
  double value = 0.0;
  Tensor grad;  // d value / d pred
};

inline constexpr real kProbClamp = 1e-7f;

/// Binary cross-entropy, mean over elements. Predictions are clamped to
/// [1e-7, 1 - 1e-7] before the logs.
LossResult loss_bce(const Tensor& pred, const Tensor& target);

/// Categorical cross-entropy on probabilities. A rank-1 tensor is one sample;
/// rank-2 [batch x classes] is averaged over rows.
LossResult loss_ce(const Tensor& probs, const Tensor& one_hot);

/// Mean absolute error over all elements.
LossResult loss_l1(const Tensor& pred, const Tensor& target);

}  // namespace dyslab::nn
