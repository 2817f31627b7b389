#include "dyslab/nn/losses.hpp"

#include <algorithm>
#include <cmath>

#include "dyslab/error.hpp"

namespace dyslab::nn {

LossResult loss_bce(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "loss_bce");
  if (pred.empty()) throw Error(ErrorCode::ShapeMismatch, "loss_bce on empty tensors");
  const double n = static_cast<double>(pred.size());
  LossResult r{0.0, Tensor(pred.shape())};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = std::clamp(static_cast<double>(pred[i]), double{kProbClamp}, 1.0 - kProbClamp);
    const double t = target[i];
    r.value -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
    r.grad[i] = static_cast<real>((p - t) / (p * (1.0 - p)) / n);
  }
  r.value /= n;
  return r;
}

LossResult loss_ce(const Tensor& probs, const Tensor& one_hot) {
  require_same_shape(probs, one_hot, "loss_ce");
  if (probs.empty() || probs.rank() > 2) throw Error(ErrorCode::ShapeMismatch, "loss_ce expects rank 1 or 2");
  const double rows = probs.rank() == 2 ? static_cast<double>(probs.dim(0)) : 1.0;
  LossResult r{0.0, Tensor(probs.shape())};
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double t = one_hot[i];
    if (t == 0.0) continue;
    const double p = std::clamp(static_cast<double>(probs[i]), double{kProbClamp}, 1.0 - kProbClamp);
    r.value -= t * std::log(p);
    r.grad[i] = static_cast<real>(-t / p / rows);
  }
  r.value /= rows;
  return r;
}

LossResult loss_l1(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "loss_l1");
  if (pred.empty()) throw Error(ErrorCode::ShapeMismatch, "loss_l1 on empty tensors");
  const double n = static_cast<double>(pred.size());
  const real g = static_cast<real>(1.0 / n);
  LossResult r{0.0, Tensor(pred.shape())};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - target[i];
    r.value += std::abs(d);
    r.grad[i] = d > 0 ? g : (d < 0 ? -g : 0.0f);
  }
  r.value /= n;
  return r;
}

}  // namespace dyslab::nn
