#include "dyslab/nn/adam.hpp"

#include <cmath>

#include "dyslab/error.hpp"

namespace dyslab::nn {

AdamState::AdamState(const WeightStore& params, AdamConfig config)
    : config_(config), m_(params.zeros_like()), v_(params.zeros_like()) {}

void AdamState::step(WeightStore& params, const WeightStore& grads) {
  auto& pe = params.entries();
  const auto& ge = grads.entries();
  if (pe.size() != ge.size() || pe.size() != m_.size()) {
    throw Error(ErrorCode::ShapeMismatch, "adam: parameter/gradient/state counts differ");
  }
  for (std::size_t i = 0; i < pe.size(); ++i) {
    require_same_shape(pe[i].second, ge[i].second, "adam gradient");
    require_same_shape(pe[i].second, m_.entries()[i].second, "adam state");
  }

  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < pe.size(); ++i) {
    auto& p = pe[i].second;
    const auto& g = ge[i].second;
    auto& m = m_.entries()[i].second;
    auto& v = v_.entries()[i].second;
    for (std::size_t j = 0; j < p.size(); ++j) {
      const real gj = g[j];
      m[j] = static_cast<real>(b1 * m[j] + (1.0 - b1) * gj);
      v[j] = static_cast<real>(b2 * v[j] + (1.0 - b2) * gj * gj);
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      p[j] = static_cast<real>(p[j] - config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps));
    }
  }
}

}  // namespace dyslab::nn
