#pragma once

#include <cstdint>

#include "dyslab/nn/weights.hpp"

namespace dyslab::nn {

struct AdamConfig {
  real lr = 1e-3f;
  real beta1 = 0.9f;
  real beta2 = 0.999f;
  real eps = 1e-8f;
};

class AdamState {
 public:
  AdamState(const WeightStore& params, AdamConfig config = {});

  const AdamConfig& config() const noexcept { return config_; }
  std::int64_t step_count() const noexcept { return t_; }
  const WeightStore& first_moment() const noexcept { return m_; }
  const WeightStore& second_moment() const noexcept { return v_; }

  /// Bias-corrected Adam update of `params` in place.
  void step(WeightStore& params, const WeightStore& grads);

 private:
  AdamConfig config_;
  std::int64_t t_ = 0;
  WeightStore m_;
  WeightStore v_;
};

inline void adam_step(WeightStore& params, const WeightStore& grads, AdamState& state) {
  state.step(params, grads);
}

}  // namespace dyslab::nn
