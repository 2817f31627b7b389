#include "dyslab/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dyslab/error.hpp"

namespace dyslab::nn {

double relative_error(double analytic, double numeric) noexcept {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

double relative_error(std::span<const double> analytic, std::span<const double> numeric) noexcept {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size() && i < numeric.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
}

double check_gradient(std::span<real> param, std::span<const real> analytic, const std::function<double()>& loss,
                      const GradCheckOptions& opts) {
  if (param.size() != analytic.size()) throw Error(ErrorCode::ShapeMismatch, "gradient size mismatch");
  std::vector<std::size_t> coords(param.size());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (coords.size() > opts.max_coords) {
    Rng rng(opts.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(opts.max_coords);
  }

  std::vector<double> a, n;
  for (auto i : coords) {
    const real original = param[i];
    const auto up = static_cast<real>(original + opts.h);
    const auto down = static_cast<real>(original - opts.h);
    param[i] = up;
    const double f_up = loss();
    param[i] = down;
    const double f_down = loss();
    param[i] = original;
    const double numeric = (f_up - f_down) / (static_cast<double>(up) - static_cast<double>(down));
    a.push_back(analytic[i]);
    n.push_back(numeric);
  }
  if (opts.norm_wise) return relative_error(a, n);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, relative_error(a[i], n[i]));
  return worst;
}

double gradient_check(ModelGraph& model, const Tensor& input, const GradCheckOptions& opts,
                      const Objective& custom) {
  Objective f = custom;
  if (!f) {
    Rng rng(opts.seed ^ 0x9E3779B97F4A7C15ull);
    std::normal_distribution<real> normal(0.0f, 1.0f);
    Tensor projection(model.output_shape());
    for (auto& v : projection.values()) v = normal(rng);
    f = [projection](const Tensor& y) {
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) s += static_cast<double>(projection[i]) * y[i];
      return LossResult{s, projection};
    };
  }

  Tensor x = input;
  auto objective = [&]() { return f(model.forward(x)).value; };

  const auto trace = model.forward_trace(x, Mode::Eval);
  WeightStore grads = model.weights().zeros_like();
  const auto back = model.backward(trace, model.output_node(), f(trace.output()).grad, &grads);

  double worst = check_gradient(x.values(), back.dinput.values(), objective, opts);
  for (std::size_t e = 0; e < grads.size(); ++e) {
    auto& param = model.weights().entries()[e].second;
    GradCheckOptions o = opts;
    o.seed = opts.seed + e + 1;
    worst = std::max(worst, check_gradient(param.values(), grads.entries()[e].second.values(), objective, o));
  }
  return worst;
}

}  // namespace dyslab::nn
