#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include "dyslab/nn/graph.hpp"
#include "dyslab/nn/losses.hpp"

namespace dyslab::nn {

struct GradCheckOptions {
  double h = 1e-3;
  std::size_t max_coords = 64;  // sampled coordinates per tensor
  std::uint64_t seed = 0;
  /// Compare whole sampled gradient vectors instead of single coordinates.
  /// Useful in float32, where tiny coordinates are dominated by rounding.
  bool norm_wise = false;
};

/// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric) noexcept;
/// ||a - n||_2 / max(||a||_2, ||n||_2, 1e-12)
double relative_error(std::span<const double> analytic, std::span<const double> numeric) noexcept;

/// Central differences on sampled coordinates of `param`, compared against
/// `analytic`. Returns the max per-coordinate relative error (or the vector
/// error with norm_wise). `loss` must re-evaluate the scalar objective.
double check_gradient(std::span<real> param, std::span<const real> analytic,
                      const std::function<double()>& loss, const GradCheckOptions& opts = {});

/// Scalar objective on the graph output: value and d value / d output.
using Objective = std::function<LossResult(const Tensor& output)>;

/// Checks the input and every parameter tensor of an eval-mode graph.
/// Without an objective, sum(r * output) for a fixed random r is used.
/// Returns the worst per-tensor relative error.
double gradient_check(ModelGraph& model, const Tensor& input, const GradCheckOptions& opts = {},
                      const Objective& objective = {});

}  // namespace dyslab::nn
