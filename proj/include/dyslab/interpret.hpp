#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "dyslab/nn/graph.hpp"

namespace dyslab::interpret {

struct GradCamMap {
  Tensor heat;  // [H x W] of the model input, values in [0,1]
  std::size_t target_class = 0;
  std::string source_layer;
};

/// Name of the deepest conv layer.
std::string default_cam_layer(const nn::ModelGraph& model);

/// Grad-CAM of the pre-activation class score (the input of a trailing
/// softmax/sigmoid node, otherwise the output itself). Channel weights are the
/// spatial means of the score gradient over the conv layer's output; the
/// relu'd weighted sum is bilinearly upsampled to the input size and min-max
/// normalized.
GradCamMap grad_cam(const nn::ModelGraph& model, const Tensor& input, std::size_t target_class,
                    const std::optional<std::string>& layer = std::nullopt);

/// Blue -> green -> yellow ramp, 256 entries, RGB in [0,1].
const std::array<std::array<float, 3>, 256>& color_ramp();

inline constexpr float kOverlayWeight = 0.4f;

/// (1 - 0.4) * gray(base) + 0.4 * ramp(heat), as [3 x H x W] planes.
Tensor overlay(const GradCamMap& cam, const Tensor& base);

/// Fraction of total heat falling in each of `bands` equal row bands. Row 0 of
/// a spectrogram input is its lowest mel band, so band 0 is the lowest range.
std::vector<double> heat_mass_per_band(const GradCamMap& cam, std::size_t bands);

}  // namespace dyslab::interpret
