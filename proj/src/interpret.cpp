#include "dyslab/interpret.hpp"

#include <algorithm>
#include <cmath>

#include "dyslab/dsp.hpp"
#include "dyslab/error.hpp"

namespace dyslab::interpret {

using nn::LayerKind;

std::string default_cam_layer(const nn::ModelGraph& model) {
  const auto& nodes = model.nodes();
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    if (it->spec.kind == LayerKind::Conv2d) return it->name;
  }
  throw Error(ErrorCode::NotAConvLayer, model.arch() + " has no conv layer");
}

GradCamMap grad_cam(const nn::ModelGraph& model, const Tensor& input, std::size_t target_class,
                    const std::optional<std::string>& layer) {
  const std::string layer_name = layer.value_or(default_cam_layer(model));
  const auto idx = model.find(layer_name);
  if (!idx || model.nodes()[static_cast<std::size_t>(*idx)].spec.kind != LayerKind::Conv2d) {
    throw Error(ErrorCode::NotAConvLayer, "'" + layer_name + "' is not a conv layer of " + model.arch());
  }
  if (input.shape() != model.input_shape()) {
    throw Error(ErrorCode::ShapeMismatch, "grad_cam input " + shape_to_string(input.shape()) + " vs model input " +
                                              shape_to_string(model.input_shape()));
  }
  if (input.rank() != 3) throw Error(ErrorCode::ShapeMismatch, "grad_cam needs a [C x H x W] model input");

  int score_node = model.output_node();
  const auto& last = model.nodes().back();
  if ((last.spec.kind == LayerKind::Softmax || last.spec.kind == LayerKind::Sigmoid) && last.inputs[0] >= 0) {
    score_node = last.inputs[0];
  }
  const Shape& score_shape = model.nodes()[static_cast<std::size_t>(score_node)].output_shape;
  if (target_class >= shape_size(score_shape)) {
    throw Error(ErrorCode::OutOfRange, "target class " + std::to_string(target_class) + " beyond " +
                                           std::to_string(shape_size(score_shape)) + " scores");
  }

  const auto trace = model.forward_trace(input, nn::Mode::Eval);
  Tensor seed(score_shape);
  seed[target_class] = 1.0f;
  const auto back = model.backward(trace, score_node, seed, nullptr, /*keep_node_grads=*/true);

  const Tensor& act = trace.outputs[static_cast<std::size_t>(*idx)];
  const Tensor& grad = back.node_grads[static_cast<std::size_t>(*idx)];
  const std::size_t k = act.dim(0), h = act.dim(1), w = act.dim(2), plane = h * w;

  Tensor cam({h, w});
  if (!grad.empty()) {
    std::vector<double> sum(plane, 0.0);
    for (std::size_t c = 0; c < k; ++c) {
      double alpha = 0.0;
      for (std::size_t i = 0; i < plane; ++i) alpha += grad[c * plane + i];
      alpha /= static_cast<double>(plane);
      if (alpha == 0.0) continue;
      for (std::size_t i = 0; i < plane; ++i) sum[i] += alpha * act[c * plane + i];
    }
    for (std::size_t i = 0; i < plane; ++i) cam[i] = static_cast<float>(std::max(sum[i], 0.0));
  }

  GradCamMap out;
  out.target_class = target_class;
  out.source_layer = layer_name;
  out.heat = dsp::normalize_01(dsp::resize_bilinear(cam, input.dim(1), input.dim(2)));
  return out;
}

const std::array<std::array<float, 3>, 256>& color_ramp() {
  static const auto table = [] {
    std::array<std::array<float, 3>, 256> t{};
    for (std::size_t i = 0; i < t.size(); ++i) {
      const float x = static_cast<float>(i) / 255.0f;
      if (x <= 0.5f) {
        t[i] = {0.0f, 2.0f * x, 1.0f - 2.0f * x};
      } else {
        t[i] = {2.0f * x - 1.0f, 1.0f, 0.0f};
      }
    }
    return t;
  }();
  return table;
}

Tensor overlay(const GradCamMap& cam, const Tensor& base) {
  Tensor gray = base;
  if (gray.rank() == 3 && gray.dim(0) == 1) gray = gray.reshaped({gray.dim(1), gray.dim(2)});
  if (gray.shape() != cam.heat.shape()) {
    throw Error(ErrorCode::ShapeMismatch, "overlay base " + shape_to_string(base.shape()) + " vs heat " +
                                              shape_to_string(cam.heat.shape()));
  }
  const auto& ramp = color_ramp();
  const std::size_t h = gray.dim(0), w = gray.dim(1);
  Tensor rgb({3, h, w});
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const float g = std::clamp(gray.at(r, c), 0.0f, 1.0f);
      const float heat = std::clamp(cam.heat.at(r, c), 0.0f, 1.0f);
      const auto& color = ramp[static_cast<std::size_t>(std::lround(heat * 255.0f))];
      for (std::size_t ch = 0; ch < 3; ++ch) {
        rgb.at(ch, r, c) = std::clamp((1.0f - kOverlayWeight) * g + kOverlayWeight * color[ch], 0.0f, 1.0f);
      }
    }
  }
  return rgb;
}

std::vector<double> heat_mass_per_band(const GradCamMap& cam, std::size_t bands) {
  if (bands == 0 || cam.heat.rank() != 2) throw Error(ErrorCode::InvalidArgument, "need bands > 0 and a 2D map");
  const std::size_t h = cam.heat.dim(0), w = cam.heat.dim(1);
  std::vector<double> mass(bands, 0.0);
  double total = 0.0;
  for (std::size_t r = 0; r < h; ++r) {
    const std::size_t band = std::min(bands - 1, r * bands / h);
    for (std::size_t c = 0; c < w; ++c) {
      mass[band] += cam.heat.at(r, c);
      total += cam.heat.at(r, c);
    }
  }
  if (total > 0.0)
    for (auto& m : mass) m /= total;
  return mass;
}

}  // namespace dyslab::interpret
