#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dyslab/nn/layers.hpp"
#include "dyslab/nn/weights.hpp"

namespace dyslab::nn {

enum class LayerKind {
  Conv2d,
  MaxPool2d,
  Dense,
  Relu,
  Sigmoid,
  Softmax,
  Dropout,
  Flatten,
  UpsampleNearest,
  ConcatSkip,
};

const char* to_string(LayerKind kind) noexcept;

struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  int filters = 0;                  // conv output channels
  int kernel = 3;                   // conv kernel extent
  Padding padding = Padding::Same;  // conv
  int units = 0;                    // dense
  real rate = 0.0f;                // dropout, 0 <= rate < 1
  int pool = 2;                     // maxpool window and stride

  static LayerSpec conv(int filters, int kernel = 3, Padding padding = Padding::Same);
  static LayerSpec maxpool(int pool = 2);
  static LayerSpec dense(int units);
  static LayerSpec dropout(real rate);
  static LayerSpec of(LayerKind kind);
};

inline constexpr double kHeadInitScale = 0.1;

/// Graph input is referenced as node index -1.
inline constexpr int kGraphInput = -1;

struct Node {
  std::string name;
  LayerSpec spec;
  std::vector<int> inputs;
  Shape output_shape;
};

enum class Mode { Eval, Train };

/// Per-sample record of a forward pass, consumed by backward().
struct Trace {
  Tensor input;
  std::vector<Tensor> outputs;
  std::vector<std::vector<std::uint32_t>> pool_argmax;
  std::vector<std::vector<std::uint8_t>> dropout_keep;

  const Tensor& output() const { return outputs.back(); }
};

struct BackwardResult {
  Tensor dinput;
  std::vector<Tensor> node_grads;  // filled only when requested
};

/// Layer pipeline with optional skip edges, nodes in topological order. Each
/// parametrized node `n` owns weights "n.kernel"/"n.bias" (conv) or
/// "n.weight"/"n.bias" (dense).
class ModelGraph {
 public:
  ModelGraph(std::string arch, Shape input_shape);

  /// Appends a node. With no inputs listed, it consumes the previous node
  /// (or the graph input when first). Shapes are checked and parameters
  /// allocated (zeroed) here.
  int add(std::string name, LayerSpec spec, std::vector<int> inputs = {});

  /// He-uniform kernels, zero biases. A layer feeding a softmax or sigmoid
  /// has its range scaled by kHeadInitScale so fresh outputs stay near-uniform.
  void initialize(std::uint64_t seed);

  Tensor forward(const Tensor& x) const;
  Trace forward_trace(const Tensor& x, Mode mode, Rng* rng = nullptr) const;

  /// Injects `seed_grad` at the output of `seed_node` and propagates it back.
  /// Parameter gradients are added into `param_grads` when non-null.
  BackwardResult backward(const Trace& trace, int seed_node, const Tensor& seed_grad,
                          WeightStore* param_grads, bool keep_node_grads = false) const;

  const std::string& arch() const noexcept { return arch_; }
  /// Builder parameters needed to reconstruct this architecture.
  const std::string& config() const noexcept { return config_; }
  void set_config(std::string config) { config_ = std::move(config); }
  const Shape& input_shape() const noexcept { return input_shape_; }
  const Shape& output_shape() const;
  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  int output_node() const noexcept { return static_cast<int>(nodes_.size()) - 1; }
  std::optional<int> find(const std::string& name) const;

  WeightStore& weights() noexcept { return weights_; }
  const WeightStore& weights() const noexcept { return weights_; }
  std::size_t parameter_count() const noexcept { return weights_.parameter_count(); }

  /// Canonical text description of the architecture (not the weights).
  std::string describe() const;

 private:
  const Shape& shape_of(int index) const;

  std::string arch_;
  std::string config_;
  Shape input_shape_;
  std::vector<Node> nodes_;
  WeightStore weights_;
};

}  // namespace dyslab::nn
