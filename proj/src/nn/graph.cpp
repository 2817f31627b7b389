#include "dyslab/nn/graph.hpp"

#include <cmath>
#include <sstream>

#include "dyslab/error.hpp"

namespace dyslab::nn {

const char* to_string(LayerKind kind) noexcept {
  switch (kind) {
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::MaxPool2d: return "maxpool2d";
    case LayerKind::Dense: return "dense";
    case LayerKind::Relu: return "relu";
    case LayerKind::Sigmoid: return "sigmoid";
    case LayerKind::Softmax: return "softmax";
    case LayerKind::Dropout: return "dropout";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::UpsampleNearest: return "upsample_nn";
    case LayerKind::ConcatSkip: return "concat_skip";
  }
  return "unknown";
}

LayerSpec LayerSpec::conv(int filters, int kernel, Padding padding) {
  LayerSpec s;
  s.kind = LayerKind::Conv2d;
  s.filters = filters;
  s.kernel = kernel;
  s.padding = padding;
  return s;
}

LayerSpec LayerSpec::maxpool(int pool) {
  LayerSpec s;
  s.kind = LayerKind::MaxPool2d;
  s.pool = pool;
  return s;
}

LayerSpec LayerSpec::dense(int units) {
  LayerSpec s;
  s.kind = LayerKind::Dense;
  s.units = units;
  return s;
}

LayerSpec LayerSpec::dropout(real rate) {
  LayerSpec s;
  s.kind = LayerKind::Dropout;
  s.rate = rate;
  return s;
}

LayerSpec LayerSpec::of(LayerKind kind) {
  LayerSpec s;
  s.kind = kind;
  return s;
}

ModelGraph::ModelGraph(std::string arch, Shape input_shape)
    : arch_(std::move(arch)), input_shape_(std::move(input_shape)) {
  if (input_shape_.empty() || shape_size(input_shape_) == 0) {
    throw Error(ErrorCode::InvalidArgument, "model input shape must be non-empty");
  }
}

const Shape& ModelGraph::shape_of(int index) const {
  return index == kGraphInput ? input_shape_ : nodes_.at(static_cast<std::size_t>(index)).output_shape;
}

const Shape& ModelGraph::output_shape() const {
  return nodes_.empty() ? input_shape_ : nodes_.back().output_shape;
}

std::optional<int> ModelGraph::find(const std::string& name) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].name == name) return static_cast<int>(i);
  return std::nullopt;
}

int ModelGraph::add(std::string name, LayerSpec spec, std::vector<int> inputs) {
  if (find(name)) throw Error(ErrorCode::DuplicateName, "layer " + name);
  if (inputs.empty()) inputs.push_back(static_cast<int>(nodes_.size()) - 1);
  for (int in : inputs) {
    if (in < kGraphInput || in >= static_cast<int>(nodes_.size())) {
      throw Error(ErrorCode::InvalidArgument, "layer " + name + " references unknown input " + std::to_string(in));
    }
  }
  const std::size_t expected_inputs = spec.kind == LayerKind::ConcatSkip ? 2 : 1;
  if (inputs.size() != expected_inputs) {
    throw Error(ErrorCode::InvalidArgument, "layer " + name + " takes " + std::to_string(expected_inputs) + " inputs");
  }

  const Shape& in = shape_of(inputs[0]);
  auto need_rank3 = [&](const Shape& s) {
    if (s.size() != 3) {
      throw Error(ErrorCode::ShapeMismatch,
                  "layer " + name + " (" + to_string(spec.kind) + ") needs [C x H x W], got " + shape_to_string(s));
    }
  };

  Shape out;
  switch (spec.kind) {
    case LayerKind::Conv2d: {
      need_rank3(in);
      if (spec.filters <= 0 || spec.kernel <= 0 || spec.kernel % 2 == 0) {
        throw Error(ErrorCode::InvalidArgument, "conv " + name + " needs filters > 0 and odd kernel");
      }
      const auto k = static_cast<std::size_t>(spec.kernel);
      if (spec.padding == Padding::Valid && (in[1] < k || in[2] < k)) {
        throw Error(ErrorCode::ShapeMismatch, "conv " + name + " input smaller than kernel");
      }
      out = {static_cast<std::size_t>(spec.filters), conv_output_extent(in[1], k, spec.padding),
             conv_output_extent(in[2], k, spec.padding)};
      weights_.add(name + ".kernel", Tensor({static_cast<std::size_t>(spec.filters), in[0], k, k}));
      weights_.add(name + ".bias", Tensor({static_cast<std::size_t>(spec.filters)}));
      break;
    }
    case LayerKind::MaxPool2d: {
      need_rank3(in);
      if (spec.pool <= 0) throw Error(ErrorCode::InvalidArgument, "pool must be positive");
      const auto p = static_cast<std::size_t>(spec.pool);
      out = {in[0], (in[1] + p - 1) / p, (in[2] + p - 1) / p};
      break;
    }
    case LayerKind::Dense: {
      if (spec.units <= 0) throw Error(ErrorCode::InvalidArgument, "dense " + name + " needs units > 0");
      const auto units = static_cast<std::size_t>(spec.units);
      out = {units};
      weights_.add(name + ".weight", Tensor({units, shape_size(in)}));
      weights_.add(name + ".bias", Tensor({units}));
      break;
    }
    case LayerKind::Dropout:
      if (!(spec.rate >= 0.0f && spec.rate < 1.0f)) {
        throw Error(ErrorCode::InvalidArgument, "dropout rate must be in [0,1)");
      }
      out = in;
      break;
    case LayerKind::Relu:
    case LayerKind::Sigmoid:
    case LayerKind::Softmax:
      out = in;
      break;
    case LayerKind::Flatten:
      out = {shape_size(in)};
      break;
    case LayerKind::UpsampleNearest:
      need_rank3(in);
      out = {in[0], 2 * in[1], 2 * in[2]};
      break;
    case LayerKind::ConcatSkip: {
      const Shape& other = shape_of(inputs[1]);
      need_rank3(in);
      need_rank3(other);
      if (in[1] != other[1] || in[2] != other[2]) {
        throw Error(ErrorCode::ShapeMismatch, "concat " + name + ": " + shape_to_string(in) + " vs " +
                                                  shape_to_string(other));
      }
      out = {in[0] + other[0], in[1], in[2]};
      break;
    }
  }
  nodes_.push_back(Node{std::move(name), spec, std::move(inputs), std::move(out)});
  return static_cast<int>(nodes_.size()) - 1;
}

void ModelGraph::initialize(std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& node = nodes_[i];
    if (node.spec.kind != LayerKind::Conv2d && node.spec.kind != LayerKind::Dense) continue;
    const bool conv = node.spec.kind == LayerKind::Conv2d;
    bool head = false;
    for (const auto& other : nodes_) {
      const bool squashing = other.spec.kind == LayerKind::Softmax || other.spec.kind == LayerKind::Sigmoid;
      if (squashing && other.inputs.size() == 1 && other.inputs[0] == static_cast<int>(i)) head = true;
    }
    auto& w = weights_.get(node.name + (conv ? ".kernel" : ".weight"));
    const std::size_t fan_in = w.size() / w.dim(0);
    const double scale = head ? kHeadInitScale : 1.0;
    const auto limit = static_cast<real>(scale * std::sqrt(6.0 / static_cast<double>(fan_in)));
    std::uniform_real_distribution<real> u(-limit, limit);
    for (auto& v : w.values()) v = u(rng);
    weights_.get(node.name + ".bias").fill(0.0f);
  }
}

Tensor ModelGraph::forward(const Tensor& x) const { return forward_trace(x, Mode::Eval).outputs.back(); }

Trace ModelGraph::forward_trace(const Tensor& x, Mode mode, Rng* rng) const {
  if (x.shape() != input_shape_) {
    throw Error(ErrorCode::ShapeMismatch, arch_ + " expects input " + shape_to_string(input_shape_) + ", got " +
                                              shape_to_string(x.shape()));
  }
  if (nodes_.empty()) throw Error(ErrorCode::InvalidArgument, "empty model graph");
  Trace tr;
  tr.input = x;
  tr.outputs.resize(nodes_.size());
  tr.pool_argmax.resize(nodes_.size());
  tr.dropout_keep.resize(nodes_.size());

  auto input_of = [&](int idx) -> const Tensor& {
    return idx == kGraphInput ? tr.input : tr.outputs[static_cast<std::size_t>(idx)];
  };

  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    const Tensor& in = input_of(n.inputs[0]);
    switch (n.spec.kind) {
      case LayerKind::Conv2d:
        tr.outputs[i] = conv2d_forward(in, weights_.get(n.name + ".kernel"), weights_.get(n.name + ".bias"),
                                       n.spec.padding);
        break;
      case LayerKind::MaxPool2d: {
        auto r = maxpool2d_forward(in, n.spec.pool);
        tr.outputs[i] = std::move(r.y);
        tr.pool_argmax[i] = std::move(r.argmax);
        break;
      }
      case LayerKind::Dense:
        tr.outputs[i] = dense_forward(in, weights_.get(n.name + ".weight"), weights_.get(n.name + ".bias"));
        break;
      case LayerKind::Relu:
        tr.outputs[i] = relu_forward(in);
        break;
      case LayerKind::Sigmoid:
        tr.outputs[i] = sigmoid_forward(in);
        break;
      case LayerKind::Softmax:
        tr.outputs[i] = softmax_forward(in);
        break;
      case LayerKind::Dropout: {
        const bool training = mode == Mode::Train && n.spec.rate > 0.0f;
        if (training && rng == nullptr) throw Error(ErrorCode::InvalidArgument, "training dropout needs an RNG");
        Rng unused(0);
        auto r = dropout_forward(in, n.spec.rate, training, training ? *rng : unused);
        tr.outputs[i] = std::move(r.y);
        tr.dropout_keep[i] = std::move(r.keep);
        break;
      }
      case LayerKind::Flatten:
        tr.outputs[i] = in.reshaped({in.size()});
        break;
      case LayerKind::UpsampleNearest:
        tr.outputs[i] = upsample_nn_forward(in);
        break;
      case LayerKind::ConcatSkip:
        tr.outputs[i] = concat_forward(in, input_of(n.inputs[1]));
        break;
    }
  }
  return tr;
}

BackwardResult ModelGraph::backward(const Trace& trace, int seed_node, const Tensor& seed_grad,
                                    WeightStore* param_grads, bool keep_node_grads) const {
  if (seed_node < 0 || seed_node >= static_cast<int>(nodes_.size())) {
    throw Error(ErrorCode::InvalidArgument, "backward seed node out of range");
  }
  if (trace.outputs.size() != nodes_.size()) throw Error(ErrorCode::InvalidArgument, "trace does not match graph");
  if (seed_grad.shape() != nodes_[static_cast<std::size_t>(seed_node)].output_shape) {
    throw Error(ErrorCode::ShapeMismatch, "seed gradient shape " + shape_to_string(seed_grad.shape()) +
                                              " vs node output " +
                                              shape_to_string(nodes_[static_cast<std::size_t>(seed_node)].output_shape));
  }

  BackwardResult result;
  result.dinput = Tensor(input_shape_);
  std::vector<Tensor> grads(nodes_.size());
  grads[static_cast<std::size_t>(seed_node)] = seed_grad;

  auto input_of = [&](int idx) -> const Tensor& {
    return idx == kGraphInput ? trace.input : trace.outputs[static_cast<std::size_t>(idx)];
  };
  auto push = [&](int idx, Tensor g) {
    Tensor& dst = idx == kGraphInput ? result.dinput : grads[static_cast<std::size_t>(idx)];
    if (dst.empty() && idx != kGraphInput) {
      dst = std::move(g);
      return;
    }
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += g[j];
  };
  auto add_param = [&](const std::string& name, const Tensor& g) {
    if (!param_grads) return;
    Tensor& dst = param_grads->get(name);
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += g[j];
  };

  for (int i = seed_node; i >= 0; --i) {
    const auto ui = static_cast<std::size_t>(i);
    if (grads[ui].empty()) continue;
    const Node& n = nodes_[ui];
    const Tensor& dy = grads[ui];
    const Tensor& in = input_of(n.inputs[0]);
    switch (n.spec.kind) {
      case LayerKind::Conv2d: {
        auto g = conv2d_backward(in, weights_.get(n.name + ".kernel"), n.spec.padding, dy);
        add_param(n.name + ".kernel", g.dkernel);
        add_param(n.name + ".bias", g.dbias);
        push(n.inputs[0], std::move(g.dx));
        break;
      }
      case LayerKind::MaxPool2d:
        push(n.inputs[0], maxpool2d_backward(dy, trace.pool_argmax[ui], in.shape()));
        break;
      case LayerKind::Dense: {
        auto g = dense_backward(in, weights_.get(n.name + ".weight"), dy);
        add_param(n.name + ".weight", g.dweight);
        add_param(n.name + ".bias", g.dbias);
        push(n.inputs[0], std::move(g.dx));
        break;
      }
      case LayerKind::Relu:
        push(n.inputs[0], relu_backward(in, dy));
        break;
      case LayerKind::Sigmoid:
        push(n.inputs[0], sigmoid_backward(trace.outputs[ui], dy));
        break;
      case LayerKind::Softmax:
        push(n.inputs[0], softmax_backward(trace.outputs[ui], dy));
        break;
      case LayerKind::Dropout:
        push(n.inputs[0], dropout_backward(dy, trace.dropout_keep[ui], n.spec.rate));
        break;
      case LayerKind::Flatten:
        push(n.inputs[0], dy.reshaped(in.shape()));
        break;
      case LayerKind::UpsampleNearest:
        push(n.inputs[0], upsample_nn_backward(dy));
        break;
      case LayerKind::ConcatSkip: {
        auto [da, db] = concat_backward(dy, in.dim(0));
        push(n.inputs[0], std::move(da));
        push(n.inputs[1], std::move(db));
        break;
      }
    }
    if (!keep_node_grads) grads[ui] = Tensor();
  }
  if (keep_node_grads) result.node_grads = std::move(grads);
  return result;
}

std::string ModelGraph::describe() const {
  std::ostringstream os;
  os << "arch=" << arch_ << ";input=" << shape_to_string(input_shape_);
  for (const auto& n : nodes_) {
    os << ";" << n.name << ":" << to_string(n.spec.kind);
    switch (n.spec.kind) {
      case LayerKind::Conv2d:
        os << "(f=" << n.spec.filters << ",k=" << n.spec.kernel
           << (n.spec.padding == Padding::Same ? ",same)" : ",valid)");
        break;
      case LayerKind::MaxPool2d: os << "(p=" << n.spec.pool << ")"; break;
      case LayerKind::Dense: os << "(u=" << n.spec.units << ")"; break;
      case LayerKind::Dropout: os << "(r=" << n.spec.rate << ")"; break;
      default: break;
    }
    os << "<-";
    for (std::size_t j = 0; j < n.inputs.size(); ++j) os << (j ? "," : "") << n.inputs[j];
  }
  return os.str();
}

}  // namespace dyslab::nn
