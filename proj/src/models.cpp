#include "dyslab/models.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "dyslab/audio_io.hpp"
#include "dyslab/error.hpp"

namespace dyslab::models {

using nn::LayerKind;
using nn::LayerSpec;
using nn::ModelGraph;

namespace {

std::map<std::string, std::string> parse_kv_list(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::ArchMismatch, "malformed config entry '" + item + "'");
    kv[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return kv;
}

int int_field(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw Error(ErrorCode::ArchMismatch, "config lacks " + key);
  try {
    return std::stoi(it->second);
  } catch (const std::exception&) {
    throw Error(ErrorCode::ArchMismatch, "config field " + key + " is not an integer");
  }
}

std::string format_float(float v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", static_cast<double>(v));
  return buf;
}

}  // namespace

ModelGraph build_detector(std::uint64_t seed, const DetectorConfig& cfg) {
  ModelGraph g(kDetectorArch, {1, 64, 64});
  g.add("conv1", LayerSpec::conv(cfg.conv1_filters));
  g.add("relu1", LayerSpec::of(LayerKind::Relu));
  g.add("pool1", LayerSpec::maxpool());
  g.add("conv2", LayerSpec::conv(cfg.conv2_filters));
  g.add("relu2", LayerSpec::of(LayerKind::Relu));
  g.add("pool2", LayerSpec::maxpool());
  g.add("flatten", LayerSpec::of(LayerKind::Flatten));
  g.add("dense1", LayerSpec::dense(cfg.hidden_units));
  g.add("relu3", LayerSpec::of(LayerKind::Relu));
  g.add("dense2", LayerSpec::dense(1));
  g.add("sigmoid", LayerSpec::of(LayerKind::Sigmoid));
  g.set_config("conv1=" + std::to_string(cfg.conv1_filters) + ",conv2=" + std::to_string(cfg.conv2_filters) +
               ",hidden=" + std::to_string(cfg.hidden_units));
  g.initialize(seed);
  return g;
}

ModelGraph build_severity(std::uint64_t seed, const SeverityConfig& cfg) {
  ModelGraph g(kSeverityArch, {1, 128, 128});
  g.add("conv1", LayerSpec::conv(cfg.conv1_filters));
  g.add("relu1", LayerSpec::of(LayerKind::Relu));
  g.add("pool1", LayerSpec::maxpool());
  g.add("conv2", LayerSpec::conv(cfg.conv2_filters));
  g.add("relu2", LayerSpec::of(LayerKind::Relu));
  g.add("pool2", LayerSpec::maxpool());
  g.add("conv3", LayerSpec::conv(cfg.conv3_filters));
  g.add("relu3", LayerSpec::of(LayerKind::Relu));
  g.add("pool3", LayerSpec::maxpool());
  g.add("flatten", LayerSpec::of(LayerKind::Flatten));
  g.add("dropout", LayerSpec::dropout(cfg.dropout));
  g.add("dense1", LayerSpec::dense(cfg.hidden_units));
  g.add("relu4", LayerSpec::of(LayerKind::Relu));
  g.add("dense2", LayerSpec::dense(static_cast<int>(kSeverityClasses)));
  g.add("softmax", LayerSpec::of(LayerKind::Softmax));
  g.set_config("conv1=" + std::to_string(cfg.conv1_filters) + ",conv2=" + std::to_string(cfg.conv2_filters) +
               ",conv3=" + std::to_string(cfg.conv3_filters) + ",dropout=" + format_float(cfg.dropout) +
               ",hidden=" + std::to_string(cfg.hidden_units));
  g.initialize(seed);
  return g;
}

ModelGraph build_unet(std::uint64_t seed, const UNetConfig& cfg) {
  constexpr std::size_t side = 128;
  if (cfg.base_filters <= 0 || cfg.depth < 1 || (side % (std::size_t{1} << cfg.depth)) != 0) {
    throw Error(ErrorCode::InvalidArgument, "unet needs base_filters > 0 and 128 divisible by 2^depth");
  }
  ModelGraph g(kUNetArch, {1, side, side});
  auto relu = LayerSpec::of(LayerKind::Relu);

  std::vector<int> skips;
  int prev = nn::kGraphInput;
  for (int level = 0; level < cfg.depth; ++level) {
    const int f = cfg.base_filters << level;
    const std::string p = "enc" + std::to_string(level + 1) + "_";
    prev = g.add(p + "conv_a", LayerSpec::conv(f), {prev});
    prev = g.add(p + "relu_a", relu);
    prev = g.add(p + "conv_b", LayerSpec::conv(f));
    prev = g.add(p + "relu_b", relu);
    skips.push_back(prev);
    prev = g.add(p + "pool", LayerSpec::maxpool());
  }
  const int fb = cfg.base_filters << cfg.depth;
  g.add("bottleneck_conv_a", LayerSpec::conv(fb));
  g.add("bottleneck_relu_a", relu);
  g.add("bottleneck_conv_b", LayerSpec::conv(fb));
  prev = g.add("bottleneck_relu_b", relu);

  for (int level = cfg.depth - 1; level >= 0; --level) {
    const int f = cfg.base_filters << level;
    const std::string p = "dec" + std::to_string(level + 1) + "_";
    g.add(p + "up", LayerSpec::of(LayerKind::UpsampleNearest), {prev});
    g.add(p + "conv_up", LayerSpec::conv(f));
    const int up = g.add(p + "relu_up", relu);
    g.add(p + "concat", LayerSpec::of(LayerKind::ConcatSkip), {up, skips[static_cast<std::size_t>(level)]});
    g.add(p + "conv_a", LayerSpec::conv(f));
    g.add(p + "relu_a", relu);
    g.add(p + "conv_b", LayerSpec::conv(f));
    prev = g.add(p + "relu_b", relu);
  }
  g.add("head_conv", LayerSpec::conv(1, 1));
  g.add("head_sigmoid", LayerSpec::of(LayerKind::Sigmoid));
  g.set_config("base=" + std::to_string(cfg.base_filters) + ",depth=" + std::to_string(cfg.depth));
  g.initialize(seed);
  return g;
}

const char* to_string(SeverityLabel label) noexcept {
  switch (label) {
    case SeverityLabel::VeryLow: return "very_low";
    case SeverityLabel::Low: return "low";
    case SeverityLabel::Medium: return "medium";
    case SeverityLabel::High: return "high";
  }
  return "unknown";
}

std::optional<SeverityLabel> parse_severity(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kSeverityClasses; ++i) {
    const auto label = static_cast<SeverityLabel>(i);
    if (name == to_string(label)) return label;
  }
  return std::nullopt;
}

const char* to_string(DetectionLabel label) noexcept {
  return label == DetectionLabel::Dysarthric ? "dysarthric" : "non_dysarthric";
}

double predict_detector(const ModelGraph& model, const Tensor& mfcc_image) {
  return model.forward(mfcc_image)[0];
}

DetectionLabel decode_detection(double probability, double threshold) {
  return probability >= threshold ? DetectionLabel::Dysarthric : DetectionLabel::NonDysarthric;
}

std::array<double, kSeverityClasses> predict_severity(const ModelGraph& model, const Tensor& spectrogram) {
  const Tensor p = model.forward(spectrogram);
  if (p.size() != kSeverityClasses) throw Error(ErrorCode::ShapeMismatch, "severity model must output 4 values");
  std::array<double, kSeverityClasses> out{};
  for (std::size_t i = 0; i < kSeverityClasses; ++i) out[i] = p[i];
  return out;
}

SeverityLabel argmax_label(std::span<const double> scores) {
  if (scores.size() != kSeverityClasses) throw Error(ErrorCode::ShapeMismatch, "expected 4 severity scores");
  const auto it = std::max_element(scores.begin(), scores.end());  // first maximum
  return static_cast<SeverityLabel>(it - scores.begin());
}

std::size_t argmax_index(std::span<const float> scores) {
  if (scores.empty()) throw Error(ErrorCode::Empty, "argmax of empty scores");
  return static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

Tensor translate_spectrogram(const ModelGraph& unet, const Tensor& spectrogram) {
  return unet.forward(spectrogram);
}

// ------------------------------------------------------------------ persistence

std::string config_hash(const ModelGraph& model) {
  std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
  for (unsigned char c : model.describe()) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ModelManifest manifest_for(const ModelGraph& model) {
  return ModelManifest{1, model.arch(), model.config(), config_hash(model)};
}

std::filesystem::path manifest_path(const std::filesystem::path& weights_path) {
  auto p = weights_path;
  p += ".manifest";
  return p;
}

std::string format_manifest(const ModelManifest& m) {
  return "format_version=" + std::to_string(m.format_version) + "\narch=" + m.arch + "\nconfig=" + m.config +
         "\nconfig_hash=" + m.config_hash + "\n";
}

ModelManifest parse_manifest(const std::string& text) {
  ModelManifest m;
  m.format_version = 0;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::ArchMismatch, "malformed manifest line '" + line + "'");
    const auto key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "format_version") {
      m.format_version = std::atoi(value.c_str());
    } else if (key == "arch") {
      m.arch = value;
    } else if (key == "config") {
      m.config = value;
    } else if (key == "config_hash") {
      m.config_hash = value;
    } else {
      throw Error(ErrorCode::ArchMismatch, "unknown manifest key '" + key + "'");
    }
  }
  if (m.format_version != 1 || m.arch.empty() || m.config_hash.empty()) {
    throw Error(ErrorCode::ArchMismatch, "incomplete model manifest");
  }
  return m;
}

ModelManifest read_manifest(const std::filesystem::path& weights_path) {
  const auto path = manifest_path(weights_path);
  if (!std::filesystem::is_regular_file(path)) throw Error(ErrorCode::MissingFile, path.string());
  const auto bytes = read_file_bytes(path);
  return parse_manifest(std::string(bytes.begin(), bytes.end()));
}

void save_model(const ModelGraph& model, const std::filesystem::path& weights_path) {
  nn::save_weights(model.weights(), weights_path);
  const auto text = format_manifest(manifest_for(model));
  write_file_bytes(manifest_path(weights_path),
                   std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void load_into(ModelGraph& model, const nn::WeightStore& weights, const ModelManifest& manifest) {
  if (manifest.arch != model.arch() || manifest.config_hash != config_hash(model)) {
    throw Error(ErrorCode::ArchMismatch, "weights were saved for " + manifest.arch + " (" + manifest.config + ", " +
                                             manifest.config_hash + "), model is " + model.arch() + " (" +
                                             model.config() + ", " + config_hash(model) + ")");
  }
  model.weights().assign_from(weights);
}

void load_into(ModelGraph& model, const std::filesystem::path& weights_path) {
  const auto manifest = read_manifest(weights_path);
  load_into(model, nn::load_weights(weights_path), manifest);
}

nn::ModelGraph load_model(const std::filesystem::path& weights_path) {
  const auto manifest = read_manifest(weights_path);
  const auto kv = parse_kv_list(manifest.config);
  std::optional<ModelGraph> model;
  if (manifest.arch == kDetectorArch) {
    model = build_detector(0, {int_field(kv, "conv1"), int_field(kv, "conv2"), int_field(kv, "hidden")});
  } else if (manifest.arch == kSeverityArch) {
    SeverityConfig cfg{int_field(kv, "conv1"), int_field(kv, "conv2"), int_field(kv, "conv3"), 0.5f,
                       int_field(kv, "hidden")};
    auto it = kv.find("dropout");
    if (it == kv.end()) throw Error(ErrorCode::ArchMismatch, "config lacks dropout");
    cfg.dropout = std::stof(it->second);
    model = build_severity(0, cfg);
  } else if (manifest.arch == kUNetArch) {
    model = build_unet(0, {int_field(kv, "base"), int_field(kv, "depth")});
  } else {
    throw Error(ErrorCode::ArchMismatch, "unknown architecture '" + manifest.arch + "'");
  }
  load_into(*model, nn::load_weights(weights_path), manifest);
  return std::move(*model);
}

nn::ModelGraph load_model(const std::filesystem::path& weights_path, std::string_view expected_arch) {
  const auto manifest = read_manifest(weights_path);
  if (manifest.arch != expected_arch) {
    throw Error(ErrorCode::ArchMismatch, weights_path.string() + " holds a " + manifest.arch + " model, expected " +
                                             std::string(expected_arch));
  }
  return load_model(weights_path);
}

}  // namespace dyslab::models
