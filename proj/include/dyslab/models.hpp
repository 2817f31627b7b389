#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>

#include "dyslab/nn/graph.hpp"

namespace dyslab::models {

inline constexpr std::uint64_t kDefaultSeed = 1337;

inline constexpr const char* kDetectorArch = "detector";
inline constexpr const char* kSeverityArch = "severity";
inline constexpr const char* kUNetArch = "unet";

/// Input [1 x 64 x 64] normalized MFCC image, output sigmoid probability.
struct DetectorConfig {
  int conv1_filters = 16;
  int conv2_filters = 32;
  int hidden_units = 32;
};

/// Input [1 x 128 x 128] normalized spectrogram, output 4-way softmax.
struct SeverityConfig {
  int conv1_filters = 32;
  int conv2_filters = 64;
  int conv3_filters = 128;
  float dropout = 0.5f;
  int hidden_units = 128;
};

/// Input and output [1 x 128 x 128]. Level l has base_filters * 2^l filters,
/// the bottleneck base_filters * 2^depth.
struct UNetConfig {
  int base_filters = 32;
  int depth = 4;
};

nn::ModelGraph build_detector(std::uint64_t seed = kDefaultSeed, const DetectorConfig& cfg = {});
nn::ModelGraph build_severity(std::uint64_t seed = kDefaultSeed, const SeverityConfig& cfg = {});
nn::ModelGraph build_unet(std::uint64_t seed = kDefaultSeed, const UNetConfig& cfg = {});

enum class SeverityLabel { VeryLow = 0, Low = 1, Medium = 2, High = 3 };
inline constexpr std::size_t kSeverityClasses = 4;

/// "very_low", "low", "medium", "high"
const char* to_string(SeverityLabel label) noexcept;
std::optional<SeverityLabel> parse_severity(std::string_view name) noexcept;

enum class DetectionLabel { NonDysarthric = 0, Dysarthric = 1 };
const char* to_string(DetectionLabel label) noexcept;

double predict_detector(const nn::ModelGraph& model, const Tensor& mfcc_image);
/// Dysarthric iff p >= threshold.
DetectionLabel decode_detection(double probability, double threshold = 0.5);

std::array<double, kSeverityClasses> predict_severity(const nn::ModelGraph& model, const Tensor& spectrogram);
/// Lowest index wins ties.
SeverityLabel argmax_label(std::span<const double> scores);
std::size_t argmax_index(std::span<const float> scores);

/// Eval-mode U-Net inference on a [1 x 128 x 128] normalized image.
Tensor translate_spectrogram(const nn::ModelGraph& unet, const Tensor& spectrogram);

// ------------------------------------------------------------------ persistence

/// Plain-text sidecar written next to every weight file:
///   format_version=1 / arch=<tag> / config=<builder params> / config_hash=<hex>
struct ModelManifest {
  int format_version = 1;
  std::string arch;
  std::string config;
  std::string config_hash;
};

std::string config_hash(const nn::ModelGraph& model);
ModelManifest manifest_for(const nn::ModelGraph& model);
std::filesystem::path manifest_path(const std::filesystem::path& weights_path);
std::string format_manifest(const ModelManifest& m);
ModelManifest parse_manifest(const std::string& text);
ModelManifest read_manifest(const std::filesystem::path& weights_path);

/// Writes the DYSW file and its manifest.
void save_model(const nn::ModelGraph& model, const std::filesystem::path& weights_path);
/// Checks `manifest` against the model (ArchMismatch) and copies the weights in.
void load_into(nn::ModelGraph& model, const nn::WeightStore& weights, const ModelManifest& manifest);
void load_into(nn::ModelGraph& model, const std::filesystem::path& weights_path);
/// Rebuilds the architecture named by the manifest and loads the weights.
nn::ModelGraph load_model(const std::filesystem::path& weights_path);
/// Same, but ArchMismatch unless the manifest names `expected_arch`.
nn::ModelGraph load_model(const std::filesystem::path& weights_path, std::string_view expected_arch);

}  // namespace dyslab::models
