#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dyslab/features.hpp"
#include "dyslab/metrics.hpp"
#include "dyslab/models.hpp"
#include "dyslab/nn/graph.hpp"

namespace dyslab::train {

struct LabeledDataset {
  std::vector<Tensor> features;
  std::vector<int> labels;
  std::vector<std::string> class_names;
  std::vector<std::string> paths;  // relative to the ingested root
  std::filesystem::path source_root;

  std::size_t size() const noexcept { return features.size(); }
  LabeledDataset subset(std::span<const std::size_t> indices) const;
};

struct PairedDataset {
  std::vector<metrics::SpectrogramPair> pairs;
  std::vector<std::string> keys;

  std::size_t size() const noexcept { return pairs.size(); }
  PairedDataset subset(std::span<const std::size_t> indices) const;
};

enum class FeatureKind {
  DetectorMfcc,  // [1 x 64 x 64]
  Spectrogram,   // [1 x 128 x 128]
  Raw,           // DYST as stored, WAV as its MFCC matrix
};

struct IngestOptions {
  FeatureKind kind = FeatureKind::DetectorMfcc;
  /// Class directory names in label order; empty means lexicographic.
  std::vector<std::string> class_order;
  features::FeatureConfig features;
};

/// One subdirectory per class holding .wav or .dyst files, read in
/// lexicographic path order.
LabeledDataset ingest_classification_dir(const std::filesystem::path& root, const IngestOptions& opts = {});

/// `<relative-path>\t<class-index>` per item.
std::string format_dataset_manifest(const LabeledDataset& ds);
void write_dataset_manifest(const LabeledDataset& ds, const std::filesystem::path& path);

/// root/dysarthric/<stem>.{wav,dyst} paired with root/clean/<stem>.{wav,dyst};
/// unmatched stems are skipped.
PairedDataset ingest_paired_dir(const std::filesystem::path& root, const features::FeatureConfig& cfg = {});

struct SplitSpec {
  double train = 0.7;
  double val = 0.2;
  double test = 0.1;
  std::uint64_t seed = models::kDefaultSeed;

  void validate() const;
  /// Parses "0.7,0.2,0.1".
  static SplitSpec parse(const std::string& text, std::uint64_t seed);
};

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

/// Seeded shuffle, then cuts at floor(train*n) and floor((train+val)*n).
SplitIndices split_indices(std::size_t n, const SplitSpec& spec);

template <typename Dataset>
struct Splits {
  Dataset train, val, test;
};

template <typename Dataset>
Splits<Dataset> split(const Dataset& ds, const SplitSpec& spec) {
  const auto idx = split_indices(ds.size(), spec);
  return {ds.subset(idx.train), ds.subset(idx.val), ds.subset(idx.test)};
}

Tensor one_hot(int label, int n_classes);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  std::optional<double> train_acc;
  std::optional<double> val_acc;
};

struct TrainOptions {
  int epochs = 10;
  float lr = 1e-3f;
  int batch = 32;
  std::uint64_t seed = models::kDefaultSeed;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainReport {
  std::string model;
  std::string tag = "scratch";
  int epochs_requested = 0;
  float lr = 0.0f;
  int batch = 0;
  std::uint64_t seed = 0;
  std::size_t train_size = 0;
  std::size_t val_size = 0;
  std::size_t steps = 0;
  std::vector<EpochRecord> epochs;
  std::optional<double> test_metric;  // accuracy for classifiers, L1 for the U-Net
  double wall_seconds = 0.0;
  int best_epoch = 0;  // 0 = initial weights
  nn::WeightStore best_weights;
};

/// BCE for single-output models, CE on one-hot labels otherwise. Adam,
/// per-epoch seeded shuffle, best-validation-loss weights kept in the report.
TrainReport train_classifier(nn::ModelGraph& model, const LabeledDataset& train, const LabeledDataset& val,
                             const TrainOptions& opts);

/// Sets the bias of the layer feeding a trailing sigmoid to logit(mean target),
/// so a fresh model starts at the data mean instead of 0.5.
void calibrate_output_bias(nn::ModelGraph& model, const PairedDataset& train);

/// L1 loss on paired spectrograms. With epochs > 0 the output bias is
/// calibrated first.
TrainReport train_unet(nn::ModelGraph& model, const PairedDataset& train, const PairedDataset& val,
                       const TrainOptions& opts);

/// Initializes from `pretrained` (ArchMismatch unless `manifest` matches the
/// model) and trains as usual; the report is tagged "finetuned".
TrainReport finetune(nn::ModelGraph& model, const nn::WeightStore& pretrained, const models::ModelManifest& manifest,
                     const PairedDataset& train, const PairedDataset& val, const TrainOptions& opts);
TrainReport finetune(nn::ModelGraph& model, const nn::WeightStore& pretrained, const models::ModelManifest& manifest,
                     const LabeledDataset& train, const LabeledDataset& val, const TrainOptions& opts);

/// Eval-mode accuracy and confusion matrix of a classifier on a dataset.
metrics::ConfusionMatrix evaluate_classifier(const nn::ModelGraph& model, const LabeledDataset& ds);
int predict_class(const nn::ModelGraph& model, const Tensor& input);

/// key=value text (everything except weights).
std::string format_report(const TrainReport& report);
/// epoch,train_loss,val_loss,train_acc,val_acc
std::string format_epoch_csv(const TrainReport& report);
/// Writes <prefix>.txt and <prefix>_epochs.csv.
void write_report(const TrainReport& report, const std::filesystem::path& prefix);

}  // namespace dyslab::train
