#include "dyslab/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "dyslab/error.hpp"
#include "dyslab/nn/adam.hpp"
#include "dyslab/nn/losses.hpp"

namespace fs = std::filesystem;

namespace dyslab::train {
namespace {

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

bool is_wav(const fs::path& p) { return lower(p.extension().string()) == ".wav"; }
bool is_dyst(const fs::path& p) { return lower(p.extension().string()) == ".dyst"; }

std::vector<fs::path> feature_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && (is_wav(e.path()) || is_dyst(e.path()))) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

Tensor load_feature(const fs::path& path, FeatureKind kind, const features::FeatureConfig& cfg) {
  if (is_dyst(path)) {
    Tensor t = load_tensor(path);
    switch (kind) {
      case FeatureKind::DetectorMfcc: return features::grid_to_input(t, features::kDetectorSide);
      case FeatureKind::Spectrogram: return features::grid_to_input(t, features::kSpectrogramSide);
      case FeatureKind::Raw: return t;
    }
  }
  const AudioClip clip = features::to_pipeline_rate(load_wav(path));
  switch (kind) {
    case FeatureKind::DetectorMfcc: return features::detector_input(clip, cfg);
    case FeatureKind::Spectrogram: return features::spectrogram_input(clip, cfg);
    case FeatureKind::Raw: break;
  }
  return dsp::mfcc(clip, cfg.mel, cfg.n_mfcc).coeffs;
}

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

bool single_output(const nn::ModelGraph& model) { return shape_size(model.output_shape()) == 1; }

struct SampleLoss {
  nn::LossResult loss;
  bool correct = false;
};

SampleLoss classifier_loss(const nn::ModelGraph& model, const Tensor& out, int label) {
  if (single_output(model)) {
    Tensor target(out.shape(), static_cast<float>(label));
    const bool pred = out[0] >= 0.5f;
    return {nn::loss_bce(out, target), pred == (label == 1)};
  }
  const auto n = static_cast<int>(out.size());
  Tensor target = one_hot(label, n).reshaped(out.shape());
  return {nn::loss_ce(out, target), static_cast<int>(models::argmax_index(out.values())) == label};
}

// Shared loop. `sample(i, mode, rng)` runs one training item forward and
// returns its trace and loss.
template <typename Dataset, typename LossFn, typename ValFn>
TrainReport run_training(nn::ModelGraph& model, const Dataset& train, const Dataset& val, const TrainOptions& opts,
                         LossFn&& loss_fn, ValFn&& val_fn, bool has_accuracy) {
  if (opts.epochs < 0) throw Error(ErrorCode::InvalidArgument, "epochs must be >= 0");
  if (opts.batch < 1) throw Error(ErrorCode::InvalidArgument, "batch must be >= 1");
  if (!(opts.lr > 0.0f)) throw Error(ErrorCode::InvalidArgument, "lr must be > 0");
  if (opts.epochs > 0 && train.size() == 0) throw Error(ErrorCode::Empty, "empty training set");

  const double t0 = now_seconds();
  TrainReport rep;
  rep.model = model.arch();
  rep.epochs_requested = opts.epochs;
  rep.lr = opts.lr;
  rep.batch = opts.batch;
  rep.seed = opts.seed;
  rep.train_size = train.size();
  rep.val_size = val.size();
  rep.best_weights = model.weights();

  nn::Rng rng(opts.seed);
  nn::AdamState adam(model.weights(), nn::AdamConfig{.lr = opts.lr});
  nn::WeightStore grads = model.weights().zeros_like();
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  double best_val = std::numeric_limits<double>::infinity();
  const int out_node = model.output_node();

  for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(opts.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(opts.batch));
      grads.set_zero();
      for (std::size_t k = start; k < end; ++k) {
        const auto [trace, res] = loss_fn(order[k], rng);
        loss_sum += res.loss.value;
        correct += res.correct ? 1 : 0;
        model.backward(trace, out_node, res.loss.grad, &grads);
      }
      grads.scale(1.0f / static_cast<float>(end - start));
      adam.step(model.weights(), grads);
      ++rep.steps;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train.size());
    if (has_accuracy) rec.train_acc = static_cast<double>(correct) / static_cast<double>(train.size());
    if (val.size() > 0) {
      const auto [vloss, vacc] = val_fn();
      rec.val_loss = vloss;
      if (has_accuracy) rec.val_acc = vacc;
    } else {
      rec.val_loss = rec.train_loss;
    }
    if (rec.val_loss < best_val) {
      best_val = rec.val_loss;
      rep.best_epoch = epoch;
      rep.best_weights = model.weights();
    }
    rep.epochs.push_back(rec);
    if (opts.on_epoch) opts.on_epoch(rec);
  }
  rep.wall_seconds = now_seconds() - t0;
  return rep;
}

void check_labels(const LabeledDataset& ds, std::size_t n_out) {
  const std::size_t classes = n_out == 1 ? 2 : n_out;
  for (int l : ds.labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= classes) {
      throw Error(ErrorCode::OutOfRange, "label " + std::to_string(l) + " outside model's " +
                                             std::to_string(classes) + " classes");
    }
  }
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  LabeledDataset out;
  out.class_names = class_names;
  out.source_root = source_root;
  for (std::size_t i : indices) {
    if (i >= size()) throw Error(ErrorCode::OutOfRange, "subset index");
    out.features.push_back(features[i]);
    out.labels.push_back(labels[i]);
    if (i < paths.size()) out.paths.push_back(paths[i]);
  }
  return out;
}

PairedDataset PairedDataset::subset(std::span<const std::size_t> indices) const {
  PairedDataset out;
  for (std::size_t i : indices) {
    if (i >= size()) throw Error(ErrorCode::OutOfRange, "subset index");
    out.pairs.push_back(pairs[i]);
    if (i < keys.size()) out.keys.push_back(keys[i]);
  }
  return out;
}

LabeledDataset ingest_classification_dir(const fs::path& root, const IngestOptions& opts) {
  if (!fs::is_directory(root)) throw Error(ErrorCode::MissingFile, root.string() + " is not a directory");

  std::vector<std::string> present;
  for (const auto& e : fs::directory_iterator(root)) {
    const std::string name = e.path().filename().string();
    if (e.is_directory() && !name.starts_with(".")) present.push_back(name);
  }
  std::sort(present.begin(), present.end());

  std::vector<std::string> classes = opts.class_order.empty() ? present : opts.class_order;
  for (const auto& c : classes) {
    if (!fs::is_directory(root / c)) throw Error(ErrorCode::EmptyClass, "class directory '" + c + "' missing");
  }
  for (const auto& p : present) {
    if (std::find(classes.begin(), classes.end(), p) == classes.end()) {
      throw Error(ErrorCode::InvalidArgument, "unexpected class directory '" + p + "'");
    }
  }
  if (classes.size() < 2) throw Error(ErrorCode::EmptyClass, "need at least two class directories");

  LabeledDataset ds;
  ds.class_names = classes;
  ds.source_root = root;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const auto files = feature_files(root / classes[c]);
    if (files.empty()) throw Error(ErrorCode::EmptyClass, "class '" + classes[c] + "' has no .wav or .dyst files");
    for (const auto& f : files) {
      ds.features.push_back(load_feature(f, opts.kind, opts.features));
      ds.labels.push_back(static_cast<int>(c));
      ds.paths.push_back(fs::relative(f, root).generic_string());
    }
  }
  for (std::size_t i = 1; i < ds.features.size(); ++i) {
    if (ds.features[i].shape() != ds.features[0].shape()) {
      throw Error(ErrorCode::MixedFeatureShapes, ds.paths[i] + " has shape " +
                                                     shape_to_string(ds.features[i].shape()) + ", expected " +
                                                     shape_to_string(ds.features[0].shape()));
    }
  }
  return ds;
}

std::string format_dataset_manifest(const LabeledDataset& ds) {
  std::string out;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out += (i < ds.paths.size() ? ds.paths[i] : std::to_string(i));
    out += '\t';
    out += std::to_string(ds.labels[i]);
    out += '\n';
  }
  return out;
}

void write_dataset_manifest(const LabeledDataset& ds, const fs::path& path) {
  const std::string text = format_dataset_manifest(ds);
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

PairedDataset ingest_paired_dir(const fs::path& root, const features::FeatureConfig& cfg) {
  const fs::path dys = root / "dysarthric";
  const fs::path clean = root / "clean";
  for (const auto& d : {dys, clean}) {
    if (!fs::is_directory(d)) throw Error(ErrorCode::MissingFile, d.string() + " is not a directory");
  }
  std::map<std::string, fs::path> targets;
  for (const auto& f : feature_files(clean)) targets.emplace(f.stem().string(), f);

  PairedDataset ds;
  for (const auto& f : feature_files(dys)) {
    auto it = targets.find(f.stem().string());
    if (it == targets.end()) continue;
    ds.pairs.push_back({load_feature(f, FeatureKind::Spectrogram, cfg),
                        load_feature(it->second, FeatureKind::Spectrogram, cfg)});
    ds.keys.push_back(f.stem().string());
  }
  if (ds.pairs.empty()) throw Error(ErrorCode::Empty, "no matching stems under " + root.string());
  return ds;
}

void SplitSpec::validate() const {
  for (double f : {train, val, test}) {
    if (!(f >= 0.0 && f <= 1.0)) throw Error(ErrorCode::BadRange, "split fractions must lie in [0,1]");
  }
  if (std::abs(train + val + test - 1.0) > 1e-6) throw Error(ErrorCode::BadRange, "split fractions must sum to 1");
}

SplitSpec SplitSpec::parse(const std::string& text, std::uint64_t seed) {
  SplitSpec s;
  s.seed = seed;
  std::istringstream in(text);
  std::string part;
  std::vector<double> v;
  while (std::getline(in, part, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidArgument, "bad split '" + text + "'");
    }
  }
  if (v.size() != 3) throw Error(ErrorCode::InvalidArgument, "split needs three fractions, got '" + text + "'");
  s.train = v[0];
  s.val = v[1];
  s.test = v[2];
  s.validate();
  return s;
}

SplitIndices split_indices(std::size_t n, const SplitSpec& spec) {
  spec.validate();
  if (n < 10) throw Error(ErrorCode::TooSmall, "need at least 10 items to split, got " + std::to_string(n));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(spec.seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto cut1 = static_cast<std::size_t>(std::floor(spec.train * static_cast<double>(n) + 1e-9));
  const auto cut2 =
      std::min(n, static_cast<std::size_t>(std::floor((spec.train + spec.val) * static_cast<double>(n) + 1e-9)));
  SplitIndices out;
  out.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(cut1));
  out.val.assign(idx.begin() + static_cast<std::ptrdiff_t>(cut1), idx.begin() + static_cast<std::ptrdiff_t>(cut2));
  out.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(cut2), idx.end());
  return out;
}

Tensor one_hot(int label, int n_classes) {
  if (n_classes < 1 || label < 0 || label >= n_classes) {
    throw Error(ErrorCode::OutOfRange,
                "label " + std::to_string(label) + " outside [0," + std::to_string(n_classes) + ")");
  }
  Tensor t({static_cast<std::size_t>(n_classes)});
  t[static_cast<std::size_t>(label)] = 1.0f;
  return t;
}

int predict_class(const nn::ModelGraph& model, const Tensor& input) {
  const Tensor out = model.forward(input);
  if (out.size() == 1) return out[0] >= 0.5f ? 1 : 0;
  return static_cast<int>(models::argmax_index(out.values()));
}

metrics::ConfusionMatrix evaluate_classifier(const nn::ModelGraph& model, const LabeledDataset& ds) {
  std::vector<int> preds;
  preds.reserve(ds.size());
  for (const auto& x : ds.features) preds.push_back(predict_class(model, x));
  const std::size_t n_out = shape_size(model.output_shape());
  return metrics::confusion(preds, ds.labels, n_out == 1 ? 2 : n_out);
}

TrainReport train_classifier(nn::ModelGraph& model, const LabeledDataset& train, const LabeledDataset& val,
                             const TrainOptions& opts) {
  const std::size_t n_out = shape_size(model.output_shape());
  check_labels(train, n_out);
  check_labels(val, n_out);
  if (train.size() > 0 && train.features[0].shape() != model.input_shape()) {
    throw Error(ErrorCode::ShapeMismatch, "features " + shape_to_string(train.features[0].shape()) +
                                              " do not match model input " + shape_to_string(model.input_shape()));
  }
  auto step = [&](std::size_t i, nn::Rng& rng) {
    nn::Trace trace = model.forward_trace(train.features[i], nn::Mode::Train, &rng);
    SampleLoss res = classifier_loss(model, trace.output(), train.labels[i]);
    return std::pair{std::move(trace), std::move(res)};
  };
  auto validate = [&] {
    double loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < val.size(); ++i) {
      const SampleLoss r = classifier_loss(model, model.forward(val.features[i]), val.labels[i]);
      loss += r.loss.value;
      correct += r.correct ? 1 : 0;
    }
    const double n = static_cast<double>(val.size());
    return std::pair{loss / n, static_cast<double>(correct) / n};
  };
  return run_training(model, train, val, opts, step, validate, true);
}

static TrainReport fit_unet(nn::ModelGraph& model, const PairedDataset& train, const PairedDataset& val,
                            const TrainOptions& opts) {
  auto step = [&](std::size_t i, nn::Rng& rng) {
    nn::Trace trace = model.forward_trace(train.pairs[i].input, nn::Mode::Train, &rng);
    SampleLoss res{nn::loss_l1(trace.output(), train.pairs[i].target), false};
    return std::pair{std::move(trace), std::move(res)};
  };
  auto validate = [&] { return std::pair{metrics::eval_l1(model, val.pairs), 0.0}; };
  return run_training(model, train, val, opts, step, validate, false);
}

void calibrate_output_bias(nn::ModelGraph& model, const PairedDataset& train) {
  const auto& last = model.nodes().back();
  if (last.spec.kind != nn::LayerKind::Sigmoid || last.inputs.empty() || last.inputs[0] < 0) return;
  const auto& head = model.nodes()[static_cast<std::size_t>(last.inputs[0])];
  if (head.spec.kind != nn::LayerKind::Conv2d && head.spec.kind != nn::LayerKind::Dense) return;
  if (train.size() == 0) return;
  double sum = 0.0, count = 0.0;
  for (const auto& p : train.pairs) {
    sum += p.target.sum();
    count += static_cast<double>(p.target.size());
  }
  const double mean = std::clamp(sum / count, 1e-3, 1.0 - 1e-3);
  model.weights().get(head.name + ".bias").fill(static_cast<real>(std::log(mean / (1.0 - mean))));
}

TrainReport train_unet(nn::ModelGraph& model, const PairedDataset& train, const PairedDataset& val,
                       const TrainOptions& opts) {
  if (opts.epochs > 0) calibrate_output_bias(model, train);
  return fit_unet(model, train, val, opts);
}

TrainReport finetune(nn::ModelGraph& model, const nn::WeightStore& pretrained, const models::ModelManifest& manifest,
                     const PairedDataset& train, const PairedDataset& val, const TrainOptions& opts) {
  models::load_into(model, pretrained, manifest);
  TrainReport rep = fit_unet(model, train, val, opts);
  rep.tag = "finetuned";
  return rep;
}

TrainReport finetune(nn::ModelGraph& model, const nn::WeightStore& pretrained, const models::ModelManifest& manifest,
                     const LabeledDataset& train, const LabeledDataset& val, const TrainOptions& opts) {
  models::load_into(model, pretrained, manifest);
  TrainReport rep = train_classifier(model, train, val, opts);
  rep.tag = "finetuned";
  return rep;
}

std::string format_report(const TrainReport& r) {
  std::ostringstream out;
  out << "model=" << r.model << '\n'
      << "tag=" << r.tag << '\n'
      << "epochs=" << r.epochs_requested << '\n'
      << "lr=" << fmt_double(r.lr) << '\n'
      << "batch=" << r.batch << '\n'
      << "seed=" << r.seed << '\n'
      << "train_size=" << r.train_size << '\n'
      << "val_size=" << r.val_size << '\n'
      << "steps=" << r.steps << '\n'
      << "best_epoch=" << r.best_epoch << '\n';
  if (!r.epochs.empty()) {
    const auto& last = r.epochs.back();
    out << "final_train_loss=" << fmt_double(last.train_loss) << '\n'
        << "final_val_loss=" << fmt_double(last.val_loss) << '\n';
    if (last.val_acc) out << "final_val_acc=" << fmt_double(*last.val_acc) << '\n';
  }
  if (r.test_metric) out << (r.model == models::kUNetArch ? "test_l1=" : "test_acc=") << fmt_double(*r.test_metric) << '\n';
  out << "wall_seconds=" << fmt_double(r.wall_seconds) << '\n';
  return out.str();
}

std::string format_epoch_csv(const TrainReport& r) {
  std::string out = "epoch,train_loss,val_loss,train_acc,val_acc\n";
  for (const auto& e : r.epochs) {
    out += std::to_string(e.epoch) + ',' + fmt_double(e.train_loss) + ',' + fmt_double(e.val_loss) + ',' +
           (e.train_acc ? fmt_double(*e.train_acc) : "") + ',' + (e.val_acc ? fmt_double(*e.val_acc) : "") + '\n';
  }
  return out;
}

void write_report(const TrainReport& report, const fs::path& prefix) {
  auto put = [](const fs::path& p, const std::string& text) {
    write_file_bytes(p, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  };
  put(fs::path(prefix.string() + ".txt"), format_report(report));
  put(fs::path(prefix.string() + "_epochs.csv"), format_epoch_csv(report));
}

}  // namespace dyslab::train
