// dyslab command-line tool.
//
// Exit status: 0 success, 1 usage error, 2 data error, 3 internal error.

#include <CLI11.hpp>

#include <algorithm>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "dyslab/audio_io.hpp"
#include "dyslab/error.hpp"
#include "dyslab/features.hpp"
#include "dyslab/interpret.hpp"
#include "dyslab/metrics.hpp"
#include "dyslab/models.hpp"
#include "dyslab/service.hpp"
#include "dyslab/train.hpp"

namespace fs = std::filesystem;
using namespace dyslab;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Flags {
  std::string in, out, model, init_weights, data_root, layer, cls, pairs, model_dir;
  std::string features = "mfcc";
  std::string split = "0.7,0.2,0.1";
  std::string host = "0.0.0.0";
  std::string cors_origin = "*";
  int epochs = -1;
  float lr = -1.0f;
  int batch = -1;
  std::uint64_t seed = models::kDefaultSeed;
  int port = service::kDefaultPort;
  int unet_base = models::UNetConfig{}.base_filters;
  int unet_depth = models::UNetConfig{}.depth;
};

struct Hyper {
  int epochs;
  float lr;
  int batch;
};

std::string require(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string("missing required option ") + flag);
  return value;
}

fs::path existing_file(const std::string& value, const char* flag) {
  const fs::path p = fs::absolute(require(value, flag));
  if (!fs::is_regular_file(p)) throw Error(ErrorCode::MissingFile, p.string() + " (" + flag + ") does not exist");
  return p;
}

fs::path existing_dir(const std::string& value, const char* flag) {
  const fs::path p = fs::absolute(require(value, flag));
  if (!fs::is_directory(p)) throw Error(ErrorCode::MissingFile, p.string() + " (" + flag + ") is not a directory");
  return p;
}

fs::path output_dir(const std::string& value) {
  const fs::path p = fs::absolute(require(value, "--out"));
  fs::create_directories(p);
  return p;
}

fs::path output_file(const std::string& value) {
  const fs::path p = fs::absolute(require(value, "--out"));
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  return p;
}

Hyper hyper(const Flags& f, Hyper defaults) {
  Hyper h{f.epochs >= 0 ? f.epochs : defaults.epochs, f.lr > 0.0f ? f.lr : defaults.lr,
          f.batch > 0 ? f.batch : defaults.batch};
  if (f.lr == 0.0f || f.lr < -1.0f) throw UsageError("--lr must be positive");
  return h;
}

train::SplitSpec parse_split(const Flags& f) {
  try {
    return train::SplitSpec::parse(f.split, f.seed);
  } catch (const Error& e) {
    throw UsageError(std::string("--split: ") + e.what());
  }
}

void print_epoch(const train::EpochRecord& r, int total) {
  std::printf("epoch %d/%d train_loss=%.4f val_loss=%.4f", r.epoch, total, r.train_loss, r.val_loss);
  if (r.train_acc) std::printf(" train_acc=%.4f", *r.train_acc);
  if (r.val_acc) std::printf(" val_acc=%.4f", *r.val_acc);
  std::printf("\n");
  std::fflush(stdout);
}

void save_outputs(const nn::ModelGraph& model, const train::TrainReport& rep, const fs::path& out) {
  const std::string arch = model.arch();
  models::save_model(model, out / (arch + ".dysw"));
  nn::ModelGraph best = model;
  best.weights() = rep.best_weights;
  models::save_model(best, out / (arch + "_best.dysw"));
  train::write_report(rep, out / (arch + "_report"));
  std::printf("wrote %s (best epoch %d) and %s_report.txt\n", (out / (arch + ".dysw")).string().c_str(),
              rep.best_epoch, (out / arch).string().c_str());
}

// ------------------------------------------------------------------ commands

int cmd_extract(const Flags& f) {
  const auto clip = features::to_pipeline_rate(load_wav(existing_file(f.in, "--in")));
  const fs::path out = output_file(f.out);
  const features::FeatureConfig cfg;
  Tensor t;
  if (f.features == "mfcc") {
    t = dsp::mfcc(clip, cfg.mel, cfg.n_mfcc).coeffs;
  } else if (f.features == "mel") {
    t = dsp::amplitude_to_db(dsp::mel_spectrogram(clip, cfg.mel), features::kTopDb).data;
  } else if (f.features == "detector") {
    t = features::detector_input(clip, cfg);
  } else if (f.features == "spectrogram") {
    t = features::spectrogram_input(clip, cfg);
  } else {
    throw UsageError("--features must be one of mfcc, mel, detector, spectrogram");
  }
  if (out.extension() == ".pgm") {
    const std::size_t w = t.dim(t.rank() - 1);
    const Tensor grid = dsp::normalize_01(t.reshaped({t.size() / w, w}));
    save_image_gray(features::display_orientation(grid), out);
  } else {
    save_tensor(t, out);
  }
  std::printf("%s %s -> %s\n", f.features.c_str(), shape_to_string(t.shape()).c_str(), out.string().c_str());
  return 0;
}

train::LabeledDataset ingest_detection(const fs::path& root) {
  std::vector<std::string> dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    const std::string name = e.path().filename().string();
    if (e.is_directory() && !name.starts_with(".")) dirs.push_back(name);
  }
  std::sort(dirs.begin(), dirs.end());
  const bool has_dys = std::find(dirs.begin(), dirs.end(), "dysarthric") != dirs.end();
  if (!has_dys || dirs.size() != 2) {
    throw Error(ErrorCode::EmptyClass, root.string() + " needs exactly two class directories, one named 'dysarthric'");
  }
  const std::string other = dirs[0] == "dysarthric" ? dirs[1] : dirs[0];
  train::IngestOptions opts;
  opts.kind = train::FeatureKind::DetectorMfcc;
  opts.class_order = {other, "dysarthric"};
  return train::ingest_classification_dir(root, opts);
}

int train_classifier_cmd(const Flags& f, nn::ModelGraph model, const train::LabeledDataset& ds, Hyper defaults) {
  const fs::path out = output_dir(f.out);
  const Hyper h = hyper(f, defaults);
  const auto spec = parse_split(f);
  train::write_dataset_manifest(ds, out / "dataset_manifest.tsv");
  const auto parts = train::split(ds, spec);
  std::printf("%s: %zu items (%zu train / %zu val / %zu test), %zu classes\n", model.arch().c_str(), ds.size(),
              parts.train.size(), parts.val.size(), parts.test.size(), ds.class_names.size());

  train::TrainOptions opts;
  opts.epochs = h.epochs;
  opts.lr = h.lr;
  opts.batch = h.batch;
  opts.seed = f.seed;
  opts.on_epoch = [&](const train::EpochRecord& r) { print_epoch(r, h.epochs); };
  train::TrainReport rep;
  if (!f.init_weights.empty()) {
    const fs::path init = existing_file(f.init_weights, "--init-weights");
    rep = train::finetune(model, nn::load_weights(init), models::read_manifest(init), parts.train, parts.val, opts);
  } else {
    rep = train::train_classifier(model, parts.train, parts.val, opts);
  }
  if (parts.test.size() > 0) {
    rep.test_metric = train::evaluate_classifier(model, parts.test).accuracy();
    std::printf("test accuracy %.4f\n", *rep.test_metric);
  }
  save_outputs(model, rep, out);
  return 0;
}

int cmd_train_detect(const Flags& f) {
  const auto ds = ingest_detection(existing_dir(f.data_root, "--data-root"));
  return train_classifier_cmd(f, models::build_detector(f.seed), ds, {50, 1e-3f, 32});
}

int cmd_train_severity(const Flags& f) {
  train::IngestOptions opts;
  opts.kind = train::FeatureKind::Spectrogram;
  for (std::size_t i = 0; i < models::kSeverityClasses; ++i) {
    opts.class_order.push_back(models::to_string(static_cast<models::SeverityLabel>(i)));
  }
  const auto ds = train::ingest_classification_dir(existing_dir(f.data_root, "--data-root"), opts);
  return train_classifier_cmd(f, models::build_severity(f.seed), ds, {10, 1e-3f, 32});
}

int s2s(const Flags& f, bool finetune) {
  const fs::path root = existing_dir(f.data_root, "--data-root");
  const fs::path init = finetune ? existing_file(f.init_weights, "--init-weights") : fs::path();
  const fs::path out = output_dir(f.out);
  const Hyper h = hyper(f, {300, 1e-4f, 8});
  const auto spec = parse_split(f);
  nn::ModelGraph model = finetune ? models::load_model(init, models::kUNetArch)
                                  : models::build_unet(f.seed, {f.unet_base, f.unet_depth});

  const auto ds = train::ingest_paired_dir(root);
  const auto parts = train::split(ds, spec);
  std::printf("unet: %zu pairs (%zu train / %zu val / %zu test)\n", ds.size(), parts.train.size(), parts.val.size(),
              parts.test.size());

  train::TrainOptions opts;
  opts.epochs = h.epochs;
  opts.lr = h.lr;
  opts.batch = h.batch;
  opts.seed = f.seed;
  opts.on_epoch = [&](const train::EpochRecord& r) { print_epoch(r, h.epochs); };

  train::TrainReport rep;
  if (finetune) {
    const auto pretrained = model.weights();
    rep = train::finetune(model, pretrained, models::read_manifest(init), parts.train, parts.val, opts);
  } else {
    rep = train::train_unet(model, parts.train, parts.val, opts);
  }
  if (parts.test.size() > 0) {
    rep.test_metric = metrics::eval_l1(model, parts.test.pairs);
    std::printf("test L1 %.4f\n", *rep.test_metric);
  }
  save_outputs(model, rep, out);
  return 0;
}

int cmd_infer_detect(const Flags& f) {
  const auto model = models::load_model(existing_file(f.model, "--model"), models::kDetectorArch);
  const Tensor x = features::detector_input(load_wav(existing_file(f.in, "--in")));
  const double p = models::predict_detector(model, x);
  std::printf("%s p=%.2f\n", models::to_string(models::decode_detection(p)), p);
  return 0;
}

int cmd_infer_severity(const Flags& f) {
  const auto model = models::load_model(existing_file(f.model, "--model"), models::kSeverityArch);
  const Tensor x = features::spectrogram_input(load_wav(existing_file(f.in, "--in")));
  const auto p = models::predict_severity(model, x);
  const auto label = models::argmax_label(p);
  std::printf("%s p=%.2f\n", models::to_string(label), p[static_cast<std::size_t>(label)]);
  for (std::size_t i = 0; i < p.size(); ++i) {
    std::printf("%s%s=%.4f", i ? " " : "", models::to_string(static_cast<models::SeverityLabel>(i)), p[i]);
  }
  std::printf("\n");
  return 0;
}

int cmd_translate(const Flags& f) {
  const auto model = models::load_model(existing_file(f.model, "--model"), models::kUNetArch);
  const auto clip = load_wav(existing_file(f.in, "--in"));
  fs::path prefix = output_file(f.out);
  if (prefix.extension() == ".dyst" || prefix.extension() == ".pgm" || prefix.extension() == ".wav") {
    prefix.replace_extension();
  }
  const auto img = features::mel_db_image(clip);
  const std::size_t side = features::kSpectrogramSide;
  const Tensor pred = models::translate_spectrogram(model, img.image.reshaped({1, side, side})).reshaped({side, side});
  const auto audio = features::image_to_audio(pred, img.frames, img.db_min, img.db_max);

  const std::string base = prefix.string();
  save_tensor(pred, base + ".dyst");
  save_image_gray(features::display_orientation(pred), base + ".pgm");
  write_wav_pcm16(audio, base + ".wav");
  std::printf("wrote %s.dyst %s.pgm %s.wav (%.2f s)\n", base.c_str(), base.c_str(), base.c_str(),
              static_cast<double>(audio.samples.size()) / audio.sample_rate);
  return 0;
}

int cmd_gradcam(const Flags& f) {
  const auto model = models::load_model(existing_file(f.model, "--model"), models::kSeverityArch);
  const Tensor x = features::spectrogram_input(load_wav(existing_file(f.in, "--in")));
  const fs::path out = output_file(f.out);
  models::SeverityLabel target;
  if (f.cls.empty()) {
    target = models::argmax_label(models::predict_severity(model, x));
  } else {
    const auto parsed = models::parse_severity(f.cls);
    if (!parsed) throw UsageError("--class must be one of very_low, low, medium, high");
    target = *parsed;
  }
  const auto layer = f.layer.empty() ? std::nullopt : std::optional<std::string>(f.layer);
  const auto cam = interpret::grad_cam(model, x, static_cast<std::size_t>(target), layer);
  save_image_rgb(features::display_orientation(interpret::overlay(cam, x)), out);
  std::printf("class %s layer %s -> %s\n", models::to_string(target), cam.source_layer.c_str(), out.string().c_str());
  const auto mass = interpret::heat_mass_per_band(cam, 4);
  std::printf("heat mass by band (low to high):");
  for (double m : mass) std::printf(" %.3f", m);
  std::printf("\n");
  return 0;
}

int cmd_eval_wer(const Flags& f) {
  const auto pairs = metrics::read_wer_tsv(existing_file(f.pairs.empty() ? f.in : f.pairs, "--pairs"));
  if (pairs.empty()) throw Error(ErrorCode::Empty, "no transcript pairs");
  const auto c = metrics::corpus_wer(pairs);
  const double rate = c.rate();
  std::printf("wer %.4f\n", rate);
  std::printf("accuracy %.4f\n", 1.0 - rate);
  std::printf("pairs %zu words %zu sub %zu del %zu ins %zu\n", c.pairs, c.totals.reference_words,
              c.totals.substitutions, c.totals.deletions, c.totals.insertions);
  return 0;
}

service::HttpServer* g_server = nullptr;

int cmd_serve(const Flags& f) {
  const fs::path dir = existing_dir(f.model_dir.empty() ? f.model : f.model_dir, "--model-dir");
  service::ServiceOptions opts;
  opts.cors_origin = f.cors_origin;
  auto svc = std::make_shared<service::DiagnosisService>(service::load_model_dir(dir), opts);
  service::HttpServer server(svc);
  const int port = server.bind(f.host, f.port);
  g_server = &server;
  std::signal(SIGINT, [](int) { if (g_server) g_server->stop(); });
  std::signal(SIGTERM, [](int) { if (g_server) g_server->stop(); });
  std::printf("serving %s on http://%s:%d\n", dir.string().c_str(), f.host.c_str(), port);
  std::fflush(stdout);
  server.listen();
  g_server = nullptr;
  return 0;
}

// ------------------------------------------------------------------ config

std::vector<std::pair<std::string, std::string>> read_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, "config file " + path.string());
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    const auto b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
    }
    std::string key = trim(line.substr(0, eq));
    std::replace(key.begin(), key.end(), '_', '-');
    out.emplace_back(key, trim(line.substr(eq + 1)));
  }
  return out;
}

bool flag_given(const std::vector<std::string>& args, const std::string& flag) {
  return std::any_of(args.begin(), args.end(), [&](const std::string& a) { return a == flag || a.starts_with(flag + "="); });
}

int run(int argc, char** argv) {
  CLI::App app{"dyslab: dysarthria detection, severity, Grad-CAM and spectrogram translation", "dyslab"};
  app.require_subcommand(1);
  app.footer("Every subcommand also takes --config FILE with key=value lines; command-line flags win.");
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  Flags f;
  const char* env_root = std::getenv("DYSLAB_DATA");
  if (env_root) f.data_root = env_root;

  auto in = [&](CLI::App* s, const char* help = "input WAV file") { s->add_option("--in", f.in, help); };
  auto out = [&](CLI::App* s, const char* help) { s->add_option("--out", f.out, help); };
  auto model = [&](CLI::App* s, const char* help) { s->add_option("--model", f.model, help); };
  auto training = [&](CLI::App* s) {
    s->add_option("--data-root", f.data_root, "dataset root (default $DYSLAB_DATA)");
    s->add_option("--epochs", f.epochs, "training epochs");
    s->add_option("--lr", f.lr, "Adam learning rate");
    s->add_option("--batch", f.batch, "minibatch size");
    s->add_option("--seed", f.seed, "seed for init, shuffling and splits")->capture_default_str();
    s->add_option("--split", f.split, "train,val,test fractions")->capture_default_str();
  };

  std::map<std::string, std::function<int(const Flags&)>> handlers;
  auto sub = [&](const char* name, const char* help, std::function<int(const Flags&)> fn) {
    handlers[name] = std::move(fn);
    return app.add_subcommand(name, help);
  };

  auto* extract = sub("extract", "compute features of one WAV file", cmd_extract);
  in(extract);
  out(extract, "output .dyst tensor or .pgm image");
  extract->add_option("--features", f.features, "mfcc | mel | detector | spectrogram")->capture_default_str();

  auto* td = sub("train-detect", "train the dysarthria detector on <root>/{dysarthric,<other>}/", cmd_train_detect);
  training(td);
  out(td, "output directory");
  td->add_option("--init-weights", f.init_weights, "start from these detector weights");

  auto* ts = sub("train-severity", "train the severity classifier on <root>/{very_low,low,medium,high}/",
                 cmd_train_severity);
  training(ts);
  out(ts, "output directory");
  ts->add_option("--init-weights", f.init_weights, "start from these severity weights");

  auto* t2 = sub("train-s2s", "train the U-Net on <root>/dysarthric and <root>/clean pairs",
                 [](const Flags& fl) { return s2s(fl, false); });
  training(t2);
  out(t2, "output directory");
  t2->add_option("--unet-base", f.unet_base, "filters at the first U-Net level")->capture_default_str();
  t2->add_option("--unet-depth", f.unet_depth, "U-Net pooling levels")->capture_default_str();

  auto* f2 = sub("finetune-s2s", "fine-tune a trained U-Net on new pairs", [](const Flags& fl) { return s2s(fl, true); });
  training(f2);
  out(f2, "output directory");
  f2->add_option("--init-weights", f.init_weights, "pretrained unet.dysw");

  auto* id = sub("infer-detect", "print 'label p=0.87' for one clip", cmd_infer_detect);
  model(id, "detector weights");
  in(id);

  auto* is = sub("infer-severity", "print the severity class and probabilities", cmd_infer_severity);
  model(is, "severity weights");
  in(is);

  auto* tr = sub("translate", "predict a clean spectrogram and synthesize audio", cmd_translate);
  model(tr, "unet weights");
  in(tr);
  out(tr, "output prefix; writes .dyst, .pgm and .wav");

  auto* gc = sub("gradcam", "render a Grad-CAM overlay of the severity model", cmd_gradcam);
  model(gc, "severity weights");
  in(gc);
  out(gc, "output .ppm");
  gc->add_option("--layer", f.layer, "conv layer (default: deepest)");
  gc->add_option("--class", f.cls, "very_low | low | medium | high (default: predicted)");

  auto* ew = sub("eval-wer", "word error rate over a reference<TAB>hypothesis file", cmd_eval_wer);
  ew->add_option("--pairs", f.pairs, "TSV file");
  in(ew, "TSV file (same as --pairs)");

  auto* sv = sub("serve", "run the HTTP diagnosis service", cmd_serve);
  sv->add_option("--model-dir", f.model_dir, "directory with detector.dysw, severity.dysw, unet.dysw");
  model(sv, "same as --model-dir");
  sv->add_option("--port", f.port, "TCP port")->capture_default_str();
  sv->add_option("--host", f.host, "bind address")->capture_default_str();
  sv->add_option("--cors-origin", f.cors_origin, "Access-Control-Allow-Origin value, empty to disable")
      ->capture_default_str();

  std::vector<std::string> args(argv + 1, argv + argc);

  // Config entries become flags placed before the real ones, so the command line wins.
  std::string config_file;
  for (std::size_t i = 0; i < args.size();) {
    if (args[i] == "--config") {
      if (i + 1 == args.size()) throw UsageError("--config needs a file");
      config_file = args[i + 1];
      args.erase(args.begin() + i, args.begin() + i + 2);
    } else if (args[i].starts_with("--config=")) {
      config_file = args[i].substr(9);
      args.erase(args.begin() + i);
    } else {
      ++i;
    }
  }
  if (!config_file.empty()) {
    const auto sub_it = std::find_if(args.begin(), args.end(), [&](const std::string& a) { return handlers.count(a); });
    if (sub_it == args.end()) throw UsageError("--config needs a subcommand");
    CLI::App* active = app.get_subcommand(*sub_it);
    std::vector<std::string> injected;
    for (const auto& [key, value] : read_config(config_file)) {
      if (key == "config" || active->get_option_no_throw("--" + key) == nullptr) {
        throw UsageError("unknown config key '" + key + "' for " + *sub_it);
      }
      if (flag_given(args, "--" + key)) continue;
      injected.push_back("--" + key);
      injected.push_back(value);
    }
    args.insert(sub_it + 1, injected.begin(), injected.end());
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  for (const auto& [name, fn] : handlers) {
    if (app.got_subcommand(name)) {
      try {
        return fn(f);
      } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.get_subcommand(name)->help();
        return 1;
      }
    }
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
}
