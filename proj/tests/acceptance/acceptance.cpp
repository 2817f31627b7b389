// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
//
//   acceptance [--cli PATH] [--only NAME]...
//
// Set DYSLAB_REPRO_ROOT to a directory with real corpora to run the
// reproduction tier; otherwise it is reported as SKIP.

#include <httplib.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <future>
#include <json.hpp>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "dyslab/dsp.hpp"
#include "dyslab/interpret.hpp"
#include "dyslab/metrics.hpp"
#include "dyslab/models.hpp"
#include "dyslab/service.hpp"
#include "dyslab/train.hpp"
#include "support/check.hpp"
#include "support/gradient_suite.hpp"
#include "support/scenarios.hpp"
#include "support/service_fixture.hpp"
#include "support/synthetic.hpp"

namespace fs = std::filesystem;
using namespace dyslab;
using json = nlohmann::json;

namespace {

enum class Verdict { Pass, Fail, Skip };

struct Outcome {
  Verdict verdict = Verdict::Fail;
  std::string detail;
};

Outcome judge(bool ok, std::string detail) { return {ok ? Verdict::Pass : Verdict::Fail, std::move(detail)}; }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Context {
  fs::path cli;
};

// ------------------------------------------------------------------ criteria

Outcome gradients(const Context&) {
  const auto t0 = Clock::now();
  const auto results = gradsuite::run_all(5);
  const double secs = seconds_since(t0);
  const std::set<std::string> required = {"conv2d_same", "maxpool2d",   "dense",       "relu",      "sigmoid",
                                          "softmax_ce",  "dropout_eval", "upsample_nn", "concat_skip"};
  double worst = 0.0;
  std::string worst_layer;
  std::set<std::string> seen;
  bool seeds_ok = true;
  for (const auto& r : results) {
    seen.insert(r.layer);
    seeds_ok = seeds_ok && r.seeds >= 5;
    if (r.worst >= worst) {
      worst = r.worst;
      worst_layer = r.layer;
    }
  }
  std::size_t missing = 0;
  for (const auto& name : required) missing += seen.count(name) == 0;
  return judge(worst < 1e-3 && secs < 60.0 && seeds_ok && missing == 0,
               fmt("%zu checks x 5 seeds, worst rel err %.2e (%s), missing %zu, %.3f s (limits 1e-3, 60 s)",
                   results.size(), worst, worst_layer.c_str(), missing, secs));
}

Outcome dsp_golden(const Context&) {
  const double mel700 = dsp::hz_to_mel(700.0);

  double dct_err = 0.0;
  for (auto [n_out, n_in] : {std::pair{13, 128}, {128, 128}}) {
    const Tensor d = dsp::dct_matrix(n_out, n_in);
    for (int i = 0; i < n_out; ++i)
      for (int j = 0; j < n_out; ++j) {
        double s = 0.0;
        for (int k = 0; k < n_in; ++k) s += double(d.at(i, k)) * d.at(j, k);
        dct_err = std::max(dct_err, std::abs(s - (i == j ? 1.0 : 0.0)));
      }
  }

  const dsp::StftParams p{1024, 256};
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> x(16000);
  for (auto& v : x) v = u(rng);
  const auto y = dsp::istft(dsp::stft(x, p), p, x.size());
  double rt = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) rt = std::max(rt, double(std::abs(x[i] - y[i])));

  dsp::Spectrogram s;
  s.data = Tensor::from_rows({{4.0f, 1.0f, 0.0f}, {0.5f, 2.0f, 1e-3f}});
  s.scale = dsp::SpecScale::MelPower;
  const auto db = dsp::amplitude_to_db(s);
  const double db_max = db.data.at(0, 0);
  const double db_zero = db.data.at(0, 2);

  const bool ok = std::abs(mel700 - 781.2) <= 0.1 && dct_err < 1e-5 && rt < 1e-5 && db_max == 0.0 && db_zero == -80.0;
  return judge(ok, fmt("mel(700)=%.3f, |DD^T-I|=%.1e, istft(stft) err %.1e, dB max %.1f, dB zero %.1f", mel700,
                       dct_err, rt, db_max, db_zero));
}

Outcome griffin_lim(const Context&) {
  const auto t0 = Clock::now();
  const dsp::StftParams p{1024, 256};
  const auto clip = testing::sine_clip(1000.0, 1.0);
  const auto spec = dsp::stft(clip, p);
  Tensor mag({spec.bins, spec.frames});
  for (std::size_t i = 0; i < mag.size(); ++i) mag[i] = static_cast<float>(std::abs(spec.data[i]));
  const double e0 = dsp::spectral_convergence(mag, dsp::griffin_lim(mag, p, {.n_iters = 0}).samples, p);
  const double e32 = dsp::spectral_convergence(mag, dsp::griffin_lim(mag, p, {.n_iters = 32}).samples, p);
  const double secs = seconds_since(t0);
  return judge(e32 < e0 && secs < 10.0,
               fmt("spectral convergence %.4f at 0 iters, %.4f at 32 iters, %.2f s (limit 10 s)", e0, e32, secs));
}

train::LabeledDataset stripes(std::size_t n, std::uint64_t seed) {
  testing::Rng rng(seed);
  train::LabeledDataset ds;
  ds.class_names = {"horizontal", "vertical"};
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    ds.features.push_back(testing::stripe_image(label, rng));
    ds.labels.push_back(label);
    ds.paths.push_back("stripe" + std::to_string(i));
  }
  return ds;
}

Outcome synthetic_detection(const Context&) {
  const auto t0 = Clock::now();
  const auto train_set = stripes(32, 11);
  const auto val = stripes(8, 13);
  const auto held_out = stripes(40, 12);
  auto model = models::build_detector();
  train::TrainOptions opts;
  opts.batch = 8;
  opts.epochs = 50;  // 4 steps per epoch, 200 steps total
  opts.lr = 1e-3f;
  std::size_t first_perfect = 0;
  opts.on_epoch = [&](const train::EpochRecord& r) {
    if (first_perfect == 0 && train::evaluate_classifier(model, train_set).accuracy() == 1.0) {
      first_perfect = static_cast<std::size_t>(r.epoch) * 4;
    }
  };
  const auto rep = train::train_classifier(model, train_set, val, opts);
  const double train_acc = train::evaluate_classifier(model, train_set).accuracy();
  const double test_acc = train::evaluate_classifier(model, held_out).accuracy();
  const double secs = seconds_since(t0);
  const bool ok = rep.steps <= 200 && first_perfect > 0 && train_acc == 1.0 && test_acc >= 0.95 && secs < 120.0;
  return judge(ok, fmt("train 100%% after %zu of %zu steps, final train %.3f, held-out %.3f on 40, %.1f s "
                       "(limits 200 steps, 0.95, 120 s)",
                       first_perfect, rep.steps, train_acc, test_acc, secs));
}

train::LabeledDataset blobs(std::size_t n, std::uint64_t seed) {
  testing::Rng rng(seed);
  train::LabeledDataset ds;
  ds.class_names = {"very_low", "low", "medium", "high"};
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 4);
    ds.features.push_back(testing::blob_image(label, rng));
    ds.labels.push_back(label);
    ds.paths.push_back("blob" + std::to_string(i));
  }
  return ds;
}

Outcome synthetic_severity(const Context&) {
  const auto t0 = Clock::now();
  const auto train_set = blobs(64, 21);
  const auto val = blobs(16, 22);
  const auto held_out = blobs(40, 23);
  auto model = models::build_severity();
  train::TrainOptions opts;
  opts.batch = 8;
  opts.epochs = 6;
  opts.lr = 1e-3f;
  train::train_classifier(model, train_set, val, opts);
  const auto cm = train::evaluate_classifier(model, held_out);
  bool rows_ok = cm.total() == held_out.size();
  for (std::size_t c = 0; c < 4; ++c) {
    rows_ok = rows_ok && cm.row_sum(c) == static_cast<std::size_t>(
                                              std::count(held_out.labels.begin(), held_out.labels.end(), int(c)));
  }
  const double secs = seconds_since(t0);
  return judge(cm.accuracy() >= 0.90 && rows_ok && secs < 300.0,
               fmt("held-out accuracy %.3f on 40, confusion rows %s, %.1f s (limits 0.90, 300 s)", cm.accuracy(),
                   rows_ok ? "match class counts" : "WRONG", secs));
}

Outcome unet_transfer(const Context&) {
  const auto t0 = Clock::now();
  testing::Rng rng(7);
  const testing::TranslationDomain source{5, 12, 4, 3};
  const testing::TranslationDomain target{7, 15, 5, 3};
  train::PairedDataset pretrain, small, val, test;
  for (int i = 0; i < 500; ++i) pretrain.pairs.push_back(testing::translation_pair(rng, source));
  for (int i = 0; i < 20; ++i) small.pairs.push_back(testing::translation_pair(rng, target));
  for (int i = 0; i < 10; ++i) val.pairs.push_back(testing::translation_pair(rng, target));
  for (int i = 0; i < 20; ++i) test.pairs.push_back(testing::translation_pair(rng, target));

  const models::UNetConfig cfg{8, 4};
  train::TrainOptions opts;
  opts.epochs = 10;
  opts.batch = 4;
  opts.lr = 2e-3f;
  opts.seed = 1;

  auto scratch = models::build_unet(1, cfg);
  train::train_unet(scratch, small, val, opts);
  const double scratch_l1 = metrics::eval_l1(scratch, test.pairs);

  auto pre = models::build_unet(1, cfg);
  train::TrainOptions pre_opts = opts;
  pre_opts.epochs = 2;
  train::train_unet(pre, pretrain, val, pre_opts);
  const double pre_l1 = metrics::eval_l1(pre, test.pairs);

  auto tuned = models::build_unet(2, cfg);
  train::TrainOptions ft_opts = opts;
  ft_opts.lr = 5e-4f;
  train::finetune(tuned, pre.weights(), models::manifest_for(pre), small, val, ft_opts);
  const double tuned_l1 = metrics::eval_l1(tuned, test.pairs);

  const double secs = seconds_since(t0);
  return judge(tuned_l1 <= scratch_l1 && tuned_l1 <= 0.06 && secs < 600.0,
               fmt("held-out L1 scratch %.4f, pretrained only %.4f, finetuned %.4f, %.0f s "
                   "(limits finetuned <= scratch, <= 0.06, 600 s)",
                   scratch_l1, pre_l1, tuned_l1, secs));
}

Outcome wer_oracle(const Context&) {
  const auto table = testing::wer_table();
  std::size_t bad = 0;
  for (const auto& c : table) bad += metrics::wer({c.reference, c.hypothesis}) != c.expected;
  return judge(table.size() >= 10 && bad == 0, fmt("%zu hand-counted pairs, %zu mismatches", table.size(), bad));
}

Tensor deepest_cam(const nn::ModelGraph& g, const Tensor& x) { return interpret::grad_cam(g, x, 0, "conv").heat; }

Outcome gradcam_analytic(const Context&) {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed)
    for (std::size_t ch = 0; ch < 3; ++ch) worst = std::max(worst, testing::gradcam_analytic_error(seed, deepest_cam, ch));
  return judge(worst < 1e-5, fmt("max |heat - normalized relu(map)| %.2e over 5 seeds x 3 channels (limit 1e-5)", worst));
}

Outcome determinism(const Context& ctx) {
  if (ctx.cli.empty() || !fs::is_regular_file(ctx.cli)) return {Verdict::Fail, "dyslab CLI not found; pass --cli"};
  testing::TempDir dir("determinism");
  for (int i = 0; i < 10; ++i) {
    fs::create_directories(dir / "data/dysarthric");
    fs::create_directories(dir / "data/control");
    write_wav_pcm16(testing::voice_clip(110.0 + 6 * i, 1.0, 100 + i), dir / "data/dysarthric" / fmt("d%d.wav", i));
    write_wav_pcm16(testing::voice_clip(260.0 + 9 * i, 1.0, 200 + i), dir / "data/control" / fmt("c%d.wav", i));
  }
  std::vector<std::string> blobs;
  for (const char* run : {"a", "b"}) {
    const std::string cmd = "\"" + ctx.cli.string() + "\" train-detect --seed 1337 --data-root \"" +
                            (dir / "data").string() + "\" --out \"" + (dir / run).string() + "\" > \"" +
                            (dir / (std::string(run) + ".log")).string() + "\" 2>&1";
    if (std::system(cmd.c_str()) != 0) return {Verdict::Fail, std::string("train-detect run ") + run + " failed"};
    const auto bytes = read_file_bytes(dir / run / "detector.dysw");
    blobs.emplace_back(bytes.begin(), bytes.end());
  }
  return judge(blobs[0] == blobs[1] && !blobs[0].empty(),
               fmt("two runs of train-detect --seed 1337 (50 epochs, 20 clips): %zu-byte DYSW files %s",
                   blobs[0].size(), blobs[0] == blobs[1] ? "identical" : "DIFFER"));
}

Outcome service_contract(const Context&) {
  testing::TempDir dir("acceptance_service");
  testing::write_fixture_models(dir.path());
  auto svc = std::make_shared<service::DiagnosisService>(service::load_model_dir(dir.path()));
  service::HttpServer http(svc);
  const int port = http.bind("127.0.0.1", 0);
  std::thread thread([&] { http.listen(); });
  http.wait_until_ready();

  auto post = [&](const std::string& path, const std::string& body) {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(120);
    return c.Post(path, httplib::MultipartFormDataItems{{"audio", body, "clip.wav", "audio/wav"}});
  };
  std::vector<std::string> failures;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  };

  const std::string wav = testing::fixture_wav();
  try {
    httplib::Client c("127.0.0.1", port);
    const auto health = c.Get("/healthz");
    expect(health && health->status == 200 && health->body == "ok", "healthz");

    const auto det = post("/api/v1/detect", wav);
    expect(det && det->status == 200, "detect status");
    if (det && det->status == 200) {
      const auto j = json::parse(det->body);
      const double p = j.at("probability").get<double>();
      const auto label = j.at("label").get<std::string>();
      expect(p >= 0.0 && p <= 1.0, "detect probability range");
      expect(label == "dysarthric" || label == "non_dysarthric", "detect label");
      expect(!j.at("model_version").get<std::string>().empty(), "detect model_version");
    }

    const auto sev = post("/api/v1/severity", wav);
    expect(sev && sev->status == 200, "severity status");
    if (sev && sev->status == 200) {
      const auto j = json::parse(sev->body);
      double sum = 0.0;
      for (const char* k : {"very_low", "low", "medium", "high"}) sum += j.at("probabilities").at(k).get<double>();
      expect(std::abs(sum - 1.0) <= 1e-4, fmt("severity sum %.6f", sum));
      expect(models::parse_severity(j.at("label").get<std::string>()).has_value(), "severity label");
    }

    const auto cam = post("/api/v1/gradcam", wav);
    expect(cam && cam->status == 200, "gradcam status");
    if (cam && cam->status == 200) {
      const auto ppm = service::base64_decode(json::parse(cam->body).at("overlay_ppm_base64").get<std::string>());
      const std::string header(ppm.begin(), ppm.begin() + std::min<std::size_t>(ppm.size(), 15));
      expect(header == "P6\n128 128\n255\n" && ppm.size() == 15 + 128 * 128 * 3, "gradcam PPM");
    }

    const auto tr = post("/api/v1/translate", wav);
    expect(tr && tr->status == 200, "translate status");
    if (tr && tr->status == 200) {
      const auto j = json::parse(tr->body);
      const auto pgm = service::base64_decode(j.at("clean_spectrogram_pgm_base64").get<std::string>());
      const auto audio = decode_wav(service::base64_decode(j.at("audio_wav_base64").get<std::string>()));
      expect(std::string(pgm.begin(), pgm.begin() + 2) == "P5", "translate PGM");
      expect(audio.sample_rate == 16000 && !audio.samples.empty(), "translate WAV");
    }

    const auto bad = post("/api/v1/detect", "not a wav file");
    expect(bad && bad->status == 400, "malformed upload -> 400");
    const auto big = post("/api/v1/detect", testing::fixture_wav(service::kMaxAudioSeconds + 1.0));
    expect(big && big->status == 413, "oversize upload -> 413");

    std::vector<std::future<std::pair<int, std::string>>> futures;
    for (int i = 0; i < 50; ++i) {
      futures.push_back(std::async(std::launch::async, [&] {
        const auto r = post("/api/v1/severity", wav);
        return r ? std::pair{r->status, r->body} : std::pair{-1, std::string()};
      }));
    }
    std::vector<std::pair<int, std::string>> results;
    for (auto& f : futures) results.push_back(f.get());
    bool same = results[0].first == 200;
    for (const auto& r : results) same = same && r == results[0];
    expect(same, "50 concurrent identical requests");
  } catch (const std::exception& e) {
    failures.push_back(std::string("exception: ") + e.what());
  }
  http.stop();
  thread.join();

  std::string detail = "healthz, detect, severity, gradcam, translate, 400, 413, 50 concurrent";
  if (!failures.empty()) {
    detail = "failed:";
    for (const auto& f : failures) detail += " [" + f + "]";
  }
  return judge(failures.empty(), detail);
}

// ------------------------------------------------------------------ real corpora

train::LabeledDataset ingest_detection(const fs::path& root) {
  std::vector<std::string> dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) dirs.push_back(e.path().filename().string());
  std::sort(dirs.begin(), dirs.end());
  train::IngestOptions opts;
  opts.kind = train::FeatureKind::DetectorMfcc;
  for (const auto& d : dirs)
    if (d != "dysarthric") opts.class_order.push_back(d);
  opts.class_order.push_back("dysarthric");
  return train::ingest_classification_dir(root, opts);
}

Outcome reproduction(const Context&) {
  const char* env = std::getenv("DYSLAB_REPRO_ROOT");
  if (!env || !*env) return {Verdict::Skip, "set DYSLAB_REPRO_ROOT to a directory of real corpora"};
  const fs::path root(env);
  const train::SplitSpec split;
  std::vector<std::string> parts, failures;
  auto record = [&](bool ok, const std::string& what) {
    parts.push_back(what);
    if (!ok) failures.push_back(what);
  };

  // detection/{en,de,ru}: English from scratch, the others fine-tuned from it.
  const std::map<std::string, double> table1 = {{"en", 97.5}, {"de", 96.8}, {"ru", 99.7}};
  if (fs::is_directory(root / "detection/en")) {
    train::TrainOptions opts;
    opts.epochs = 50;
    auto en_model = models::build_detector();
    for (const char* lang : {"en", "de", "ru"}) {
      if (!fs::is_directory(root / "detection" / lang)) continue;
      const auto ds = ingest_detection(root / "detection" / lang);
      const auto s = train::split(ds, split);
      auto model = models::build_detector();
      if (std::string(lang) == "en") {
        train::train_classifier(model, s.train, s.val, opts);
        en_model = model;
      } else {
        train::finetune(model, en_model.weights(), models::manifest_for(en_model), s.train, s.val, opts);
      }
      const double acc = 100.0 * train::evaluate_classifier(model, s.test).accuracy();
      record(std::abs(acc - table1.at(lang)) <= 3.0, fmt("detect %s %.1f%% (ref %.1f)", lang, acc, table1.at(lang)));
    }
  }

  if (fs::is_directory(root / "severity")) {
    train::IngestOptions io;
    io.kind = train::FeatureKind::Spectrogram;
    io.class_order = {"very_low", "low", "medium", "high"};
    const auto s = train::split(train::ingest_classification_dir(root / "severity", io), split);
    auto model = models::build_severity();
    train::TrainOptions opts;
    opts.epochs = 10;
    train::train_classifier(model, s.train, s.val, opts);
    const double acc = 100.0 * train::evaluate_classifier(model, s.test).accuracy();
    record(std::abs(acc - 97.64) <= 3.0, fmt("severity %.2f%% (ref 97.64)", acc));
  }

  // s2s/ru pretrain, s2s/en finetune; train and test L1 against the reference table.
  if (fs::is_directory(root / "s2s/ru")) {
    train::TrainOptions opts;
    opts.epochs = 300;
    opts.lr = 1e-4f;
    opts.batch = 8;
    const auto ru = train::split(train::ingest_paired_dir(root / "s2s/ru"), split);
    auto ru_model = models::build_unet();
    train::train_unet(ru_model, ru.train, ru.val, opts);
    const double tr = metrics::eval_l1(ru_model, ru.train.pairs), te = metrics::eval_l1(ru_model, ru.test.pairs);
    record(std::abs(tr - 0.03) <= 0.03 && std::abs(te - 0.06) <= 0.03,
           fmt("unet ru train %.3f test %.3f (ref 0.03/0.06)", tr, te));
    if (fs::is_directory(root / "s2s/en")) {
      const auto en = train::split(train::ingest_paired_dir(root / "s2s/en"), split);
      auto en_model = models::build_unet();
      train::finetune(en_model, ru_model.weights(), models::manifest_for(ru_model), en.train, en.val, opts);
      const double tr2 = metrics::eval_l1(en_model, en.train.pairs), te2 = metrics::eval_l1(en_model, en.test.pairs);
      record(std::abs(tr2 - 0.02) <= 0.03 && std::abs(te2 - 0.03) <= 0.03,
             fmt("unet en finetuned train %.3f test %.3f (ref 0.02/0.03)", tr2, te2));
    }
  }

  if (fs::is_regular_file(root / "wer.tsv")) {
    const double rate = metrics::corpus_wer(metrics::read_wer_tsv(root / "wer.tsv")).rate();
    record(rate <= 0.20, fmt("WER %.4f (limit 0.20)", rate));
  }

  if (parts.empty()) return {Verdict::Skip, root.string() + " has none of detection/, severity/, s2s/, wer.tsv"};
  std::string detail;
  for (const auto& p : parts) detail += (detail.empty() ? "" : "; ") + p;
  return judge(failures.empty(), detail);
}

struct Criterion {
  const char* name;
  Outcome (*run)(const Context&);
};

const Criterion kCriteria[] = {
    {"gradient-correctness", gradients},
    {"dsp-golden-values", dsp_golden},
    {"griffin-lim-improvement", griffin_lim},
    {"synthetic-detection", synthetic_detection},
    {"synthetic-severity", synthetic_severity},
    {"unet-transfer", unet_transfer},
    {"wer-oracle", wer_oracle},
    {"gradcam-analytic", gradcam_analytic},
    {"train-detect-determinism", determinism},
    {"service-contract", service_contract},
    {"real-corpus-reproduction", reproduction},
};

}  // namespace

int main(int argc, char** argv) {
  Context ctx;
  std::set<std::string> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--cli" && i + 1 < argc) {
      ctx.cli = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      only.insert(argv[++i]);
    } else {
      std::fprintf(stderr, "usage: acceptance [--cli PATH] [--only NAME]...\n");
      return 2;
    }
  }

  int failed = 0;
  for (const auto& c : kCriteria) {
    if (!only.empty() && !only.count(c.name)) continue;
    Outcome o;
    try {
      o = c.run(ctx);
    } catch (const std::exception& e) {
      o = {Verdict::Fail, std::string("exception: ") + e.what()};
    }
    const char* tag = o.verdict == Verdict::Pass ? "PASS" : o.verdict == Verdict::Skip ? "SKIP" : "FAIL";
    failed += o.verdict == Verdict::Fail;
    std::printf("%s %-26s %s\n", tag, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%s: %d criteria failed\n", failed ? "FAILED" : "OK", failed);
  return failed ? 1 : 0;
}
