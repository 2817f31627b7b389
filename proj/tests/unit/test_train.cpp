#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <set>

#include "dyslab/train.hpp"
#include "support/check.hpp"
#include "support/synthetic.hpp"

using namespace dyslab;
using namespace dyslab::train;
using dyslab::testing::error_of;
namespace fs = std::filesystem;

namespace {

void write_voice(const fs::path& path, double f0, std::uint64_t seed) {
  fs::create_directories(path.parent_path());
  write_wav_pcm16(testing::voice_clip(f0, 0.5, seed), path);
}

LabeledDataset constant_images(int per_class) {
  LabeledDataset ds;
  ds.class_names = {"low", "high"};
  for (int i = 0; i < 2 * per_class; ++i) {
    const int label = i % 2;
    ds.features.push_back(Tensor({1, 64, 64}, label == 0 ? 0.1f : 0.9f));
    ds.labels.push_back(label);
  }
  return ds;
}

}  // namespace

TEST_CASE("classification ingest") {
  testing::TempDir dir("ingest");
  write_voice(dir / "dysarthric/b.wav", 120, 1);
  write_voice(dir / "dysarthric/a.wav", 130, 2);
  write_voice(dir / "control/x.WAV", 180, 3);
  write_voice(dir / "control/y.wav", 190, 4);
  { std::ofstream(dir / "control/notes.txt") << "ignored"; }

  const auto ds = ingest_classification_dir(dir.path());
  CHECK(ds.size() == 4);
  CHECK(ds.class_names == std::vector<std::string>{"control", "dysarthric"});
  CHECK(ds.paths == std::vector<std::string>{"control/x.WAV", "control/y.wav", "dysarthric/a.wav", "dysarthric/b.wav"});
  CHECK(ds.labels == std::vector<int>{0, 0, 1, 1});
  CHECK(ds.features[0].shape() == Shape{1, 64, 64});
  CHECK(format_dataset_manifest(ds) == "control/x.WAV\t0\ncontrol/y.wav\t0\ndysarthric/a.wav\t1\ndysarthric/b.wav\t1\n");
  CHECK(format_dataset_manifest(ingest_classification_dir(dir.path())) == format_dataset_manifest(ds));

  IngestOptions ordered;
  ordered.class_order = {"dysarthric", "control"};
  const auto flipped = ingest_classification_dir(dir.path(), ordered);
  CHECK(flipped.class_names == ordered.class_order);
  CHECK(flipped.paths[0] == "dysarthric/a.wav");
  CHECK(flipped.labels == std::vector<int>{0, 0, 1, 1});
  ordered.class_order = {"dysarthric", "missing"};
  CHECK(error_of([&] { ingest_classification_dir(dir.path(), ordered); }) == "EmptyClass");

  IngestOptions spec;
  spec.kind = FeatureKind::Spectrogram;
  CHECK(ingest_classification_dir(dir.path(), spec).features[3].shape() == Shape{1, 128, 128});

  fs::create_directories(dir / "empty");
  CHECK(error_of([&] { ingest_classification_dir(dir.path()); }) == "EmptyClass");
}

TEST_CASE("ingest rejects mixed raw shapes") {
  testing::TempDir dir("mixed");
  fs::create_directories(dir / "a");
  fs::create_directories(dir / "b");
  save_tensor(Tensor({1, 8, 8}), dir / "a/1.dyst");
  save_tensor(Tensor({1, 8, 9}), dir / "b/1.dyst");
  IngestOptions raw;
  raw.kind = FeatureKind::Raw;
  CHECK(error_of([&] { ingest_classification_dir(dir.path(), raw); }) == "MixedFeatureShapes");
  save_tensor(Tensor({1, 8, 8}), dir / "b/1.dyst");
  CHECK(ingest_classification_dir(dir.path(), raw).size() == 2);
  CHECK(error_of([&] { ingest_classification_dir(dir / "a", raw); }) == "EmptyClass");
}

TEST_CASE("paired ingest matches stems") {
  testing::TempDir dir("paired");
  write_voice(dir / "dysarthric/u1.wav", 120, 1);
  write_voice(dir / "dysarthric/u2.wav", 120, 2);
  write_voice(dir / "dysarthric/only_dys.wav", 120, 3);
  write_voice(dir / "clean/u1.wav", 150, 4);
  write_voice(dir / "clean/u2.wav", 150, 5);
  const auto ds = ingest_paired_dir(dir.path());
  CHECK(ds.keys == std::vector<std::string>{"u1", "u2"});
  CHECK(ds.pairs[0].input.shape() == Shape{1, 128, 128});
  CHECK(ds.pairs[0].target.shape() == Shape{1, 128, 128});
  fs::remove(dir / "clean/u1.wav");
  fs::remove(dir / "clean/u2.wav");
  CHECK(error_of([&] { ingest_paired_dir(dir.path()); }) == "Empty");
}

TEST_CASE("split sizes") {
  auto sizes = [](std::size_t n) {
    const auto s = split_indices(n, SplitSpec{});
    return std::array<std::size_t, 3>{s.train.size(), s.val.size(), s.test.size()};
  };
  CHECK(sizes(1000) == std::array<std::size_t, 3>{700, 200, 100});
  CHECK(sizes(10) == std::array<std::size_t, 3>{7, 2, 1});
  CHECK(sizes(11) == std::array<std::size_t, 3>{7, 2, 2});
  CHECK(error_of([] { split_indices(9, SplitSpec{}); }) == "TooSmall");
}

TEST_CASE("splits are disjoint, exhaustive and seeded") {
  for (std::size_t n = 10; n <= 120; n += 7) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto s = split_indices(n, SplitSpec{0.7, 0.2, 0.1, seed});
      std::set<std::size_t> all;
      for (const auto* part : {&s.train, &s.val, &s.test}) all.insert(part->begin(), part->end());
      CHECK(all.size() == n);
      CHECK(*all.rbegin() == n - 1);
      CHECK(s.train.size() + s.val.size() + s.test.size() == n);
      const auto again = split_indices(n, SplitSpec{0.7, 0.2, 0.1, seed});
      CHECK(again.train == s.train);
      CHECK(again.test == s.test);
    }
  }
  CHECK(split_indices(50, SplitSpec{0.7, 0.2, 0.1, 1}).train != split_indices(50, SplitSpec{0.7, 0.2, 0.1, 2}).train);

  const auto ds = constant_images(10);
  const auto parts = split(ds, SplitSpec{});
  CHECK(parts.train.size() == 14);
  CHECK(parts.val.size() == 4);
  CHECK(parts.test.size() == 2);
}

TEST_CASE("split fraction parsing") {
  const auto s = SplitSpec::parse("0.8,0.1,0.1", 5);
  CHECK(s.train == 0.8);
  CHECK(s.seed == 5);
  CHECK(error_of([] { SplitSpec::parse("0.5,0.2,0.1", 1); }) == "BadRange");
  CHECK(error_of([] { SplitSpec::parse("0.7,0.3", 1); }) == "InvalidArgument");
  CHECK(error_of([] { SplitSpec::parse("a,b,c", 1); }) == "InvalidArgument");
}

TEST_CASE("one_hot") {
  CHECK(one_hot(2, 4) == Tensor({4}, std::vector<real>{0, 0, 1, 0}));
  CHECK(one_hot(0, 2) == Tensor({2}, std::vector<real>{1, 0}));
  CHECK(error_of([] { one_hot(4, 4); }) == "OutOfRange");
  CHECK(error_of([] { one_hot(-1, 4); }) == "OutOfRange");
}

TEST_CASE("classifier overfits a separable set") {
  const auto ds = constant_images(4);
  auto model = models::build_detector();
  TrainOptions opts;
  opts.epochs = 200;
  opts.batch = 8;
  const auto rep = train_classifier(model, ds, ds, opts);
  CHECK(rep.steps == 200);
  CHECK(rep.epochs.size() == 200);
  CHECK(rep.epochs.back().train_loss < rep.epochs.front().train_loss);
  CHECK(evaluate_classifier(model, ds).accuracy() == 1.0);
  CHECK(*rep.epochs.back().train_acc == 1.0);
  for (const auto& e : rep.epochs) CHECK(std::isfinite(e.train_loss));
}

TEST_CASE("training contract") {
  const auto ds = constant_images(6);
  TrainOptions opts;
  opts.epochs = 3;
  opts.batch = 4;
  opts.seed = 9;

  SUBCASE("zero epochs leave the weights alone") {
    auto model = models::build_detector(3, {4, 4, 4});
    const auto before = model.weights();
    TrainOptions zero = opts;
    zero.epochs = 0;
    const auto rep = train_classifier(model, ds, ds, zero);
    CHECK(rep.epochs.empty());
    CHECK(rep.steps == 0);
    CHECK(model.weights() == before);
  }
  SUBCASE("reports are reproducible") {
    auto a = models::build_detector(3, {4, 4, 4});
    auto b = models::build_detector(3, {4, 4, 4});
    const auto ra = train_classifier(a, ds, ds, opts);
    const auto rb = train_classifier(b, ds, ds, opts);
    CHECK(a.weights() == b.weights());
    CHECK(format_epoch_csv(ra) == format_epoch_csv(rb));
    CHECK(ra.best_weights == rb.best_weights);
    CHECK(ra.epochs_requested == static_cast<int>(ra.epochs.size()));
    CHECK(ra.steps == 9);
  }
  SUBCASE("severity uses one-hot cross entropy") {
    LabeledDataset four;
    four.class_names = {"very_low", "low", "medium", "high"};
    testing::Rng rng(1);
    for (int i = 0; i < 8; ++i) {
      four.features.push_back(testing::blob_image(i % 4, rng));
      four.labels.push_back(i % 4);
    }
    auto model = models::build_severity(1, {4, 4, 4, 0.5f, 8});
    const auto rep = train_classifier(model, four, four, opts);
    CHECK(rep.epochs.size() == 3);
    CHECK(rep.epochs[0].val_acc.has_value());
  }
  SUBCASE("input errors") {
    auto model = models::build_detector(3, {4, 4, 4});
    LabeledDataset wrong = ds;
    wrong.features[0] = Tensor({1, 32, 32});
    CHECK(error_of([&] { train_classifier(model, wrong, ds, opts); }) == "ShapeMismatch");
    LabeledDataset bad_label = ds;
    bad_label.labels[0] = 2;
    CHECK(error_of([&] { train_classifier(model, bad_label, ds, opts); }) == "OutOfRange");
    TrainOptions no_batch = opts;
    no_batch.batch = 0;
    CHECK(error_of([&] { train_classifier(model, ds, ds, no_batch); }) == "InvalidArgument");
  }
}

TEST_CASE("finetune") {
  testing::Rng rng(4);
  PairedDataset pairs;
  for (int i = 0; i < 3; ++i) pairs.pairs.push_back(testing::translation_pair(rng, {}));
  const auto pre = models::build_unet(1, {4, 2});
  const auto manifest = models::manifest_for(pre);

  auto model = models::build_unet(2, {4, 2});
  TrainOptions zero;
  zero.epochs = 0;
  const auto rep = finetune(model, pre.weights(), manifest, pairs, pairs, zero);
  CHECK(rep.tag == "finetuned");
  CHECK(model.weights() == pre.weights());

  TrainOptions one;
  one.epochs = 1;
  one.batch = 2;
  const auto r1 = finetune(model, pre.weights(), manifest, pairs, pairs, one);
  CHECK(r1.steps == 2);
  CHECK_FALSE(model.weights() == pre.weights());
  CHECK(r1.epochs[0].val_loss == doctest::Approx(metrics::eval_l1(model, pairs.pairs)));
  CHECK_FALSE(r1.epochs[0].train_acc.has_value());

  auto other = models::build_unet(2, {8, 2});
  CHECK(error_of([&] { finetune(other, pre.weights(), manifest, pairs, pairs, zero); }) == "ArchMismatch");
  auto det = models::build_detector();
  CHECK(error_of([&] { finetune(det, pre.weights(), manifest, constant_images(2), constant_images(2), zero); }) ==
        "ArchMismatch");
}

TEST_CASE("output bias calibration") {
  auto unet = models::build_unet(1, {4, 1});
  PairedDataset pairs;
  pairs.pairs.push_back({Tensor({1, 128, 128}), Tensor({1, 128, 128}, 0.2f)});
  calibrate_output_bias(unet, pairs);
  CHECK(unet.weights().get("head_conv.bias")[0] == doctest::Approx(std::log(0.25)));
  const Tensor y = unet.forward(Tensor({1, 128, 128}));
  CHECK(y.min() > 0.1f);
  CHECK(y.max() < 0.3f);
}

TEST_CASE("report files") {
  TrainReport r;
  r.model = "detector";
  r.epochs_requested = 2;
  r.lr = 1e-3f;
  r.batch = 32;
  r.seed = 1337;
  r.epochs = {{1, 0.5, 0.6, 0.75, 0.5}, {2, 0.25, 0.3, 1.0, 1.0}};
  r.test_metric = 0.9;
  const std::string text = format_report(r);
  CHECK(text.find("model=detector\n") != std::string::npos);
  CHECK(text.find("epochs=2\n") != std::string::npos);
  CHECK(text.find("test_acc=0.9\n") != std::string::npos);
  CHECK(format_epoch_csv(r) == "epoch,train_loss,val_loss,train_acc,val_acc\n1,0.5,0.6,0.75,0.5\n2,0.25,0.3,1,1\n");

  TrainReport u;
  u.model = "unet";
  u.epochs = {{1, 0.1, 0.2, std::nullopt, std::nullopt}};
  CHECK(format_epoch_csv(u) == "epoch,train_loss,val_loss,train_acc,val_acc\n1,0.1,0.2,,\n");

  testing::TempDir dir("report");
  write_report(r, dir / "run");
  CHECK(fs::exists(dir / "run.txt"));
  CHECK(fs::exists(dir / "run_epochs.csv"));
}
