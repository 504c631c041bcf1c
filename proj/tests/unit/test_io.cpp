// Copyright 2026 The DistillScope Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstdlib>
#include <set>
#include <filesystem>
#include <fstream>

#include "app/gradcheck_suite.hpp"
#include "app/pipeline.hpp"
#include "core/error.hpp"
#include "doctest.h"
#include "io/checkpoint.hpp"
#include "io/config.hpp"
#include "io/report.hpp"

using namespace ds;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("distillscope_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  const auto bytes = read_file(p);
  return {bytes.begin(), bytes.end()};
}

TensorF test_image(int side, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(static_cast<std::size_t>(3 * side * side));
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return TensorF::from({3, side, side}, std::move(v));
}

StudentConfig small_student() {
  StudentConfig c;
  c.image_size = 16;
  c.num_classes = 4;
  c.patch = 4;
  c.dim = 16;
  c.depth = 2;
  c.heads = 2;
  return c;
}

TeacherConfig small_teacher() {
  TeacherConfig c;
  c.image_size = 16;
  c.num_classes = 4;
  c.global_patch = 4;
  c.window = 2;
  c.stage_dims = {16, 32};
  c.stage_depths = {1, 1};
  c.stage_heads = {2, 2};
  c.local_patch = 8;
  c.local_dim = 16;
  c.local_depth = 1;
  c.local_heads = 2;
  c.fusion_dim = 16;
  return c;
}

ConfusionMatrix fixture_d1() {
  return {{"0_normal", "1_ulcerative_colitis", "2_polyps", "3_esophagitis"},
          {{225, 0, 0, 0}, {0, 225, 0, 0}, {0, 2, 223, 0}, {0, 0, 0, 225}}};
}

std::vector<std::uint8_t> perturbed(std::vector<std::uint8_t> bytes, std::size_t at, std::uint8_t value) {
  bytes.at(at) = value;
  return bytes;
}

CheckpointFailure failure_of(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_checkpoint(bytes);
  } catch (const CheckpointError& e) {
    return e.failure();
  }
  FAIL("decode succeeded");
  return CheckpointFailure::kBadMagic;
}

}  // namespace

TEST_CASE("checkpoint save load save is byte identical and inference is bit exact") {
  TempDir dir("ckpt");
  const TeacherModel teacher{small_teacher()};
  auto params = teacher.init(3);
  params.set_trainable("global.embed.proj.weight", false);
  const CheckpointMeta meta{7, 99, {{"val_loss", 0.25}}};
  save_checkpoint(dir.path / "a.kdvc", teacher, params, meta);
  const auto loaded = load_checkpoint(dir.path / "a.kdvc");
  CHECK(loaded.meta.epoch == 7);
  CHECK(loaded.meta.seed == 99);
  CHECK(loaded.meta.metrics == meta.metrics);
  save_checkpoint(dir.path / "b.kdvc", *loaded.model, loaded.params, loaded.meta);
  CHECK(read_file(dir.path / "a.kdvc") == read_file(dir.path / "b.kdvc"));
  CHECK_FALSE(fs::exists(dir.path / "a.kdvc.tmp"));

  for (std::size_t i = 0; i < params.size(); ++i) {
    CHECK(loaded.params.entries()[i].trainable == params.entries()[i].trainable);
  }
  const auto x = test_image(16, 4);
  const auto before = teacher.forward(params, x);
  const auto after = loaded.model->forward(loaded.params, x);
  for (std::size_t k = 0; k < before.data().size(); ++k) CHECK(before.data()[k] == after.data()[k]);

  StudentConfig lora = small_student();
  lora.lora = LoraConfig{2, 1.0, {"q", "v"}};
  const StudentModel student{lora};
  const auto sp = student.init(5);
  const auto bytes = encode_checkpoint(student, sp, {});
  const auto back = decode_checkpoint(bytes);
  CHECK(encode_checkpoint(*back.model, back.params, back.meta) == bytes);
}

TEST_CASE("checkpoint failures are distinct and name the problem") {
  const StudentModel student{small_student()};
  const auto bytes = encode_checkpoint(student, student.init(1), {});
  CHECK(failure_of(perturbed(bytes, 0, 'X')) == CheckpointFailure::kBadMagic);
  CHECK(failure_of(perturbed(bytes, 4, 2)) == CheckpointFailure::kVersionMismatch);
  CHECK(failure_of(std::vector<std::uint8_t>(bytes.begin(), bytes.end() - 3)) == CheckpointFailure::kTruncated);
  CHECK(failure_of(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 10)) == CheckpointFailure::kTruncated);
  auto longer = bytes;
  longer.push_back(0);
  CHECK(failure_of(longer) == CheckpointFailure::kTruncated);
  CHECK(failure_of({}) == CheckpointFailure::kBadMagic);

  std::string text(bytes.begin(), bytes.end());
  const auto pos = text.find("\"shape\":[48,16]");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 15, "\"shape\":[16,48]");
  CHECK(failure_of(std::vector<std::uint8_t>(text.begin(), text.end())) == CheckpointFailure::kManifestMismatch);

  std::string broken(bytes.begin(), bytes.end());
  broken[16] = '[';
  CHECK(failure_of(std::vector<std::uint8_t>(broken.begin(), broken.end())) == CheckpointFailure::kMalformedHeader);

  try {
    decode_checkpoint(perturbed(bytes, 1, 'Q'));
    FAIL("expected an error");
  } catch (const CheckpointError& e) {
    CHECK(std::string(e.what()).find("magic") != std::string::npos);
  }
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/x.kdvc"), IoError);
}

TEST_CASE("run config round trips and rejects unknown keys") {
  RunConfig c;
  c.dataset = "data/manifest.json";
  c.train.lr = 1e-3;
  c.train.alpha = 0.5;
  c.train.augment = false;
  c.explain.method = "lime";
  c.seed = 42;
  c.threads = 3;
  c.out = "runs/x";
  c.student.lora = LoraConfig{4, 2.0, {"q"}};
  const nlohmann::json j = c;
  const auto back = parse_run_config(j.dump());
  CHECK(nlohmann::json(back) == j);

  const auto defaults = parse_run_config("{}");
  CHECK(defaults.train.lr == 1e-4);
  CHECK(defaults.train.batch_size == 32);
  CHECK(defaults.train.epochs == 50);
  CHECK(defaults.train.alpha == 0.9);
  CHECK(defaults.train.temperature == 4.0);
  CHECK(defaults.train.lr_patience == 3);
  CHECK(defaults.train.early_stop_patience == 5);
  const auto opts = defaults.train_options();
  CHECK(opts.controller.factor == 0.1);
  CHECK(opts.adamw.weight_decay == 0.01);
  CHECK(opts.clip_norm == 1.0);

  CHECK_THROWS_AS(parse_run_config(R"({"bogus": 1})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"train": {"learning_rate": 1}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"teacher": {"dims": 1}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"explain": {"method": "shap"}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"train": {"alpha": 1.5}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"train": {"lr": "fast"}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"synthetic": {"classes": 3}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("{not json"), ConfigError);
}

TEST_CASE("seed precedence is flag then environment then config") {
  CHECK(resolve_seed(5, "7", 9) == 5);
  CHECK(resolve_seed(std::nullopt, "7", 9) == 7);
  CHECK(resolve_seed(std::nullopt, nullptr, 9) == 9);
  CHECK(resolve_seed(std::nullopt, "", 9) == 9);
  CHECK(resolve_seed(std::nullopt, "18446744073709551615", 9) == 18446744073709551615ull);
  CHECK_THROWS_AS(resolve_seed(std::nullopt, "-1", 9), ConfigError);
  CHECK_THROWS_AS(resolve_seed(std::nullopt, "12abc", 9), ConfigError);
  CHECK_THROWS_AS(resolve_seed(std::nullopt, "99999999999999999999", 9), ConfigError);
}

TEST_CASE("report files") {
  TempDir dir("report");
  const auto m = fixture_d1();
  const auto report = classification_report(m);
  CHECK(summary_text(report).rfind("Accuracy 0.9978\n", 0) == 0);

  // Class 3 never occurs, so its curve is undefined.
  const std::vector<std::vector<double>> scores{{0.7, 0.1, 0.1, 0.1}, {0.2, 0.6, 0.1, 0.1}, {0.5, 0.2, 0.2, 0.1}};
  const std::vector<int> labels{0, 1, 2};
  const auto roc = roc_auc(scores, labels, {"a", "b", "c d", "e"});
  const auto small = confusion_matrix(labels, std::vector<int>{0, 1, 0}, 4, {"a", "b", "c d", "e"});
  const auto small_report = classification_report(small);
  write_report(dir.path, {EpochRecord{1, 0.5, 0.5, 0.6, 0.4, 1e-4, true}}, small, small_report, roc);
  CHECK(slurp(dir.path / "roc_e.csv") == "fpr,tpr\n");
  CHECK(fs::exists(dir.path / "roc_c_d.csv"));
  const auto j = nlohmann::json::parse(slurp(dir.path / "report.json"));
  CHECK(j["roc"]["per_class"][3]["auc"] == "undefined");
  CHECK(j["roc"]["per_class"][0]["auc"].is_number());
  CHECK(slurp(dir.path / "confusion.csv").rfind("actual,a,b,c d,e\n", 0) == 0);
  CHECK(slurp(dir.path / "history.jsonl").find("\"epoch\":1") != std::string::npos);

  const auto first = slurp(dir.path / "report.json") + slurp(dir.path / "summary.txt");
  write_meta(dir.path, {{"k", 1}});
  write_report(dir.path, {}, small, small_report, roc);
  CHECK(slurp(dir.path / "report.json") + slurp(dir.path / "summary.txt") == first);
  CHECK(slurp(dir.path / "meta.json").find("timestamp") != std::string::npos);
  CHECK(slurp(dir.path / "report.json").find("timestamp") == std::string::npos);

  CHECK_THROWS_AS(write_report("/proc/distillscope/x", {}, small, small_report, std::nullopt), IoError);
}

TEST_CASE("gradcheck suite covers ops, blocks, losses and toy models") {
  const auto suite = run_gradcheck_suite(0);
  std::set<std::string> groups;
  for (const auto& r : suite.rows) {
    CAPTURE(r.name);
    groups.insert(r.group);
    CHECK(r.checked > 0);
    CHECK(r.significant_rel_error <= 1e-5);
    if (r.group == "op" || r.group == "loss") CHECK(r.max_rel_error <= 1e-5);
  }
  CHECK(groups == std::set<std::string>{"op", "block", "loss", "model"});
  const auto j = to_json(suite);
  CHECK(j["rows"].size() == suite.rows.size());
  CHECK(j.dump().find("seconds") == std::string::npos);
}

TEST_CASE("pipeline stages write checkpoints and reports deterministically across threads") {
  TempDir dir("pipeline");
  RunConfig c;
  c.synthetic.side = 16;
  c.synthetic.train_per_class = 4;
  c.synthetic.val_per_class = 2;
  c.synthetic.test_per_class = 2;
  c.teacher = small_teacher();
  c.student = small_student();
  c.train.epochs = 2;
  c.train.batch_size = 8;
  c.train.lr = 1e-3;
  c.seed = 11;

  auto run = [&](int threads, const std::string& name) {
    RunConfig r = c;
    r.threads = threads;
    r.out = (dir.path / name).string();
    const auto t = run_train_teacher(r);
    const auto s = run_distill_student(r, t.checkpoint);
    return s;
  };
  const auto one = run(1, "t1");
  run(3, "t3");
  for (const char* f : {"teacher.kdvc", "student.kdvc", "report.json", "confusion.csv", "history.jsonl"})
    CHECK(read_file(dir.path / "t1" / f) == read_file(dir.path / "t3" / f));
  CHECK(one.training.history.size() == 2);

  RunConfig e = c;
  e.out = (dir.path / "eval").string();
  const auto ev = run_evaluate_checkpoint(e, one.checkpoint);
  CHECK(ev.report.accuracy == one.evaluation.report.accuracy);
  CHECK(read_file(dir.path / "eval" / "confusion.csv") == read_file(dir.path / "t1" / "confusion.csv"));

  for (const char* method : {"gradcam", "gradcampp", "scorecam", "lime"}) {
    CAPTURE(method);
    RunConfig x = c;
    x.out = (dir.path / "xai").string();
    x.explain.lime_samples = 20;
    const auto map = run_explain(x, one.checkpoint, ExplainRequest{method, 1, -1, {}});
    CHECK(map.height == 16);
    const auto ppm = read_ppm(dir.path / "xai" / (std::string("explain_") + method + ".ppm"));
    CHECK(ppm.width == 16);
    const auto j = nlohmann::json::parse(slurp(dir.path / "xai" / (std::string("explain_") + method + ".json")));
    CHECK(j.contains("argmax_in_region"));
  }
  CHECK_THROWS_AS(run_distill_student(c, dir.path / "t1" / "student.kdvc"), ConfigError);

  RunConfig m = c;
  m.out = (dir.path / "data").string();
  const auto manifest = run_make_synthetic(m);
  RunConfig from_manifest = c;
  from_manifest.dataset = manifest.string();
  CHECK(obtain_dataset(from_manifest) == obtain_dataset(c));

  write_text(dir.path / "d1.csv", confusion_csv(fixture_d1()));
  RunConfig f = c;
  f.out = (dir.path / "fixture").string();
  const auto rep = run_evaluate_confusion(f, dir.path / "d1.csv");
  CHECK(std::abs(rep.accuracy - 0.9978) <= 5e-5);
  CHECK(slurp(dir.path / "fixture" / "summary.txt").rfind("Accuracy 0.9978", 0) == 0);
}
