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

#include <cstdint>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "distillscope.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct Session {
  ds_session* handle = nullptr;
  Session() {
    if (ds_session_create(&handle) != DS_OK) throw std::bad_alloc();
  }
  ~Session() { ds_session_destroy(handle); }
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;
};

int report(const Session& s, ds_status status) {
  if (status == DS_OK) return kExitOk;
  std::cerr << "error: " << ds_status_name(status) << ": " << ds_session_last_error(s.handle) << "\n";
  return kExitRuntime;
}

void print_progress(const char* line, void*) { std::cerr << line << "\n"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-distillation pipeline: synthetic data, teacher training, student distillation, "
               "evaluation, explanations and gradient checks."};
  app.set_version_flag("--version", ds_version());
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> threads;
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Run seed (overrides DISTILLSCOPE_SEED and the config)");
  app.add_option("--out", out, "Output directory");
  app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  auto* make = app.add_subcommand("make-synthetic", "Write the seeded synthetic dataset (PPM files + manifest)");
  auto* train = app.add_subcommand("train-teacher", "Train the dual-encoder teacher with cross-entropy");
  auto* distill = app.add_subcommand("distill-student", "Distill the student from a teacher checkpoint");
  std::string teacher;
  distill->add_option("--teacher", teacher, "Teacher checkpoint")->required()->check(CLI::ExistingFile);

  auto* evaluate = app.add_subcommand("evaluate", "Write metrics for a checkpoint or a confusion matrix");
  std::string checkpoint, confusion, split;
  auto* ckpt_opt = evaluate->add_option("--checkpoint", checkpoint, "Model checkpoint")->check(CLI::ExistingFile);
  auto* conf_opt = evaluate->add_option("--confusion", confusion, "Confusion matrix CSV")->check(CLI::ExistingFile);
  evaluate->add_option("--split", split, "Dataset split")->check(CLI::IsMember({"train", "val", "test"}));
  ckpt_opt->excludes(conf_opt);
  evaluate->require_option(1, 2);

  auto* explain = app.add_subcommand("explain", "Write a saliency overlay and its JSON sidecar");
  std::string explain_ckpt, method = "gradcam", image;
  int index = 0, class_index = -1;
  explain->add_option("--checkpoint", explain_ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  explain->add_option("--method", method, "Explanation method")
      ->check(CLI::IsMember({"gradcam", "gradcampp", "scorecam", "lime"}));
  explain->add_option("--index", index, "Sample of the evaluation split")->check(CLI::NonNegativeNumber);
  explain->add_option("--class", class_index, "Class to explain (-1: predicted)")->capture_default_str();
  explain->add_option("--image", image, "Explain this PPM instead of a dataset sample")->check(CLI::ExistingFile);

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every op, block and toy model");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e, std::cerr, std::cerr);
    std::cerr << app.help();
    return kExitUsage;
  }
  if (evaluate->parsed() && checkpoint.empty() && !split.empty()) {
    std::cerr << "--split requires --checkpoint\n" << app.help();
    return kExitUsage;
  }

  Session s;
  ds_status status = DS_OK;
  if (!config_path.empty()) status = ds_session_load_config(s.handle, config_path.c_str());
  if (status == DS_OK && seed) status = ds_session_set_seed(s.handle, *seed);
  if (status == DS_OK && threads) status = ds_session_set_threads(s.handle, *threads);
  if (status == DS_OK && !out.empty()) status = ds_session_set_out(s.handle, out.c_str());
  if (status == DS_OK) status = ds_session_set_progress(s.handle, print_progress, nullptr);
  if (status != DS_OK) return report(s, status);

  if (make->parsed()) {
    status = ds_make_synthetic(s.handle);
  } else if (train->parsed()) {
    status = ds_train_teacher(s.handle);
  } else if (distill->parsed()) {
    status = ds_distill_student(s.handle, teacher.c_str());
  } else if (evaluate->parsed()) {
    status = checkpoint.empty()
                 ? ds_evaluate_confusion(s.handle, confusion.c_str())
                 : ds_evaluate_checkpoint(s.handle, checkpoint.c_str(), split.empty() ? nullptr : split.c_str());
  } else if (explain->parsed()) {
    status = ds_explain(s.handle, explain_ckpt.c_str(), method.c_str(), index, class_index,
                        image.empty() ? nullptr : image.c_str());
  } else if (gradcheck->parsed()) {
    double worst = 0.0;
    status = ds_gradcheck(s.handle, &worst);
    if (status == DS_OK) std::printf("gradcheck: max relative error %.3e\n", worst);
  }
  return report(s, status);
}
