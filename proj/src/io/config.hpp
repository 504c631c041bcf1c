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

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "data/dataset.hpp"
#include "json.hpp"
#include "nn/models.hpp"
#include "train/trainer.hpp"

namespace ds {

struct TrainHyper {
  double lr = 1e-4;
  int batch_size = 32;
  int epochs = 50;
  double alpha = 0.9;
  double temperature = 4.0;
  double weight_decay = 0.01;
  double clip_norm = 1.0;
  double lr_factor = 0.1;
  int lr_patience = 3;
  double min_lr = 1e-7;
  int early_stop_patience = 5;
  bool augment = true;
  int chunk_size = 4;
};

struct ExplainConfig {
  std::string method = "gradcam";
  std::string target;  // empty: the model's default layer
  int top_channels = 32;
  int lime_grid = 4;
  int lime_samples = 200;
  double opacity = 0.45;
};

struct RunConfig {
  std::string dataset;  // manifest path; empty means generate `synthetic`
  SyntheticSpec synthetic;  // generated with the run seed
  TeacherConfig teacher;
  StudentConfig student;
  TrainHyper train;
  ExplainConfig explain;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out = "out";

  /// Throws ConfigError on out-of-range values.
  void validate() const;
  TrainOptions train_options() const;
  DistillLossSpec loss() const;
};

// Unknown keys are rejected with ConfigError at every level.
void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);
/// The synthetic section omits the seed; the run seed is used instead.
void to_json(nlohmann::json& j, const SyntheticSpec& s);
void from_json(const nlohmann::json& j, SyntheticSpec& s);

RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& text);

/// Seed precedence: command-line flag, then DISTILLSCOPE_SEED, then config.
/// Throws ConfigError when the environment value is not an unsigned integer.
std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, const char* env, std::uint64_t config_seed);

}  // namespace ds
