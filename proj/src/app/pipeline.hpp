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

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "app/gradcheck_suite.hpp"
#include "data/dataset.hpp"
#include "eval/metrics.hpp"
#include "io/checkpoint.hpp"
#include "io/config.hpp"
#include "xai/explain.hpp"

namespace ds {

/// Receives one human-readable progress line per event.
using ProgressFn = std::function<void(const std::string&)>;

/// Loads the configured manifest, or generates the synthetic dataset from the
/// run seed when no manifest is given.
Dataset obtain_dataset(const RunConfig& config);

struct Evaluation {
  ConfusionMatrix matrix;
  MetricsReport report;
  RocCurve roc;
  std::vector<int> predictions;
  std::vector<std::vector<double>> probabilities;
};

/// Test split, or the validation split when the test split is empty.
Split evaluation_split(const Dataset& data);

Evaluation evaluate_model(const Model& model, const ParameterSet<float>& params, const Dataset& data, Split split,
                          int threads);

struct StageResult {
  std::filesystem::path checkpoint;
  TrainResult training;
  Evaluation evaluation;
};

/// Writes the dataset as PPM files plus manifest.json under config.out.
std::filesystem::path run_make_synthetic(const RunConfig& config);

/// Trains the configured teacher with cross-entropy. Writes teacher.kdvc and
/// the report files for the evaluation split under config.out.
StageResult run_train_teacher(const RunConfig& config, const ProgressFn& progress = {});

/// Distills the configured student from a teacher checkpoint. Writes
/// student.kdvc and the report files under config.out.
StageResult run_distill_student(const RunConfig& config, const std::filesystem::path& teacher_checkpoint,
                                const ProgressFn& progress = {});

/// Evaluates a checkpoint on a split of the configured dataset and writes the
/// report files under config.out.
Evaluation run_evaluate_checkpoint(const RunConfig& config, const std::filesystem::path& checkpoint,
                                   std::optional<Split> split = std::nullopt);

/// Writes the report files for a confusion matrix given as CSV. No ROC data
/// is produced.
MetricsReport run_evaluate_confusion(const RunConfig& config, const std::filesystem::path& confusion_csv_path);

struct ExplainRequest {
  std::string method;           // gradcam, gradcampp, scorecam or lime
  int index = 0;                // sample of the evaluation split
  int class_index = -1;         // -1: predicted class
  std::filesystem::path image;  // when set, explains this PPM instead
};

/// Writes explain_<method>.ppm (overlay) and explain_<method>.json under
/// config.out.
SaliencyMap run_explain(const RunConfig& config, const std::filesystem::path& checkpoint,
                        const ExplainRequest& request);

/// Writes gradcheck.json under config.out.
GradCheckSuite run_gradcheck(const RunConfig& config);

}  // namespace ds
