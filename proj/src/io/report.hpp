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
#include <optional>
#include <string>
#include <vector>

#include "eval/metrics.hpp"
#include "json.hpp"
#include "train/trainer.hpp"

namespace ds {

nlohmann::json to_json(const EpochRecord& record);
/// One JSON object per line.
std::string history_jsonl(const std::vector<EpochRecord>& history);

/// Metrics, confusion matrix and ROC data. Undefined rates and AUCs carry the
/// string "undefined" instead of a number.
nlohmann::json report_json(const ConfusionMatrix& matrix, const MetricsReport& report,
                           const std::optional<RocCurve>& roc);

/// Headline accuracy and macro-F1 lines followed by the per-class table.
std::string summary_text(const MetricsReport& report);

/// Class names reduced to [A-Za-z0-9_-] for use in file names.
std::string file_stem(const std::string& name);

/// Writes history.jsonl (when history is non-empty), report.json,
/// confusion.csv, roc_<class>.csv (when roc is given) and summary.txt. The
/// payload is a pure function of the inputs. Throws IoError on failure.
void write_report(const std::filesystem::path& dir, const std::vector<EpochRecord>& history,
                  const ConfusionMatrix& matrix, const MetricsReport& report, const std::optional<RocCurve>& roc);

/// Writes meta.json holding the wall-clock timestamp plus `extra`.
void write_meta(const std::filesystem::path& dir, const nlohmann::json& extra);

/// Creates `dir` and its parents; throws IoError on failure.
void ensure_dir(const std::filesystem::path& dir);

}  // namespace ds
