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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace ds {

/// counts[i][j] = samples of actual class i predicted as class j.
struct ConfusionMatrix {
  std::vector<std::string> class_names;
  std::vector<std::vector<std::int64_t>> counts;

  int num_classes() const { return static_cast<int>(counts.size()); }
  std::int64_t total() const;
  std::int64_t trace() const;
  /// Throws ContractError on a non-square matrix, negative counts, or a name
  /// list of the wrong length.
  void validate() const;
};

/// Empty `class_names` yields "class_<k>". Throws IndexError on labels outside
/// [0, K) and ShapeError on length mismatch.
ConfusionMatrix confusion_matrix(std::span<const int> labels, std::span<const int> predictions, int num_classes,
                                 std::vector<std::string> class_names = {});

struct ClassMetrics {
  std::string name;
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::int64_t support = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  // Set when the rate had a zero denominator and was reported as 0.
  bool precision_undefined = false, recall_undefined = false, f1_undefined = false;
};

struct AverageMetrics {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

struct MetricsReport {
  std::vector<ClassMetrics> per_class;
  double accuracy = 0.0;
  AverageMetrics macro, weighted;
  std::int64_t total = 0;
  std::vector<std::string> warnings;
};

/// Throws ContractError when the matrix is empty or holds no samples.
MetricsReport classification_report(const ConfusionMatrix& matrix);

struct RocPoint {
  double fpr = 0.0, tpr = 0.0;
};

struct RocClass {
  std::string name;
  std::vector<RocPoint> points;  // empty when the AUC is undefined
  std::optional<double> auc;     // nullopt without both positives and negatives
};

struct RocCurve {
  std::vector<RocClass> per_class;
  std::optional<double> macro_auc;  // mean of the defined per-class values
};

/// One-vs-rest curve for a single binary problem; tied scores form one step.
RocClass binary_roc(std::span<const double> scores, const std::vector<bool>& positive, std::string name = {});

/// scores is N rows of K class probabilities. Throws ContractError when a row
/// does not sum to 1 within 1e-4, ShapeError on ragged input, IndexError on
/// labels outside [0, K).
RocCurve roc_auc(const std::vector<std::vector<double>>& scores, std::span<const int> labels,
                 std::vector<std::string> class_names = {});

nlohmann::json to_json(const ConfusionMatrix& matrix);
nlohmann::json to_json(const MetricsReport& report);
nlohmann::json to_json(const RocCurve& curve);

/// Header row of predicted class names, one row per actual class.
std::string confusion_csv(const ConfusionMatrix& matrix);
/// Parses the format written by confusion_csv.
ConfusionMatrix parse_confusion_csv(const std::string& text);
std::string roc_csv(const RocClass& roc);
/// Fixed-width table with values rounded to 4 decimals.
std::string format_report(const MetricsReport& report);

}  // namespace ds
