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
#include <string>
#include <vector>

#include "json.hpp"
#include "nn/models.hpp"

namespace ds {

struct GradCheckRow {
  std::string name;
  std::string group;  // "op", "block", "loss" or "model"
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  /// Worst error over entries whose analytic gradient is at least 1e-3 of the
  /// largest one in the case.
  double significant_rel_error = 0.0;
  std::string worst;
  double seconds = 0.0;
};

struct GradCheckSuite {
  std::vector<GradCheckRow> rows;
  double step = 1e-5;
  double seconds = 0.0;
  double max_rel_error() const;
};

/// Toy-scale configs used by the model rows: side 8, three classes.
TeacherConfig gradcheck_toy_teacher();
StudentConfig gradcheck_toy_student();

/// Runs every differentiable op, block, loss and toy-scale model through the
/// 64-bit central-difference oracle with step 1e-5.
GradCheckSuite run_gradcheck_suite(std::uint64_t seed = 0);

nlohmann::json to_json(const GradCheckSuite& suite);

}  // namespace ds
