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

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace ds {

/// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;  // "input[i][j]" of the worst entry
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  struct Entry {
    double analytic, numeric;
  };
  std::vector<Entry> entries;  // every checked element, in check order
};

struct GradCheckOptions {
  double step = 1e-5;
  // 0 checks every element; otherwise a seeded sample of this many per input.
  std::size_t max_per_input = 0;
  std::uint64_t seed = 7;
};

/// Compares autograd against central finite differences for every input of
/// `loss_fn`, which must map the inputs to a scalar tensor.
GradCheckResult gradcheck(const std::function<TensorD(const std::vector<TensorD>&)>& loss_fn,
                          std::vector<TensorD> inputs, const GradCheckOptions& options = {});

/// sum(out * W) with fixed pseudo-random W; turns any output into a scalar
/// whose gradient exercises every output element.
TensorD random_projection_loss(const TensorD& out, std::uint64_t seed);

}  // namespace ds
