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

#include "core/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "core/ops.hpp"

namespace ds {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult gradcheck(const std::function<TensorD(const std::vector<TensorD>&)>& loss_fn,
                          std::vector<TensorD> inputs, const GradCheckOptions& options) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  backward(loss_fn(inputs));
  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs) analytic.emplace_back(t.grad().begin(), t.grad().end());

  GradCheckResult result;
  Rng rng(options.seed, 0);
  NoGradGuard no_grad;
  for (std::size_t which = 0; which < inputs.size(); ++which) {
    auto values = inputs[which].mutable_data();
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    if (options.max_per_input > 0 && order.size() > options.max_per_input) {
      rng.shuffle(std::span(order));
      order.resize(options.max_per_input);
    }
    for (auto i : order) {
      const double saved = values[i];
      values[i] = saved + options.step;
      const double up = loss_fn(inputs).item();
      values[i] = saved - options.step;
      const double down = loss_fn(inputs).item();
      values[i] = saved;
      const double numeric = (up - down) / (2 * options.step);
      const double err = relative_error(analytic[which][i], numeric);
      ++result.checked;
      result.entries.push_back({analytic[which][i], numeric});
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst = "input[" + std::to_string(which) + "][" + std::to_string(i) + "]";
        result.worst_analytic = analytic[which][i];
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

TensorD random_projection_loss(const TensorD& out, std::uint64_t seed) {
  Rng rng(seed, 1);
  std::vector<double> w(out.numel());
  for (auto& x : w) x = rng.uniform(-1.0, 1.0);
  return sum(mul(out, TensorD::from(out.shape(), std::move(w))));
}

}  // namespace ds
