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
#include <vector>

#include "nn/parameters.hpp"

namespace ds {

struct AdamWOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Decoupled weight decay Adam with bias correction:
/// w <- w - lr (m_hat / (sqrt(v_hat) + eps) + lambda w).
template <typename Real>
class AdamW {
 public:
  explicit AdamW(AdamWOptions options = {}) : options_(options) {}

  /// Updates every trainable parameter from its accumulated gradient (zero
  /// when none). Throws NumericError naming the first parameter with a
  /// non-finite gradient; nothing is modified in that case.
  void step(ParameterSet<Real>& params);

  double lr() const { return options_.lr; }
  void set_lr(double lr) { options_.lr = lr; }
  std::int64_t steps() const { return t_; }
  const AdamWOptions& options() const { return options_; }

 private:
  AdamWOptions options_;
  std::int64_t t_ = 0;
  std::vector<std::vector<Real>> m_, v_;
};

/// Scales all trainable gradients by max_norm / norm when their global L2
/// norm exceeds max_norm. Returns the norm before clipping.
template <typename Real>
double clip_gradients(ParameterSet<Real>& params, double max_norm);

struct ControllerOptions {
  double factor = 0.1;
  int lr_patience = 3;
  double min_lr = 1e-7;
  int stop_patience = 5;
  double tolerance = 1e-8;
};

struct ControllerDecision {
  double lr = 0.0;
  bool improved = false;
  bool reduced = false;
  bool stop = false;
  bool restore = false;
};

/// Plateau learning-rate schedule plus early stopping on validation loss,
/// keeping a snapshot of the best weights.
class TrainController {
 public:
  TrainController(double initial_lr, ControllerOptions options = {});

  ControllerDecision step(double val_loss, const ParameterSet<float>& params);

  double lr() const { return lr_; }
  double best_loss() const { return best_; }
  int best_epoch() const { return best_epoch_; }
  int epochs_seen() const { return epoch_; }
  int lr_counter() const { return lr_counter_; }
  int stop_counter() const { return stop_counter_; }
  const std::optional<ParameterSet<float>>& snapshot() const { return snapshot_; }

 private:
  ControllerOptions options_;
  double lr_;
  double best_;
  int best_epoch_ = -1;
  int epoch_ = 0;
  int lr_counter_ = 0;
  int stop_counter_ = 0;
  std::optional<ParameterSet<float>> snapshot_;
};

}  // namespace ds
