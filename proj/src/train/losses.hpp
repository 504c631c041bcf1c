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

#include "core/ops.hpp"

namespace ds {

/// -log softmax(logits)[label] for logits of shape [K]. Throws IndexError
/// when the label is outside [0, K).
template <typename Real>
Tensor<Real> cross_entropy(const Tensor<Real>& logits, int label);

struct DistillLossSpec {
  double alpha = 0.9;
  double temperature = 4.0;
  /// Throws ConfigError unless alpha is in [0, 1] and the temperature is positive.
  void validate() const;
};

template <typename Real>
struct DistillLoss {
  Tensor<Real> total;
  Tensor<Real> kl;  // KL(softmax(zT/T) || softmax(zS/T))
  Tensor<Real> ce;  // cross entropy of the student against the label
};

/// alpha T^2 KL(p || q) + (1 - alpha) CE with p = softmax(zT/T) and
/// q = softmax(zS/T). Teacher logits are treated as constants.
template <typename Real>
DistillLoss<Real> kd_loss(const Tensor<Real>& teacher_logits, const Tensor<Real>& student_logits, int label,
                          const DistillLossSpec& spec);

}  // namespace ds
