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

#include "train/losses.hpp"

#include <cmath>

#include "core/error.hpp"

namespace ds {

template <typename Real>
Tensor<Real> cross_entropy(const Tensor<Real>& logits, int label) {
  if (logits.rank() != 1) throw ShapeError("cross_entropy expects [K] logits, got " + shape_str(logits.shape()));
  const auto k = logits.dim(0);
  if (label < 0 || label >= k)
    throw IndexError("label " + std::to_string(label) + " outside [0, " + std::to_string(k) + ")");
  return scale(slice(log_softmax(logits, 0), 0, label, label + 1), Real(-1));
}

void DistillLossSpec::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("distillation alpha must lie in [0, 1]");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ConfigError("temperature must be positive");
}

template <typename Real>
DistillLoss<Real> kd_loss(const Tensor<Real>& teacher_logits, const Tensor<Real>& student_logits, int label,
                          const DistillLossSpec& spec) {
  spec.validate();
  if (teacher_logits.shape() != student_logits.shape())
    throw ShapeError("teacher logits " + shape_str(teacher_logits.shape()) + " and student logits " +
                     shape_str(student_logits.shape()) + " differ");
  const Real inv_t = static_cast<Real>(1.0 / spec.temperature);
  Tensor<Real> log_p;
  {
    NoGradGuard guard;
    log_p = log_softmax(scale(teacher_logits.detach(), inv_t), 0);
  }
  std::vector<Real> p(log_p.data().begin(), log_p.data().end());
  for (auto& v : p) v = std::exp(v);
  const auto p_t = Tensor<Real>::from(log_p.shape(), std::move(p));
  const auto log_q = log_softmax(scale(student_logits, inv_t), 0);
  DistillLoss<Real> out;
  out.kl = sum(mul(sub(log_p, log_q), p_t));
  out.ce = cross_entropy(student_logits, label);
  const Real t2 = static_cast<Real>(spec.temperature * spec.temperature);
  out.total = add(scale(out.kl, static_cast<Real>(spec.alpha) * t2), scale(out.ce, static_cast<Real>(1.0 - spec.alpha)));
  return out;
}

template Tensor<float> cross_entropy(const Tensor<float>&, int);
template Tensor<double> cross_entropy(const Tensor<double>&, int);
template DistillLoss<float> kd_loss(const Tensor<float>&, const Tensor<float>&, int, const DistillLossSpec&);
template DistillLoss<double> kd_loss(const Tensor<double>&, const Tensor<double>&, int, const DistillLossSpec&);

}  // namespace ds
