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

#include "train/optim.hpp"

#include <cmath>
#include <limits>

#include "core/error.hpp"

namespace ds {

template <typename Real>
void AdamW<Real>::step(ParameterSet<Real>& params) {
  auto& entries = params.entries();
  for (const auto& e : entries) {
    if (!e.trainable || !e.value.has_grad()) continue;
    for (auto g : e.value.grad())
      if (!std::isfinite(static_cast<double>(g)))
        throw NumericError("non-finite gradient in parameter '" + e.name + "'");
  }
  if (m_.empty()) {
    for (const auto& e : entries) {
      m_.emplace_back(e.value.numel(), Real(0));
      v_.emplace_back(e.value.numel(), Real(0));
    }
  } else if (m_.size() != entries.size()) {
    throw ContractError("optimizer state does not match the parameter set");
  }
  ++t_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double lr = options_.lr, wd = options_.weight_decay, eps = options_.eps;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& e = entries[i];
    if (!e.trainable) continue;
    auto w = e.value.mutable_data();
    const bool has = e.value.has_grad();
    const auto g = e.value.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = has ? static_cast<double>(g[j]) : 0.0;
      const double mj = b1 * m[j] + (1.0 - b1) * gj;
      const double vj = b2 * v[j] + (1.0 - b2) * gj * gj;
      m[j] = static_cast<Real>(mj);
      v[j] = static_cast<Real>(vj);
      const double m_hat = static_cast<double>(m[j]) / c1;
      const double v_hat = static_cast<double>(v[j]) / c2;
      const double wj = static_cast<double>(w[j]);
      w[j] = static_cast<Real>(wj * (1.0 - lr * wd) - lr * m_hat / (std::sqrt(v_hat) + eps));
    }
  }
}

template <typename Real>
double clip_gradients(ParameterSet<Real>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& e : params.entries()) {
    if (!e.trainable || !e.value.has_grad()) continue;
    for (auto g : e.value.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& e : params.entries()) {
      if (!e.trainable || !e.value.has_grad()) continue;
      for (auto& g : e.value.mutable_grad()) g = static_cast<Real>(static_cast<double>(g) * factor);
    }
  }
  return norm;
}

template class AdamW<float>;
template class AdamW<double>;
template double clip_gradients(ParameterSet<float>&, double);
template double clip_gradients(ParameterSet<double>&, double);

TrainController::TrainController(double initial_lr, ControllerOptions options)
    : options_(options), lr_(initial_lr), best_(std::numeric_limits<double>::infinity()) {}

ControllerDecision TrainController::step(double val_loss, const ParameterSet<float>& params) {
  ControllerDecision d;
  ++epoch_;
  if (val_loss < best_ - options_.tolerance) {
    best_ = val_loss;
    best_epoch_ = epoch_;
    lr_counter_ = 0;
    stop_counter_ = 0;
    snapshot_ = params.clone();
    d.improved = true;
  } else {
    ++lr_counter_;
    ++stop_counter_;
    if (lr_counter_ >= options_.lr_patience) {
      const double next = std::max(lr_ * options_.factor, options_.min_lr);
      d.reduced = next < lr_;
      lr_ = next;
      lr_counter_ = 0;
    }
    if (stop_counter_ >= options_.stop_patience) {
      d.stop = true;
      d.restore = snapshot_.has_value();
    }
  }
  d.lr = lr_;
  return d;
}

}  // namespace ds
