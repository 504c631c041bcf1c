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
#include <memory>
#include <vector>

#include "core/tensor.hpp"

namespace ds {

// Binary elementwise ops accept a right operand of the same shape, a single
// element, or a vector matching the last dimension of the left operand.
template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b);
/// Throws DomainError when any divisor is zero.
template <typename Real>
Tensor<Real> div(const Tensor<Real>& a, const Tensor<Real>& b);

template <typename Real>
Tensor<Real> scale(const Tensor<Real>& a, Real factor);
template <typename Real>
Tensor<Real> add_scalar(const Tensor<Real>& a, Real offset);

template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real>
Tensor<Real> transpose(const Tensor<Real>& a);

/// tanh approximation: 0.5x(1 + tanh(sqrt(2/pi)(x + 0.044715x^3))).
template <typename Real>
Tensor<Real> gelu(const Tensor<Real>& a);
template <typename Real>
Tensor<Real> sigmoid(const Tensor<Real>& a);
template <typename Real>
Tensor<Real> exp(const Tensor<Real>& a);
/// Throws DomainError on non-positive inputs.
template <typename Real>
Tensor<Real> log(const Tensor<Real>& a);

template <typename Real>
Tensor<Real> sum(const Tensor<Real>& a);
template <typename Real>
Tensor<Real> mean(const Tensor<Real>& a);
/// Reduces `axis` away; a rank-1 input yields shape [1].
template <typename Real>
Tensor<Real> sum(const Tensor<Real>& a, int axis);
template <typename Real>
Tensor<Real> mean(const Tensor<Real>& a, int axis);

template <typename Real>
Tensor<Real> concat(const std::vector<Tensor<Real>>& parts, int axis);
template <typename Real>
Tensor<Real> slice(const Tensor<Real>& a, int axis, std::int64_t begin, std::int64_t end);
template <typename Real>
Tensor<Real> reshape(const Tensor<Real>& a, const Shape& shape);

/// Gathers elements by flat index into a tensor of `shape`. Backward
/// scatter-adds, so repeated indices are allowed.
template <typename Real>
Tensor<Real> take(const Tensor<Real>& a, std::shared_ptr<const std::vector<std::int64_t>> indices, const Shape& shape);

/// Normalizes over the last axis, then applies gamma/beta of that length.
template <typename Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, const Tensor<Real>& gamma, const Tensor<Real>& beta,
                        Real eps = Real(1e-5));

template <typename Real>
Tensor<Real> softmax(const Tensor<Real>& a, int axis);
template <typename Real>
Tensor<Real> log_softmax(const Tensor<Real>& a, int axis);

/// Scaled dot-product attention over [N, D] projections. Tokens are split into
/// N / group_size independent groups (windows); D is split into `heads`.
template <typename Real>
struct AttentionInputs {
  int heads = 1;
  std::int64_t group_size = 0;  // 0: one group holding every token
  Tensor<Real> head_bias;       // optional [heads, T, T], shared by all groups
  Tensor<Real> key_bias;        // optional [N], added to every query row and head
  std::shared_ptr<const std::vector<Real>> mask;  // optional constant [groups, T, T]
};

/// Returns the concatenated head outputs, [N, D].
template <typename Real>
Tensor<Real> attention(const Tensor<Real>& q, const Tensor<Real>& k, const Tensor<Real>& v,
                       const AttentionInputs<Real>& in);

/// Attention probabilities laid out [groups, heads, T, T]; forward only.
template <typename Real>
std::vector<Real> attention_weights(const Tensor<Real>& q, const Tensor<Real>& k, const AttentionInputs<Real>& in);

template <typename Real>
Tensor<Real> operator+(const Tensor<Real>& a, const Tensor<Real>& b) {
  return add(a, b);
}
template <typename Real>
Tensor<Real> operator-(const Tensor<Real>& a, const Tensor<Real>& b) {
  return sub(a, b);
}
template <typename Real>
Tensor<Real> operator*(const Tensor<Real>& a, const Tensor<Real>& b) {
  return mul(a, b);
}

}  // namespace ds
