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

#include <cmath>
#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace ds {

/// Ordered, named collection of leaf tensors. Order is insertion order and
/// defines the checkpoint layout and optimizer traversal.
template <typename Real>
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor<Real> value;
    bool trainable = true;
  };

  Tensor<Real>& add(const std::string& name, Tensor<Real> value);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  /// Throws ConfigError when absent.
  const Tensor<Real>& get(const std::string& name) const;
  Tensor<Real>& get(const std::string& name);

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }
  /// Total scalar count.
  std::size_t element_count() const;
  std::size_t trainable_element_count() const;

  /// Frozen parameters stop requiring grad and are skipped by the optimizer.
  void set_trainable(const std::string& name, bool trainable);
  bool trainable(const std::string& name) const;

  void zero_grad();
  /// Deep copy with independent storage and cleared gradients.
  ParameterSet clone() const;
  /// Copies values (not flags) from `other`, which must have the same layout.
  void assign_values(const ParameterSet& other);

  template <typename To>
  ParameterSet<To> cast() const {
    ParameterSet<To> out;
    for (const auto& e : entries_) {
      out.add(e.name, ds::cast<Real, To>(e.value));
      out.set_trainable(e.name, e.trainable);
    }
    return out;
  }

  bool same_values(const ParameterSet& other) const;

  /// Detached copies of every value, in order.
  std::vector<Tensor<Real>> values() const;
  /// Same names and flags bound to the given tensors (shared, not copied).
  ParameterSet rebind(const std::vector<Tensor<Real>>& values) const;

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Marks parameters whose names start with any prefix as frozen. Returns the
/// prefixes that matched nothing (each is also logged as a warning).
template <typename Real>
std::vector<std::string> freeze(ParameterSet<Real>& params, const std::vector<std::string>& prefixes);

constexpr double kInitStd = 0.02;

/// Weight [in, out] from a truncated normal with the given std, zero bias.
template <typename Real>
void init_linear(ParameterSet<Real>& params, const std::string& prefix, std::int64_t in, std::int64_t out, bool bias,
                 Rng& rng, double std = kInitStd);
/// 1 / sqrt(fan_in), for projections outside the residual stream.
inline double fan_in_std(std::int64_t in) { return 1.0 / std::sqrt(static_cast<double>(in)); }
template <typename Real>
void init_layer_norm(ParameterSet<Real>& params, const std::string& prefix, std::int64_t dim);
template <typename Real>
Tensor<Real> truncated_normal(const Shape& shape, Rng& rng, double std = kInitStd);

}  // namespace ds
