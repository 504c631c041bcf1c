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

#include "nn/parameters.hpp"

#include <algorithm>

#include "core/error.hpp"
#include "core/log.hpp"

namespace ds {

template <typename Real>
Tensor<Real>& ParameterSet<Real>::add(const std::string& name, Tensor<Real> value) {
  if (contains(name)) throw ConfigError("duplicate parameter '" + name + "'");
  value.set_requires_grad(true);
  index_.emplace(name, entries_.size());
  entries_.push_back({name, std::move(value), true});
  return entries_.back().value;
}

template <typename Real>
const Tensor<Real>& ParameterSet<Real>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return entries_[it->second].value;
}

template <typename Real>
Tensor<Real>& ParameterSet<Real>::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return entries_[it->second].value;
}

template <typename Real>
std::size_t ParameterSet<Real>::element_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.numel();
  return n;
}

template <typename Real>
std::size_t ParameterSet<Real>::trainable_element_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_)
    if (e.trainable) n += e.value.numel();
  return n;
}

template <typename Real>
void ParameterSet<Real>::set_trainable(const std::string& name, bool trainable) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  auto& e = entries_[it->second];
  e.trainable = trainable;
  e.value.set_requires_grad(trainable);
  if (!trainable) e.value.zero_grad();
}

template <typename Real>
bool ParameterSet<Real>::trainable(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return entries_[it->second].trainable;
}

template <typename Real>
void ParameterSet<Real>::zero_grad() {
  for (auto& e : entries_) e.value.zero_grad();
}

template <typename Real>
ParameterSet<Real> ParameterSet<Real>::clone() const {
  ParameterSet out;
  for (const auto& e : entries_) {
    out.add(e.name, e.value.detach());
    out.set_trainable(e.name, e.trainable);
  }
  return out;
}

template <typename Real>
void ParameterSet<Real>::assign_values(const ParameterSet& other) {
  if (other.size() != size()) throw ConfigError("parameter layouts differ");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto& dst = entries_[i];
    const auto& src = other.entries_[i];
    if (dst.name != src.name || dst.value.shape() != src.value.shape())
      throw ConfigError("parameter layouts differ at '" + dst.name + "'");
    std::copy(src.value.data().begin(), src.value.data().end(), dst.value.mutable_data().begin());
  }
}

template <typename Real>
bool ParameterSet<Real>::same_values(const ParameterSet& other) const {
  if (other.size() != size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& a = entries_[i];
    const auto& b = other.entries_[i];
    if (a.name != b.name || a.value.shape() != b.value.shape()) return false;
    if (!std::equal(a.value.data().begin(), a.value.data().end(), b.value.data().begin())) return false;
  }
  return true;
}

template <typename Real>
std::vector<Tensor<Real>> ParameterSet<Real>::values() const {
  std::vector<Tensor<Real>> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.value.detach());
  return out;
}

template <typename Real>
ParameterSet<Real> ParameterSet<Real>::rebind(const std::vector<Tensor<Real>>& values) const {
  if (values.size() != entries_.size()) throw ConfigError("parameter layouts differ");
  ParameterSet out;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (values[i].shape() != entries_[i].value.shape())
      throw ConfigError("parameter layouts differ at '" + entries_[i].name + "'");
    out.index_.emplace(entries_[i].name, i);
    out.entries_.push_back({entries_[i].name, values[i], entries_[i].trainable});
  }
  return out;
}

template <typename Real>
std::vector<std::string> freeze(ParameterSet<Real>& params, const std::vector<std::string>& prefixes) {
  std::vector<std::string> unmatched;
  for (const auto& prefix : prefixes) {
    bool hit = false;
    for (auto& e : params.entries())
      if (e.name.rfind(prefix, 0) == 0) {
        params.set_trainable(e.name, false);
        hit = true;
      }
    if (!hit) {
      unmatched.push_back(prefix);
      log_warning("freeze prefix '" + prefix + "' matched no parameter");
    }
  }
  return unmatched;
}

template <typename Real>
Tensor<Real> truncated_normal(const Shape& shape, Rng& rng, double std) {
  std::vector<Real> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = static_cast<Real>(rng.truncated_normal(std));
  return Tensor<Real>::from(shape, std::move(v));
}

template <typename Real>
void init_linear(ParameterSet<Real>& params, const std::string& prefix, std::int64_t in, std::int64_t out, bool bias,
                 Rng& rng, double std) {
  params.add(prefix + ".weight", truncated_normal<Real>({in, out}, rng, std));
  if (bias) params.add(prefix + ".bias", Tensor<Real>::zeros({out}));
}

template <typename Real>
void init_layer_norm(ParameterSet<Real>& params, const std::string& prefix, std::int64_t dim) {
  params.add(prefix + ".weight", Tensor<Real>::full({dim}, Real(1)));
  params.add(prefix + ".bias", Tensor<Real>::zeros({dim}));
}

#define DS_INSTANTIATE_PARAMS(Real)                                                                                   \
  template class ParameterSet<Real>;                                                                                  \
  template std::vector<std::string> freeze(ParameterSet<Real>&, const std::vector<std::string>&);                   \
  template Tensor<Real> truncated_normal(const Shape&, Rng&, double);                                                 \
  template void init_linear(ParameterSet<Real>&, const std::string&, std::int64_t, std::int64_t, bool, Rng&, double);        \
  template void init_layer_norm(ParameterSet<Real>&, const std::string&, std::int64_t);

DS_INSTANTIATE_PARAMS(float)
DS_INSTANTIATE_PARAMS(double)

}  // namespace ds
