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
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ds {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename Real>
struct TensorImpl {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;  // empty until the first accumulation
  bool requires_grad = false;

  // Autograd record; empty for leaves.
  const char* op = nullptr;
  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::function<void(TensorImpl&)> backward_fn;

  std::span<Real> grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), Real(0));
    return grad;
  }
};

/// Shape-tagged dense array with reverse-mode autodiff. Tensors are handles:
/// copies share storage, clone() makes an independent leaf.
template <typename Real>
class Tensor {
 public:
  using value_type = Real;
  using Impl = TensorImpl<Real>;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(const Shape& shape);
  static Tensor full(const Shape& shape, Real value);
  static Tensor from(const Shape& shape, std::vector<Real> values);
  static Tensor scalar(Real value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  /// Negative indices count from the back.
  std::int64_t dim(int axis) const;
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const Real> data() const { return impl_->data; }
  /// Direct write access; only meaningful on leaves (parameters, inputs).
  std::span<Real> mutable_data() { return impl_->data; }
  Real item() const;
  Real at(std::size_t flat_index) const { return impl_->data[flat_index]; }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool flag);
  bool has_grad() const { return !impl_->grad.empty(); }
  /// Gradient buffer; all zeros when nothing was accumulated.
  std::span<const Real> grad() const;
  std::span<Real> mutable_grad() { return impl_->grad_buffer(); }
  void zero_grad() { impl_->grad.clear(); }

  bool is_leaf() const { return impl_->op == nullptr; }
  const char* op() const { return impl_->op; }

  /// Same values, no lineage, no grad requirement.
  Tensor detach() const;
  /// Independent leaf copy keeping the requires_grad flag.
  Tensor clone() const;

  Impl* impl() const { return impl_.get(); }
  const std::shared_ptr<Impl>& impl_ptr() const { return impl_; }

 private:
  std::shared_ptr<Impl> impl_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

bool grad_enabled();

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Accumulates d(loss)/d(t) into every reachable tensor that requires grad.
/// Intermediate tensors keep their gradients so callers can read activations'
/// gradients after the pass.
template <typename Real>
void backward(const Tensor<Real>& loss);

namespace detail {

template <typename Real>
using BackwardFn = std::function<void(TensorImpl<Real>&)>;

/// Builds an op result, wiring the autograd record only when some parent
/// requires grad and recording is enabled.
template <typename Real>
Tensor<Real> make_result(Shape shape, std::vector<Real> data, const char* op,
                         std::vector<Tensor<Real>> parents, BackwardFn<Real> fn);

}  // namespace detail

template <typename Real, typename To>
Tensor<To> cast(const Tensor<Real>& t) {
  std::vector<To> values(t.data().begin(), t.data().end());
  return Tensor<To>::from(t.shape(), std::move(values));
}

}  // namespace ds
