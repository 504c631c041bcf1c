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

#include "core/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "core/error.hpp"

namespace ds {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

thread_local bool g_grad_enabled = true;

void check_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
  for (auto d : shape)
    if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename Real>
Tensor<Real> Tensor<Real>::zeros(const Shape& shape) {
  return full(shape, Real(0));
}

template <typename Real>
Tensor<Real> Tensor<Real>::full(const Shape& shape, Real value) {
  check_shape(shape);
  auto impl = std::make_shared<Impl>();
  impl->shape = shape;
  impl->data.assign(static_cast<std::size_t>(shape_numel(shape)), value);
  return Tensor(std::move(impl));
}

template <typename Real>
Tensor<Real> Tensor<Real>::from(const Shape& shape, std::vector<Real> values) {
  check_shape(shape);
  if (static_cast<std::int64_t>(values.size()) != shape_numel(shape))
    throw ShapeError("buffer of " + std::to_string(values.size()) + " values does not fit shape " + shape_str(shape));
  auto impl = std::make_shared<Impl>();
  impl->shape = shape;
  impl->data = std::move(values);
  return Tensor(std::move(impl));
}

template <typename Real>
Tensor<Real> Tensor<Real>::scalar(Real value) {
  return full({1}, value);
}

template <typename Real>
std::int64_t Tensor<Real>::dim(int axis) const {
  const int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError("axis out of range for shape " + shape_str(shape()));
  return impl_->shape[static_cast<std::size_t>(axis)];
}

template <typename Real>
Real Tensor<Real>::item() const {
  if (numel() != 1) throw ContractError("item() needs a single-element tensor, got " + shape_str(shape()));
  return impl_->data[0];
}

template <typename Real>
Tensor<Real>& Tensor<Real>::set_requires_grad(bool flag) {
  impl_->requires_grad = flag;
  return *this;
}

template <typename Real>
std::span<const Real> Tensor<Real>::grad() const {
  return impl_->grad_buffer();
}

template <typename Real>
Tensor<Real> Tensor<Real>::detach() const {
  return from(shape(), impl_->data);
}

template <typename Real>
Tensor<Real> Tensor<Real>::clone() const {
  auto copy = from(shape(), impl_->data);
  copy.set_requires_grad(requires_grad());
  return copy;
}

template <typename Real>
void backward(const Tensor<Real>& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw ContractError("backward() needs a scalar loss, got " + (loss.defined() ? shape_str(loss.shape()) : "undefined"));
  using Impl = TensorImpl<Real>;

  // Iterative post-order DFS; reversed it is a topological order from the loss.
  std::vector<Impl*> order;
  std::unordered_set<Impl*> visited;
  std::vector<std::pair<Impl*, std::size_t>> stack{{loss.impl(), 0}};
  visited.insert(loss.impl());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Impl* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.impl()->grad_buffer()[0] += Real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Impl* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
}

namespace detail {

template <typename Real>
Tensor<Real> make_result(Shape shape, std::vector<Real> data, const char* op, std::vector<Tensor<Real>> parents,
                         BackwardFn<Real> fn) {
  auto result = Tensor<Real>::from(shape, std::move(data));
  if (!g_grad_enabled) return result;
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (!any) return result;
  auto* impl = result.impl();
  impl->requires_grad = true;
  impl->op = op;
  impl->parents.reserve(parents.size());
  for (auto& p : parents) impl->parents.push_back(p.impl_ptr());
  impl->backward_fn = std::move(fn);
  return result;
}

template Tensor<float> make_result(Shape, std::vector<float>, const char*, std::vector<Tensor<float>>,
                                   BackwardFn<float>);
template Tensor<double> make_result(Shape, std::vector<double>, const char*, std::vector<Tensor<double>>,
                                    BackwardFn<double>);

}  // namespace detail

template class Tensor<float>;
template class Tensor<double>;
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);

}  // namespace ds
