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

#include "core/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "core/error.hpp"

namespace ds {
namespace {

template <typename Real>
using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using ConstMap = Eigen::Map<const RowMat<Real>>;
template <typename Real>
using MutMap = Eigen::Map<RowMat<Real>>;
template <typename Real>
using ConstStrided = Eigen::Map<const RowMat<Real>, 0, Eigen::OuterStride<>>;
template <typename Real>
using MutStrided = Eigen::Map<RowMat<Real>, 0, Eigen::OuterStride<>>;

template <typename Real>
using Impl = TensorImpl<Real>;

template <typename Real>
bool wants_grad(const std::shared_ptr<Impl<Real>>& p) {
  return p->requires_grad;
}

enum class Broadcast { kSame, kScalar, kRow };

Broadcast broadcast_kind(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return Broadcast::kSame;
  if (shape_numel(b) == 1) return Broadcast::kScalar;
  if (shape_numel(b) == a.back() && b.back() == a.back()) return Broadcast::kRow;
  throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(b) + " onto " + shape_str(a));
}

inline std::size_t bidx(Broadcast kind, std::size_t i, std::size_t last) {
  switch (kind) {
    case Broadcast::kSame:
      return i;
    case Broadcast::kScalar:
      return 0;
    case Broadcast::kRow:
      return i % last;
  }
  return i;
}

struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, int& axis) {
  const int r = static_cast<int>(shape.size());
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError("axis out of range for shape " + shape_str(shape));
  AxisSplit s;
  for (int i = 0; i < axis; ++i) s.outer *= static_cast<std::size_t>(shape[i]);
  s.n = static_cast<std::size_t>(shape[axis]);
  for (int i = axis + 1; i < r; ++i) s.inner *= static_cast<std::size_t>(shape[i]);
  return s;
}

template <typename Real, typename Fwd, typename Bwd>
Tensor<Real> unary(const Tensor<Real>& a, const char* op, Fwd fwd, Bwd dfdx) {
  std::vector<Real> out(a.numel());
  const auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(x[i]);
  return detail::make_result<Real>(a.shape(), std::move(out), op, {a}, [dfdx](Impl<Real>& self) {
    auto& p = self.parents[0];
    auto gx = p->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * dfdx(p->data[i], self.data[i]);
  });
}

}  // namespace

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  const auto kind = broadcast_kind(a.shape(), b.shape(), "add");
  const std::size_t last = static_cast<std::size_t>(a.shape().back());
  std::vector<Real> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(bidx(kind, i, last));
  return detail::make_result<Real>(a.shape(), std::move(out), "add", {a, b}, [kind, last](Impl<Real>& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (wants_grad(pa)) {
      auto g = pa->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants_grad(pb)) {
      auto g = pb->grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[bidx(kind, i, last)] += self.grad[i];
    }
  });
}

template <typename Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
  const auto kind = broadcast_kind(a.shape(), b.shape(), "sub");
  const std::size_t last = static_cast<std::size_t>(a.shape().back());
  std::vector<Real> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(bidx(kind, i, last));
  return detail::make_result<Real>(a.shape(), std::move(out), "sub", {a, b}, [kind, last](Impl<Real>& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (wants_grad(pa)) {
      auto g = pa->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants_grad(pb)) {
      auto g = pb->grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[bidx(kind, i, last)] -= self.grad[i];
    }
  });
}

template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  const auto kind = broadcast_kind(a.shape(), b.shape(), "mul");
  const std::size_t last = static_cast<std::size_t>(a.shape().back());
  std::vector<Real> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(bidx(kind, i, last));
  return detail::make_result<Real>(a.shape(), std::move(out), "mul", {a, b}, [kind, last](Impl<Real>& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (wants_grad(pa)) {
      auto g = pa->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb->data[bidx(kind, i, last)];
    }
    if (wants_grad(pb)) {
      auto g = pb->grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[bidx(kind, i, last)] += self.grad[i] * pa->data[i];
    }
  });
}

template <typename Real>
Tensor<Real> div(const Tensor<Real>& a, const Tensor<Real>& b) {
  const auto kind = broadcast_kind(a.shape(), b.shape(), "div");
  for (auto v : b.data())
    if (v == Real(0)) throw DomainError("div: zero divisor");
  const std::size_t last = static_cast<std::size_t>(a.shape().back());
  std::vector<Real> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) / b.at(bidx(kind, i, last));
  return detail::make_result<Real>(a.shape(), std::move(out), "div", {a, b}, [kind, last](Impl<Real>& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (wants_grad(pa)) {
      auto g = pa->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / pb->data[bidx(kind, i, last)];
    }
    if (wants_grad(pb)) {
      auto g = pb->grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const Real y = pb->data[bidx(kind, i, last)];
        g[bidx(kind, i, last)] -= self.grad[i] * pa->data[i] / (y * y);
      }
    }
  });
}

template <typename Real>
Tensor<Real> scale(const Tensor<Real>& a, Real factor) {
  return unary<Real>(
      a, "scale", [factor](Real x) { return x * factor; }, [factor](Real, Real) { return factor; });
}

template <typename Real>
Tensor<Real> add_scalar(const Tensor<Real>& a, Real offset) {
  return unary<Real>(
      a, "add_scalar", [offset](Real x) { return x + offset; }, [](Real, Real) { return Real(1); });
}

template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<Real> out(static_cast<std::size_t>(m * n));
  MutMap<Real>(out.data(), m, n).noalias() = ConstMap<Real>(a.data().data(), m, k) * ConstMap<Real>(b.data().data(), k, n);
  return detail::make_result<Real>({m, n}, std::move(out), "matmul", {a, b}, [m, k, n](Impl<Real>& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    ConstMap<Real> dc(self.grad.data(), m, n);
    if (wants_grad(pa)) {
      MutMap<Real>(pa->grad_buffer().data(), m, k).noalias() += dc * ConstMap<Real>(pb->data.data(), k, n).transpose();
    }
    if (wants_grad(pb)) {
      MutMap<Real>(pb->grad_buffer().data(), k, n).noalias() += ConstMap<Real>(pa->data.data(), m, k).transpose() * dc;
    }
  });
}

template <typename Real>
Tensor<Real> transpose(const Tensor<Real>& a) {
  if (a.rank() != 2) throw ShapeError("transpose: expected rank 2, got " + shape_str(a.shape()));
  const auto r = a.dim(0), c = a.dim(1);
  std::vector<Real> out(a.numel());
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < c; ++j) out[j * r + i] = a.at(i * c + j);
  return detail::make_result<Real>({c, r}, std::move(out), "transpose", {a}, [r, c](Impl<Real>& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::int64_t i = 0; i < r; ++i)
      for (std::int64_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
  });
}

template <typename Real>
Tensor<Real> gelu(const Tensor<Real>& a) {
  constexpr Real kC = Real(0.7978845608028654);  // sqrt(2/pi)
  constexpr Real kA = Real(0.044715);
  return unary<Real>(
      a, "gelu",
      [](Real x) { return Real(0.5) * x * (Real(1) + std::tanh(kC * (x + kA * x * x * x))); },
      [](Real x, Real) {
        const Real t = std::tanh(kC * (x + kA * x * x * x));
        return Real(0.5) * (Real(1) + t) + Real(0.5) * x * (Real(1) - t * t) * kC * (Real(1) + Real(3) * kA * x * x);
      });
}

template <typename Real>
Tensor<Real> sigmoid(const Tensor<Real>& a) {
  return unary<Real>(
      a, "sigmoid",
      [](Real x) {
        if (x >= 0) return Real(1) / (Real(1) + std::exp(-x));
        const Real e = std::exp(x);
        return e / (Real(1) + e);
      },
      [](Real, Real y) { return y * (Real(1) - y); });
}

template <typename Real>
Tensor<Real> exp(const Tensor<Real>& a) {
  return unary<Real>(
      a, "exp", [](Real x) { return std::exp(x); }, [](Real, Real y) { return y; });
}

template <typename Real>
Tensor<Real> log(const Tensor<Real>& a) {
  for (auto v : a.data())
    if (!(v > Real(0))) throw DomainError("log: non-positive input " + std::to_string(v));
  return unary<Real>(
      a, "log", [](Real x) { return std::log(x); }, [](Real x, Real) { return Real(1) / x; });
}

template <typename Real>
Tensor<Real> sum(const Tensor<Real>& a) {
  Real total = 0;
  for (auto v : a.data()) total += v;
  return detail::make_result<Real>({1}, {total}, "sum", {a}, [](Impl<Real>& self) {
    auto g = self.parents[0]->grad_buffer();
    for (auto& gi : g) gi += self.grad[0];
  });
}

template <typename Real>
Tensor<Real> mean(const Tensor<Real>& a) {
  return scale(sum(a), Real(1) / static_cast<Real>(a.numel()));
}

template <typename Real>
Tensor<Real> sum(const Tensor<Real>& a, int axis) {
  const auto s = split_axis(a.shape(), axis);
  Shape shape = a.shape();
  shape.erase(shape.begin() + axis);
  if (shape.empty()) shape = {1};
  std::vector<Real> out(s.outer * s.inner, Real(0));
  const auto x = a.data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t j = 0; j < s.n; ++j)
      for (std::size_t i = 0; i < s.inner; ++i) out[o * s.inner + i] += x[(o * s.n + j) * s.inner + i];
  return detail::make_result<Real>(shape, std::move(out), "sum_axis", {a}, [s](Impl<Real>& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t j = 0; j < s.n; ++j)
        for (std::size_t i = 0; i < s.inner; ++i) g[(o * s.n + j) * s.inner + i] += self.grad[o * s.inner + i];
  });
}

template <typename Real>
Tensor<Real> mean(const Tensor<Real>& a, int axis) {
  const auto n = a.dim(axis);
  return scale(sum(a, axis), Real(1) / static_cast<Real>(n));
}

template <typename Real>
Tensor<Real> concat(const std::vector<Tensor<Real>>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Shape shape = parts[0].shape();
  auto base = split_axis(shape, axis);
  std::vector<std::size_t> widths;
  std::int64_t total = 0;
  for (const auto& p : parts) {
    Shape probe = p.shape();
    if (probe.size() != shape.size()) throw ShapeError("concat: rank mismatch " + shape_str(probe));
    for (std::size_t d = 0; d < shape.size(); ++d)
      if (static_cast<int>(d) != axis && probe[d] != shape[d])
        throw ShapeError("concat: shapes " + shape_str(shape) + " and " + shape_str(probe) + " disagree off-axis");
    widths.push_back(static_cast<std::size_t>(probe[axis]) * base.inner);
    total += probe[axis];
  }
  shape[axis] = total;
  const std::size_t row = static_cast<std::size_t>(total) * base.inner;
  std::vector<Real> out(base.outer * row);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto src = parts[p].data();
    for (std::size_t o = 0; o < base.outer; ++o)
      std::copy_n(src.begin() + o * widths[p], widths[p], out.begin() + o * row + offset);
    offset += widths[p];
  }
  const std::size_t outer = base.outer;
  return detail::make_result<Real>(shape, std::move(out), "concat", parts, [widths, outer, row](Impl<Real>& self) {
    std::size_t off = 0;
    for (std::size_t p = 0; p < widths.size(); ++p) {
      auto& parent = self.parents[p];
      if (wants_grad(parent)) {
        auto g = parent->grad_buffer();
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < widths[p]; ++i) g[o * widths[p] + i] += self.grad[o * row + off + i];
      }
      off += widths[p];
    }
  });
}

template <typename Real>
Tensor<Real> slice(const Tensor<Real>& a, int axis, std::int64_t begin, std::int64_t end) {
  const auto s = split_axis(a.shape(), axis);
  if (begin < 0 || end > static_cast<std::int64_t>(s.n) || begin >= end)
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for shape " +
                     shape_str(a.shape()));
  Shape shape = a.shape();
  shape[axis] = end - begin;
  const std::size_t width = static_cast<std::size_t>(end - begin) * s.inner;
  const std::size_t start = static_cast<std::size_t>(begin) * s.inner;
  const std::size_t row = s.n * s.inner;
  std::vector<Real> out(s.outer * width);
  const auto x = a.data();
  for (std::size_t o = 0; o < s.outer; ++o) std::copy_n(x.begin() + o * row + start, width, out.begin() + o * width);
  const std::size_t outer = s.outer;
  return detail::make_result<Real>(shape, std::move(out), "slice", {a}, [outer, width, start, row](Impl<Real>& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < width; ++i) g[o * row + start + i] += self.grad[o * width + i];
  });
}

template <typename Real>
Tensor<Real> reshape(const Tensor<Real>& a, const Shape& shape) {
  if (shape_numel(shape) != static_cast<std::int64_t>(a.numel()))
    throw ShapeError("reshape: " + shape_str(a.shape()) + " cannot become " + shape_str(shape));
  std::vector<Real> out(a.data().begin(), a.data().end());
  return detail::make_result<Real>(shape, std::move(out), "reshape", {a}, [](Impl<Real>& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename Real>
Tensor<Real> take(const Tensor<Real>& a, std::shared_ptr<const std::vector<std::int64_t>> indices, const Shape& shape) {
  if (shape_numel(shape) != static_cast<std::int64_t>(indices->size()))
    throw ShapeError("take: " + std::to_string(indices->size()) + " indices do not fill " + shape_str(shape));
  const auto n = static_cast<std::int64_t>(a.numel());
  std::vector<Real> out(indices->size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto idx = (*indices)[i];
    if (idx < 0 || idx >= n) throw ShapeError("take: index " + std::to_string(idx) + " out of range");
    out[i] = a.at(static_cast<std::size_t>(idx));
  }
  return detail::make_result<Real>(shape, std::move(out), "take", {a}, [indices](Impl<Real>& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < indices->size(); ++i) g[static_cast<std::size_t>((*indices)[i])] += self.grad[i];
  });
}

template <typename Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, const Tensor<Real>& gamma, const Tensor<Real>& beta, Real eps) {
  const auto d = static_cast<std::size_t>(x.shape().back());
  if (gamma.numel() != d || beta.numel() != d)
    throw ShapeError("layer_norm: scale/shift " + shape_str(gamma.shape()) + " do not match " + shape_str(x.shape()));
  const std::size_t rows = x.numel() / d;
  auto xhat = std::make_shared<std::vector<Real>>(x.numel());
  auto inv_std = std::make_shared<std::vector<Real>>(rows);
  std::vector<Real> out(x.numel());
  const auto in = x.data();
  const auto gm = gamma.data();
  const auto bt = beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* row = in.data() + r * d;
    Real mu = 0;
    for (std::size_t i = 0; i < d; ++i) mu += row[i];
    mu /= static_cast<Real>(d);
    Real var = 0;
    for (std::size_t i = 0; i < d; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= static_cast<Real>(d);
    const Real is = Real(1) / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t i = 0; i < d; ++i) {
      const Real h = (row[i] - mu) * is;
      (*xhat)[r * d + i] = h;
      out[r * d + i] = h * gm[i] + bt[i];
    }
  }
  return detail::make_result<Real>(
      x.shape(), std::move(out), "layer_norm", {x, gamma, beta}, [xhat, inv_std, d, rows](Impl<Real>& self) {
        auto& px = self.parents[0];
        auto& pg = self.parents[1];
        auto& pb = self.parents[2];
        const auto& dy = self.grad;
        if (wants_grad(pg)) {
          auto g = pg->grad_buffer();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t i = 0; i < d; ++i) g[i] += dy[r * d + i] * (*xhat)[r * d + i];
        }
        if (wants_grad(pb)) {
          auto g = pb->grad_buffer();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t i = 0; i < d; ++i) g[i] += dy[r * d + i];
        }
        if (wants_grad(px)) {
          auto g = px->grad_buffer();
          for (std::size_t r = 0; r < rows; ++r) {
            Real mean_g = 0, mean_gx = 0;
            for (std::size_t i = 0; i < d; ++i) {
              const Real gi = dy[r * d + i] * pg->data[i];
              mean_g += gi;
              mean_gx += gi * (*xhat)[r * d + i];
            }
            mean_g /= static_cast<Real>(d);
            mean_gx /= static_cast<Real>(d);
            for (std::size_t i = 0; i < d; ++i) {
              const Real gi = dy[r * d + i] * pg->data[i];
              g[r * d + i] += (*inv_std)[r] * (gi - mean_g - (*xhat)[r * d + i] * mean_gx);
            }
          }
        }
      });
}

template <typename Real>
Tensor<Real> softmax(const Tensor<Real>& a, int axis) {
  const auto s = split_axis(a.shape(), axis);
  std::vector<Real> out(a.numel());
  const auto x = a.data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.n * s.inner + i;
      Real mx = x[base];
      for (std::size_t j = 1; j < s.n; ++j) mx = std::max(mx, x[base + j * s.inner]);
      Real z = 0;
      for (std::size_t j = 0; j < s.n; ++j) z += (out[base + j * s.inner] = std::exp(x[base + j * s.inner] - mx));
      for (std::size_t j = 0; j < s.n; ++j) out[base + j * s.inner] /= z;
    }
  return detail::make_result<Real>(a.shape(), std::move(out), "softmax", {a}, [s](Impl<Real>& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = o * s.n * s.inner + i;
        Real dot = 0;
        for (std::size_t j = 0; j < s.n; ++j) dot += self.grad[base + j * s.inner] * self.data[base + j * s.inner];
        for (std::size_t j = 0; j < s.n; ++j) {
          const std::size_t k = base + j * s.inner;
          g[k] += self.data[k] * (self.grad[k] - dot);
        }
      }
  });
}

template <typename Real>
Tensor<Real> log_softmax(const Tensor<Real>& a, int axis) {
  const auto s = split_axis(a.shape(), axis);
  std::vector<Real> out(a.numel());
  const auto x = a.data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.n * s.inner + i;
      Real mx = x[base];
      for (std::size_t j = 1; j < s.n; ++j) mx = std::max(mx, x[base + j * s.inner]);
      Real z = 0;
      for (std::size_t j = 0; j < s.n; ++j) z += std::exp(x[base + j * s.inner] - mx);
      const Real lse = mx + std::log(z);
      for (std::size_t j = 0; j < s.n; ++j) out[base + j * s.inner] = x[base + j * s.inner] - lse;
    }
  return detail::make_result<Real>(a.shape(), std::move(out), "log_softmax", {a}, [s](Impl<Real>& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = o * s.n * s.inner + i;
        Real total = 0;
        for (std::size_t j = 0; j < s.n; ++j) total += self.grad[base + j * s.inner];
        for (std::size_t j = 0; j < s.n; ++j) {
          const std::size_t k = base + j * s.inner;
          g[k] += self.grad[k] - std::exp(self.data[k]) * total;
        }
      }
  });
}

namespace {

struct AttentionDims {
  std::int64_t n, d, t, groups, dk;
  int heads;
};

template <typename Real>
AttentionDims check_attention(const Tensor<Real>& q, const Tensor<Real>& k, const AttentionInputs<Real>& in) {
  if (q.rank() != 2 || q.shape() != k.shape())
    throw ShapeError("attention: query/key shapes " + shape_str(q.shape()) + " and " + shape_str(k.shape()) + " differ");
  AttentionDims dims{};
  dims.n = q.dim(0);
  dims.d = q.dim(1);
  dims.heads = in.heads;
  dims.t = in.group_size > 0 ? in.group_size : dims.n;
  if (in.heads <= 0 || dims.d % in.heads != 0)
    throw ShapeError("attention: width " + std::to_string(dims.d) + " not divisible by " + std::to_string(in.heads) +
                     " heads");
  if (dims.n % dims.t != 0)
    throw ShapeError("attention: " + std::to_string(dims.n) + " tokens do not split into groups of " +
                     std::to_string(dims.t));
  dims.groups = dims.n / dims.t;
  dims.dk = dims.d / in.heads;
  if (in.head_bias.defined() && in.head_bias.shape() != Shape{in.heads, dims.t, dims.t})
    throw ShapeError("attention: head bias " + shape_str(in.head_bias.shape()) + " expected " +
                     shape_str({in.heads, dims.t, dims.t}));
  if (in.key_bias.defined() && static_cast<std::int64_t>(in.key_bias.numel()) != dims.n)
    throw ShapeError("attention: key bias " + shape_str(in.key_bias.shape()) + " expected " + std::to_string(dims.n) +
                     " entries");
  if (in.mask && static_cast<std::int64_t>(in.mask->size()) != dims.groups * dims.t * dims.t)
    throw ShapeError("attention: mask size " + std::to_string(in.mask->size()) + " does not match groups");
  return dims;
}

// Fills probabilities for one (group, head) block.
template <typename Real>
void attention_probs(const AttentionDims& dm, const Real* q, const Real* k, const Real* head_bias, const Real* key_bias,
                     const Real* mask, std::int64_t g, int h, Real* probs) {
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(dm.dk));
  const std::int64_t off = g * dm.t * dm.d + h * dm.dk;
  ConstStrided<Real> qm(q + off, dm.t, dm.dk, Eigen::OuterStride<>(dm.d));
  ConstStrided<Real> km(k + off, dm.t, dm.dk, Eigen::OuterStride<>(dm.d));
  MutMap<Real> s(probs, dm.t, dm.t);
  s.noalias() = (qm * km.transpose()) * scale;
  for (std::int64_t i = 0; i < dm.t; ++i) {
    Real* row = probs + i * dm.t;
    for (std::int64_t j = 0; j < dm.t; ++j) {
      if (head_bias) row[j] += head_bias[(h * dm.t + i) * dm.t + j];
      if (key_bias) row[j] += key_bias[g * dm.t + j];
      if (mask) row[j] += mask[(g * dm.t + i) * dm.t + j];
    }
    Real mx = row[0];
    for (std::int64_t j = 1; j < dm.t; ++j) mx = std::max(mx, row[j]);
    Real z = 0;
    for (std::int64_t j = 0; j < dm.t; ++j) z += (row[j] = std::exp(row[j] - mx));
    for (std::int64_t j = 0; j < dm.t; ++j) row[j] /= z;
  }
}

}  // namespace

template <typename Real>
std::vector<Real> attention_weights(const Tensor<Real>& q, const Tensor<Real>& k, const AttentionInputs<Real>& in) {
  const auto dm = check_attention(q, k, in);
  std::vector<Real> probs(static_cast<std::size_t>(dm.groups * dm.heads * dm.t * dm.t));
  for (std::int64_t g = 0; g < dm.groups; ++g)
    for (int h = 0; h < dm.heads; ++h)
      attention_probs(dm, q.data().data(), k.data().data(), in.head_bias.defined() ? in.head_bias.data().data() : nullptr,
                      in.key_bias.defined() ? in.key_bias.data().data() : nullptr, in.mask ? in.mask->data() : nullptr, g,
                      h, probs.data() + (g * dm.heads + h) * dm.t * dm.t);
  return probs;
}

template <typename Real>
Tensor<Real> attention(const Tensor<Real>& q, const Tensor<Real>& k, const Tensor<Real>& v,
                       const AttentionInputs<Real>& in) {
  if (v.shape() != q.shape()) throw ShapeError("attention: value shape " + shape_str(v.shape()) + " differs from query");
  const auto dm = check_attention(q, k, in);
  auto probs = std::make_shared<std::vector<Real>>(attention_weights(q, k, in));
  std::vector<Real> out(q.numel());
  for (std::int64_t g = 0; g < dm.groups; ++g)
    for (int h = 0; h < dm.heads; ++h) {
      const std::int64_t off = g * dm.t * dm.d + h * dm.dk;
      ConstMap<Real> p(probs->data() + (g * dm.heads + h) * dm.t * dm.t, dm.t, dm.t);
      MutStrided<Real>(out.data() + off, dm.t, dm.dk, Eigen::OuterStride<>(dm.d)).noalias() =
          p * ConstStrided<Real>(v.data().data() + off, dm.t, dm.dk, Eigen::OuterStride<>(dm.d));
    }

  std::vector<Tensor<Real>> parents{q, k, v};
  const bool has_head_bias = in.head_bias.defined();
  const bool has_key_bias = in.key_bias.defined();
  if (has_head_bias) parents.push_back(in.head_bias);
  if (has_key_bias) parents.push_back(in.key_bias);

  return detail::make_result<Real>(
      q.shape(), std::move(out), "attention", parents, [dm, probs, has_head_bias, has_key_bias](Impl<Real>& self) {
        auto& pq = self.parents[0];
        auto& pk = self.parents[1];
        auto& pv = self.parents[2];
        Impl<Real>* phb = has_head_bias ? self.parents[3].get() : nullptr;
        Impl<Real>* pkb = has_key_bias ? self.parents[has_head_bias ? 4 : 3].get() : nullptr;
        const Real scale = Real(1) / std::sqrt(static_cast<Real>(dm.dk));
        RowMat<Real> dp(dm.t, dm.t);
        for (std::int64_t g = 0; g < dm.groups; ++g)
          for (int h = 0; h < dm.heads; ++h) {
            const std::int64_t off = g * dm.t * dm.d + h * dm.dk;
            const Eigen::OuterStride<> stride(dm.d);
            ConstMap<Real> p(probs->data() + (g * dm.heads + h) * dm.t * dm.t, dm.t, dm.t);
            ConstStrided<Real> dout(self.grad.data() + off, dm.t, dm.dk, stride);
            ConstStrided<Real> vm(pv->data.data() + off, dm.t, dm.dk, stride);
            if (pv->requires_grad)
              MutStrided<Real>(pv->grad_buffer().data() + off, dm.t, dm.dk, stride).noalias() += p.transpose() * dout;
            dp.noalias() = dout * vm.transpose();
            // dS = P * (dP - rowsum(dP * P))
            for (std::int64_t i = 0; i < dm.t; ++i) {
              Real dot = 0;
              for (std::int64_t j = 0; j < dm.t; ++j) dot += dp(i, j) * p(i, j);
              for (std::int64_t j = 0; j < dm.t; ++j) dp(i, j) = p(i, j) * (dp(i, j) - dot);
            }
            if (pq->requires_grad)
              MutStrided<Real>(pq->grad_buffer().data() + off, dm.t, dm.dk, stride).noalias() +=
                  (dp * ConstStrided<Real>(pk->data.data() + off, dm.t, dm.dk, stride)) * scale;
            if (pk->requires_grad)
              MutStrided<Real>(pk->grad_buffer().data() + off, dm.t, dm.dk, stride).noalias() +=
                  (dp.transpose() * ConstStrided<Real>(pq->data.data() + off, dm.t, dm.dk, stride)) * scale;
            if (phb && phb->requires_grad)
              MutMap<Real>(phb->grad_buffer().data() + h * dm.t * dm.t, dm.t, dm.t) += dp;
            if (pkb && pkb->requires_grad) {
              auto gk = pkb->grad_buffer();
              for (std::int64_t i = 0; i < dm.t; ++i)
                for (std::int64_t j = 0; j < dm.t; ++j) gk[g * dm.t + j] += dp(i, j);
            }
          }
      });
}

#define DS_INSTANTIATE_OPS(Real)                                                                                   \
  template Tensor<Real> add(const Tensor<Real>&, const Tensor<Real>&);                                             \
  template Tensor<Real> sub(const Tensor<Real>&, const Tensor<Real>&);                                             \
  template Tensor<Real> mul(const Tensor<Real>&, const Tensor<Real>&);                                             \
  template Tensor<Real> div(const Tensor<Real>&, const Tensor<Real>&);                                             \
  template Tensor<Real> scale(const Tensor<Real>&, Real);                                                          \
  template Tensor<Real> add_scalar(const Tensor<Real>&, Real);                                                     \
  template Tensor<Real> matmul(const Tensor<Real>&, const Tensor<Real>&);                                          \
  template Tensor<Real> transpose(const Tensor<Real>&);                                                            \
  template Tensor<Real> gelu(const Tensor<Real>&);                                                                 \
  template Tensor<Real> sigmoid(const Tensor<Real>&);                                                              \
  template Tensor<Real> exp(const Tensor<Real>&);                                                                  \
  template Tensor<Real> log(const Tensor<Real>&);                                                                  \
  template Tensor<Real> sum(const Tensor<Real>&);                                                                  \
  template Tensor<Real> mean(const Tensor<Real>&);                                                                 \
  template Tensor<Real> sum(const Tensor<Real>&, int);                                                             \
  template Tensor<Real> mean(const Tensor<Real>&, int);                                                            \
  template Tensor<Real> concat(const std::vector<Tensor<Real>>&, int);                                             \
  template Tensor<Real> slice(const Tensor<Real>&, int, std::int64_t, std::int64_t);                               \
  template Tensor<Real> reshape(const Tensor<Real>&, const Shape&);                                                \
  template Tensor<Real> take(const Tensor<Real>&, std::shared_ptr<const std::vector<std::int64_t>>, const Shape&); \
  template Tensor<Real> layer_norm(const Tensor<Real>&, const Tensor<Real>&, const Tensor<Real>&, Real);           \
  template Tensor<Real> softmax(const Tensor<Real>&, int);                                                         \
  template Tensor<Real> log_softmax(const Tensor<Real>&, int);                                                     \
  template Tensor<Real> attention(const Tensor<Real>&, const Tensor<Real>&, const Tensor<Real>&,                   \
                                  const AttentionInputs<Real>&);                                                   \
  template std::vector<Real> attention_weights(const Tensor<Real>&, const Tensor<Real>&, const AttentionInputs<Real>&);

DS_INSTANTIATE_OPS(float)
DS_INSTANTIATE_OPS(double)

}  // namespace ds
