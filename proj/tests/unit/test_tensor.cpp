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

#include <cmath>
#include <numbers>

#include "core/error.hpp"
#include "core/gradcheck.hpp"
#include "core/ops.hpp"
#include "core/rng.hpp"
#include "doctest.h"

using namespace ds;

namespace {

TensorD random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return TensorD::from(shape, std::move(v));
}

}  // namespace

TEST_CASE("matmul identity and annihilator") {
  auto a = TensorD::from({2, 2}, {1, 2, 3, 4});
  auto eye = TensorD::from({2, 2}, {1, 0, 0, 1});
  auto c = matmul(a, eye);
  CHECK(std::vector<double>(c.data().begin(), c.data().end()) == std::vector<double>{1, 2, 3, 4});
  auto z = matmul(a, TensorD::zeros({2, 3}));
  for (auto v : z.data()) CHECK(v == 0.0);
  CHECK_THROWS_AS(matmul(a, TensorD::zeros({3, 2})), ShapeError);
}

TEST_CASE("matmul gradients match finite differences") {
  Rng rng(11);
  auto res = gradcheck([](const std::vector<TensorD>& in) { return random_projection_loss(matmul(in[0], in[1]), 3); },
                       {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)});
  CHECK(res.checked == 20);
  CHECK(res.max_rel_error <= 1e-6);
}

TEST_CASE("matmul shape error names both shapes") {
  try {
    matmul(TensorD::zeros({2, 3}), TensorD::zeros({2, 3}));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
  }
}

TEST_CASE("softmax analytic cases") {
  auto u = softmax(TensorD::from({3}, {2.5, 2.5, 2.5}), 0);
  for (auto v : u.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  auto p = softmax(TensorD::from({2}, {0.0, std::log(3.0)}), 0);
  CHECK(p.at(0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(p.at(1) == doctest::Approx(0.75).epsilon(1e-12));

  Rng rng(5);
  auto x = random_tensor({4, 6}, rng, -5, 5);
  auto s1 = softmax(x, 1);
  auto s2 = softmax(add_scalar(x, 17.0), 1);
  for (std::size_t i = 0; i < s1.numel(); ++i) CHECK(std::abs(s1.at(i) - s2.at(i)) <= 1e-7);
}

TEST_CASE("softmax rows are probability vectors on either axis") {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = random_tensor({5, 7}, rng, -8, 8);
    for (int axis : {0, 1}) {
      auto s = softmax(x, axis);
      auto totals = sum(s, axis);
      for (auto t : totals.data()) CHECK(std::abs(t - 1.0) <= 1e-6);
      for (auto v : s.data()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
      }
    }
  }
  // float path overflows without max subtraction
  auto big = softmax(TensorF::from({2}, {1000.f, 1000.f}), 0);
  CHECK(big.at(0) == doctest::Approx(0.5f));
}

TEST_CASE("backward on simple graphs") {
  auto x = TensorD::from({5}, {1, -2, 3, 4, 5});
  x.set_requires_grad(true);
  backward(sum(x));
  for (auto g : x.grad()) CHECK(g == 1.0);

  auto y = TensorD::scalar(3.0);
  y.set_requires_grad(true);
  backward(mul(y, y));
  CHECK(y.grad()[0] == 6.0);

  // repeated calls accumulate until zeroed
  backward(mul(y, y));
  CHECK(y.grad()[0] == 12.0);
  y.zero_grad();
  backward(mul(y, y));
  CHECK(y.grad()[0] == 6.0);

  CHECK_THROWS_AS(backward(x), ContractError);
}

TEST_CASE("fan-out sums both consumer contributions") {
  Rng rng(21);
  auto res = gradcheck(
      [](const std::vector<TensorD>& in) {
        auto h = gelu(in[0]);
        return sum(add(mul(h, h), sigmoid(h)));
      },
      {random_tensor({3, 3}, rng)});
  CHECK(res.max_rel_error <= 1e-6);

  auto x = TensorD::scalar(2.0);
  x.set_requires_grad(true);
  auto e = exp(x);
  backward(add(e, scale(e, 3.0)));
  CHECK(x.grad()[0] == doctest::Approx(4.0 * std::exp(2.0)));
}

TEST_CASE("two-layer GELU MLP gradients") {
  Rng rng(3);
  auto loss = [](const std::vector<TensorD>& p) {
    auto h = gelu(add(matmul(p[0], p[1]), p[2]));
    auto out = add(matmul(h, p[3]), p[4]);
    return mean(mul(out, out));
  };
  auto res = gradcheck(loss, {random_tensor({4, 3}, rng), random_tensor({3, 5}, rng), random_tensor({5}, rng),
                              random_tensor({5, 2}, rng), random_tensor({2}, rng)});
  CHECK(res.max_rel_error <= 1e-5);
}

TEST_CASE("elementwise suite values and domains") {
  CHECK(gelu(TensorD::scalar(0.0)).item() == 0.0);
  CHECK(sigmoid(TensorD::scalar(0.0)).item() == 0.5);
  CHECK(gelu(TensorD::scalar(1.0)).item() == doctest::Approx(0.8411919906));

  auto ln = layer_norm(TensorD::full({2, 6}, 3.25), TensorD::full({6}, 1.0), TensorD::zeros({6}));
  for (auto v : ln.data()) CHECK(v == 0.0);

  CHECK_THROWS_AS(log(TensorD::from({2}, {1.0, 0.0})), DomainError);
  CHECK_THROWS_AS(log(TensorD::from({1}, {-1.0})), DomainError);
  CHECK_THROWS_AS(div(TensorD::from({2}, {1.0, 2.0}), TensorD::from({2}, {1.0, 0.0})), DomainError);
  CHECK_THROWS_AS(add(TensorD::zeros({2, 3}), TensorD::zeros({2})), ShapeError);
}

TEST_CASE("every elementwise op passes the finite-difference oracle") {
  Rng rng(8);
  using Fn = std::function<TensorD(const std::vector<TensorD>&)>;
  struct Case {
    const char* name;
    Fn fn;
    std::vector<TensorD> inputs;
  };
  auto pos = [&](const Shape& s) { return random_tensor(s, rng, 0.5, 2.0); };
  auto any = [&](const Shape& s) { return random_tensor(s, rng); };
  auto proj = [](TensorD t) { return random_projection_loss(t, 99); };
  std::vector<Case> cases{
      {"add", [&](auto& in) { return proj(add(in[0], in[1])); }, {any({3, 4}), any({3, 4})}},
      {"add_row", [&](auto& in) { return proj(add(in[0], in[1])); }, {any({3, 4}), any({4})}},
      {"sub_scalar", [&](auto& in) { return proj(sub(in[0], in[1])); }, {any({3, 4}), any({1})}},
      {"mul", [&](auto& in) { return proj(mul(in[0], in[1])); }, {any({3, 4}), any({3, 4})}},
      {"mul_scalar", [&](auto& in) { return proj(mul(in[0], in[1])); }, {any({3, 4}), any({1})}},
      {"div", [&](auto& in) { return proj(div(in[0], in[1])); }, {any({3, 4}), pos({3, 4})}},
      {"scale", [&](auto& in) { return proj(scale(in[0], 2.5)); }, {any({5})}},
      {"gelu", [&](auto& in) { return proj(gelu(in[0])); }, {random_tensor({12}, rng, -3, 3)}},
      {"sigmoid", [&](auto& in) { return proj(sigmoid(in[0])); }, {random_tensor({12}, rng, -4, 4)}},
      {"exp", [&](auto& in) { return proj(exp(in[0])); }, {any({6})}},
      {"log", [&](auto& in) { return proj(log(in[0])); }, {pos({6})}},
      {"mean", [&](auto& in) { return mean(mul(in[0], in[0])); }, {any({3, 4})}},
      {"sum_axis0", [&](auto& in) { return proj(sum(in[0], 0)); }, {any({3, 4})}},
      {"mean_axis1", [&](auto& in) { return proj(mean(in[0], 1)); }, {any({3, 4, 2})}},
      {"concat0", [&](auto& in) { return proj(concat<double>({in[0], in[1]}, 0)); }, {any({2, 3}), any({4, 3})}},
      {"concat1", [&](auto& in) { return proj(concat<double>({in[0], in[1]}, 1)); }, {any({2, 3}), any({2, 1})}},
      {"slice", [&](auto& in) { return proj(slice(in[0], 1, 1, 3)); }, {any({3, 4})}},
      {"reshape", [&](auto& in) { return proj(reshape(in[0], {6, 2})); }, {any({3, 4})}},
      {"transpose", [&](auto& in) { return proj(transpose(in[0])); }, {any({3, 4})}},
      {"take",
       [&](auto& in) {
         auto idx = std::make_shared<const std::vector<std::int64_t>>(std::vector<std::int64_t>{3, 0, 3, 5, 1, 1});
         return proj(take(in[0], idx, {2, 3}));
       },
       {any({2, 3})}},
      {"layer_norm", [&](auto& in) { return proj(layer_norm(in[0], in[1], in[2])); }, {any({3, 5}), any({5}), any({5})}},
      {"softmax", [&](auto& in) { return proj(softmax(in[0], 1)); }, {any({3, 5})}},
      {"log_softmax", [&](auto& in) { return proj(log_softmax(in[0], 0)); }, {any({3, 5})}},
  };
  for (auto& c : cases) {
    CAPTURE(c.name);
    auto res = gradcheck(c.fn, c.inputs);
    CHECK(res.max_rel_error <= 1e-5);
  }
}

TEST_CASE("reshape transpose slice round trips are bit exact") {
  Rng rng(12);
  auto x = random_tensor({4, 6}, rng);
  auto back = transpose(transpose(x));
  auto re = reshape(reshape(x, {3, 8}), {4, 6});
  auto glued = concat<double>({slice(x, 0, 0, 1), slice(x, 0, 1, 4)}, 0);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    CHECK(back.at(i) == x.at(i));
    CHECK(re.at(i) == x.at(i));
    CHECK(glued.at(i) == x.at(i));
  }
}

TEST_CASE("attention gradients through biases and masks") {
  Rng rng(31);
  const int heads = 2;
  const std::int64_t t = 4, groups = 2, d = 6;
  auto mask = std::make_shared<std::vector<double>>(groups * t * t, 0.0);
  (*mask)[1] = -1e9;
  (*mask)[t * t + 6] = -1e9;
  auto loss = [&](const std::vector<TensorD>& in) {
    AttentionInputs<double> ai;
    ai.heads = heads;
    ai.group_size = t;
    ai.head_bias = in[3];
    ai.key_bias = in[4];
    ai.mask = mask;
    return random_projection_loss(attention(in[0], in[1], in[2], ai), 5);
  };
  auto res = gradcheck(loss, {random_tensor({groups * t, d}, rng), random_tensor({groups * t, d}, rng),
                              random_tensor({groups * t, d}, rng), random_tensor({heads, t, t}, rng),
                              random_tensor({groups * t}, rng)});
  CHECK(res.max_rel_error <= 1e-5);
}

TEST_CASE("rng streams are reproducible and distinct") {
  Rng a(42, 1), b(42, 1), c(42, 2);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs = differs || x != c.next_u64();
  }
  CHECK(differs);
  Rng r(1);
  double total = 0;
  for (int i = 0; i < 10000; ++i) {
    const double z = r.truncated_normal(0.02);
    CHECK(std::abs(z) <= 0.04);
    total += r.uniform();
  }
  CHECK(total / 10000 == doctest::Approx(0.5).epsilon(0.03));
}
