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
#include <numeric>

#include "core/error.hpp"
#include "core/gradcheck.hpp"
#include "core/log.hpp"
#include "doctest.h"
#include "train/trainer.hpp"

using namespace ds;

namespace {

TensorD random_tensor(const Shape& shape, Rng& rng, double std = 1.0) {
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = rng.normal() * std;
  return TensorD::from(shape, std::move(v));
}

double scalar_log_softmax(const std::vector<double>& z, std::size_t i) {
  double mx = z[0];
  for (auto v : z) mx = std::max(mx, v);
  double s = 0;
  for (auto v : z) s += std::exp(v - mx);
  return z[i] - mx - std::log(s);
}

TeacherConfig toy_teacher() {
  TeacherConfig c;
  c.image_size = 16;
  c.num_classes = 4;
  c.global_patch = 4;
  c.window = 2;
  c.stage_dims = {16, 32};
  c.stage_depths = {1, 1};
  c.stage_heads = {2, 2};
  c.local_patch = 8;
  c.local_dim = 16;
  c.local_depth = 1;
  c.local_heads = 2;
  c.fusion_dim = 16;
  return c;
}

StudentConfig toy_student() {
  StudentConfig c;
  c.image_size = 16;
  c.patch = 4;
  c.dim = 16;
  c.depth = 2;
  c.heads = 2;
  return c;
}

Dataset toy_data(int train_per_class, std::uint64_t seed = 5) {
  SyntheticSpec spec;
  spec.seed = seed;
  spec.side = 16;
  spec.train_per_class = train_per_class;
  spec.val_per_class = 2;
  spec.test_per_class = 2;
  return make_synthetic(spec);
}

TrainOptions quick_options() {
  TrainOptions o;
  o.max_epochs = 3;
  o.batch_size = 8;
  o.adamw.lr = 1e-3;
  o.seed = 17;
  return o;
}

bool same_history(const std::vector<EpochRecord>& a, const std::vector<EpochRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].train_loss != b[i].train_loss || a[i].val_loss != b[i].val_loss || a[i].train_acc != b[i].train_acc ||
        a[i].val_acc != b[i].val_acc || a[i].lr != b[i].lr)
      return false;
  return true;
}

}  // namespace

TEST_CASE("cross entropy") {
  CHECK(cross_entropy(TensorD::zeros({4}), 2).item() == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(std::abs(std::log(4.0) - 1.386294) < 1e-6);
  CHECK(cross_entropy(TensorD::from({3}, {60.0, 0.0, 0.0}), 0).item() < 1e-20);
  CHECK_THROWS_AS(cross_entropy(TensorD::zeros({3}), 3), IndexError);
  CHECK_THROWS_AS(cross_entropy(TensorD::zeros({3}), -1), IndexError);

  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto z = random_tensor({5}, rng, 3.0);
    const std::vector<double> zv(z.data().begin(), z.data().end());
    const int y = static_cast<int>(rng.uniform_int(5));
    CHECK(std::abs(cross_entropy(z, y).item() + scalar_log_softmax(zv, static_cast<std::size_t>(y))) <= 1e-9);
  }
}

TEST_CASE("distillation loss") {
  Rng rng(2);
  const DistillLossSpec spec;  // alpha 0.9, T 4

  SUBCASE("identical logits leave only the hard term") {
    const auto z = random_tensor({4}, rng);
    const auto l = kd_loss(z, z, 1, spec);
    CHECK(std::abs(l.kl.item()) <= 1e-12);
    CHECK(std::abs(l.total.item() - 0.1 * cross_entropy(z, 1).item()) <= 1e-12);
  }

  SUBCASE("alpha zero is plain cross entropy") {
    const auto zt = random_tensor({4}, rng), zs = random_tensor({4}, rng);
    CHECK(kd_loss(zt, zs, 3, DistillLossSpec{0.0, 4.0}).total.item() == cross_entropy(zs, 3).item());
  }

  SUBCASE("matches a direct scalar evaluation") {
    for (int trial = 0; trial < 20; ++trial) {
      const auto zt = random_tensor({4}, rng, 2.0), zs = random_tensor({4}, rng, 2.0);
      const int y = static_cast<int>(rng.uniform_int(4));
      std::vector<double> t(4), s(4), raw(zs.data().begin(), zs.data().end());
      for (std::size_t i = 0; i < 4; ++i) {
        t[i] = zt.at(i) / 4.0;
        s[i] = zs.at(i) / 4.0;
      }
      double kl = 0;
      for (std::size_t i = 0; i < 4; ++i) {
        const double lp = scalar_log_softmax(t, i);
        kl += std::exp(lp) * (lp - scalar_log_softmax(s, i));
      }
      const double want = 0.9 * 16.0 * kl + 0.1 * -scalar_log_softmax(raw, static_cast<std::size_t>(y));
      const auto got = kd_loss(zt, zs, y, spec);
      CHECK(std::abs(got.total.item() - want) <= 1e-9);
      CHECK(got.kl.item() >= 0.0);
      CHECK(got.total.item() >= 0.0);
    }
  }

  SUBCASE("gradients reach only the student") {
    auto zt = random_tensor({4}, rng);
    zt.set_requires_grad(true);
    auto zs = random_tensor({4}, rng);
    zs.set_requires_grad(true);
    backward(kd_loss(zt, zs, 0, spec).total);
    CHECK(!zt.has_grad());
    CHECK(zs.has_grad());

    const auto fixed = random_tensor({4}, rng);
    const auto res = gradcheck(
        [&](const std::vector<TensorD>& in) { return kd_loss(fixed, in[0], 2, DistillLossSpec{0.7, 3.0}).total; },
        {random_tensor({4}, rng)});
    CHECK(res.max_rel_error <= 1e-6);
  }

  SUBCASE("continuity in alpha") {
    const auto zt = random_tensor({4}, rng), zs = random_tensor({4}, rng);
    const auto base = kd_loss(zt, zs, 1, DistillLossSpec{0.5, 4.0});
    const double bound_scale = 16.0 * base.kl.item() + base.ce.item();
    for (double a : {0.0, 0.2, 0.49, 0.51, 0.9, 1.0}) {
      const double l = kd_loss(zt, zs, 1, DistillLossSpec{a, 4.0}).total.item();
      CHECK(std::abs(l - base.total.item()) <= std::abs(a - 0.5) * bound_scale + 1e-12);
    }
  }

  CHECK_THROWS_AS(kd_loss(TensorD::zeros({3}), TensorD::zeros({3}), 0, DistillLossSpec{1.5, 4.0}), ConfigError);
  CHECK_THROWS_AS(kd_loss(TensorD::zeros({3}), TensorD::zeros({3}), 0, DistillLossSpec{0.5, 0.0}), ConfigError);
}

namespace {

struct ScalarAdam {
  double w, m = 0, v = 0;
  int t = 0;
  void step(double g, double lr, double wd) {
    ++t;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
    w = w - lr * (mh / (std::sqrt(vh) + 1e-8) + wd * w);
  }
};

ParameterSet<double> scalar_param(double w) {
  ParameterSet<double> p;
  p.add("w", TensorD::from({1}, {w}));
  return p;
}

}  // namespace

TEST_CASE("AdamW") {
  SUBCASE("zero gradients only decay") {
    auto p = scalar_param(2.5);
    AdamW<double> opt({1e-2, 0.9, 0.999, 1e-8, 0.1});
    double expected = 2.5;
    for (int i = 0; i < 5; ++i) {
      p.get("w").mutable_grad()[0] = 0.0;
      opt.step(p);
      expected *= 1.0 - 1e-2 * 0.1;
      CHECK(p.get("w").at(0) == expected);
    }
  }

  SUBCASE("first step moves by the learning rate against the gradient sign") {
    for (double g : {3.0, -0.02}) {
      auto p = scalar_param(1.0);
      AdamW<double> opt({1e-3, 0.9, 0.999, 1e-8, 0.0});
      p.get("w").mutable_grad()[0] = g;
      opt.step(p);
      CHECK(p.get("w").at(0) - 1.0 == doctest::Approx(-1e-3 * (g > 0 ? 1 : -1)).epsilon(1e-5));
    }
  }

  SUBCASE("ten-step trajectory matches a scalar reference") {
    for (double wd : {0.0, 0.01}) {
      auto p = scalar_param(0.7);
      AdamW<double> opt({5e-2, 0.9, 0.999, 1e-8, wd});
      ScalarAdam ref{0.7};
      for (int i = 0; i < 10; ++i) {
        const double g = 2.0 * p.get("w").at(0) - 0.3 + 0.1 * i;  // gradient of a drifting quadratic
        p.get("w").mutable_grad()[0] = g;
        opt.step(p);
        ref.step(g, 5e-2, wd);
        CHECK(std::abs(p.get("w").at(0) - ref.w) <= 1e-12);
      }
      CHECK(opt.steps() == 10);
    }
  }

  SUBCASE("non-finite gradient aborts the step") {
    ParameterSet<double> p;
    p.add("good", TensorD::from({2}, {1.0, 2.0}));
    p.add("bad", TensorD::from({1}, {3.0}));
    p.get("good").mutable_grad()[0] = 1.0;
    p.get("bad").mutable_grad()[0] = std::nan("");
    AdamW<double> opt;
    try {
      opt.step(p);
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("'bad'") != std::string::npos);
    }
    CHECK(p.get("good").at(0) == 1.0);
    CHECK(opt.steps() == 0);
  }

  SUBCASE("frozen parameters do not move") {
    ParameterSet<double> p;
    p.add("a", TensorD::from({1}, {1.0}));
    p.set_trainable("a", false);
    AdamW<double> opt({0.1, 0.9, 0.999, 1e-8, 0.5});
    opt.step(p);
    CHECK(p.get("a").at(0) == 1.0);
  }
}

TEST_CASE("gradient clipping") {
  ParameterSet<double> p;
  p.add("a", TensorD::zeros({2}));
  p.add("b", TensorD::zeros({1}));
  auto set = [&](double x, double y, double z) {
    p.get("a").mutable_grad()[0] = x;
    p.get("a").mutable_grad()[1] = y;
    p.get("b").mutable_grad()[0] = z;
  };
  set(0.3, 0.4, 0.0);
  CHECK(clip_gradients(p, 1.0) == doctest::Approx(0.5));
  CHECK(p.get("a").grad()[0] == 0.3);
  CHECK(p.get("a").grad()[1] == 0.4);

  set(1.2, -1.6, 0.0);
  CHECK(clip_gradients(p, 1.0) == doctest::Approx(2.0));
  const double a0 = p.get("a").grad()[0], a1 = p.get("a").grad()[1];
  CHECK(std::abs(std::sqrt(a0 * a0 + a1 * a1) - 1.0) <= 1e-7);
  const double cosine = (a0 * 1.2 + a1 * -1.6) / 2.0;
  CHECK(std::abs(cosine - 1.0) <= 1e-7);
}

TEST_CASE("plateau scheduler and early stopping") {
  ParameterSet<float> p;
  p.add("w", TensorF::from({2}, {1.f, 2.f}));

  SUBCASE("improving losses") {
    TrainController c(1e-4);
    for (double l : {1.0, 0.9, 0.8}) {
      const auto d = c.step(l, p);
      CHECK(d.lr == 1e-4);
      CHECK(!d.stop);
      CHECK(d.improved);
    }
  }

  SUBCASE("three flat epochs cut the rate tenfold") {
    TrainController c(1e-4);
    c.step(1.0, p);
    c.step(1.0, p);
    c.step(1.0 + 1e-9, p);
    const auto d = c.step(1.2, p);
    CHECK(d.reduced);
    CHECK(d.lr == doctest::Approx(1e-5).epsilon(1e-12));
    CHECK(c.lr_counter() == 0);
  }

  SUBCASE("five flat epochs stop and restore the best weights") {
    TrainController c(1e-4);
    c.step(0.5, p);
    const auto best = p.clone();
    ControllerDecision d;
    for (int i = 0; i < 5; ++i) {
      p.get("w").mutable_data()[0] += 1.0f;
      d = c.step(0.7, p);
      if (i < 4) CHECK(!d.stop);
    }
    CHECK(d.stop);
    CHECK(d.restore);
    CHECK(c.snapshot()->same_values(best));
    CHECK(c.best_epoch() == 1);
  }

  SUBCASE("the rate never falls below the floor") {
    TrainController c(1e-6, ControllerOptions{0.1, 1, 1e-7, 100, 1e-8});
    c.step(1.0, p);
    for (int i = 0; i < 4; ++i) c.step(2.0, p);
    CHECK(c.lr() == 1e-7);
  }
}

TEST_CASE("training is reproducible and independent of the thread count") {
  const auto data = toy_data(4);
  const TeacherModel model{toy_teacher()};
  auto opts = quick_options();
  opts.threads = 1;
  const auto a = train_teacher(data, model, model.init(3), opts);
  const auto b = train_teacher(data, model, model.init(3), opts);
  opts.threads = 3;
  const auto c = train_teacher(data, model, model.init(3), opts);
  CHECK(same_history(a.history, b.history));
  CHECK(same_history(a.history, c.history));
  CHECK(a.params.same_values(b.params));
  CHECK(a.params.same_values(c.params));
  CHECK(a.step_losses == c.step_losses);
  CHECK(a.history.size() == 3);
  CHECK(a.steps == 6);  // 16 samples, batch 8
}

TEST_CASE("toy teacher overfits eight images") {
  auto data = toy_data(2, 8);
  data.val = data.train;
  const TeacherModel model{toy_teacher()};
  TrainOptions opts;
  opts.batch_size = 8;
  opts.max_epochs = 200;
  opts.max_steps = 200;
  opts.augment = false;
  opts.adamw.lr = 2e-3;
  opts.controller.lr_patience = 200;
  opts.controller.stop_patience = 200;
  opts.seed = 4;
  const auto result = train_teacher(data, model, model.init(8), opts);
  REQUIRE(!result.history.empty());
  const auto inputs = prepare_inputs(data.train, 16, data.norm);
  const auto logits = predict_logits(model, result.params, inputs);
  int correct = 0;
  for (std::size_t i = 0; i < logits.size(); ++i)
    correct += std::max_element(logits[i].begin(), logits[i].end()) - logits[i].begin() == data.train[i].label;
  CHECK(correct == 8);
  CHECK(result.steps <= 200);

  // means over consecutive 20-step windows never increase
  const auto& losses = result.step_losses;
  double previous = 1e300;
  for (std::size_t w = 0; w + 20 <= losses.size(); w += 20) {
    const double m = std::accumulate(losses.begin() + static_cast<std::ptrdiff_t>(w),
                                     losses.begin() + static_cast<std::ptrdiff_t>(w + 20), 0.0) /
                     20.0;
    CHECK(m <= previous);
    previous = m;
  }
}

TEST_CASE("freezing") {
  const auto data = toy_data(2);
  const StudentModel model{toy_student()};
  auto opts = quick_options();
  opts.max_epochs = 2;
  opts.augment = false;
  opts.controller.stop_patience = 100;

  SUBCASE("freeze nothing equals the baseline") {
    auto p = model.init(1);
    set_log_echo(false);
    freeze(p, {});
    set_log_echo(true);
    const auto a = train_teacher(data, model, model.init(1), opts);
    const auto b = train_teacher(data, model, p, opts);
    CHECK(same_history(a.history, b.history));
    CHECK(a.params.same_values(b.params));
  }

  SUBCASE("freeze everything keeps the loss constant") {
    auto p = model.init(1);
    freeze(p, {""});
    const auto r = train_teacher(data, model, p, opts);
    for (auto l : r.step_losses) CHECK(l == r.step_losses.front());
    CHECK(r.params.same_values(model.init(1)));
  }

  SUBCASE("frozen patch embedding stays put while blocks move") {
    auto p = model.init(1);
    freeze(p, {"embed."});
    opts.max_steps = 10;
    opts.max_epochs = 10;
    const auto before = p.clone();
    const auto r = train_teacher(data, model, p, opts);
    CHECK(r.steps == 10);  // 8 samples, batch 8
    for (const auto& e : r.params.entries()) {
      const auto& old = before.get(e.name);
      const bool same = std::equal(e.value.data().begin(), e.value.data().end(), old.data().begin());
      if (e.name.rfind("embed.", 0) == 0)
        CHECK(same);
      else if (e.name.find("weight") != std::string::npos && e.name.rfind("block", 0) == 0)
        CHECK(!same);
    }
  }
}

TEST_CASE("zero-initialized adapters start from the frozen-base loss") {
  const auto data = toy_data(2);
  auto lora_cfg = toy_student();
  lora_cfg.lora = LoraConfig{2, 1.0, {"q", "v"}};
  const StudentModel plain{toy_student()}, adapted{lora_cfg};
  const auto inputs = prepare_inputs(data.train, 16, data.norm);
  const auto a = predict_logits(plain, plain.init(7), inputs);
  const auto b = predict_logits(adapted, adapted.init(7), inputs);
  CHECK(a == b);
}

TEST_CASE("distillation loop runs with a frozen teacher") {
  const auto data = toy_data(2);
  const TeacherModel teacher{toy_teacher()};
  const StudentModel student{toy_student()};
  const auto tp = teacher.init(1);
  const auto before = tp.clone();
  auto opts = quick_options();
  opts.max_epochs = 2;
  const auto a = distill_student(data, teacher, tp, student, student.init(2), DistillLossSpec{}, opts);
  opts.threads = 2;
  const auto b = distill_student(data, teacher, tp, student, student.init(2), DistillLossSpec{}, opts);
  CHECK(a.history.size() == 2);
  CHECK(same_history(a.history, b.history));
  CHECK(tp.same_values(before));
  for (const auto& e : tp.entries()) CHECK(!e.value.has_grad());

  StudentConfig mismatched = toy_student();
  mismatched.num_classes = 3;
  CHECK_THROWS_AS(distill_student(data, teacher, tp, StudentModel{mismatched}, StudentModel{mismatched}.init(1),
                                  DistillLossSpec{}, opts),
                  ConfigError);
}
