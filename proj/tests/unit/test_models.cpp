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

#include "core/error.hpp"
#include "core/gradcheck.hpp"
#include "core/log.hpp"
#include "doctest.h"
#include "nn/models.hpp"

using namespace ds;

namespace {

TensorD random_tensor(const Shape& shape, Rng& rng, double std = 1.0) {
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = rng.normal() * std;
  return TensorD::from(shape, std::move(v));
}

TensorF random_image(int side, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(static_cast<std::size_t>(3 * side * side));
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return TensorF::from({3, side, side}, std::move(v));
}

TeacherConfig toy_teacher() {
  TeacherConfig c;
  c.image_size = 8;
  c.num_classes = 3;
  c.global_patch = 2;
  c.window = 2;
  c.stage_dims = {4, 8};
  c.stage_depths = {2, 1};
  c.stage_heads = {2, 2};
  c.local_patch = 4;
  c.local_dim = 4;
  c.local_depth = 1;
  c.local_heads = 2;
  c.fusion_dim = 4;
  return c;
}

StudentConfig toy_student() {
  StudentConfig c;
  c.image_size = 8;
  c.num_classes = 3;
  c.patch = 4;
  c.dim = 4;
  c.depth = 2;
  c.heads = 2;
  return c;
}

// Unit-scale weights: fan-in scaled matrices, layer-norm gains near one.
std::vector<TensorD> toy_values(const ParameterSet<double>& base, Rng& rng) {
  std::vector<TensorD> out;
  for (const auto& e : base.entries()) {
    const double std = e.value.rank() == 2 ? 1.0 / std::sqrt(static_cast<double>(e.value.dim(0))) : 0.5;
    auto t = random_tensor(e.value.shape(), rng, std);
    if (e.name.find("norm") != std::string::npos && e.name.ends_with(".weight"))
      for (auto& v : t.mutable_data()) v += 1.0;
    out.push_back(t);
  }
  return out;
}

template <typename M>
GradCheckResult model_gradcheck(const M& model, const ParameterSet<double>& base, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TensorD> inputs{random_tensor({3, model.image_size(), model.image_size()}, rng)};
  for (auto& v : toy_values(base, rng)) inputs.push_back(v);
  return gradcheck(
      [&](const std::vector<TensorD>& in) {
        const auto p = base.rebind(std::vector<TensorD>(in.begin() + 1, in.end()));
        return random_projection_loss(model.run(p, in[0], static_cast<ActivationRecord<double>*>(nullptr)), 5);
      },
      inputs);
}

// Worst relative error over entries whose gradient is at least 1e-3 of the
// largest one; smaller entries sit at the finite-difference noise floor.
double significant_error(const GradCheckResult& r) {
  double gmax = 0, worst = 0;
  for (const auto& e : r.entries) gmax = std::max(gmax, std::abs(e.analytic));
  for (const auto& e : r.entries)
    if (std::abs(e.analytic) >= 1e-3 * gmax) worst = std::max(worst, relative_error(e.analytic, e.numeric));
  return worst;
}

ParameterSet<float> zero_except_head_bias(ParameterSet<float> p, const std::vector<float>& bias) {
  for (auto& e : p.entries())
    for (auto& v : e.value.mutable_data()) v = 0.f;
  auto b = p.get("head.bias").mutable_data();
  std::copy(bias.begin(), bias.end(), b.begin());
  return p;
}

}  // namespace

TEST_CASE("desk configs build and validate") {
  TeacherModel teacher{TeacherConfig{}};
  StudentModel student{StudentConfig{}};
  const auto tp = teacher.init(1);
  const auto sp = student.init(1);
  CHECK(teacher.forward(tp, random_image(32, 1)).shape() == Shape{4});
  CHECK(student.forward(sp, random_image(32, 1)).shape() == Shape{4});
  CHECK_THROWS_AS(teacher.forward(tp, random_image(16, 1)), ShapeError);
  CHECK_THROWS_AS(student.forward(sp, random_image(16, 1)), ShapeError);

  TeacherConfig bad;
  bad.stage_heads = {3, 4};
  CHECK_THROWS_AS(TeacherModel{bad}, ConfigError);
  StudentConfig odd;
  odd.patch = 5;
  CHECK_THROWS_AS(StudentModel{odd}, ConfigError);
  CHECK_NOTHROW(TeacherConfig::full_scale().validate());
  CHECK_NOTHROW(StudentConfig::full_scale().validate());
}

TEST_CASE("student parameter count matches the closed form") {
  const StudentConfig desk;
  const auto params = StudentModel(desk).init(3);
  CHECK(static_cast<std::int64_t>(params.element_count()) == student_parameter_count(desk));
  CHECK(student_parameter_count(desk) == 206916);
  const auto full = StudentConfig::full_scale();
  ParameterSet<float> fp;
  Rng rng(1);
  StudentModel(full).init_into(fp, rng);
  CHECK(static_cast<std::int64_t>(fp.element_count()) == student_parameter_count(full));
  CHECK(student_parameter_count(full) > 5'000'000);
  CHECK(student_parameter_count(full) < 6'000'000);
}

TEST_CASE("zero weights leave only the head bias") {
  const std::vector<float> bias{0.5f, -1.25f, 3.0f, 0.0f};
  TeacherModel teacher{TeacherConfig{}};
  StudentModel student{StudentConfig{}};
  const auto tp = zero_except_head_bias(teacher.init(2), bias);
  const auto sp = zero_except_head_bias(student.init(2), bias);
  for (std::uint64_t s : {1, 2}) {
    const auto img = random_image(32, s);
    const auto t = teacher.forward(tp, img);
    const auto st = student.forward(sp, img);
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK(t.at(k) == bias[k]);
      CHECK(st.at(k) == bias[k]);
    }
  }
}

TEST_CASE("inference is bit-stable and yields a probability vector") {
  TeacherModel teacher{TeacherConfig{}};
  const auto p = teacher.init(4);
  const auto img = random_image(32, 9);
  const auto a = teacher.forward(p, img);
  const auto b = teacher.forward(p, img.clone());
  CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
  const auto probs = softmax(a, 0);
  double total = 0;
  for (auto v : probs.data()) total += v;
  CHECK(std::abs(total - 1.0) <= 1e-6);
}

TEST_CASE("activation record exposes grids for explanations") {
  TeacherModel teacher{TeacherConfig{}};
  ActivationRecord<float> rec;
  teacher.forward(teacher.init(5), random_image(32, 2), &rec);
  const auto& g0 = rec.get("global.stage0");
  CHECK(g0.grid_h == 8);
  CHECK(g0.value.shape() == Shape{64, 64});
  const auto& g1 = rec.get(teacher.default_target());
  CHECK(g1.grid_h == 4);
  CHECK(g1.value.shape() == Shape{16, 128});
  const auto& l = rec.get("local.block3");
  CHECK(l.has_class_token);
  CHECK(l.value.shape() == Shape{17, 96});
  const float alpha = rec.get("fusion.alpha").value.item();
  CHECK(alpha > 0.f);
  CHECK(alpha < 1.f);
  CHECK_THROWS_AS(rec.get("nope"), ConfigError);

  StudentModel student{StudentConfig{}};
  ActivationRecord<float> srec;
  student.forward(student.init(5), random_image(32, 2), &srec);
  CHECK(student.default_target() == "student.block3.norm1");
  CHECK(srec.get("student.block2").value.shape() == Shape{65, 64});
  CHECK(srec.get(student.default_target()).value.shape() == Shape{65, 64});
}

TEST_CASE("fusion gate") {
  Rng rng(6);
  ParameterSet<double> p;
  init_fusion(p, "f", 5, 3, 4, GateMode::kScalar, rng);
  const auto g = random_tensor({1, 5}, rng);
  const auto l = random_tensor({1, 3}, rng);

  SUBCASE("zero gate averages") {
    for (auto& v : p.get("f.gate.weight").mutable_data()) v = 0;
    ActivationRecord<double> rec;
    TensorD alpha;
    const auto f = fuse_features(p, "f", g, l, &alpha, &rec);
    CHECK(alpha.item() == 0.5);
    const auto& gp = rec.get("fusion.global").value;
    const auto& lp = rec.get("fusion.local").value;
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(f.at(i) - 0.5 * (gp.at(i) + lp.at(i))) <= 1e-15);
  }

  SUBCASE("saturated gate selects the global feature") {
    p.get("f.gate.bias").mutable_data()[0] = 40.0;
    ActivationRecord<double> rec;
    const auto f = fuse_features(p, "f", g, l, static_cast<TensorD*>(nullptr), &rec);
    const auto& gp = rec.get("fusion.global").value;
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(f.at(i) - gp.at(i)) <= 1e-6);
  }

  SUBCASE("output is a coordinate-wise convex combination") {
    for (int trial = 0; trial < 50; ++trial) {
      for (auto& e : p.entries())
        for (auto& v : e.value.mutable_data()) v = rng.normal() * 2.0;
      ActivationRecord<double> rec;
      const auto f = fuse_features(p, "f", random_tensor({1, 5}, rng), random_tensor({1, 3}, rng),
                                   static_cast<TensorD*>(nullptr), &rec);
      const auto& gp = rec.get("fusion.global").value;
      const auto& lp = rec.get("fusion.local").value;
      for (std::size_t i = 0; i < 4; ++i) {
        CHECK(f.at(i) >= std::min(gp.at(i), lp.at(i)) - 1e-12);
        CHECK(f.at(i) <= std::max(gp.at(i), lp.at(i)) + 1e-12);
      }
    }
  }

  SUBCASE("gradients through the gate") {
    ParameterSet<double> q;
    init_fusion(q, "f", 5, 3, 4, GateMode::kPerDim, rng);
    std::vector<TensorD> inputs{g, l};
    for (const auto& e : q.entries()) inputs.push_back(random_tensor(e.value.shape(), rng, 0.7));
    const auto res = gradcheck(
        [&](const std::vector<TensorD>& in) {
          const auto r = q.rebind(std::vector<TensorD>(in.begin() + 2, in.end()));
          return random_projection_loss(fuse_features(r, "f", in[0], in[1]), 3);
        },
        inputs);
    CHECK(res.max_rel_error <= 1e-5);
  }
}

TEST_CASE("full toy-scale forward passes match finite differences") {
  auto check = [](const auto& model, const ParameterSet<double>& base, std::uint64_t seed) {
    const auto res = model_gradcheck(model, base, seed);
    MESSAGE("all entries: max rel error " << res.max_rel_error << " at " << res.worst);
    CHECK(res.checked == base.element_count() + 3 * static_cast<std::size_t>(model.image_size() * model.image_size()));
    CHECK(significant_error(res) <= 1e-5);
  };
  Rng rng(20);
  SUBCASE("teacher") {
    TeacherModel teacher{toy_teacher()};
    ParameterSet<double> base;
    teacher.init_into(base, rng);
    check(teacher, base, 21);
  }
  SUBCASE("teacher without region bias, mean-pooled local feature, per-dim gate") {
    auto c = toy_teacher();
    c.region_aware = false;
    c.local_feature = LocalFeature::kMeanPool;
    c.gate = GateMode::kPerDim;
    TeacherModel teacher{c};
    ParameterSet<double> base;
    teacher.init_into(base, rng);
    check(teacher, base, 22);
  }
  SUBCASE("student with adapters") {
    auto c = toy_student();
    c.lora = LoraConfig{2, 1.5, {"q", "v"}};
    StudentModel student{c};
    ParameterSet<double> base;
    student.init_into(base, rng);
    apply_lora(c, base, rng);
    check(student, base, 23);
  }
}

TEST_CASE("low-rank adapters") {
  StudentConfig plain;
  StudentConfig adapted = plain;
  adapted.lora = LoraConfig{4, 2.0, {"q", "v"}};
  const StudentModel base_model{plain}, lora_model{adapted};
  const auto base = base_model.init(11);
  const auto lora = lora_model.init(11);
  CHECK(lora.size() == base.size() + 2 * 2 * 4);
  CHECK(!lora.trainable("block0.attn.q.weight"));
  CHECK(!lora.trainable("block3.attn.v.weight"));
  CHECK(lora.trainable("block0.attn.k.weight"));
  CHECK(lora.trainable("block0.attn.q.lora_a"));

  const auto img = random_image(32, 3);
  const auto a = base_model.forward(base, img);
  const auto b = lora_model.forward(lora, img);
  CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));

  backward(sum(mul(lora_model.forward(lora, img), TensorF::from({4}, {1.f, -2.f, 0.5f, 3.f}))));
  CHECK(!lora.get("block0.attn.q.weight").has_grad());
  CHECK(!lora.get("block1.attn.v.weight").has_grad());
  CHECK(lora.get("block1.attn.v.lora_b").has_grad());
  CHECK(lora.get("block1.attn.k.weight").has_grad());

  auto too_big = adapted;
  too_big.lora->rank = 64;
  CHECK_THROWS_AS(StudentModel{too_big}, ConfigError);
  too_big.lora->rank = 2;
  too_big.lora->targets = {"k"};
  CHECK_THROWS_AS(StudentModel{too_big}, ConfigError);
}

TEST_CASE("freeze reports unmatched prefixes") {
  auto params = StudentModel(StudentConfig{}).init(1);
  set_log_echo(false);
  drain_log();
  const auto unmatched = freeze(params, {"embed.", "nothing.here"});
  const auto log = drain_log();
  set_log_echo(true);
  CHECK(unmatched == std::vector<std::string>{"nothing.here"});
  REQUIRE(log.size() == 1);
  CHECK(log[0].find("nothing.here") != std::string::npos);
  CHECK(!params.trainable("embed.proj.weight"));
  CHECK(!params.trainable("embed.pos"));
  CHECK(params.trainable("block0.attn.q.weight"));
}

TEST_CASE("model configs round-trip through JSON and reject unknown keys") {
  TeacherConfig t;
  t.gate = GateMode::kPerDim;
  t.freeze = {"global.embed"};
  const nlohmann::json tj = t;
  CHECK(nlohmann::json(tj.get<TeacherConfig>()) == tj);

  StudentConfig s;
  s.lora = LoraConfig{3, 1.0, {"v"}};
  const nlohmann::json sj = s;
  CHECK(nlohmann::json(sj.get<StudentConfig>()) == sj);

  auto broken = sj;
  broken["depht"] = 3;
  CHECK_THROWS_AS(broken.get<StudentConfig>(), ConfigError);
  CHECK(nlohmann::json{{"preset", "full"}}.get<TeacherConfig>().image_size == 224);

  const auto model = model_from_json(StudentModel(s).config_json());
  CHECK(model->kind() == ModelKind::kStudent);
  CHECK(model->config_json() == StudentModel(s).config_json());
}
