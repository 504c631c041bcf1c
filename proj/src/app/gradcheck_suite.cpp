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

#include "app/gradcheck_suite.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>

#include "core/gradcheck.hpp"
#include "core/ops.hpp"
#include "nn/blocks.hpp"
#include "train/losses.hpp"

namespace ds {

namespace {

using LossFn = std::function<TensorD(const std::vector<TensorD>&)>;
using BlockFn = std::function<TensorD(const ParameterSet<double>&, const TensorD&)>;

TensorD uniform_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return TensorD::from(shape, std::move(v));
}

double significant(const GradCheckResult& r) {
  double gmax = 0, worst = 0;
  for (const auto& e : r.entries) gmax = std::max(gmax, std::abs(e.analytic));
  for (const auto& e : r.entries)
    if (std::abs(e.analytic) >= 1e-3 * gmax) worst = std::max(worst, relative_error(e.analytic, e.numeric));
  return worst;
}

class Runner {
 public:
  explicit Runner(GradCheckSuite& suite) : suite_(suite) {}

  void run(const std::string& name, const std::string& group, const LossFn& fn, std::vector<TensorD> inputs) {
    const auto start = std::chrono::steady_clock::now();
    GradCheckOptions options;
    options.step = suite_.step;
    const auto r = gradcheck(fn, std::move(inputs), options);
    GradCheckRow row;
    row.name = name;
    row.group = group;
    row.checked = r.checked;
    row.max_rel_error = r.max_rel_error;
    row.significant_rel_error = significant(r);
    row.worst = r.worst;
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    suite_.rows.push_back(std::move(row));
  }

  // Treats the input and every parameter of `params` as checked inputs.
  void run_params(const std::string& name, const std::string& group, const ParameterSet<double>& params,
                  const TensorD& x, const BlockFn& fn) {
    std::vector<TensorD> inputs{x};
    for (const auto& v : params.values()) inputs.push_back(v);
    run(name, group,
        [&params, fn](const std::vector<TensorD>& in) {
          const auto p = params.rebind(std::vector<TensorD>(in.begin() + 1, in.end()));
          return random_projection_loss(fn(p, in[0]), 11);
        },
        std::move(inputs));
  }

 private:
  GradCheckSuite& suite_;
};

ParameterSet<double> randomized(const ParameterSet<double>& p, Rng& rng, double std) {
  std::vector<TensorD> values;
  for (const auto& e : p.entries()) values.push_back(uniform_tensor(e.value.shape(), rng, -std, std));
  return p.rebind(values);
}

// Unit-scale weights: fan-in scaled matrices, layer-norm gains near one.
ParameterSet<double> toy_values(const ParameterSet<double>& base, Rng& rng) {
  std::vector<TensorD> out;
  for (const auto& e : base.entries()) {
    const double bound = e.value.rank() == 2 ? 1.0 / std::sqrt(static_cast<double>(e.value.dim(0))) : 0.5;
    auto t = uniform_tensor(e.value.shape(), rng, -bound, bound);
    if (e.name.find("norm") != std::string::npos && e.name.ends_with(".weight"))
      for (auto& v : t.mutable_data()) v += 1.0;
    out.push_back(t);
  }
  return base.rebind(out);
}

void op_rows(Runner& r, Rng& rng) {
  auto any = [&](const Shape& s) { return uniform_tensor(s, rng); };
  auto pos = [&](const Shape& s) { return uniform_tensor(s, rng, 0.5, 2.0); };
  auto proj = [](const TensorD& t) { return random_projection_loss(t, 99); };
  r.run("add", "op", [&](auto& in) { return proj(add(in[0], in[1])); }, {any({3, 4}), any({3, 4})});
  r.run("add_broadcast_row", "op", [&](auto& in) { return proj(add(in[0], in[1])); }, {any({3, 4}), any({4})});
  r.run("sub_broadcast_scalar", "op", [&](auto& in) { return proj(sub(in[0], in[1])); }, {any({3, 4}), any({1})});
  r.run("mul", "op", [&](auto& in) { return proj(mul(in[0], in[1])); }, {any({3, 4}), any({3, 4})});
  r.run("div", "op", [&](auto& in) { return proj(div(in[0], in[1])); }, {any({3, 4}), pos({3, 4})});
  r.run("scale", "op", [&](auto& in) { return proj(scale(in[0], 2.5)); }, {any({5})});
  r.run("add_scalar", "op", [&](auto& in) { return proj(add_scalar(in[0], -0.75)); }, {any({5})});
  r.run("matmul", "op", [&](auto& in) { return proj(matmul(in[0], in[1])); }, {any({3, 5}), any({5, 4})});
  r.run("transpose", "op", [&](auto& in) { return proj(transpose(in[0])); }, {any({3, 4})});
  r.run("gelu", "op", [&](auto& in) { return proj(gelu(in[0])); }, {uniform_tensor({12}, rng, -3, 3)});
  r.run("sigmoid", "op", [&](auto& in) { return proj(sigmoid(in[0])); }, {uniform_tensor({12}, rng, -4, 4)});
  r.run("exp", "op", [&](auto& in) { return proj(exp(in[0])); }, {any({6})});
  r.run("log", "op", [&](auto& in) { return proj(log(in[0])); }, {pos({6})});
  r.run("sum", "op", [&](auto& in) { return sum(mul(in[0], in[0])); }, {any({3, 4})});
  r.run("mean", "op", [&](auto& in) { return mean(mul(in[0], in[0])); }, {any({3, 4})});
  r.run("sum_axis", "op", [&](auto& in) { return proj(sum(in[0], 0)); }, {any({3, 4})});
  r.run("mean_axis", "op", [&](auto& in) { return proj(mean(in[0], 1)); }, {any({3, 4, 2})});
  r.run("concat", "op", [&](auto& in) { return proj(concat<double>({in[0], in[1]}, 0)); }, {any({2, 3}), any({4, 3})});
  r.run("slice", "op", [&](auto& in) { return proj(slice(in[0], 1, 1, 3)); }, {any({3, 4})});
  r.run("reshape", "op", [&](auto& in) { return proj(reshape(in[0], {6, 2})); }, {any({3, 4})});
  r.run("take", "op",
        [&](auto& in) {
          auto idx = std::make_shared<const std::vector<std::int64_t>>(std::vector<std::int64_t>{3, 0, 3, 5, 1, 1});
          return proj(take(in[0], idx, {2, 3}));
        },
        {any({2, 3})});
  r.run("layer_norm", "op", [&](auto& in) { return proj(layer_norm(in[0], in[1], in[2])); },
        {any({3, 5}), any({5}), any({5})});
  r.run("softmax", "op", [&](auto& in) { return proj(softmax(in[0], 1)); }, {any({3, 5})});
  r.run("log_softmax", "op", [&](auto& in) { return proj(log_softmax(in[0], 0)); }, {any({3, 5})});

  const int heads = 2;
  const std::int64_t t = 4, groups = 2, d = 6;
  auto mask = std::make_shared<std::vector<double>>(groups * t * t, 0.0);
  (*mask)[1] = -1e9;
  (*mask)[t * t + 6] = -1e9;
  r.run("attention", "op",
        [=](const std::vector<TensorD>& in) {
          AttentionInputs<double> ai;
          ai.heads = heads;
          ai.group_size = t;
          ai.head_bias = in[3];
          ai.key_bias = in[4];
          ai.mask = mask;
          return random_projection_loss(attention(in[0], in[1], in[2], ai), 5);
        },
        {any({groups * t, d}), any({groups * t, d}), any({groups * t, d}), any({heads, t, t}), any({groups * t})});
}

void block_rows(Runner& r, Rng& rng) {
  {
    ParameterSet<double> p;
    init_block(p, "b", BlockSpec{4, 2, MixerKind::kGlobal}, rng);
    r.run_params("global_block", "block", randomized(p, rng, 0.5), uniform_tensor({5, 4}, rng),
                 [](const ParameterSet<double>& q, const TensorD& x) {
                   return transformer_block(q, "b", x, BlockSpec{4, 2, MixerKind::kGlobal});
                 });
  }
  {
    auto layout = std::make_shared<WindowLayout>(make_window_layout(4, 4, 2, 1));
    ParameterSet<double> p;
    init_block(p, "b", BlockSpec{4, 2, MixerKind::kWindow, layout.get()}, rng);
    r.run_params("shifted_window_block", "block", randomized(p, rng, 0.5), uniform_tensor({16, 4}, rng),
                 [layout](const ParameterSet<double>& q, const TensorD& x) {
                   return transformer_block(q, "b", x, BlockSpec{4, 2, MixerKind::kWindow, layout.get()});
                 });
  }
  {
    ParameterSet<double> p;
    init_block(p, "b", BlockSpec{4, 2, MixerKind::kRegion}, rng);
    r.run_params("region_aware_block", "block", randomized(p, rng, 0.5), uniform_tensor({5, 4}, rng),
                 [](const ParameterSet<double>& q, const TensorD& x) {
                   return transformer_block(q, "b", x, BlockSpec{4, 2, MixerKind::kRegion});
                 });
  }
  {
    const PatchGrid grid{8, 2};
    ParameterSet<double> p;
    init_patch_embed(p, "pe", grid, 4, false, rng);
    init_patch_merging(p, "pm", 4, 6, rng);
    r.run_params("patch_embed_and_merging", "block", randomized(p, rng, 0.5), uniform_tensor({3, 8, 8}, rng),
                 [grid](const ParameterSet<double>& q, const TensorD& x) {
                   return patch_merging(q, "pm", patch_embed(q, "pe", x, grid, false), 4, 4);
                 });
  }
  {
    const PatchGrid grid{4, 2};
    ParameterSet<double> p;
    init_patch_embed(p, "pe", grid, 4, true, rng);
    init_mhsa(p, "a", 4, rng);
    p.add("a.q.lora_a", uniform_tensor({2, 4}, rng));
    p.add("a.q.lora_b", uniform_tensor({4, 2}, rng));
    r.run_params("mhsa_with_adapter", "block", randomized(p, rng, 0.5), uniform_tensor({3, 4, 4}, rng),
                 [grid](const ParameterSet<double>& q, const TensorD& x) {
                   return mhsa(q, "a", patch_embed(q, "pe", x, grid, true), MhsaOptions{2, 0.5});
                 });
  }
  {
    ParameterSet<double> p;
    init_fusion(p, "fusion", 3, 5, 4, GateMode::kScalar, rng);
    const auto base = randomized(p, rng, 0.7);
    std::vector<TensorD> inputs{uniform_tensor({1, 3}, rng), uniform_tensor({1, 5}, rng)};
    for (const auto& v : base.values()) inputs.push_back(v);
    r.run("fusion_gate", "block",
          [base](const std::vector<TensorD>& in) {
            const auto q = base.rebind(std::vector<TensorD>(in.begin() + 2, in.end()));
            return random_projection_loss(fuse_features(q, "fusion", in[0], in[1]), 3);
          },
          std::move(inputs));
  }
}

void loss_rows(Runner& r, Rng& rng) {
  r.run("cross_entropy", "loss", [](const std::vector<TensorD>& in) { return cross_entropy(in[0], 2); },
        {uniform_tensor({4}, rng, -2, 2)});
  // The teacher logits are constants of the loss; only the student is checked.
  const auto teacher = uniform_tensor({4}, rng, -2, 2);
  r.run("kd_loss", "loss",
        [teacher](const std::vector<TensorD>& in) {
          return kd_loss(teacher, in[0], 1, DistillLossSpec{0.9, 4.0}).total;
        },
        {uniform_tensor({4}, rng, -2, 2)});
}

template <typename M>
void model_row(Runner& r, const std::string& name, const M& model, const ParameterSet<double>& base, Rng& rng) {
  std::vector<TensorD> inputs{uniform_tensor({3, model.image_size(), model.image_size()}, rng)};
  for (const auto& v : base.values()) inputs.push_back(v);
  r.run(name, "model",
        [&model, &base](const std::vector<TensorD>& in) {
          const auto p = base.rebind(std::vector<TensorD>(in.begin() + 1, in.end()));
          return random_projection_loss(model.run(p, in[0], static_cast<ActivationRecord<double>*>(nullptr)), 5);
        },
        std::move(inputs));
}

void model_rows(Runner& r, Rng& rng) {
  {
    TeacherModel teacher{gradcheck_toy_teacher()};
    ParameterSet<double> base;
    teacher.init_into(base, rng);
    model_row(r, "toy_teacher", teacher, toy_values(base, rng), rng);
  }
  {
    auto c = gradcheck_toy_teacher();
    c.region_aware = false;
    c.local_feature = LocalFeature::kMeanPool;
    c.gate = GateMode::kPerDim;
    TeacherModel teacher{c};
    ParameterSet<double> base;
    teacher.init_into(base, rng);
    model_row(r, "toy_teacher_variant", teacher, toy_values(base, rng), rng);
  }
  {
    auto c = gradcheck_toy_student();
    StudentModel student{c};
    ParameterSet<double> base;
    student.init_into(base, rng);
    model_row(r, "toy_student", student, toy_values(base, rng), rng);
  }
  {
    auto c = gradcheck_toy_student();
    c.lora = LoraConfig{2, 1.5, {"q", "v"}};
    StudentModel student{c};
    ParameterSet<double> base;
    student.init_into(base, rng);
    apply_lora(c, base, rng);
    model_row(r, "toy_student_lora", student, toy_values(base, rng), rng);
  }
}

}  // namespace

TeacherConfig gradcheck_toy_teacher() {
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

StudentConfig gradcheck_toy_student() {
  StudentConfig c;
  c.image_size = 8;
  c.num_classes = 3;
  c.patch = 4;
  c.dim = 4;
  c.depth = 2;
  c.heads = 2;
  return c;
}

double GradCheckSuite::max_rel_error() const {
  double worst = 0.0;
  for (const auto& row : rows) worst = std::max(worst, row.max_rel_error);
  return worst;
}

GradCheckSuite run_gradcheck_suite(std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  GradCheckSuite suite;
  Runner runner(suite);
  Rng rng(seed, 0x67C);
  op_rows(runner, rng);
  block_rows(runner, rng);
  loss_rows(runner, rng);
  model_rows(runner, rng);
  suite.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return suite;
}

nlohmann::json to_json(const GradCheckSuite& suite) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : suite.rows)
    rows.push_back({{"name", r.name},
                    {"group", r.group},
                    {"checked", r.checked},
                    {"max_rel_error", r.max_rel_error},
                    {"significant_rel_error", r.significant_rel_error},
                    {"worst", r.worst}});
  return {{"step", suite.step}, {"max_rel_error", suite.max_rel_error()}, {"rows", rows}};
}

}  // namespace ds
