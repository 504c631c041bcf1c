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

#include "nn/models.hpp"

#include <algorithm>
#include <set>

#include "core/error.hpp"
#include "core/json_read.hpp"
#include "core/log.hpp"

namespace ds {

using nlohmann::json;

template <typename Real>
const typename ActivationRecord<Real>::Tap& ActivationRecord<Real>::get(const std::string& name) const {
  for (const auto& t : taps)
    if (t.name == name) return t;
  std::string known;
  for (const auto& t : taps) known += (known.empty() ? "" : ", ") + t.name;
  throw ConfigError("unknown activation '" + name + "' (available: " + known + ")");
}

template <typename Real>
bool ActivationRecord<Real>::contains(const std::string& name) const {
  return std::any_of(taps.begin(), taps.end(), [&](const Tap& t) { return t.name == name; });
}

template struct ActivationRecord<float>;
template struct ActivationRecord<double>;

namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

void check_attention(int dim, int heads, const std::string& where) {
  require(dim > 0 && heads > 0 && dim % heads == 0,
          where + ": dim " + std::to_string(dim) + " is not divisible by " + std::to_string(heads) + " heads");
}

int effective_window(std::int64_t grid, int window) { return static_cast<int>(std::min<std::int64_t>(grid, window)); }

}  // namespace

void TeacherConfig::validate() const {
  require(num_classes >= 2, "teacher needs at least two classes");
  require(global_patch > 0 && image_size % global_patch == 0, "image size must be divisible by the global patch");
  require(local_patch > 0 && image_size % local_patch == 0, "image size must be divisible by the local patch");
  require(!stage_dims.empty() && stage_dims.size() == stage_depths.size() && stage_dims.size() == stage_heads.size(),
          "stage dims, depths and heads must have the same non-zero length");
  require(window > 0, "window must be positive");
  std::int64_t grid = image_size / global_patch;
  for (std::size_t i = 0; i < stage_dims.size(); ++i) {
    if (i > 0) {
      require(grid % 2 == 0, "stage " + std::to_string(i) + " cannot merge an odd token grid");
      grid /= 2;
    }
    require(grid % effective_window(grid, window) == 0,
            "stage " + std::to_string(i) + " grid " + std::to_string(grid) + " is not divisible by the window");
    require(stage_depths[i] >= 1, "stage depth must be positive");
    check_attention(stage_dims[i], stage_heads[i], "stage " + std::to_string(i));
  }
  check_attention(local_dim, local_heads, "local encoder");
  require(local_depth >= 1, "local depth must be positive");
  require(fusion_dim > 0, "fusion dim must be positive");
}

TeacherConfig TeacherConfig::full_scale() {
  TeacherConfig c;
  c.image_size = 224;
  c.global_patch = 4;
  c.window = 7;
  c.stage_dims = {96, 192, 384, 768};
  c.stage_depths = {2, 2, 18, 2};
  c.stage_heads = {3, 6, 12, 24};
  c.local_patch = 16;
  c.local_dim = 384;
  c.local_depth = 12;
  c.local_heads = 6;
  c.fusion_dim = 256;
  return c;
}

void StudentConfig::validate() const {
  require(num_classes >= 2, "student needs at least two classes");
  require(patch > 0 && image_size % patch == 0, "image size must be divisible by the student patch");
  check_attention(dim, heads, "student");
  require(depth >= 1, "student depth must be positive");
  if (lora) {
    require(lora->rank >= 1, "lora rank must be at least 1");
    require(lora->rank < dim, "lora rank " + std::to_string(lora->rank) + " must be below the projection size " +
                                  std::to_string(dim));
    for (const auto& t : lora->targets) require(t == "q" || t == "v", "lora target must be q or v, got '" + t + "'");
  }
}

StudentConfig StudentConfig::full_scale() {
  StudentConfig c;
  c.image_size = 224;
  c.patch = 16;
  c.dim = 192;
  c.depth = 12;
  c.heads = 3;
  return c;
}

std::int64_t student_parameter_count(const StudentConfig& c) {
  const std::int64_t d = c.dim, p = c.patch, k = c.num_classes;
  const std::int64_t tokens = (c.image_size / c.patch) * (c.image_size / c.patch) + 1;
  const std::int64_t embed = 3 * p * p * d + d + d + tokens * d;
  const std::int64_t block = 2 * (2 * d) + (4 * d * d + d) + (d * 4 * d + 4 * d + 4 * d * d + d);
  return embed + c.depth * block + 2 * d + d * k + k;
}

const char* model_kind_name(ModelKind kind) { return kind == ModelKind::kTeacher ? "teacher" : "student"; }

// ---- fusion ----

template <typename Real>
void init_fusion(ParameterSet<Real>& params, const std::string& prefix, std::int64_t global_dim, std::int64_t local_dim,
                 std::int64_t fusion_dim, GateMode gate, Rng& rng) {
  init_linear(params, prefix + ".proj_g", global_dim, fusion_dim, true, rng, fan_in_std(global_dim));
  init_linear(params, prefix + ".proj_l", local_dim, fusion_dim, true, rng, fan_in_std(local_dim));
  init_linear(params, prefix + ".gate", 2 * fusion_dim, gate == GateMode::kScalar ? 1 : fusion_dim, true, rng);
}

template <typename Real>
Tensor<Real> fuse_features(const ParameterSet<Real>& params, const std::string& prefix, const Tensor<Real>& global,
                           const Tensor<Real>& local, Tensor<Real>* alpha_out, ActivationRecord<Real>* record) {
  const auto g = linear(params, prefix + ".proj_g", global);
  const auto l = linear(params, prefix + ".proj_l", local);
  const auto alpha = sigmoid(linear(params, prefix + ".gate", concat<Real>({g, l}, 1)));
  if (alpha_out) *alpha_out = alpha;
  const auto fused = add(l, mul(sub(g, l), alpha));
  if (record) {
    record->add("fusion.global", g);
    record->add("fusion.local", l);
    record->add("fusion.alpha", alpha);
    record->add("fusion.fused", fused);
  }
  return fused;
}

// ---- teacher ----

TeacherModel::TeacherModel(TeacherConfig config) : config_(std::move(config)) {
  config_.validate();
  std::int64_t grid = config_.image_size / config_.global_patch;
  for (std::size_t i = 0; i < config_.stage_dims.size(); ++i) {
    if (i > 0) grid /= 2;
    const int g = static_cast<int>(grid);
    const int m = effective_window(grid, config_.window);
    // A grid that fits in a single window has nothing to shift across.
    const int shift = grid > config_.window ? m / 2 : 0;
    stage_grid_.push_back(grid);
    layouts_.emplace_back(make_window_layout(g, g, m, 0), make_window_layout(g, g, m, shift));
  }
}

std::string TeacherModel::default_target() const {
  return "global.stage" + std::to_string(config_.stage_dims.size() - 1);
}

json TeacherModel::config_json() const { return json{{"kind", "teacher"}, {"config", config_}}; }

template <typename Real>
void TeacherModel::init_into(ParameterSet<Real>& params, Rng& rng) const {
  const auto& c = config_;
  init_patch_embed(params, "global.embed", PatchGrid{c.image_size, c.global_patch}, c.stage_dims[0], false, rng);
  for (std::size_t i = 0; i < c.stage_dims.size(); ++i) {
    const std::string stage = "global.stage" + std::to_string(i);
    if (i > 0) init_patch_merging(params, stage + ".merge", c.stage_dims[i - 1], c.stage_dims[i], rng);
    for (int j = 0; j < c.stage_depths[i]; ++j) {
      const auto& layout = j % 2 ? layouts_[i].second : layouts_[i].first;
      init_block(params, stage + ".block" + std::to_string(j),
                 BlockSpec{c.stage_dims[i], c.stage_heads[i], MixerKind::kWindow, &layout}, rng);
    }
    init_layer_norm(params, stage + ".norm", c.stage_dims[i]);
    init_linear(params, stage + ".pool", c.stage_dims[i], c.stage_dims.back(), true, rng, fan_in_std(c.stage_dims[i]));
  }
  init_patch_embed(params, "local.embed", PatchGrid{c.image_size, c.local_patch}, c.local_dim, true, rng);
  const auto local_mixer = c.region_aware ? MixerKind::kRegion : MixerKind::kGlobal;
  for (int j = 0; j < c.local_depth; ++j)
    init_block(params, "local.block" + std::to_string(j), BlockSpec{c.local_dim, c.local_heads, local_mixer}, rng);
  init_layer_norm(params, "local.norm", c.local_dim);
  init_fusion(params, "fusion", c.stage_dims.back(), c.local_dim, c.fusion_dim, c.gate, rng);
  init_linear(params, "head", c.fusion_dim, c.num_classes, true, rng);
}

ParameterSet<float> TeacherModel::init(std::uint64_t seed) const {
  ParameterSet<float> params;
  Rng rng(seed, 0x7EAC);
  init_into(params, rng);
  freeze(params, config_.freeze);
  return params;
}

template <typename Real>
Tensor<Real> TeacherModel::run(const ParameterSet<Real>& params, const Tensor<Real>& image,
                               ActivationRecord<Real>* record) const {
  const auto& c = config_;
  if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != c.image_size || image.dim(2) != c.image_size)
    throw ShapeError("teacher expects [3," + std::to_string(c.image_size) + "," + std::to_string(c.image_size) +
                     "], got " + shape_str(image.shape()));
  auto x = patch_embed(params, "global.embed", image, PatchGrid{c.image_size, c.global_patch}, false);
  Tensor<Real> pooled_sum;
  for (std::size_t i = 0; i < c.stage_dims.size(); ++i) {
    const std::string stage = "global.stage" + std::to_string(i);
    const int g = static_cast<int>(stage_grid_[i]);
    if (i > 0) x = patch_merging(params, stage + ".merge", x, 2 * g, 2 * g);
    for (int j = 0; j < c.stage_depths[i]; ++j) {
      const auto& layout = j % 2 ? layouts_[i].second : layouts_[i].first;
      x = transformer_block(params, stage + ".block" + std::to_string(j), x,
                            BlockSpec{c.stage_dims[i], c.stage_heads[i], MixerKind::kWindow, &layout});
    }
    if (record) record->add(stage, x, g, g, false);
    const auto pooled = reshape(mean(layer_norm(params, stage + ".norm", x), 0), {1, c.stage_dims[i]});
    const auto projected = linear(params, stage + ".pool", pooled);
    pooled_sum = pooled_sum.defined() ? add(pooled_sum, projected) : projected;
  }
  const auto global = scale(pooled_sum, Real(1) / static_cast<Real>(c.stage_dims.size()));

  const PatchGrid local_grid{c.image_size, c.local_patch};
  auto z = patch_embed(params, "local.embed", image, local_grid, true);
  const auto local_mixer = c.region_aware ? MixerKind::kRegion : MixerKind::kGlobal;
  const int lg = static_cast<int>(local_grid.per_side());
  for (int j = 0; j < c.local_depth; ++j) {
    z = transformer_block(params, "local.block" + std::to_string(j), z,
                          BlockSpec{c.local_dim, c.local_heads, local_mixer});
    if (record) record->add("local.block" + std::to_string(j), z, lg, lg, true);
  }
  z = layer_norm(params, "local.norm", z);
  const auto local = c.local_feature == LocalFeature::kClassToken
                         ? slice(z, 0, 0, 1)
                         : reshape(mean(slice(z, 0, 1, z.dim(0)), 0), {1, c.local_dim});

  const auto fused = fuse_features(params, "fusion", global, local, static_cast<Tensor<Real>*>(nullptr), record);
  const auto logits = reshape(linear(params, "head", fused), {c.num_classes});
  if (record) record->add("logits", logits);
  return logits;
}

TensorF TeacherModel::forward(const ParameterSet<float>& params, const TensorF& image,
                              ActivationRecord<float>* record) const {
  return run(params, image, record);
}
TensorD TeacherModel::forward(const ParameterSet<double>& params, const TensorD& image,
                              ActivationRecord<double>* record) const {
  return run(params, image, record);
}

// ---- student ----

StudentModel::StudentModel(StudentConfig config) : config_(std::move(config)) { config_.validate(); }

std::string StudentModel::default_target() const {
  // Patch tokens leaving the last block never reach the class-token head;
  // its normalized input is the deepest grid with gradient signal.
  return "student.block" + std::to_string(config_.depth - 1) + ".norm1";
}

json StudentModel::config_json() const { return json{{"kind", "student"}, {"config", config_}}; }

template <typename Real>
void StudentModel::init_into(ParameterSet<Real>& params, Rng& rng) const {
  const auto& c = config_;
  init_patch_embed(params, "embed", PatchGrid{c.image_size, c.patch}, c.dim, true, rng);
  for (int j = 0; j < c.depth; ++j)
    init_block(params, "block" + std::to_string(j), BlockSpec{c.dim, c.heads, MixerKind::kGlobal}, rng);
  init_layer_norm(params, "norm", c.dim);
  init_linear(params, "head", c.dim, c.num_classes, true, rng);
}

ParameterSet<float> StudentModel::init(std::uint64_t seed) const {
  ParameterSet<float> params;
  Rng rng(seed, 0x57D7);
  init_into(params, rng);
  if (config_.lora) apply_lora(config_, params, rng);
  return params;
}

template <typename Real>
Tensor<Real> StudentModel::run(const ParameterSet<Real>& params, const Tensor<Real>& image,
                               ActivationRecord<Real>* record) const {
  const auto& c = config_;
  if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != c.image_size || image.dim(2) != c.image_size)
    throw ShapeError("student expects [3," + std::to_string(c.image_size) + "," + std::to_string(c.image_size) +
                     "], got " + shape_str(image.shape()));
  const PatchGrid grid{c.image_size, c.patch};
  const int g = static_cast<int>(grid.per_side());
  auto z = patch_embed(params, "embed", image, grid, true);
  if (record) record->add("student.embed", z, g, g, true);
  const BlockSpec spec{c.dim, c.heads, MixerKind::kGlobal, nullptr, c.lora ? c.lora->factor() : 0.0};
  for (int j = 0; j < c.depth; ++j) {
    Tensor<Real> normed;
    z = transformer_block(params, "block" + std::to_string(j), z, spec, record ? &normed : nullptr);
    if (record) {
      record->add("student.block" + std::to_string(j) + ".norm1", normed, g, g, true);
      record->add("student.block" + std::to_string(j), z, g, g, true);
    }
  }
  z = layer_norm(params, "norm", z);
  const auto logits = reshape(linear(params, "head", slice(z, 0, 0, 1)), {c.num_classes});
  if (record) record->add("logits", logits);
  return logits;
}

TensorF StudentModel::forward(const ParameterSet<float>& params, const TensorF& image,
                              ActivationRecord<float>* record) const {
  return run(params, image, record);
}
TensorD StudentModel::forward(const ParameterSet<double>& params, const TensorD& image,
                              ActivationRecord<double>* record) const {
  return run(params, image, record);
}

template <typename Real>
void apply_lora(const StudentConfig& config, ParameterSet<Real>& params, Rng& rng) {
  if (!config.lora) throw ConfigError("apply_lora needs a lora configuration");
  config.validate();
  const auto& lora = *config.lora;
  const std::int64_t r = lora.rank, d = config.dim;
  for (int j = 0; j < config.depth; ++j)
    for (const auto& target : lora.targets) {
      const std::string proj = "block" + std::to_string(j) + ".attn." + target;
      params.get(proj + ".weight");  // must exist
      params.add(proj + ".lora_a", truncated_normal<Real>({r, d}, rng));
      params.add(proj + ".lora_b", Tensor<Real>::zeros({d, r}));
      params.set_trainable(proj + ".weight", false);
    }
}

// ---- JSON ----


void to_json(json& j, const TeacherConfig& c) {
  j = json{{"image_size", c.image_size},
           {"num_classes", c.num_classes},
           {"global_patch", c.global_patch},
           {"window", c.window},
           {"stage_dims", c.stage_dims},
           {"stage_depths", c.stage_depths},
           {"stage_heads", c.stage_heads},
           {"local_patch", c.local_patch},
           {"local_dim", c.local_dim},
           {"local_depth", c.local_depth},
           {"local_heads", c.local_heads},
           {"region_aware", c.region_aware},
           {"fusion_dim", c.fusion_dim},
           {"gate", c.gate == GateMode::kScalar ? "scalar" : "per_dim"},
           {"local_feature", c.local_feature == LocalFeature::kClassToken ? "class_token" : "mean"},
           {"freeze", c.freeze}};
}

void from_json(const json& j, TeacherConfig& c) {
  const std::string where = "teacher config";
  reject_unknown(j,
                 {"preset", "image_size", "num_classes", "global_patch", "window", "stage_dims", "stage_depths",
                  "stage_heads", "local_patch", "local_dim", "local_depth", "local_heads", "region_aware",
                  "fusion_dim", "gate", "local_feature", "freeze"},
                 where);
  std::string preset = "desk";
  read_key(j, "preset", preset, where);
  if (preset == "desk") {
    c = TeacherConfig{};
  } else if (preset == "full" || preset == "swin-small-patch4-window7-224+vit-small-patch16-224") {
    c = TeacherConfig::full_scale();
  } else {
    throw ConfigError("unknown teacher preset '" + preset + "'");
  }
  read_key(j, "image_size", c.image_size, where);
  read_key(j, "num_classes", c.num_classes, where);
  read_key(j, "global_patch", c.global_patch, where);
  read_key(j, "window", c.window, where);
  read_key(j, "stage_dims", c.stage_dims, where);
  read_key(j, "stage_depths", c.stage_depths, where);
  read_key(j, "stage_heads", c.stage_heads, where);
  read_key(j, "local_patch", c.local_patch, where);
  read_key(j, "local_dim", c.local_dim, where);
  read_key(j, "local_depth", c.local_depth, where);
  read_key(j, "local_heads", c.local_heads, where);
  read_key(j, "region_aware", c.region_aware, where);
  read_key(j, "fusion_dim", c.fusion_dim, where);
  read_key(j, "freeze", c.freeze, where);
  std::string gate = c.gate == GateMode::kScalar ? "scalar" : "per_dim";
  read_key(j, "gate", gate, where);
  if (gate != "scalar" && gate != "per_dim") throw ConfigError("gate must be scalar or per_dim");
  c.gate = gate == "scalar" ? GateMode::kScalar : GateMode::kPerDim;
  std::string feature = c.local_feature == LocalFeature::kClassToken ? "class_token" : "mean";
  read_key(j, "local_feature", feature, where);
  if (feature != "class_token" && feature != "mean") throw ConfigError("local_feature must be class_token or mean");
  c.local_feature = feature == "class_token" ? LocalFeature::kClassToken : LocalFeature::kMeanPool;
  c.validate();
}

void to_json(json& j, const StudentConfig& c) {
  j = json{{"image_size", c.image_size}, {"num_classes", c.num_classes}, {"patch", c.patch},
           {"dim", c.dim},               {"depth", c.depth},             {"heads", c.heads}};
  if (c.lora)
    j["lora"] = json{{"rank", c.lora->rank}, {"scaling", c.lora->scaling}, {"targets", c.lora->targets}};
}

void from_json(const json& j, StudentConfig& c) {
  const std::string where = "student config";
  reject_unknown(j, {"preset", "image_size", "num_classes", "patch", "dim", "depth", "heads", "lora"}, where);
  std::string preset = "desk";
  read_key(j, "preset", preset, where);
  if (preset == "desk") {
    c = StudentConfig{};
  } else if (preset == "full" || preset == "tiny-vit-patch16-224") {
    c = StudentConfig::full_scale();
  } else {
    throw ConfigError("unknown student preset '" + preset + "'");
  }
  read_key(j, "image_size", c.image_size, where);
  read_key(j, "num_classes", c.num_classes, where);
  read_key(j, "patch", c.patch, where);
  read_key(j, "dim", c.dim, where);
  read_key(j, "depth", c.depth, where);
  read_key(j, "heads", c.heads, where);
  if (j.contains("lora") && !j.at("lora").is_null()) {
    const auto& l = j.at("lora");
    reject_unknown(l, {"rank", "scaling", "targets"}, "lora config");
    LoraConfig lora;
    read_key(l, "rank", lora.rank, "lora config");
    read_key(l, "scaling", lora.scaling, "lora config");
    read_key(l, "targets", lora.targets, "lora config");
    c.lora = lora;
  } else {
    c.lora.reset();
  }
  c.validate();
}

std::unique_ptr<Model> model_from_json(const json& j) {
  reject_unknown(j, {"kind", "config"}, "model description");
  const auto kind = j.value("kind", std::string());
  if (kind == "teacher") return std::make_unique<TeacherModel>(j.at("config").get<TeacherConfig>());
  if (kind == "student") return std::make_unique<StudentModel>(j.at("config").get<StudentConfig>());
  throw ConfigError("unknown model kind '" + kind + "'");
}

#define DS_INSTANTIATE_MODELS(Real)                                                                                    \
  template void TeacherModel::init_into(ParameterSet<Real>&, Rng&) const;                                             \
  template Tensor<Real> TeacherModel::run(const ParameterSet<Real>&, const Tensor<Real>&, ActivationRecord<Real>*)    \
      const;                                                                                                          \
  template void StudentModel::init_into(ParameterSet<Real>&, Rng&) const;                                             \
  template Tensor<Real> StudentModel::run(const ParameterSet<Real>&, const Tensor<Real>&, ActivationRecord<Real>*)    \
      const;                                                                                                          \
  template void apply_lora(const StudentConfig&, ParameterSet<Real>&, Rng&);                                          \
  template Tensor<Real> fuse_features(const ParameterSet<Real>&, const std::string&, const Tensor<Real>&,              \
                                      const Tensor<Real>&, Tensor<Real>*, ActivationRecord<Real>*);                   \
  template void init_fusion(ParameterSet<Real>&, const std::string&, std::int64_t, std::int64_t, std::int64_t,        \
                            GateMode, Rng&);

DS_INSTANTIATE_MODELS(float)
DS_INSTANTIATE_MODELS(double)

}  // namespace ds
