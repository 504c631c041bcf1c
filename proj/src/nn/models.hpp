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
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "nn/blocks.hpp"

namespace ds {

/// Named intermediate tensors captured during a forward pass. Grid taps keep
/// their graph lineage, so their gradients are readable after backward().
template <typename Real>
struct ActivationRecord {
  struct Tap {
    std::string name;
    Tensor<Real> value;
    int grid_h = 0;  // 0 for non-grid values
    int grid_w = 0;
    bool has_class_token = false;
  };
  std::vector<Tap> taps;

  void add(std::string name, Tensor<Real> value, int grid_h = 0, int grid_w = 0, bool class_token = false) {
    taps.push_back({std::move(name), std::move(value), grid_h, grid_w, class_token});
  }
  /// Throws ConfigError naming the available taps when absent.
  const Tap& get(const std::string& name) const;
  bool contains(const std::string& name) const;
};

enum class GateMode { kScalar, kPerDim };
enum class LocalFeature { kClassToken, kMeanPool };

struct TeacherConfig {
  int image_size = 32;
  int num_classes = 4;
  // global (windowed, hierarchical) encoder
  int global_patch = 4;
  int window = 4;
  std::vector<int> stage_dims{64, 128};
  std::vector<int> stage_depths{2, 2};
  std::vector<int> stage_heads{2, 4};
  // local (region-aware) encoder
  int local_patch = 8;
  int local_dim = 96;
  int local_depth = 4;
  int local_heads = 3;
  bool region_aware = true;
  // fusion
  int fusion_dim = 64;
  GateMode gate = GateMode::kScalar;
  LocalFeature local_feature = LocalFeature::kClassToken;
  std::vector<std::string> freeze;

  /// Throws ConfigError on any inconsistent size.
  void validate() const;
  static TeacherConfig full_scale();
};

struct LoraConfig {
  int rank = 4;
  double scaling = 1.0;
  std::vector<std::string> targets{"q", "v"};
  double factor() const { return scaling / rank; }
};

struct StudentConfig {
  int image_size = 32;
  int num_classes = 4;
  int patch = 4;
  int dim = 64;
  int depth = 4;
  int heads = 2;
  std::optional<LoraConfig> lora;

  void validate() const;
  static StudentConfig full_scale();
};

/// Closed-form parameter count of a student without adapters.
std::int64_t student_parameter_count(const StudentConfig& config);

enum class ModelKind { kTeacher, kStudent };
const char* model_kind_name(ModelKind kind);

/// Image classifier over [3, S, S] inputs producing [K] logits.
class Model {
 public:
  virtual ~Model() = default;
  virtual ModelKind kind() const = 0;
  virtual int num_classes() const = 0;
  virtual int image_size() const = 0;
  /// Name of the grid tap used by CAM methods when none is requested.
  virtual std::string default_target() const = 0;
  virtual nlohmann::json config_json() const = 0;

  virtual ParameterSet<float> init(std::uint64_t seed) const = 0;
  virtual TensorF forward(const ParameterSet<float>& params, const TensorF& image,
                          ActivationRecord<float>* record = nullptr) const = 0;
  virtual TensorD forward(const ParameterSet<double>& params, const TensorD& image,
                          ActivationRecord<double>* record = nullptr) const = 0;
};

class TeacherModel final : public Model {
 public:
  explicit TeacherModel(TeacherConfig config);
  const TeacherConfig& config() const { return config_; }

  ModelKind kind() const override { return ModelKind::kTeacher; }
  int num_classes() const override { return config_.num_classes; }
  int image_size() const override { return config_.image_size; }
  std::string default_target() const override;
  nlohmann::json config_json() const override;

  ParameterSet<float> init(std::uint64_t seed) const override;
  TensorF forward(const ParameterSet<float>& params, const TensorF& image,
                  ActivationRecord<float>* record = nullptr) const override;
  TensorD forward(const ParameterSet<double>& params, const TensorD& image,
                  ActivationRecord<double>* record = nullptr) const override;

  template <typename Real>
  void init_into(ParameterSet<Real>& params, Rng& rng) const;
  template <typename Real>
  Tensor<Real> run(const ParameterSet<Real>& params, const Tensor<Real>& image, ActivationRecord<Real>* record) const;

 private:
  TeacherConfig config_;
  std::vector<std::int64_t> stage_grid_;
  // per stage: layout without shift, layout with shift (equal when the
  // grid fits in one window)
  std::vector<std::pair<WindowLayout, WindowLayout>> layouts_;
};

class StudentModel final : public Model {
 public:
  explicit StudentModel(StudentConfig config);
  const StudentConfig& config() const { return config_; }

  ModelKind kind() const override { return ModelKind::kStudent; }
  int num_classes() const override { return config_.num_classes; }
  int image_size() const override { return config_.image_size; }
  std::string default_target() const override;
  nlohmann::json config_json() const override;

  /// Initializes base weights, then adapters when configured.
  ParameterSet<float> init(std::uint64_t seed) const override;
  TensorF forward(const ParameterSet<float>& params, const TensorF& image,
                  ActivationRecord<float>* record = nullptr) const override;
  TensorD forward(const ParameterSet<double>& params, const TensorD& image,
                  ActivationRecord<double>* record = nullptr) const override;

  template <typename Real>
  void init_into(ParameterSet<Real>& params, Rng& rng) const;
  template <typename Real>
  Tensor<Real> run(const ParameterSet<Real>& params, const Tensor<Real>& image, ActivationRecord<Real>* record) const;

 private:
  StudentConfig config_;
};

/// Adds "<proj>.lora_a" [r, D] (truncated normal) and "<proj>.lora_b" [D, r]
/// (zeros) to each targeted attention projection and freezes the base weight.
/// Throws ConfigError when the rank is not below the projection size or a
/// target is not one of q, v.
template <typename Real>
void apply_lora(const StudentConfig& config, ParameterSet<Real>& params, Rng& rng);

/// Projects both features to the fusion size, gates them with
/// alpha = sigmoid(W [g; l] + b) and returns alpha g' + (1 - alpha) l'.
/// Inputs are [1, d_g] and [1, d_l]; `alpha_out` receives the gate.
template <typename Real>
Tensor<Real> fuse_features(const ParameterSet<Real>& params, const std::string& prefix, const Tensor<Real>& global,
                           const Tensor<Real>& local, Tensor<Real>* alpha_out = nullptr,
                           ActivationRecord<Real>* record = nullptr);

template <typename Real>
void init_fusion(ParameterSet<Real>& params, const std::string& prefix, std::int64_t global_dim, std::int64_t local_dim,
                 std::int64_t fusion_dim, GateMode gate, Rng& rng);

// JSON mapping. Unknown keys are rejected with ConfigError; the "preset" key
// accepts "desk" or a full-scale model name.
void to_json(nlohmann::json& j, const TeacherConfig& c);
void from_json(const nlohmann::json& j, TeacherConfig& c);
void to_json(nlohmann::json& j, const StudentConfig& c);
void from_json(const nlohmann::json& j, StudentConfig& c);

/// Rebuilds a model from config_json() output ({"kind": ..., "config": ...}).
std::unique_ptr<Model> model_from_json(const nlohmann::json& j);

}  // namespace ds
