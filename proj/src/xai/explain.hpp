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

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "core/rng.hpp"
#include "data/image.hpp"
#include "data/transforms.hpp"
#include "json.hpp"
#include "nn/models.hpp"

namespace ds {

enum class CamMethod { kGradCam, kGradCamPP, kScoreCam, kLime };
const char* method_name(CamMethod method);
/// Accepts gradcam, gradcampp, scorecam, lime; throws ConfigError otherwise.
CamMethod parse_method(const std::string& name);

/// Spatial feature map: rows are the h*w grid cells in row-major order,
/// columns are channels.
struct FeatureGrid {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> values;  // [height * width, channels]

  double at(int cell, int channel) const { return values[static_cast<std::size_t>(cell) * channels + channel]; }
};

struct SaliencyMap {
  CamMethod method = CamMethod::kGradCam;
  int class_index = 0;
  std::string target;
  int grid_h = 0, grid_w = 0;
  std::vector<double> raw;  // grid_h * grid_w, before normalization
  int height = 0, width = 0;
  std::vector<double> normalized;  // height * width in [0, 1]
  /// Channel weights (Grad-CAM, Grad-CAM++, Score-CAM) or region
  /// coefficients (LIME).
  std::vector<double> weights;
  std::vector<int> channels;  // Score-CAM: channel of each weight
  double intercept = 0.0;     // LIME only
  bool all_zero = false;
  std::vector<std::string> warnings;

  /// Grid cell of the largest normalized value, as (y, x) in output pixels.
  std::array<int, 2> argmax() const;
};

/// Min-max scaling to [0, 1]. A constant map becomes all ones when its value
/// is positive and all zeros otherwise.
std::vector<double> min_max(std::vector<double> map);

/// Single-channel bilinear resampling with half-pixel centers and edge
/// clamping.
std::vector<double> upsample_bilinear(const std::vector<double>& map, int h, int w, int out_h, int out_w);

/// ReLU(sum_k alpha_k A^k) with alpha_k the spatial mean of the gradients.
/// `weights` receives alpha.
std::vector<double> grad_cam_map(const FeatureGrid& activations, const FeatureGrid& gradients,
                                 std::vector<double>* weights = nullptr);
/// Pixel weights g^2 / (2 g^2 + sum(A) g^3 + 1e-8), channel weights
/// sum(alpha ReLU(g)), map ReLU(sum_k w_k A^k).
std::vector<double> grad_cam_pp_map(const FeatureGrid& activations, const FeatureGrid& gradients,
                                    std::vector<double>* weights = nullptr);

struct ExplainContext {
  const Model& model;
  const ParameterSet<float>& params;
  Normalization norm;
  int threads = 1;
};

/// Feature grid of a tap with the class token removed. Throws ConfigError
/// for a tap without a spatial grid.
FeatureGrid tap_grid(const ActivationRecord<float>::Tap& tap, bool gradient);

/// Empty `target` selects model.default_target(). Maps are upsampled to the
/// image's own resolution.
SaliencyMap grad_cam(const ExplainContext& ctx, const Image& image, int class_index, const std::string& target = {});
SaliencyMap grad_cam_pp(const ExplainContext& ctx, const Image& image, int class_index,
                        const std::string& target = {});

struct ScoreCamOptions {
  int top_channels = 32;
};
SaliencyMap score_cam(const ExplainContext& ctx, const Image& image, int class_index, const std::string& target = {},
                      const ScoreCamOptions& options = {});

struct LimeOptions {
  int grid = 4;
  int samples = 200;
  double kernel_width = 0.25;
  double ridge = 1e-3;
  /// Per-channel intensity used for switched-off regions.
  std::array<float, 3> fill{0.f, 0.f, 0.f};
};

/// Region index of each pixel for an r x r grid; uneven sizes split as
/// floor(y * r / H).
std::vector<int> grid_regions(int height, int width, int grid);
/// Copies `image`, replacing pixels of regions whose bit is 0 by `fill`.
Image lime_perturb(const Image& image, const std::vector<int>& regions, const std::vector<std::uint8_t>& bits,
                   const std::array<float, 3>& fill);

struct LimeFit {
  std::vector<double> coefficients;
  double intercept = 0.0;
  double ridge = 0.0;  // value actually used
};
/// Weighted ridge regression of y on the mask bits with an unpenalized
/// intercept, solved by Cholesky on the normal equations. A failed
/// factorization retries once with ten times the ridge, then throws
/// NumericError.
LimeFit fit_weighted_ridge(const std::vector<std::vector<std::uint8_t>>& masks, const std::vector<double>& y,
                           const std::vector<double>& weights, double ridge);

/// Samples masks from `rng` (Bernoulli 0.5 per region).
SaliencyMap lime_explain(const ExplainContext& ctx, const Image& image, int class_index, Rng& rng,
                         const LimeOptions& options = {});

/// Class probabilities of an image at the model's input size.
std::vector<double> predict_proba(const ExplainContext& ctx, const Image& image);

/// Blue-to-red ramp of t in [0, 1].
std::array<float, 3> heat_color(double t);
/// Alpha-blends the colored map over the image. The map must match the image
/// size.
ImageU8 render_overlay(const Image& image, const SaliencyMap& map, double opacity = 0.45);

nlohmann::json to_json(const SaliencyMap& map);

}  // namespace ds
