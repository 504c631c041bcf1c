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

#include "core/rng.hpp"
#include "core/tensor.hpp"
#include "data/image.hpp"

namespace ds {

/// Per-channel normalization statistics (ImageNet by default).
struct Normalization {
  std::array<float, 3> mean{0.485f, 0.456f, 0.406f};
  std::array<float, 3> std{0.229f, 0.224f, 0.225f};
  bool operator==(const Normalization&) const = default;
};

/// Bilinear resampling with half-pixel centers and edge clamping; resizing to
/// the same size reproduces the input exactly.
Image resize_bilinear(const Image& image, int height, int width);

/// Resize to size x size, then (x - mean_c) / std_c. Returns [3, size, size].
TensorF preprocess(const Image& image, int size, const Normalization& norm);
/// Inverse of the normalization step of preprocess.
Image denormalize(const TensorF& chw, const Normalization& norm);

struct AugmentParams {
  bool flip = false;
  double rotation_deg = 0.0;
  double translate_x = 0.0;  // fraction of width
  double translate_y = 0.0;  // fraction of height
  double scale = 1.0;
  double shear_deg = 0.0;
};

struct AugmentRanges {
  double flip_probability = 0.5;
  double max_rotation_deg = 10.0;
  double max_translate = 0.05;
  double min_scale = 0.95;
  double max_scale = 1.05;
  double max_shear_deg = 2.0;
};

AugmentParams sample_augment(Rng& rng, const AugmentRanges& ranges = {});
/// Horizontal flip, then rotation/shear/scale about the center and
/// translation; bilinear sampling with edge-replicate fill.
Image apply_augment(const Image& image, const AugmentParams& params);
Image augment(const Image& image, Rng& rng, const AugmentRanges& ranges = {});

}  // namespace ds
