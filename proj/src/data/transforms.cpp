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

#include "data/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "core/error.hpp"

namespace ds {
namespace {

// Samples `image` at continuous pixel coordinates (pixel centers at integers),
// replicating edges outside the raster.
void sample_bilinear(const Image& image, double sy, double sx, float* out) {
  sy = std::clamp(sy, 0.0, static_cast<double>(image.height - 1));
  sx = std::clamp(sx, 0.0, static_cast<double>(image.width - 1));
  const int y0 = static_cast<int>(std::floor(sy));
  const int x0 = static_cast<int>(std::floor(sx));
  const int y1 = std::min(y0 + 1, image.height - 1);
  const int x1 = std::min(x0 + 1, image.width - 1);
  const double fy = sy - y0, fx = sx - x0;
  for (int c = 0; c < 3; ++c) {
    const double top = image.at(y0, x0, c) * (1 - fx) + image.at(y0, x1, c) * fx;
    const double bottom = image.at(y1, x0, c) * (1 - fx) + image.at(y1, x1, c) * fx;
    out[c] = static_cast<float>(top * (1 - fy) + bottom * fy);
  }
}

}  // namespace

Image resize_bilinear(const Image& image, int height, int width) {
  if (height <= 0 || width <= 0) throw ShapeError("resize target must be positive");
  if (height == image.height && width == image.width) return image;
  Image out(height, width);
  const double ry = static_cast<double>(image.height) / height;
  const double rx = static_cast<double>(image.width) / width;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) sample_bilinear(image, (y + 0.5) * ry - 0.5, (x + 0.5) * rx - 0.5, &out.at(y, x, 0));
  return out;
}

TensorF preprocess(const Image& image, int size, const Normalization& norm) {
  if (size < 8) throw ShapeError("preprocess size must be at least 8, got " + std::to_string(size));
  const Image resized = resize_bilinear(image, size, size);
  std::vector<float> chw(static_cast<std::size_t>(3) * size * size);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        chw[(static_cast<std::size_t>(c) * size + y) * size + x] = (resized.at(y, x, c) - norm.mean[c]) / norm.std[c];
  return TensorF::from({3, size, size}, std::move(chw));
}

Image denormalize(const TensorF& chw, const Normalization& norm) {
  if (chw.rank() != 3 || chw.dim(0) != 3) throw ShapeError("denormalize expects [3, H, W], got " + shape_str(chw.shape()));
  const int h = static_cast<int>(chw.dim(1)), w = static_cast<int>(chw.dim(2));
  Image out(h, w);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out.at(y, x, c) = chw.at((static_cast<std::size_t>(c) * h + y) * w + x) * norm.std[c] + norm.mean[c];
  return out;
}

AugmentParams sample_augment(Rng& rng, const AugmentRanges& ranges) {
  AugmentParams p;
  p.flip = rng.bernoulli(ranges.flip_probability);
  p.rotation_deg = rng.uniform(-ranges.max_rotation_deg, ranges.max_rotation_deg);
  p.translate_x = rng.uniform(-ranges.max_translate, ranges.max_translate);
  p.translate_y = rng.uniform(-ranges.max_translate, ranges.max_translate);
  p.scale = rng.uniform(ranges.min_scale, ranges.max_scale);
  p.shear_deg = rng.uniform(-ranges.max_shear_deg, ranges.max_shear_deg);
  return p;
}

Image apply_augment(const Image& image, const AugmentParams& params) {
  Image flipped = image;
  if (params.flip) {
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x)
        for (int c = 0; c < 3; ++c) flipped.at(y, x, c) = image.at(y, image.width - 1 - x, c);
  }
  const bool identity = params.rotation_deg == 0.0 && params.shear_deg == 0.0 && params.scale == 1.0 &&
                        params.translate_x == 0.0 && params.translate_y == 0.0;
  if (identity) return flipped;

  // Forward map: p' = R(theta) * Shear(phi) * s * (p - c) + c + t. Invert per
  // output pixel.
  const double theta = params.rotation_deg * std::numbers::pi / 180.0;
  const double shear = std::tan(params.shear_deg * std::numbers::pi / 180.0);
  const double ct = std::cos(theta), st = std::sin(theta);
  // M = R * [[1, shear], [0, 1]] * s
  const double m00 = ct * params.scale, m01 = (ct * shear - st) * params.scale;
  const double m10 = st * params.scale, m11 = (st * shear + ct) * params.scale;
  const double det = m00 * m11 - m01 * m10;
  const double i00 = m11 / det, i01 = -m01 / det, i10 = -m10 / det, i11 = m00 / det;
  const double cx = (image.width - 1) / 2.0, cy = (image.height - 1) / 2.0;
  const double tx = params.translate_x * image.width, ty = params.translate_y * image.height;

  Image out(image.height, image.width);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      const double dx = x - cx - tx, dy = y - cy - ty;
      const double sx = i00 * dx + i01 * dy + cx;
      const double sy = i10 * dx + i11 * dy + cy;
      sample_bilinear(flipped, sy, sx, &out.at(y, x, 0));
    }
  return out;
}

Image augment(const Image& image, Rng& rng, const AugmentRanges& ranges) {
  return apply_augment(image, sample_augment(rng, ranges));
}

}  // namespace ds
