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
#include <filesystem>
#include <vector>

#include "core/tensor.hpp"

namespace ds {

/// 8-bit RGB, row-major, channels last.
struct ImageU8 {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(int y, int x, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  bool operator==(const ImageU8&) const = default;
};

/// Linear RGB intensities in [0, 1], row-major, channels last.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w, float fill = 0.f) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, fill) {}

  float& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  float at(int y, int x, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  bool operator==(const Image&) const = default;
};

Image to_float(const ImageU8& image);
/// Rounds to nearest and clamps to [0, 255].
ImageU8 to_u8(const Image& image);

/// Binary PPM, P6 with maxval 255.
ImageU8 read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const ImageU8& image);
std::vector<std::uint8_t> encode_ppm(const ImageU8& image);

/// Raw little-endian f32 tensor in C order [3, H, W] with a JSON sidecar at
/// `<path>.json` holding {shape, dtype: "f32", order: "row-major"}. Values are
/// intensities in [0, 1].
Image read_raw_tensor(const std::filesystem::path& path);
void write_raw_tensor(const std::filesystem::path& path, const Image& image);

/// Reads either format, chosen by extension (.ppm or .f32).
Image read_image(const std::filesystem::path& path);

}  // namespace ds
