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
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "data/image.hpp"
#include "data/transforms.hpp"

namespace ds {

enum class Split { kTrain, kVal, kTest };

const char* split_name(Split split);
Split parse_split(const std::string& name);

/// Half-open pixel box [x0, x1) x [y0, y1).
struct Box {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
  bool operator==(const Box&) const = default;
};

struct ImageSample {
  Image image;
  int label = 0;
  Split split = Split::kTrain;
  std::optional<Box> region;  // planted ground truth, synthetic data only
  std::string path;           // relative to the manifest directory
  bool operator==(const ImageSample&) const = default;
};

struct Dataset {
  std::vector<std::string> class_names;
  int image_size = 224;
  Normalization norm;
  std::vector<ImageSample> train, val, test;

  int num_classes() const { return static_cast<int>(class_names.size()); }
  const std::vector<ImageSample>& split(Split s) const;
  std::vector<ImageSample>& split(Split s);
  bool operator==(const Dataset&) const = default;
};

/// Loads a JSON manifest: {classes, splits: {train|val|test: [{path, label,
/// region?}]}, image_size, mean, std}. Labels may be indices or class names;
/// paths resolve against the manifest's directory. Each split is sorted by
/// path.
Dataset load_dataset(const std::filesystem::path& manifest_path);

/// Writes every sample as a PPM under `dir` plus `dir/manifest.json`.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

struct SyntheticSpec {
  std::uint64_t seed = 0;
  int classes = 4;
  int side = 32;
  int train_per_class = 70;
  int val_per_class = 15;
  int test_per_class = 15;

  /// Splits `per_class` images by the given train/val/test ratio.
  static SyntheticSpec from_total(std::uint64_t seed, int per_class, std::array<double, 3> ratio = {70, 15, 15});
};

/// Class c is a striped Gaussian blob over seeded noise, with a class-specific
/// hue and stripe frequency at a random position, so the evidence is local
/// and labels are invariant under flips. `region` records the blob's
/// bounding box.
Dataset make_synthetic(const SyntheticSpec& spec);

}  // namespace ds
