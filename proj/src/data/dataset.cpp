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

#include "data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "core/error.hpp"
#include "core/log.hpp"
#include "core/rng.hpp"
#include "json.hpp"

namespace ds {

using nlohmann::json;

const char* split_name(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kVal:
      return "val";
    case Split::kTest:
      return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw ConfigError("unknown split '" + name + "'");
}

const std::vector<ImageSample>& Dataset::split(Split s) const {
  return s == Split::kTrain ? train : s == Split::kVal ? val : test;
}

std::vector<ImageSample>& Dataset::split(Split s) {
  return s == Split::kTrain ? train : s == Split::kVal ? val : test;
}

namespace {

constexpr std::array<Split, 3> kSplits{Split::kTrain, Split::kVal, Split::kTest};

int resolve_label(const json& entry, const std::vector<std::string>& classes, const std::string& path) {
  const auto& label = entry.at("label");
  if (label.is_number_integer()) {
    const int v = label.get<int>();
    if (v < 0 || v >= static_cast<int>(classes.size()))
      throw IoError("label " + std::to_string(v) + " out of range for " + path);
    return v;
  }
  const auto name = label.get<std::string>();
  const auto it = std::find(classes.begin(), classes.end(), name);
  if (it == classes.end()) throw IoError("unknown class name '" + name + "' for " + path);
  return static_cast<int>(it - classes.begin());
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& manifest_path) {
  json manifest;
  {
    std::ifstream in(manifest_path);
    if (!in) throw IoError("cannot open manifest " + manifest_path.string());
    try {
      manifest = json::parse(in);
    } catch (const json::exception& e) {
      throw IoError("malformed manifest " + manifest_path.string() + ": " + e.what());
    }
  }
  const auto root = manifest_path.parent_path();
  Dataset ds;
  try {
    ds.class_names = manifest.at("classes").get<std::vector<std::string>>();
    ds.image_size = manifest.value("image_size", 224);
    if (manifest.contains("mean")) ds.norm.mean = manifest.at("mean").get<std::array<float, 3>>();
    if (manifest.contains("std")) ds.norm.std = manifest.at("std").get<std::array<float, 3>>();
  } catch (const json::exception& e) {
    throw IoError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  if (ds.class_names.size() < 2) throw IoError("manifest needs at least two classes: " + manifest_path.string());

  const json splits = manifest.value("splits", json::object());
  for (auto split : kSplits) {
    auto& out = ds.split(split);
    const char* name = split_name(split);
    if (!splits.contains(name) || splits.at(name).empty()) {
      log_warning(std::string("split '") + name + "' is empty in " + manifest_path.string());
      continue;
    }
    for (const auto& entry : splits.at(name)) {
      ImageSample s;
      s.path = entry.at("path").get<std::string>();
      const auto full = root / s.path;
      if (!std::filesystem::exists(full)) throw IoError("missing image file " + full.string());
      s.label = resolve_label(entry, ds.class_names, s.path);
      s.split = split;
      s.image = read_image(full);
      if (entry.contains("region")) {
        const auto r = entry.at("region").get<std::array<int, 4>>();
        s.region = Box{r[0], r[1], r[2], r[3]};
        if (r[0] < 0 || r[1] < 0 || r[2] > s.image.width || r[3] > s.image.height || r[0] >= r[2] || r[1] >= r[3])
          throw IoError("region outside image bounds for " + s.path);
      }
      out.push_back(std::move(s));
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.path < b.path; });
  }
  return ds;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json splits = json::object();
  for (auto split : kSplits) {
    json entries = json::array();
    for (const auto& s : dataset.split(split)) {
      const auto full = dir / s.path;
      std::filesystem::create_directories(full.parent_path());
      write_ppm(full, to_u8(s.image));
      json e{{"path", s.path}, {"label", s.label}};
      if (s.region) e["region"] = {s.region->x0, s.region->y0, s.region->x1, s.region->y1};
      entries.push_back(std::move(e));
    }
    splits[split_name(split)] = std::move(entries);
  }
  json manifest{{"classes", dataset.class_names},
                {"splits", std::move(splits)},
                {"image_size", dataset.image_size},
                {"mean", dataset.norm.mean},
                {"std", dataset.norm.std}};
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

SyntheticSpec SyntheticSpec::from_total(std::uint64_t seed, int per_class, std::array<double, 3> ratio) {
  const double total = ratio[0] + ratio[1] + ratio[2];
  SyntheticSpec spec;
  spec.seed = seed;
  spec.val_per_class = static_cast<int>(std::lround(per_class * ratio[1] / total));
  spec.test_per_class = static_cast<int>(std::lround(per_class * ratio[2] / total));
  spec.train_per_class = per_class - spec.val_per_class - spec.test_per_class;
  return spec;
}

namespace {

// Fully saturated color at hue label / classes, scaled into [0.2, 1].
std::array<double, 3> class_hue(int label, int classes) {
  const double h = 6.0 * label / classes;
  const int sector = static_cast<int>(h) % 6;
  const double f = h - std::floor(h);
  std::array<double, 3> rgb{};
  switch (sector) {
    case 0: rgb = {1, f, 0}; break;
    case 1: rgb = {1 - f, 1, 0}; break;
    case 2: rgb = {0, 1, f}; break;
    case 3: rgb = {0, 1 - f, 1}; break;
    case 4: rgb = {f, 0, 1}; break;
    default: rgb = {1, 0, 1 - f}; break;
  }
  for (auto& v : rgb) v = 0.2 + 0.8 * v;
  return rgb;
}

ImageSample synth_sample(const SyntheticSpec& spec, int label, Split split, int index) {
  Rng rng(spec.seed, stream_id(static_cast<std::uint64_t>(label), static_cast<std::uint64_t>(split),
                               static_cast<std::uint64_t>(index)));
  const int side = spec.side;
  const double sigma = side * 0.09;
  const double margin = side * 0.2;
  const double cx = rng.uniform(margin, side - 1 - margin);
  const double cy = rng.uniform(margin, side - 1 - margin);
  const double freq = (label + 1) / (side * 0.5);  // stripes per pixel
  const double amplitude = rng.uniform(0.45, 0.6);
  const double background = rng.uniform(0.15, 0.3);
  const auto hue = class_hue(label, spec.classes);
  std::array<double, 3> tint{};
  for (std::size_t c = 0; c < 3; ++c) tint[c] = std::clamp(hue[c] + rng.uniform(-0.08, 0.08), 0.0, 1.0);

  Image img(side, side);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      const double r2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
      const double blob = amplitude * std::exp(-r2 / (2 * sigma * sigma)) *
                          (0.75 + 0.25 * std::cos(2 * std::numbers::pi * freq * (x - cx)));
      for (int c = 0; c < 3; ++c) {
        const double noise = rng.uniform(-0.06, 0.06);
        img.at(y, x, c) = static_cast<float>(background + noise + blob * tint[c]);
      }
    }

  ImageSample s;
  // Store exactly what a PPM round trip would give back.
  s.image = to_float(to_u8(img));
  s.label = label;
  s.split = split;
  const double reach = 2.0 * sigma;
  s.region = Box{std::max(0, static_cast<int>(std::floor(cx - reach))), std::max(0, static_cast<int>(std::floor(cy - reach))),
                 std::min(side, static_cast<int>(std::ceil(cx + reach)) + 1),
                 std::min(side, static_cast<int>(std::ceil(cy + reach)) + 1)};
  char name[64];
  std::snprintf(name, sizeof name, "%s/class%d/%05d.ppm", split_name(split), label, index);
  s.path = name;
  return s;
}

}  // namespace

Dataset make_synthetic(const SyntheticSpec& spec) {
  if (spec.classes < 2 || spec.classes > 8) throw ConfigError("synthetic class count must be in [2, 8]");
  if (spec.side < 16) throw ConfigError("synthetic side must be at least 16");
  Dataset ds;
  for (int c = 0; c < spec.classes; ++c) ds.class_names.push_back("class" + std::to_string(c));
  ds.image_size = spec.side;
  const std::array<int, 3> counts{spec.train_per_class, spec.val_per_class, spec.test_per_class};
  for (std::size_t k = 0; k < kSplits.size(); ++k) {
    auto& out = ds.split(kSplits[k]);
    for (int c = 0; c < spec.classes; ++c)
      for (int i = 0; i < counts[k]; ++i) out.push_back(synth_sample(spec, c, kSplits[k], i));
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.path < b.path; });
  }
  return ds;
}

}  // namespace ds
