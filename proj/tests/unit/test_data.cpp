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

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "core/error.hpp"
#include "core/log.hpp"
#include "data/dataset.hpp"
#include "data/transforms.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace ds;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("distillscope_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Image noise_image(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  Image img(h, w);
  for (auto& p : img.pixels) p = static_cast<float>(rng.uniform());
  return img;
}

}  // namespace

TEST_CASE("ppm and raw tensor round trips") {
  const auto dir = scratch_dir("ppm");
  const auto img = to_u8(noise_image(5, 7, 1));
  write_ppm(dir / "a.ppm", img);
  CHECK(read_ppm(dir / "a.ppm") == img);

  const auto f = noise_image(4, 6, 2);
  write_raw_tensor(dir / "b.f32", f);
  CHECK(read_image(dir / "b.f32") == f);

  std::ofstream(dir / "bad.ppm") << "P3\n1 1\n255\n0 0 0\n";
  CHECK_THROWS_AS(read_ppm(dir / "bad.ppm"), IoError);
}

TEST_CASE("manifest with a 225-per-class test split loads 900 samples") {
  const auto dir = scratch_dir("tree");
  const std::vector<std::string> classes{"0_normal", "1_ulcerative_colitis", "2_polyps", "3_esophagitis"};
  nlohmann::json test = nlohmann::json::array();
  const auto tiny = to_u8(noise_image(8, 8, 3));
  for (int c = 0; c < 4; ++c) {
    fs::create_directories(dir / "test" / classes[c]);
    for (int i = 0; i < 225; ++i) {
      const std::string rel = "test/" + classes[c] + "/" + std::to_string(i) + ".ppm";
      write_ppm(dir / rel, tiny);
      test.push_back({{"path", rel}, {"label", classes[c]}});
    }
  }
  nlohmann::json manifest{{"classes", classes}, {"splits", {{"test", test}, {"train", nlohmann::json::array()}}}};
  std::ofstream(dir / "manifest.json") << manifest.dump();

  set_log_echo(false);
  drain_log();
  const auto ds = load_dataset(dir / "manifest.json");
  const auto log = drain_log();
  set_log_echo(true);
  CHECK(ds.test.size() == 900);
  CHECK(ds.train.empty());
  CHECK(ds.val.empty());
  CHECK(log.size() == 2);  // empty train and missing val both warn
  CHECK(std::is_sorted(ds.test.begin(), ds.test.end(), [](auto& a, auto& b) { return a.path < b.path; }));
  CHECK(ds.norm == Normalization{});
}

TEST_CASE("manifest errors name the offending file") {
  const auto dir = scratch_dir("missing");
  nlohmann::json manifest{{"classes", {"a", "b"}},
                          {"splits", {{"train", {{{"path", "nowhere.ppm"}, {"label", 0}}}}}}};
  std::ofstream(dir / "manifest.json") << manifest.dump();
  try {
    load_dataset(dir / "manifest.json");
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("nowhere.ppm") != std::string::npos);
  }

  write_ppm(dir / "x.ppm", to_u8(noise_image(4, 4, 5)));
  manifest["splits"]["train"] = {{{"path", "x.ppm"}, {"label", "zebra"}}};
  std::ofstream(dir / "manifest.json") << manifest.dump();
  CHECK_THROWS_AS(load_dataset(dir / "manifest.json"), IoError);
}

TEST_CASE("preprocess constants") {
  Image red(16, 16, 1.0f);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) red.at(y, x, 0) = 0.485f;
  auto t = preprocess(red, 16, Normalization{});
  CHECK(t.shape() == Shape{3, 16, 16});
  CHECK(t.at(0) == 0.0f);

  auto white = preprocess(Image(20, 20, 1.0f), 16, Normalization{});
  const std::array<double, 3> expected{2.2489, 2.4286, 2.6400};
  for (int c = 0; c < 3; ++c) CHECK(std::abs(white.at(static_cast<std::size_t>(c) * 256 + 17) - expected[c]) <= 1e-4);

  CHECK_THROWS_AS(preprocess(red, 4, Normalization{}), ShapeError);
}

TEST_CASE("same-size resize is the identity and denormalize inverts preprocess") {
  const auto img = noise_image(12, 12, 9);
  const auto same = resize_bilinear(img, 12, 12);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) CHECK(std::abs(same.pixels[i] - img.pixels[i]) <= 1e-6);

  const auto src = noise_image(20, 14, 10);
  const auto resized = resize_bilinear(src, 16, 16);
  const auto back = denormalize(preprocess(src, 16, Normalization{}), Normalization{});
  for (std::size_t i = 0; i < back.pixels.size(); ++i) CHECK(std::abs(back.pixels[i] - resized.pixels[i]) <= 1e-5);
}

TEST_CASE("augmentation contracts") {
  const auto img = noise_image(16, 16, 11);
  AugmentParams flip;
  flip.flip = true;
  CHECK(apply_augment(apply_augment(img, flip), flip) == img);

  const auto ident = apply_augment(img, AugmentParams{});
  for (std::size_t i = 0; i < img.pixels.size(); ++i) CHECK(std::abs(ident.pixels[i] - img.pixels[i]) <= 1e-6);

  // non-trivial affine still keeps shape and stays within the input range
  Rng a(77, 3), b(77, 3);
  for (int i = 0; i < 8; ++i) {
    const auto x = augment(img, a);
    const auto y = augment(img, b);
    CHECK(x == y);
    CHECK(x.height == 16);
    CHECK(x.width == 16);
    for (auto p : x.pixels) {
      CHECK(p >= 0.f);
      CHECK(p <= 1.f);
    }
  }
  Rng r(5);
  for (int i = 0; i < 200; ++i) {
    const auto p = sample_augment(r);
    CHECK(std::abs(p.rotation_deg) <= 10.0);
    CHECK(std::abs(p.translate_x) <= 0.05);
    CHECK(p.scale >= 0.95);
    CHECK(p.scale <= 1.05);
    CHECK(std::abs(p.shear_deg) <= 2.0);
  }
}

TEST_CASE("synthetic dataset is deterministic with in-bounds regions") {
  auto spec = SyntheticSpec::from_total(123, 20);
  CHECK(spec.train_per_class == 14);
  CHECK(spec.val_per_class == 3);
  CHECK(spec.test_per_class == 3);
  const auto a = make_synthetic(spec);
  const auto b = make_synthetic(spec);
  CHECK(a == b);
  spec.seed = 124;
  CHECK(!(make_synthetic(spec) == a));
  for (auto split : {Split::kTrain, Split::kVal, Split::kTest})
    for (const auto& s : a.split(split)) {
      REQUIRE(s.region.has_value());
      CHECK(s.region->x0 >= 0);
      CHECK(s.region->y0 >= 0);
      CHECK(s.region->x1 <= s.image.width);
      CHECK(s.region->y1 <= s.image.height);
      CHECK(s.region->x0 < s.region->x1);
    }
  CHECK_THROWS_AS(make_synthetic(SyntheticSpec{.classes = 9}), ConfigError);
  CHECK_THROWS_AS(make_synthetic(SyntheticSpec{.side = 8}), ConfigError);

  const auto dir = scratch_dir("synthetic");
  save_dataset(a, dir);
  CHECK(load_dataset(dir / "manifest.json") == a);
}

TEST_CASE("synthetic classes are separable by a least-squares probe on color statistics") {
  SyntheticSpec spec;
  spec.seed = 2024;
  spec.train_per_class = 64;
  const auto ds = make_synthetic(spec);
  const auto n = static_cast<Eigen::Index>(ds.train.size());
  Eigen::MatrixXd x(n, 7);
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n, spec.classes);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = ds.train[static_cast<std::size_t>(i)];
    x(i, 0) = 1.0;
    for (int c = 0; c < 3; ++c) {
      double total = 0, peak = 0;
      for (int yy = 0; yy < s.image.height; ++yy)
        for (int xx = 0; xx < s.image.width; ++xx) {
          total += s.image.at(yy, xx, c);
          peak = std::max(peak, static_cast<double>(s.image.at(yy, xx, c)));
        }
      x(i, 1 + c) = total / (s.image.height * s.image.width);
      x(i, 4 + c) = peak;
    }
    y(i, s.label) = 1.0;
  }
  const Eigen::MatrixXd w = x.colPivHouseholderQr().solve(y);
  const Eigen::MatrixXd pred = x * w;
  int correct = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index arg;
    pred.row(i).maxCoeff(&arg);
    correct += y(i, arg) == 1.0;
  }
  CHECK(static_cast<double>(correct) / static_cast<double>(n) >= 0.95);
}
