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

#include <algorithm>
#include <cmath>

#include "core/error.hpp"
#include "core/rng.hpp"
#include "doctest.h"
#include "eval/metrics.hpp"

using namespace ds;

namespace {

ConfusionMatrix endoscopy_matrix() {
  return {{"0_normal", "1_ulcerative_colitis", "2_polyps", "3_esophagitis"},
          {{225, 0, 0, 0}, {0, 225, 0, 0}, {0, 2, 223, 0}, {0, 0, 0, 225}}};
}

ConfusionMatrix histology_matrix() {
  return {{"Other", "Stroma", "Tumour"}, {{135, 1, 0}, {0, 146, 0}, {2, 0, 133}}};
}

bool close4(double v, double want) { return std::abs(v - want) <= 5e-5; }

// Pairwise statistic with ties credited one half.
double mann_whitney(const std::vector<double>& s, const std::vector<bool>& pos) {
  double wins = 0;
  std::int64_t pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (pos[i] && !pos[j]) {
        ++pairs;
        wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return wins / static_cast<double>(pairs);
}

}  // namespace

TEST_CASE("confusion matrix counts") {
  const std::vector<int> y{0, 1, 2, 2, 1}, p{0, 1, 2, 2, 1};
  const auto m = confusion_matrix(y, p, 3);
  CHECK(m.counts == std::vector<std::vector<std::int64_t>>{{1, 0, 0}, {0, 2, 0}, {0, 0, 2}});
  CHECK(m.class_names[2] == "class_2");
  CHECK(m.total() == 5);

  const std::vector<int> y2{0, 0, 1}, p2{1, 1, 0};
  CHECK(confusion_matrix(y2, p2, 2).counts == std::vector<std::vector<std::int64_t>>{{0, 2}, {1, 0}});
  const std::vector<int> bad{0, 3};
  CHECK_THROWS_AS(confusion_matrix(bad, std::vector<int>{0, 0}, 3), IndexError);
  CHECK_THROWS_AS(confusion_matrix(std::vector<int>{0}, bad, 3), ShapeError);

  // expanding the published matrix into samples reproduces it
  const auto ref = endoscopy_matrix();
  std::vector<int> ys, ps;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (std::int64_t c = 0; c < ref.counts[i][j]; ++c) {
        ys.push_back(i);
        ps.push_back(j);
      }
  CHECK(confusion_matrix(ys, ps, 4, ref.class_names).counts == ref.counts);
}

TEST_CASE("report on the endoscopy test matrix") {
  const auto r = classification_report(endoscopy_matrix());
  CHECK(close4(r.accuracy, 0.9978));
  CHECK(close4(r.per_class[1].precision, 0.9912));
  CHECK(close4(r.per_class[2].recall, 0.9911));
  CHECK(close4(r.macro.f1, 0.9978));
  CHECK(close4(r.per_class[1].f1, 0.9956));
  CHECK(close4(r.per_class[2].f1, 0.9955));
  CHECK(close4(r.weighted.f1, 0.9978));
  CHECK(r.total == 900);
  CHECK(r.warnings.empty());
}

TEST_CASE("report on the histology test matrix") {
  const auto r = classification_report(histology_matrix());
  CHECK(close4(r.accuracy, 0.9928));
  CHECK(close4(r.per_class[2].precision, 1.0));
  CHECK(close4(r.per_class[2].recall, 0.9852));
  CHECK(close4(r.per_class[1].precision, 0.9932));
  CHECK(close4(r.per_class[0].precision, 0.9854));
  CHECK(close4(r.macro.f1, 0.9927));
  CHECK(close4(r.macro.precision, 0.9929));
  CHECK(close4(r.macro.recall, 0.9926));
  CHECK(close4(r.weighted.precision, 0.9929));
  CHECK(close4(r.weighted.recall, 0.9928));
  CHECK(close4(r.weighted.f1, 0.9928));
  CHECK(r.per_class[0].support == 136);
  CHECK(r.per_class[1].support == 146);
  CHECK(r.per_class[2].support == 135);
}

TEST_CASE("report edge cases") {
  const auto id = classification_report({{"a", "b"}, {{1, 0}, {0, 1}}});
  CHECK(id.accuracy == 1.0);
  CHECK(id.macro.f1 == 1.0);
  CHECK(id.weighted.precision == 1.0);
  for (const auto& m : id.per_class) {
    CHECK(m.precision == 1.0);
    CHECK(m.recall == 1.0);
  }

  const auto never = classification_report({{"a", "b", "c"}, {{3, 0, 0}, {2, 0, 0}, {0, 0, 0}}});
  CHECK(never.per_class[1].precision == 0.0);
  CHECK(never.per_class[1].precision_undefined);
  CHECK(never.per_class[2].recall_undefined);
  CHECK(never.per_class[2].f1 == 0.0);
  CHECK(!never.warnings.empty());

  CHECK_THROWS_AS(classification_report({}), ContractError);
  CHECK_THROWS_AS(classification_report({{"a"}, {{0}}}), ContractError);
  CHECK_THROWS_AS(classification_report({{"a", "b"}, {{1, -1}, {0, 1}}}), ContractError);
}

TEST_CASE("report invariants on random matrices") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 2 + static_cast<int>(rng.uniform_int(5));
    ConfusionMatrix m;
    for (int i = 0; i < k; ++i) m.class_names.push_back("c" + std::to_string(i));
    const bool equal = trial % 2 == 0;
    const std::int64_t per = 1 + static_cast<std::int64_t>(rng.uniform_int(30));
    for (int i = 0; i < k; ++i) {
      std::vector<std::int64_t> row(static_cast<std::size_t>(k), 0);
      const std::int64_t n = equal ? per : static_cast<std::int64_t>(rng.uniform_int(30));
      for (std::int64_t s = 0; s < n; ++s) ++row[rng.uniform() < 0.7 ? i : rng.uniform_int(static_cast<std::uint64_t>(k))];
      m.counts.push_back(row);
    }
    if (m.total() == 0) continue;
    const auto r = classification_report(m);
    CHECK(r.accuracy == static_cast<double>(m.trace()) / static_cast<double>(m.total()));
    double lo = 1, hi = 0, wf1 = 0;
    for (const auto& c : r.per_class) {
      lo = std::min(lo, c.f1);
      hi = std::max(hi, c.f1);
      wf1 += static_cast<double>(c.support) / static_cast<double>(r.total) * c.f1;
      for (double v : {c.precision, c.recall, c.f1}) CHECK((v >= 0.0 && v <= 1.0));
      CHECK(c.tp + c.fp + c.fn + c.tn == r.total);
    }
    CHECK(r.macro.f1 <= hi + 1e-15);
    CHECK(r.macro.f1 >= lo - 1e-15);
    CHECK(std::abs(r.weighted.f1 - wf1) <= 1e-12);
    if (equal) {
      CHECK(std::abs(r.weighted.f1 - r.macro.f1) <= 1e-12);
      CHECK(std::abs(r.weighted.recall - r.macro.recall) <= 1e-12);
      CHECK(std::abs(r.weighted.precision - r.macro.precision) <= 1e-12);
    }
  }
}

TEST_CASE("ROC and AUC") {
  SUBCASE("separating and anti-separating scores") {
    const std::vector<double> s{0.9, 0.8, 0.3, 0.1};
    const std::vector<bool> pos{true, true, false, false};
    const std::vector<bool> neg{false, false, true, true};
    CHECK(!binary_roc(s, std::vector<bool>(4, true)).auc);
    CHECK(*binary_roc(s, pos).auc == 1.0);
    CHECK(*binary_roc(s, neg).auc == 0.0);
  }

  SUBCASE("area equals the pairwise statistic") {
    Rng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t n = 2 + rng.uniform_int(49);
      std::vector<double> s(n);
      std::vector<bool> pos(n);
      for (std::size_t i = 0; i < n; ++i) {
        s[i] = static_cast<double>(rng.uniform_int(trial % 3 == 0 ? 4 : 1000)) / 10.0;  // some trials are tie-heavy
        pos[i] = rng.uniform() < 0.4;
      }
      pos[0] = true;
      pos[1] = false;
      const auto roc = binary_roc(s, pos);
      REQUIRE(roc.auc);
      CHECK(std::abs(*roc.auc - mann_whitney(s, pos)) <= 1e-12);
      CHECK(roc.points.front().fpr == 0.0);
      CHECK(roc.points.front().tpr == 0.0);
      CHECK(roc.points.back().fpr == 1.0);
      CHECK(roc.points.back().tpr == 1.0);
      for (std::size_t i = 1; i < roc.points.size(); ++i) {
        CHECK(roc.points[i].fpr >= roc.points[i - 1].fpr);
        CHECK(roc.points[i].tpr >= roc.points[i - 1].tpr);
      }

      std::vector<double> cubed(s);
      for (auto& v : cubed) v = v * v * v;
      const auto same = binary_roc(cubed, pos);
      CHECK(*same.auc == *roc.auc);
      REQUIRE(same.points.size() == roc.points.size());
      for (std::size_t i = 0; i < roc.points.size(); ++i) {
        CHECK(same.points[i].fpr == roc.points[i].fpr);
        CHECK(same.points[i].tpr == roc.points[i].tpr);
      }
    }
  }

  SUBCASE("multi-class one-vs-rest with an undefined class") {
    const std::vector<std::vector<double>> scores{{0.7, 0.2, 0.1}, {0.1, 0.8, 0.1}, {0.6, 0.3, 0.1}, {0.2, 0.7, 0.1}};
    const std::vector<int> labels{0, 1, 0, 1};
    const auto curve = roc_auc(scores, labels, {"a", "b", "c"});
    CHECK(*curve.per_class[0].auc == 1.0);
    CHECK(*curve.per_class[1].auc == 1.0);
    CHECK(!curve.per_class[2].auc);
    CHECK(curve.per_class[2].points.empty());
    CHECK(*curve.macro_auc == 1.0);

    const std::vector<std::vector<double>> bad{{0.5, 0.2, 0.1}};
    CHECK_THROWS_AS(roc_auc(bad, std::vector<int>{0}), ContractError);
    CHECK_THROWS_AS(roc_auc(scores, std::vector<int>{0, 1, 0, 3}), IndexError);
  }
}

TEST_CASE("serialization") {
  const auto m = histology_matrix();
  const auto csv = confusion_csv(m);
  CHECK(csv == "actual,Other,Stroma,Tumour\nOther,135,1,0\nStroma,0,146,0\nTumour,2,0,133\n");
  const auto back = parse_confusion_csv(csv);
  CHECK(back.counts == m.counts);
  CHECK(back.class_names == m.class_names);
  CHECK_THROWS_AS(parse_confusion_csv("actual,a,b\na,1\n"), ConfigError);
  CHECK_THROWS_AS(parse_confusion_csv("actual,a,b\na,1,x\nb,0,1\n"), ConfigError);

  const auto r = classification_report(m);
  const auto j = to_json(r);
  CHECK(j["accuracy"].get<double>() == r.accuracy);
  CHECK(j["per_class"][2]["name"] == "Tumour");
  const auto text = format_report(r);
  CHECK(text.find("0.9928") != std::string::npos);
  CHECK(text.find("0.9927") != std::string::npos);

  const std::vector<double> s{0.9, 0.1};
  const std::vector<bool> pos{true, false};
  CHECK(roc_csv(binary_roc(s, pos)) == "fpr,tpr\n0,0\n0,1\n1,1\n");
}
