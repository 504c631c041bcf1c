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

#include "eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "core/error.hpp"

namespace ds {

std::int64_t ConfusionMatrix::total() const {
  std::int64_t n = 0;
  for (const auto& row : counts)
    for (auto c : row) n += c;
  return n;
}

std::int64_t ConfusionMatrix::trace() const {
  std::int64_t n = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) n += counts[i][i];
  return n;
}

void ConfusionMatrix::validate() const {
  const std::size_t k = counts.size();
  for (const auto& row : counts) {
    if (row.size() != k) throw ContractError("confusion matrix must be square");
    for (auto c : row)
      if (c < 0) throw ContractError("confusion matrix counts must be non-negative");
  }
  if (class_names.size() != k) throw ContractError("confusion matrix needs one name per class");
}

namespace {

std::vector<std::string> default_names(std::vector<std::string> names, int k) {
  if (names.empty())
    for (int i = 0; i < k; ++i) names.push_back("class_" + std::to_string(i));
  if (static_cast<int>(names.size()) != k) throw ShapeError("expected " + std::to_string(k) + " class names");
  return names;
}

void check_label(int v, int k, const char* what) {
  if (v < 0 || v >= k)
    throw IndexError(std::string(what) + " " + std::to_string(v) + " outside [0, " + std::to_string(k) + ")");
}

double ratio(std::int64_t num, std::int64_t den, bool& undefined) {
  undefined = den == 0;
  return undefined ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

ConfusionMatrix confusion_matrix(std::span<const int> labels, std::span<const int> predictions, int num_classes,
                                 std::vector<std::string> class_names) {
  if (num_classes < 1) throw ContractError("need at least one class");
  if (labels.size() != predictions.size()) throw ShapeError("labels and predictions differ in length");
  ConfusionMatrix m;
  m.class_names = default_names(std::move(class_names), num_classes);
  m.counts.assign(static_cast<std::size_t>(num_classes), std::vector<std::int64_t>(static_cast<std::size_t>(num_classes), 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    check_label(labels[i], num_classes, "label");
    check_label(predictions[i], num_classes, "prediction");
    ++m.counts[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(predictions[i])];
  }
  return m;
}

MetricsReport classification_report(const ConfusionMatrix& matrix) {
  if (matrix.counts.empty()) throw ContractError("empty confusion matrix");
  matrix.validate();
  const std::int64_t n = matrix.total();
  if (n == 0) throw ContractError("confusion matrix holds no samples");
  const std::size_t k = matrix.counts.size();

  MetricsReport r;
  r.total = n;
  r.accuracy = static_cast<double>(matrix.trace()) / static_cast<double>(n);
  for (std::size_t c = 0; c < k; ++c) {
    ClassMetrics m;
    m.name = matrix.class_names[c];
    m.tp = matrix.counts[c][c];
    for (std::size_t j = 0; j < k; ++j) {
      if (j == c) continue;
      m.fn += matrix.counts[c][j];
      m.fp += matrix.counts[j][c];
    }
    m.support = m.tp + m.fn;
    m.tn = n - m.tp - m.fp - m.fn;
    m.precision = ratio(m.tp, m.tp + m.fp, m.precision_undefined);
    m.recall = ratio(m.tp, m.tp + m.fn, m.recall_undefined);
    m.f1_undefined = m.precision + m.recall == 0.0;
    m.f1 = m.f1_undefined ? 0.0 : 2.0 * m.precision * m.recall / (m.precision + m.recall);
    if (m.precision_undefined) r.warnings.push_back("precision of '" + m.name + "' undefined (no predictions); set to 0");
    if (m.recall_undefined) r.warnings.push_back("recall of '" + m.name + "' undefined (no support); set to 0");
    r.per_class.push_back(std::move(m));
  }
  for (const auto& m : r.per_class) {
    r.macro.precision += m.precision;
    r.macro.recall += m.recall;
    r.macro.f1 += m.f1;
    const double w = static_cast<double>(m.support) / static_cast<double>(n);
    r.weighted.precision += w * m.precision;
    r.weighted.recall += w * m.recall;
    r.weighted.f1 += w * m.f1;
  }
  const double kd = static_cast<double>(k);
  r.macro.precision /= kd;
  r.macro.recall /= kd;
  r.macro.f1 /= kd;
  return r;
}

RocClass binary_roc(std::span<const double> scores, const std::vector<bool>& positive, std::string name) {
  if (scores.size() != positive.size()) throw ShapeError("scores and labels differ in length");
  RocClass out;
  out.name = std::move(name);
  std::int64_t pos = 0;
  for (bool p : positive) pos += p;
  const std::int64_t neg = static_cast<std::int64_t>(positive.size()) - pos;
  if (pos == 0 || neg == 0) return out;
  for (double s : scores)
    if (!std::isfinite(s)) throw DomainError("non-finite score");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  out.points.push_back({0.0, 0.0});
  std::int64_t tp = 0, fp = 0;
  double auc = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    const double threshold = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == threshold; ++i) (positive[order[i]] ? tp : fp)++;
    const RocPoint p{static_cast<double>(fp) / static_cast<double>(neg), static_cast<double>(tp) / static_cast<double>(pos)};
    const RocPoint& q = out.points.back();
    auc += (p.fpr - q.fpr) * (p.tpr + q.tpr) * 0.5;
    out.points.push_back(p);
  }
  out.auc = auc;
  return out;
}

RocCurve roc_auc(const std::vector<std::vector<double>>& scores, std::span<const int> labels,
                 std::vector<std::string> class_names) {
  if (scores.size() != labels.size()) throw ShapeError("scores and labels differ in length");
  if (scores.empty()) throw ContractError("ROC needs at least one sample");
  const std::size_t k = scores.front().size();
  if (k == 0) throw ShapeError("score rows are empty");
  const auto names = default_names(std::move(class_names), static_cast<int>(k));
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i].size() != k) throw ShapeError("ragged score rows");
    check_label(labels[i], static_cast<int>(k), "label");
    double s = 0.0;
    for (double v : scores[i]) s += v;
    if (!(std::abs(s - 1.0) <= 1e-4))
      throw ContractError("score row " + std::to_string(i) + " sums to " + std::to_string(s) + ", expected 1");
  }
  RocCurve curve;
  std::vector<double> column(scores.size());
  std::vector<bool> positive(scores.size());
  double sum = 0.0;
  int defined = 0;
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t i = 0; i < scores.size(); ++i) {
      column[i] = scores[i][c];
      positive[i] = labels[i] == static_cast<int>(c);
    }
    auto roc = binary_roc(column, positive, names[c]);
    if (roc.auc) {
      sum += *roc.auc;
      ++defined;
    }
    curve.per_class.push_back(std::move(roc));
  }
  if (defined > 0) curve.macro_auc = sum / defined;
  return curve;
}

nlohmann::json to_json(const ConfusionMatrix& matrix) {
  return {{"class_names", matrix.class_names}, {"counts", matrix.counts}};
}

nlohmann::json to_json(const MetricsReport& report) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& m : report.per_class)
    classes.push_back({{"name", m.name},
                       {"precision", m.precision},
                       {"recall", m.recall},
                       {"f1", m.f1},
                       {"support", m.support},
                       {"tp", m.tp},
                       {"fp", m.fp},
                       {"fn", m.fn},
                       {"tn", m.tn},
                       {"precision_undefined", m.precision_undefined},
                       {"recall_undefined", m.recall_undefined},
                       {"f1_undefined", m.f1_undefined}});
  auto avg = [](const AverageMetrics& a) {
    return nlohmann::json{{"precision", a.precision}, {"recall", a.recall}, {"f1", a.f1}};
  };
  return {{"per_class", classes},       {"accuracy", report.accuracy},     {"macro", avg(report.macro)},
          {"weighted", avg(report.weighted)}, {"total", report.total}, {"warnings", report.warnings}};
}

nlohmann::json to_json(const RocCurve& curve) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& c : curve.per_class) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : c.points) pts.push_back({p.fpr, p.tpr});
    classes.push_back({{"name", c.name}, {"auc", c.auc ? nlohmann::json(*c.auc) : nlohmann::json()}, {"points", pts}});
  }
  return {{"per_class", classes}, {"macro_auc", curve.macro_auc ? nlohmann::json(*curve.macro_auc) : nlohmann::json()}};
}

std::string confusion_csv(const ConfusionMatrix& matrix) {
  matrix.validate();
  std::ostringstream os;
  os << "actual";
  for (const auto& n : matrix.class_names) os << ',' << n;
  os << '\n';
  for (std::size_t i = 0; i < matrix.counts.size(); ++i) {
    os << matrix.class_names[i];
    for (auto c : matrix.counts[i]) os << ',' << c;
    os << '\n';
  }
  return os.str();
}

ConfusionMatrix parse_confusion_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ls(s);
    while (std::getline(ls, cell, ',')) {
      if (!cell.empty() && cell.back() == '\r') cell.pop_back();
      out.push_back(cell);
    }
    return out;
  };
  if (!std::getline(in, line)) throw ConfigError("confusion CSV is empty");
  auto header = split(line);
  if (header.size() < 2) throw ConfigError("confusion CSV header needs class names");
  ConfusionMatrix m;
  m.class_names.assign(header.begin() + 1, header.end());
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto cells = split(line);
    if (cells.size() != header.size())
      throw ConfigError("confusion CSV row '" + cells.front() + "' has " + std::to_string(cells.size()) + " cells");
    std::vector<std::int64_t> row;
    for (std::size_t j = 1; j < cells.size(); ++j) {
      try {
        std::size_t used = 0;
        row.push_back(std::stoll(cells[j], &used));
        if (used != cells[j].size()) throw std::invalid_argument(cells[j]);
      } catch (const std::exception&) {
        throw ConfigError("confusion CSV cell '" + cells[j] + "' is not an integer");
      }
    }
    m.counts.push_back(std::move(row));
  }
  try {
    m.validate();
  } catch (const ContractError& e) {
    throw ConfigError(std::string("confusion CSV: ") + e.what());
  }
  return m;
}

std::string roc_csv(const RocClass& roc) {
  std::ostringstream os;
  os.precision(17);
  os << "fpr,tpr\n";
  for (const auto& p : roc.points) os << p.fpr << ',' << p.tpr << '\n';
  return os.str();
}

std::string format_report(const MetricsReport& report) {
  std::size_t width = 12;
  for (const auto& m : report.per_class) width = std::max(width, m.name.size());
  std::ostringstream os;
  char buf[160];
  auto row = [&](const std::string& name, const std::string& p, const std::string& r, const std::string& f,
                 std::int64_t support) {
    std::snprintf(buf, sizeof buf, "%-*s %10s %10s %10s %8lld\n", static_cast<int>(width), name.c_str(), p.c_str(),
                  r.c_str(), f.c_str(), static_cast<long long>(support));
    os << buf;
  };
  auto fmt = [](double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.4f", v);
    return std::string(b);
  };
  std::snprintf(buf, sizeof buf, "%-*s %10s %10s %10s %8s\n", static_cast<int>(width), "class", "precision", "recall",
                "f1-score", "support");
  os << buf;
  for (const auto& m : report.per_class) row(m.name, fmt(m.precision), fmt(m.recall), fmt(m.f1), m.support);
  row("accuracy", "", "", fmt(report.accuracy), report.total);
  row("macro avg", fmt(report.macro.precision), fmt(report.macro.recall), fmt(report.macro.f1), report.total);
  row("weighted avg", fmt(report.weighted.precision), fmt(report.weighted.recall), fmt(report.weighted.f1),
      report.total);
  return os.str();
}

}  // namespace ds
