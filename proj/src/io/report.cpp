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

#include "io/report.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <sstream>

#include "core/error.hpp"
#include "io/checkpoint.hpp"

namespace ds {

using json = nlohmann::json;

json to_json(const EpochRecord& r) {
  return json{{"epoch", r.epoch},       {"train_loss", r.train_loss}, {"train_acc", r.train_acc},
              {"val_loss", r.val_loss}, {"val_acc", r.val_acc},       {"lr", r.lr},
              {"improved", r.improved}};
}

std::string history_jsonl(const std::vector<EpochRecord>& history) {
  std::string out;
  for (const auto& r : history) out += to_json(r).dump() + "\n";
  return out;
}

json report_json(const ConfusionMatrix& matrix, const MetricsReport& report, const std::optional<RocCurve>& roc) {
  json j = to_json(report);
  j["confusion"] = to_json(matrix);
  if (roc) {
    json r = to_json(*roc);
    for (auto& c : r["per_class"])
      if (c["auc"].is_null()) c["auc"] = "undefined";
    if (r["macro_auc"].is_null()) r["macro_auc"] = "undefined";
    j["roc"] = std::move(r);
  }
  return j;
}

std::string summary_text(const MetricsReport& report) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "Accuracy %.4f\nMacro-F1 %.4f\n\n", report.accuracy, report.macro.f1);
  return std::string(buf) + format_report(report);
}

std::string file_stem(const std::string& name) {
  std::string out;
  for (char ch : name) {
    const bool ok = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9') || ch == '_' ||
                    ch == '-';
    out += ok ? ch : '_';
  }
  return out.empty() ? "_" : out;
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir))
    throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

void write_report(const std::filesystem::path& dir, const std::vector<EpochRecord>& history,
                  const ConfusionMatrix& matrix, const MetricsReport& report, const std::optional<RocCurve>& roc) {
  ensure_dir(dir);
  if (!history.empty()) write_text(dir / "history.jsonl", history_jsonl(history));
  write_text(dir / "report.json", report_json(matrix, report, roc).dump(2) + "\n");
  write_text(dir / "confusion.csv", confusion_csv(matrix));
  if (roc)
    for (const auto& c : roc->per_class) write_text(dir / ("roc_" + file_stem(c.name) + ".csv"), roc_csv(c));
  write_text(dir / "summary.txt", summary_text(report));
}

void write_meta(const std::filesystem::path& dir, const json& extra) {
  ensure_dir(dir);
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm);
  json j = extra.is_object() ? extra : json::object();
  j["timestamp"] = stamp;
  write_text(dir / "meta.json", j.dump(2) + "\n");
}

}  // namespace ds
