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

#include "io/config.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "core/error.hpp"
#include "core/json_read.hpp"

namespace ds {

using json = nlohmann::json;

void RunConfig::validate() const {
  if (threads < 1) throw ConfigError("threads must be at least 1");
  if (out.empty()) throw ConfigError("output directory must not be empty");
  if (!(train.lr > 0)) throw ConfigError("lr must be positive");
  if (train.batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (train.epochs < 1) throw ConfigError("epochs must be at least 1");
  if (train.weight_decay < 0) throw ConfigError("weight_decay must be non-negative");
  if (!(train.clip_norm > 0)) throw ConfigError("clip_norm must be positive");
  if (!(train.lr_factor > 0 && train.lr_factor < 1)) throw ConfigError("lr_factor must be in (0, 1)");
  if (train.lr_patience < 1) throw ConfigError("lr_patience must be at least 1");
  if (train.min_lr < 0) throw ConfigError("min_lr must be non-negative");
  if (train.early_stop_patience < 1) throw ConfigError("early_stop_patience must be at least 1");
  if (train.chunk_size < 1) throw ConfigError("chunk_size must be at least 1");
  loss().validate();
  if (synthetic.classes < 2) throw ConfigError("synthetic classes must be at least 2");
  if (synthetic.side < 8) throw ConfigError("synthetic side must be at least 8");
  if (synthetic.train_per_class < 1 || synthetic.val_per_class < 1 || synthetic.test_per_class < 0)
    throw ConfigError("synthetic split sizes must be positive");
  if (teacher.num_classes != student.num_classes) throw ConfigError("teacher and student class counts differ");
  if (teacher.image_size != student.image_size) throw ConfigError("teacher and student image sizes differ");
  if (dataset.empty() && teacher.num_classes != synthetic.classes)
    throw ConfigError("model class count differs from the synthetic class count");
  if (dataset.empty() && teacher.image_size != synthetic.side)
    throw ConfigError("model image size differs from the synthetic side");
  if (explain.top_channels < 1) throw ConfigError("top_channels must be at least 1");
  if (explain.lime_grid < 1) throw ConfigError("lime_grid must be at least 1");
  if (explain.lime_samples < 2) throw ConfigError("lime_samples must be at least 2");
  if (!(explain.opacity >= 0 && explain.opacity <= 1)) throw ConfigError("opacity must be in [0, 1]");
  teacher.validate();
  student.validate();
}

TrainOptions RunConfig::train_options() const {
  TrainOptions o;
  o.max_epochs = train.epochs;
  o.batch_size = train.batch_size;
  o.adamw.lr = train.lr;
  o.adamw.weight_decay = train.weight_decay;
  o.clip_norm = train.clip_norm;
  o.controller.factor = train.lr_factor;
  o.controller.lr_patience = train.lr_patience;
  o.controller.min_lr = train.min_lr;
  o.controller.stop_patience = train.early_stop_patience;
  o.augment = train.augment;
  o.seed = seed;
  o.threads = threads;
  o.chunk_size = train.chunk_size;
  return o;
}

DistillLossSpec RunConfig::loss() const { return DistillLossSpec{train.alpha, train.temperature}; }

void to_json(json& j, const SyntheticSpec& s) {
  j = json{{"classes", s.classes},
           {"side", s.side},
           {"train_per_class", s.train_per_class},
           {"val_per_class", s.val_per_class},
           {"test_per_class", s.test_per_class}};
}

void from_json(const json& j, SyntheticSpec& s) {
  const std::string where = "synthetic config";
  reject_unknown(j, {"classes", "side", "train_per_class", "val_per_class", "test_per_class"}, where);
  read_key(j, "classes", s.classes, where);
  read_key(j, "side", s.side, where);
  read_key(j, "train_per_class", s.train_per_class, where);
  read_key(j, "val_per_class", s.val_per_class, where);
  read_key(j, "test_per_class", s.test_per_class, where);
}

namespace {

json train_json(const TrainHyper& t) {
  return json{{"lr", t.lr},
              {"batch_size", t.batch_size},
              {"epochs", t.epochs},
              {"alpha", t.alpha},
              {"temperature", t.temperature},
              {"weight_decay", t.weight_decay},
              {"clip_norm", t.clip_norm},
              {"lr_factor", t.lr_factor},
              {"lr_patience", t.lr_patience},
              {"min_lr", t.min_lr},
              {"early_stop_patience", t.early_stop_patience},
              {"augment", t.augment},
              {"chunk_size", t.chunk_size}};
}

void read_train(const json& j, TrainHyper& t) {
  const std::string where = "train config";
  reject_unknown(j,
                 {"lr", "batch_size", "epochs", "alpha", "temperature", "weight_decay", "clip_norm", "lr_factor",
                  "lr_patience", "min_lr", "early_stop_patience", "augment", "chunk_size"},
                 where);
  read_key(j, "lr", t.lr, where);
  read_key(j, "batch_size", t.batch_size, where);
  read_key(j, "epochs", t.epochs, where);
  read_key(j, "alpha", t.alpha, where);
  read_key(j, "temperature", t.temperature, where);
  read_key(j, "weight_decay", t.weight_decay, where);
  read_key(j, "clip_norm", t.clip_norm, where);
  read_key(j, "lr_factor", t.lr_factor, where);
  read_key(j, "lr_patience", t.lr_patience, where);
  read_key(j, "min_lr", t.min_lr, where);
  read_key(j, "early_stop_patience", t.early_stop_patience, where);
  read_key(j, "augment", t.augment, where);
  read_key(j, "chunk_size", t.chunk_size, where);
}

json explain_json(const ExplainConfig& e) {
  return json{{"method", e.method},         {"target", e.target},
              {"top_channels", e.top_channels}, {"lime_grid", e.lime_grid},
              {"lime_samples", e.lime_samples}, {"opacity", e.opacity}};
}

void read_explain(const json& j, ExplainConfig& e) {
  const std::string where = "explain config";
  reject_unknown(j, {"method", "target", "top_channels", "lime_grid", "lime_samples", "opacity"}, where);
  read_key(j, "method", e.method, where);
  read_key(j, "target", e.target, where);
  read_key(j, "top_channels", e.top_channels, where);
  read_key(j, "lime_grid", e.lime_grid, where);
  read_key(j, "lime_samples", e.lime_samples, where);
  read_key(j, "opacity", e.opacity, where);
  if (e.method != "gradcam" && e.method != "gradcampp" && e.method != "scorecam" && e.method != "lime")
    throw ConfigError("unknown explain method '" + e.method + "'");
}

}  // namespace

void to_json(json& j, const RunConfig& c) {
  j = json{{"dataset", c.dataset},
           {"synthetic", c.synthetic},
           {"teacher", c.teacher},
           {"student", c.student},
           {"train", train_json(c.train)},
           {"explain", explain_json(c.explain)},
           {"seed", c.seed},
           {"threads", c.threads},
           {"out", c.out}};
}

void from_json(const json& j, RunConfig& c) {
  const std::string where = "run config";
  reject_unknown(j, {"dataset", "synthetic", "teacher", "student", "train", "explain", "seed", "threads", "out"},
                 where);
  c = RunConfig{};
  read_key(j, "dataset", c.dataset, where);
  if (j.contains("synthetic")) from_json(j.at("synthetic"), c.synthetic);
  if (j.contains("teacher")) from_json(j.at("teacher"), c.teacher);
  if (j.contains("student")) from_json(j.at("student"), c.student);
  if (j.contains("train")) read_train(j.at("train"), c.train);
  if (j.contains("explain")) read_explain(j.at("explain"), c.explain);
  read_key(j, "seed", c.seed, where);
  read_key(j, "threads", c.threads, where);
  read_key(j, "out", c.out, where);
  c.validate();
}

RunConfig parse_run_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return j.get<RunConfig>();
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  auto config = parse_run_config(ss.str());
  if (!config.dataset.empty() && std::filesystem::path(config.dataset).is_relative())
    config.dataset = (path.parent_path() / config.dataset).lexically_normal().string();
  return config;
}

std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, const char* env, std::uint64_t config_seed) {
  if (flag) return *flag;
  if (env != nullptr && *env != '\0') {
    const std::string text(env);
    if (text.find_first_not_of("0123456789") != std::string::npos)
      throw ConfigError("DISTILLSCOPE_SEED must be an unsigned integer, got '" + text + "'");
    errno = 0;
    const auto value = std::strtoull(text.c_str(), nullptr, 10);
    if (errno == ERANGE) throw ConfigError("DISTILLSCOPE_SEED is out of range");
    return value;
  }
  return config_seed;
}

}  // namespace ds
