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

#include "app/pipeline.hpp"

#include <cmath>
#include <cstdio>

#include "core/error.hpp"
#include "core/parallel.hpp"
#include "io/report.hpp"
#include "train/trainer.hpp"

namespace ds {

namespace {

constexpr std::uint64_t kLimeStream = 0x11AE;

std::string epoch_line(const char* stage, const EpochRecord& r) {
  char buf[192];
  std::snprintf(buf, sizeof buf, "%s epoch %d: train loss %.4f acc %.4f, val loss %.4f acc %.4f, lr %.1e%s", stage,
                r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc, r.lr, r.improved ? " *" : "");
  return buf;
}

nlohmann::json checkpoint_metrics(const TrainResult& t, const Evaluation& e, Split split) {
  const auto& best = t.history.at(static_cast<std::size_t>(t.best_epoch - 1));
  return {{"best_epoch", t.best_epoch},
          {"best_val_loss", best.val_loss},
          {"best_val_acc", best.val_acc},
          {"stopped_early", t.stopped_early},
          {"steps", t.steps},
          {"eval_split", split_name(split)},
          {"eval_accuracy", e.report.accuracy},
          {"eval_macro_f1", e.report.macro.f1}};
}

void check_dataset_fits(const Dataset& data, const Model& model) {
  if (data.num_classes() != model.num_classes())
    throw ConfigError("dataset has " + std::to_string(data.num_classes()) + " classes but the model expects " +
                      std::to_string(model.num_classes()));
}

}  // namespace

Dataset obtain_dataset(const RunConfig& config) {
  if (!config.dataset.empty()) return load_dataset(config.dataset);
  SyntheticSpec spec = config.synthetic;
  spec.seed = config.seed;
  return make_synthetic(spec);
}

Split evaluation_split(const Dataset& data) { return data.test.empty() ? Split::kVal : Split::kTest; }

Evaluation evaluate_model(const Model& model, const ParameterSet<float>& params, const Dataset& data, Split split,
                          int threads) {
  const auto& samples = data.split(split);
  if (samples.empty()) throw ContractError(std::string("split '") + split_name(split) + "' is empty");
  check_dataset_fits(data, model);
  const auto logits =
      predict_logits(model, params, prepare_inputs(samples, model.image_size(), data.norm, threads), threads);
  Evaluation e;
  std::vector<int> labels;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& z = logits[i];
    double zmax = z[0];
    int arg = 0;
    for (std::size_t k = 1; k < z.size(); ++k)
      if (z[k] > zmax) {
        zmax = z[k];
        arg = static_cast<int>(k);
      }
    std::vector<double> p(z.size());
    double total = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) total += p[k] = std::exp(static_cast<double>(z[k]) - zmax);
    for (auto& v : p) v /= total;
    e.probabilities.push_back(std::move(p));
    e.predictions.push_back(arg);
    labels.push_back(samples[i].label);
  }
  e.matrix = confusion_matrix(labels, e.predictions, data.num_classes(), data.class_names);
  e.report = classification_report(e.matrix);
  e.roc = roc_auc(e.probabilities, labels, data.class_names);
  return e;
}

std::filesystem::path run_make_synthetic(const RunConfig& config) {
  if (!config.dataset.empty()) throw ConfigError("make-synthetic needs a config without a dataset manifest");
  const auto data = obtain_dataset(config);
  ensure_dir(config.out);
  save_dataset(data, config.out);
  write_meta(config.out, {{"command", "make-synthetic"}, {"seed", config.seed}});
  return std::filesystem::path(config.out) / "manifest.json";
}

StageResult run_train_teacher(const RunConfig& config, const ProgressFn& progress) {
  config.validate();
  const auto data = obtain_dataset(config);
  const TeacherModel teacher(config.teacher);
  check_dataset_fits(data, teacher);
  auto options = config.train_options();
  if (progress) options.on_epoch = [&](const EpochRecord& r) { progress(epoch_line("teacher", r)); };
  StageResult out;
  out.training = train_teacher(data, teacher, teacher.init(config.seed), options);
  const auto split = evaluation_split(data);
  out.evaluation = evaluate_model(teacher, out.training.params, data, split, config.threads);
  ensure_dir(config.out);
  out.checkpoint = std::filesystem::path(config.out) / "teacher.kdvc";
  save_checkpoint(out.checkpoint, teacher, out.training.params,
                  CheckpointMeta{out.training.best_epoch, config.seed,
                                 checkpoint_metrics(out.training, out.evaluation, split)});
  write_report(config.out, out.training.history, out.evaluation.matrix, out.evaluation.report, out.evaluation.roc);
  write_meta(config.out, {{"command", "train-teacher"}, {"seed", config.seed}, {"threads", config.threads}});
  return out;
}

StageResult run_distill_student(const RunConfig& config, const std::filesystem::path& teacher_checkpoint,
                                const ProgressFn& progress) {
  config.validate();
  const auto data = obtain_dataset(config);
  const auto teacher = load_checkpoint(teacher_checkpoint);
  if (teacher.model->kind() != ModelKind::kTeacher)
    throw ConfigError("'" + teacher_checkpoint.string() + "' does not hold a teacher");
  const StudentModel student(config.student);
  check_dataset_fits(data, student);
  auto options = config.train_options();
  if (progress) options.on_epoch = [&](const EpochRecord& r) { progress(epoch_line("student", r)); };
  StageResult out;
  out.training = distill_student(data, *teacher.model, teacher.params, student, student.init(config.seed),
                                 config.loss(), options);
  const auto split = evaluation_split(data);
  out.evaluation = evaluate_model(student, out.training.params, data, split, config.threads);
  ensure_dir(config.out);
  out.checkpoint = std::filesystem::path(config.out) / "student.kdvc";
  save_checkpoint(out.checkpoint, student, out.training.params,
                  CheckpointMeta{out.training.best_epoch, config.seed,
                                 checkpoint_metrics(out.training, out.evaluation, split)});
  write_report(config.out, out.training.history, out.evaluation.matrix, out.evaluation.report, out.evaluation.roc);
  write_meta(config.out, {{"command", "distill-student"},
                          {"seed", config.seed},
                          {"threads", config.threads},
                          {"teacher", teacher_checkpoint.string()}});
  return out;
}

Evaluation run_evaluate_checkpoint(const RunConfig& config, const std::filesystem::path& checkpoint,
                                   std::optional<Split> split) {
  const auto loaded = load_checkpoint(checkpoint);
  const auto data = obtain_dataset(config);
  const auto s = split.value_or(evaluation_split(data));
  auto e = evaluate_model(*loaded.model, loaded.params, data, s, config.threads);
  write_report(config.out, {}, e.matrix, e.report, e.roc);
  write_meta(config.out, {{"command", "evaluate"}, {"checkpoint", checkpoint.string()}, {"split", split_name(s)}});
  return e;
}

MetricsReport run_evaluate_confusion(const RunConfig& config, const std::filesystem::path& confusion_csv_path) {
  const auto bytes = read_file(confusion_csv_path);
  const auto matrix = parse_confusion_csv(std::string(bytes.begin(), bytes.end()));
  auto report = classification_report(matrix);
  write_report(config.out, {}, matrix, report, std::nullopt);
  write_meta(config.out, {{"command", "evaluate"}, {"confusion", confusion_csv_path.string()}});
  return report;
}

SaliencyMap run_explain(const RunConfig& config, const std::filesystem::path& checkpoint,
                        const ExplainRequest& request) {
  const auto method = parse_method(request.method);
  const auto loaded = load_checkpoint(checkpoint);
  const Model& model = *loaded.model;
  Image image;
  Normalization norm;
  std::optional<Box> region;
  std::optional<int> label;
  std::string source;
  if (!request.image.empty()) {
    image = to_float(read_ppm(request.image));
    source = request.image.string();
  } else {
    const auto data = obtain_dataset(config);
    const auto& samples = data.split(evaluation_split(data));
    if (request.index < 0 || static_cast<std::size_t>(request.index) >= samples.size())
      throw IndexError("sample index " + std::to_string(request.index) + " outside [0, " +
                       std::to_string(samples.size()) + ")");
    const auto& s = samples[static_cast<std::size_t>(request.index)];
    image = s.image;
    norm = data.norm;
    region = s.region;
    label = s.label;
    source = s.path;
  }
  if (image.height != model.image_size() || image.width != model.image_size())
    image = resize_bilinear(image, model.image_size(), model.image_size());
  const ExplainContext ctx{model, loaded.params, norm, config.threads};
  const auto proba = predict_proba(ctx, image);
  int predicted = 0;
  for (std::size_t k = 1; k < proba.size(); ++k)
    if (proba[k] > proba[static_cast<std::size_t>(predicted)]) predicted = static_cast<int>(k);
  const int c = request.class_index >= 0 ? request.class_index : predicted;
  if (c >= model.num_classes())
    throw IndexError("class " + std::to_string(c) + " outside [0, " + std::to_string(model.num_classes()) + ")");

  const auto& ec = config.explain;
  SaliencyMap map;
  switch (method) {
    case CamMethod::kGradCam: map = grad_cam(ctx, image, c, ec.target); break;
    case CamMethod::kGradCamPP: map = grad_cam_pp(ctx, image, c, ec.target); break;
    case CamMethod::kScoreCam: map = score_cam(ctx, image, c, ec.target, ScoreCamOptions{ec.top_channels}); break;
    case CamMethod::kLime: {
      Rng rng(config.seed, stream_id(kLimeStream, static_cast<std::uint64_t>(request.index)));
      LimeOptions lo;
      lo.grid = ec.lime_grid;
      lo.samples = ec.lime_samples;
      map = lime_explain(ctx, image, c, rng, lo);
      break;
    }
  }
  ensure_dir(config.out);
  const std::string stem = std::string("explain_") + method_name(method);
  write_ppm(std::filesystem::path(config.out) / (stem + ".ppm"), render_overlay(image, map, ec.opacity));
  auto j = to_json(map);
  j["source"] = source;
  j["predicted"] = predicted;
  j["probabilities"] = proba;
  if (label) j["label"] = *label;
  if (region) {
    const auto peak = map.argmax();
    j["region"] = {region->x0, region->y0, region->x1, region->y1};
    j["argmax_in_region"] = region->contains(peak[1], peak[0]);
  }
  write_text(std::filesystem::path(config.out) / (stem + ".json"), j.dump(2) + "\n");
  return map;
}

GradCheckSuite run_gradcheck(const RunConfig& config) {
  auto suite = run_gradcheck_suite(config.seed);
  ensure_dir(config.out);
  write_text(std::filesystem::path(config.out) / "gradcheck.json", to_json(suite).dump(2) + "\n");
  write_meta(config.out, {{"command", "gradcheck"}, {"seconds", suite.seconds}});
  return suite;
}

}  // namespace ds
