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

#include "train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "core/error.hpp"
#include "core/parallel.hpp"

namespace ds {

void TrainOptions::validate() const {
  if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (chunk_size < 1) throw ConfigError("chunk_size must be at least 1");
  if (!(adamw.lr > 0)) throw ConfigError("learning rate must be positive");
  if (!(clip_norm > 0)) throw ConfigError("clip norm must be positive");
  if (threads < 1) throw ConfigError("threads must be at least 1");
  if (max_steps < 0) throw ConfigError("max_steps must be non-negative");
}

std::vector<TensorF> prepare_inputs(const std::vector<ImageSample>& samples, int image_size,
                                    const Normalization& norm, int threads) {
  std::vector<TensorF> out(samples.size());
  parallel_for(samples.size(), threads, [&](std::size_t i) { out[i] = preprocess(samples[i].image, image_size, norm); });
  return out;
}

std::vector<std::vector<float>> predict_logits(const Model& model, const ParameterSet<float>& params,
                                               const std::vector<TensorF>& inputs, int threads) {
  std::vector<std::vector<float>> out(inputs.size());
  parallel_for(inputs.size(), threads, [&](std::size_t i) {
    NoGradGuard guard;
    const auto logits = model.forward(params, inputs[i]);
    out[i].assign(logits.data().begin(), logits.data().end());
  });
  return out;
}

namespace {

constexpr std::uint64_t kShuffleStream = 0x5348;
constexpr std::uint64_t kAugmentStream = 0xA06;

int argmax(std::span<const float> v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

// Per-sample loss. `train` selects the split; `index` is the sample's
// position within its split.
using SampleLoss = std::function<TensorF(const TensorF& input, const TensorF& logits, int label, bool train,
                                         std::size_t index)>;

TrainResult run_training(const Dataset& data, const Model& model, ParameterSet<float> params,
                         const TrainOptions& options, const SampleLoss& loss_fn) {
  options.validate();
  if (data.train.empty()) throw ContractError("training needs a non-empty train split");
  if (data.val.empty()) throw ContractError("training needs a non-empty val split");
  const int size = model.image_size();
  const auto train_inputs = options.augment ? std::vector<TensorF>{}
                                            : prepare_inputs(data.train, size, data.norm, options.threads);
  const auto val_inputs = prepare_inputs(data.val, size, data.norm, options.threads);

  AdamW<float> optimizer(options.adamw);
  TrainController controller(options.adamw.lr, options.controller);
  TrainResult result;
  const std::size_t n = data.train.size();
  std::vector<std::size_t> order(n);

  for (int epoch = 1; epoch <= options.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(options.seed, stream_id(kShuffleStream, static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(std::span(order));

    std::vector<double> sample_loss(n, 0.0);
    std::vector<int> sample_correct(n, 0);
    std::size_t seen = 0;
    bool step_limit = false;
    for (std::size_t begin = 0; begin < n; begin += static_cast<std::size_t>(options.batch_size)) {
      const std::size_t end = std::min(n, begin + static_cast<std::size_t>(options.batch_size));
      const std::size_t batch = end - begin;
      const float inv_batch = 1.0f / static_cast<float>(batch);
      const std::size_t chunk = static_cast<std::size_t>(options.chunk_size);
      const std::size_t chunks = (batch + chunk - 1) / chunk;
      std::vector<ParameterSet<float>> worker(chunks);
      parallel_for(chunks, options.threads, [&](std::size_t c) {
        worker[c] = params.clone();
        for (std::size_t k = begin + c * chunk; k < std::min(end, begin + (c + 1) * chunk); ++k) {
          const std::size_t idx = order[k];
          const auto& sample = data.train[idx];
          TensorF input;
          if (options.augment) {
            Rng aug_rng(options.seed, stream_id(kAugmentStream, static_cast<std::uint64_t>(epoch), idx));
            input = preprocess(augment(sample.image, aug_rng, options.augment_ranges), size, data.norm);
          } else {
            input = train_inputs[idx];
          }
          const auto logits = model.forward(worker[c], input);
          const auto loss = loss_fn(input, logits, sample.label, true, idx);
          const double value = loss.item();
          if (!std::isfinite(value))
            throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                               std::to_string(result.steps + 1) + " (" + sample.path + ")");
          sample_loss[k] = value;
          sample_correct[k] = argmax(logits.data()) == sample.label;
          backward(scale(loss, inv_batch));
        }
      });
      params.zero_grad();
      auto& entries = params.entries();
      for (std::size_t c = 0; c < chunks; ++c)
        for (std::size_t e = 0; e < entries.size(); ++e) {
          if (!entries[e].trainable) continue;
          const auto& src = worker[c].entries()[e].value;
          if (!src.has_grad()) continue;
          auto dst = entries[e].value.mutable_grad();
          const auto g = src.grad();
          for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += g[j];
        }
      clip_gradients(params, options.clip_norm);
      optimizer.step(params);
      params.zero_grad();
      ++result.steps;
      double batch_loss = 0.0;
      for (std::size_t k = begin; k < end; ++k) batch_loss += sample_loss[k];
      result.step_losses.push_back(batch_loss / static_cast<double>(batch));
      seen = end;
      if (options.max_steps > 0 && result.steps >= options.max_steps) {
        step_limit = true;
        break;
      }
    }

    std::vector<double> val_loss(data.val.size(), 0.0);
    std::vector<int> val_correct(data.val.size(), 0);
    parallel_for(data.val.size(), options.threads, [&](std::size_t i) {
      NoGradGuard guard;
      const auto logits = model.forward(params, val_inputs[i]);
      val_loss[i] = loss_fn(val_inputs[i], logits, data.val[i].label, false, i).item();
      val_correct[i] = argmax(logits.data()) == data.val[i].label;
    });

    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t k = 0; k < seen; ++k) {
      rec.train_loss += sample_loss[k];
      rec.train_acc += sample_correct[k];
    }
    rec.train_loss /= static_cast<double>(seen);
    rec.train_acc /= static_cast<double>(seen);
    for (std::size_t i = 0; i < val_loss.size(); ++i) {
      rec.val_loss += val_loss[i];
      rec.val_acc += val_correct[i];
    }
    rec.val_loss /= static_cast<double>(val_loss.size());
    rec.val_acc /= static_cast<double>(val_loss.size());
    if (!std::isfinite(rec.val_loss)) throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
    rec.lr = optimizer.lr();
    const auto decision = controller.step(rec.val_loss, params);
    rec.improved = decision.improved;
    optimizer.set_lr(decision.lr);
    result.history.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);
    if (decision.stop) {
      result.stopped_early = true;
      break;
    }
    if (step_limit) break;
  }

  result.best_epoch = controller.best_epoch();
  if (controller.snapshot()) params.assign_values(*controller.snapshot());
  result.params = std::move(params);
  return result;
}

}  // namespace

TrainResult train_teacher(const Dataset& data, const Model& model, ParameterSet<float> params,
                          const TrainOptions& options) {
  return run_training(data, model, std::move(params), options,
                      [](const TensorF&, const TensorF& logits, int label, bool, std::size_t) {
                        return cross_entropy(logits, label);
                      });
}

TrainResult distill_student(const Dataset& data, const Model& teacher, const ParameterSet<float>& teacher_params,
                            const Model& student, ParameterSet<float> params, const DistillLossSpec& loss,
                            const TrainOptions& options) {
  loss.validate();
  if (teacher.num_classes() != student.num_classes())
    throw ConfigError("teacher and student class counts differ");
  if (teacher.image_size() != student.image_size())
    throw ConfigError("teacher and student image sizes differ");
  const auto val_teacher =
      predict_logits(teacher, teacher_params, prepare_inputs(data.val, teacher.image_size(), data.norm, options.threads),
                     options.threads);
  const auto k = static_cast<std::int64_t>(teacher.num_classes());
  return run_training(data, student, std::move(params), options,
                      [&](const TensorF& input, const TensorF& logits, int label, bool train, std::size_t index) {
                        TensorF zt;
                        if (train) {
                          NoGradGuard guard;
                          zt = teacher.forward(teacher_params, input);
                        } else {
                          zt = TensorF::from({k}, val_teacher[index]);
                        }
                        return kd_loss(zt, logits, label, loss).total;
                      });
}

}  // namespace ds
