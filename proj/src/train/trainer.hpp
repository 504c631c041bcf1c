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
#include <functional>
#include <string>
#include <vector>

#include "data/dataset.hpp"
#include "data/transforms.hpp"
#include "nn/models.hpp"
#include "train/losses.hpp"
#include "train/optim.hpp"

namespace ds {

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  double lr = 0.0;
  bool improved = false;
};

struct TrainOptions {
  int max_epochs = 50;
  int batch_size = 32;
  AdamWOptions adamw;
  double clip_norm = 1.0;
  ControllerOptions controller;
  bool augment = true;
  AugmentRanges augment_ranges;
  std::uint64_t seed = 0;
  int threads = 1;
  /// Stops after this many optimizer steps; 0 means no limit.
  std::int64_t max_steps = 0;
  /// Samples per gradient chunk. Chunks are reduced in a fixed order, so the
  /// result depends on this value but never on `threads`.
  int chunk_size = 4;
  std::function<void(const EpochRecord&)> on_epoch;

  void validate() const;
};

struct TrainResult {
  ParameterSet<float> params;  // best-epoch weights
  std::vector<EpochRecord> history;
  std::vector<double> step_losses;  // mean batch loss per optimizer step
  int best_epoch = 0;
  bool stopped_early = false;
  std::int64_t steps = 0;
};

/// Preprocessed inputs for a split (no augmentation).
std::vector<TensorF> prepare_inputs(const std::vector<ImageSample>& samples, int image_size,
                                    const Normalization& norm, int threads = 1);

/// Inference over prepared inputs; row i holds the logits of inputs[i].
std::vector<std::vector<float>> predict_logits(const Model& model, const ParameterSet<float>& params,
                                               const std::vector<TensorF>& inputs, int threads = 1);

/// Cross-entropy training of any model on the train split, validated on val.
TrainResult train_teacher(const Dataset& data, const Model& model, ParameterSet<float> params,
                          const TrainOptions& options);

/// Knowledge distillation: the student minimizes the distillation loss against
/// a frozen teacher that sees the same (augmented) input.
TrainResult distill_student(const Dataset& data, const Model& teacher, const ParameterSet<float>& teacher_params,
                            const Model& student, ParameterSet<float> params, const DistillLossSpec& loss,
                            const TrainOptions& options);

}  // namespace ds
