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
#include <memory>
#include <string>
#include <vector>

#include "core/ops.hpp"
#include "nn/parameters.hpp"

namespace ds {

// Transformer building blocks. Every block reads its weights from a
// ParameterSet under a name prefix, so the same code serves float training,
// double gradient checks, and per-worker parameter copies.

/// x W + b, where W is "<prefix>.weight" [in, out] and b "<prefix>.bias" [out]
/// when present. If "<prefix>.lora_a" [r, in] and "<prefix>.lora_b" [out, r]
/// exist, adds lora_factor * (x A^T) B^T.
template <typename Real>
Tensor<Real> linear(const ParameterSet<Real>& params, const std::string& prefix, const Tensor<Real>& x,
                    Real lora_factor = Real(0));

template <typename Real>
Tensor<Real> layer_norm(const ParameterSet<Real>& params, const std::string& prefix, const Tensor<Real>& x);

// ---- patch embedding ----

struct PatchGrid {
  std::int64_t side = 0;   // image side in pixels
  std::int64_t patch = 0;  // patch side in pixels
  std::int64_t per_side() const { return side / patch; }
  std::int64_t count() const { return per_side() * per_side(); }
  std::int64_t patch_dim() const { return 3 * patch * patch; }
};

/// [3, S, S] -> [N, 3 P^2], patches in row-major grid order, each flattened
/// channel-major. Throws ShapeError when S is not divisible by P.
template <typename Real>
Tensor<Real> patchify(const Tensor<Real>& image, std::int64_t patch);

/// Registers "<prefix>.proj" (3P^2 -> dim), "<prefix>.pos" [N(+1), dim] and,
/// with a class token, "<prefix>.cls" [1, dim].
template <typename Real>
void init_patch_embed(ParameterSet<Real>& params, const std::string& prefix, const PatchGrid& grid, std::int64_t dim,
                      bool class_token, Rng& rng);

/// z0 = [cls; x_p E] + E_pos. Returns [N(+1), dim].
template <typename Real>
Tensor<Real> patch_embed(const ParameterSet<Real>& params, const std::string& prefix, const Tensor<Real>& image,
                         const PatchGrid& grid, bool class_token);

// ---- attention ----

struct MhsaOptions {
  int heads = 1;
  double lora_factor = 0.0;
};

/// Registers q, k, v (dim -> dim, no bias) and o (dim -> dim, with bias).
template <typename Real>
void init_mhsa(ParameterSet<Real>& params, const std::string& prefix, std::int64_t dim, Rng& rng);

/// Concat(h_1..h_H) W^O with per-head scaled dot-product attention over all
/// tokens; `key_bias` ([N], optional) is added to every logit row.
template <typename Real>
Tensor<Real> mhsa(const ParameterSet<Real>& params, const std::string& prefix, const Tensor<Real>& x,
                  const MhsaOptions& options, const Tensor<Real>& key_bias = {});

template <typename Real>
void init_ffn(ParameterSet<Real>& params, const std::string& prefix, std::int64_t dim, std::int64_t hidden, Rng& rng);

/// GELU(x W1 + b1) W2 + b2.
template <typename Real>
Tensor<Real> ffn(const ParameterSet<Real>& params, const std::string& prefix, const Tensor<Real>& x);

// ---- windows ----

/// Index tables for (shifted) window attention over an h x w token grid.
/// Rows are reordered window-major after a cyclic shift by (-shift, -shift).
struct WindowLayout {
  int grid_h = 0, grid_w = 0, window = 0, shift = 0;
  std::int64_t num_windows = 0;
  std::vector<std::int64_t> order;           // slot -> grid row
  std::vector<std::int64_t> inverse;         // grid row -> slot
  std::vector<std::int64_t> relative_index;  // [T, T] -> row of the (2M-1)^2 bias table
  std::vector<std::uint8_t> blocked;         // [G, T, T]; empty when shift == 0

  std::int64_t tokens_per_window() const { return static_cast<std::int64_t>(window) * window; }
  std::int64_t table_size() const { return static_cast<std::int64_t>(2 * window - 1) * (2 * window - 1); }

  template <typename Real>
  std::shared_ptr<const std::vector<Real>> mask() const;

 private:
  friend WindowLayout make_window_layout(int, int, int, int);
  std::shared_ptr<const std::vector<float>> mask_f_;
  std::shared_ptr<const std::vector<double>> mask_d_;
};

template <>
std::shared_ptr<const std::vector<float>> WindowLayout::mask<float>() const;
template <>
std::shared_ptr<const std::vector<double>> WindowLayout::mask<double>() const;

/// Additive logit used for blocked pairs.
constexpr double kMaskedLogit = -1e9;

/// Throws ShapeError unless h and w are divisible by the window and
/// 0 <= shift < window.
WindowLayout make_window_layout(int grid_h, int grid_w, int window, int shift);

/// [h*w, D] -> [G, M^2, D]
template <typename Real>
Tensor<Real> window_partition(const Tensor<Real>& grid_tokens, const WindowLayout& layout);
/// [G, M^2, D] -> [h*w, D]; exact inverse of window_partition.
template <typename Real>
Tensor<Real> window_reverse(const Tensor<Real>& windows, const WindowLayout& layout);

/// Registers the MHSA projections plus "<prefix>.rel_bias" [(2M-1)^2, heads].
template <typename Real>
void init_window_attention(ParameterSet<Real>& params, const std::string& prefix, std::int64_t dim, int heads,
                           int window, Rng& rng);

/// Softmax(QK^T / sqrt(d_k) + B + mask) V per window. Input [G, M^2, D].
template <typename Real>
Tensor<Real> window_attention(const ParameterSet<Real>& params, const std::string& prefix, const Tensor<Real>& windows,
                              int heads, const WindowLayout& layout);

/// Attention probabilities of window_attention, [G, H, T, T]; forward only.
template <typename Real>
std::vector<Real> window_attention_weights(const ParameterSet<Real>& params, const std::string& prefix,
                                           const Tensor<Real>& windows, int heads, const WindowLayout& layout);

// ---- region-aware attention ----

/// Registers MHSA projections and the region net "<prefix>.region.fc1"
/// (D -> D/2) and "<prefix>.region.fc2" (D/2 -> 1).
template <typename Real>
void init_region_attention(ParameterSet<Real>& params, const std::string& prefix, std::int64_t dim, Rng& rng);

/// Per-token scores r_j from the region net, [N, 1].
template <typename Real>
Tensor<Real> region_scores(const ParameterSet<Real>& params, const std::string& prefix, const Tensor<Real>& x);

/// MHSA whose logits get the key-wise bias R_ij = r_j, shared by all heads.
/// Token 0 is the class token and receives bias 0.
template <typename Real>
Tensor<Real> region_aware_attention(const ParameterSet<Real>& params, const std::string& prefix, const Tensor<Real>& x,
                                    const MhsaOptions& options);

/// Attention probabilities of region_aware_attention, [1, H, N, N].
template <typename Real>
std::vector<Real> region_attention_weights(const ParameterSet<Real>& params, const std::string& prefix,
                                           const Tensor<Real>& x, const MhsaOptions& options);

// ---- residual blocks (pre-norm) ----

enum class MixerKind { kGlobal, kWindow, kRegion };

struct BlockSpec {
  std::int64_t dim = 0;
  int heads = 1;
  MixerKind mixer = MixerKind::kGlobal;
  const WindowLayout* layout = nullptr;  // kWindow only
  double lora_factor = 0.0;
  int ffn_ratio = 4;
};

template <typename Real>
void init_block(ParameterSet<Real>& params, const std::string& prefix, const BlockSpec& spec, Rng& rng);

/// x + mixer(norm1(x)), then x + ffn(norm2(x)). `mixer_input` receives
/// norm1(x) when given.
template <typename Real>
Tensor<Real> transformer_block(const ParameterSet<Real>& params, const std::string& prefix, const Tensor<Real>& x,
                               const BlockSpec& spec, Tensor<Real>* mixer_input = nullptr);

/// 2x2 neighbor concat -> layer norm (4D) -> linear 4D -> out_dim, no bias.
template <typename Real>
void init_patch_merging(ParameterSet<Real>& params, const std::string& prefix, std::int64_t dim, std::int64_t out_dim,
                        Rng& rng);
template <typename Real>
Tensor<Real> patch_merging(const ParameterSet<Real>& params, const std::string& prefix, const Tensor<Real>& x, int grid_h,
                           int grid_w);

}  // namespace ds
