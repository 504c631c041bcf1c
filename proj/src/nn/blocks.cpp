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

#include "nn/blocks.hpp"

#include <cmath>

#include "core/error.hpp"

namespace ds {

namespace {

using Index = std::shared_ptr<const std::vector<std::int64_t>>;

template <typename Real>
Tensor<Real> linear_impl(const ParameterSet<Real>& params, const std::string& prefix, const Tensor<Real>& x,
                         Real lora_factor) {
  auto y = matmul(x, params.get(prefix + ".weight"));
  if (params.contains(prefix + ".lora_a")) {
    const auto& a = params.get(prefix + ".lora_a");
    const auto& b = params.get(prefix + ".lora_b");
    y = add(y, scale(matmul(matmul(x, transpose(a)), transpose(b)), lora_factor));
  }
  if (params.contains(prefix + ".bias")) y = add(y, params.get(prefix + ".bias"));
  return y;
}

}  // namespace

template <typename Real>
Tensor<Real> linear(const ParameterSet<Real>& params, const std::string& prefix, const Tensor<Real>& x,
                    Real lora_factor) {
  return linear_impl(params, prefix, x, lora_factor);
}

template <typename Real>
Tensor<Real> layer_norm(const ParameterSet<Real>& params, const std::string& prefix, const Tensor<Real>& x) {
  return layer_norm(x, params.get(prefix + ".weight"), params.get(prefix + ".bias"));
}

template <typename Real>
Tensor<Real> patchify(const Tensor<Real>& image, std::int64_t patch) {
  if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != image.dim(2))
    throw ShapeError("patchify expects [3,S,S], got " + shape_str(image.shape()));
  const std::int64_t s = image.dim(1);
  if (patch <= 0 || s % patch != 0)
    throw ShapeError("image side " + std::to_string(s) + " is not divisible by patch " + std::to_string(patch));
  const std::int64_t g = s / patch;
  auto idx = std::make_shared<std::vector<std::int64_t>>();
  idx->reserve(static_cast<std::size_t>(3 * s * s));
  for (std::int64_t py = 0; py < g; ++py)
    for (std::int64_t px = 0; px < g; ++px)
      for (std::int64_t c = 0; c < 3; ++c)
        for (std::int64_t iy = 0; iy < patch; ++iy)
          for (std::int64_t ix = 0; ix < patch; ++ix)
            idx->push_back(c * s * s + (py * patch + iy) * s + px * patch + ix);
  return take(image, Index(idx), {g * g, 3 * patch * patch});
}

template <typename Real>
void init_patch_embed(ParameterSet<Real>& params, const std::string& prefix, const PatchGrid& grid, std::int64_t dim,
                      bool class_token, Rng& rng) {
  init_linear(params, prefix + ".proj", grid.patch_dim(), dim, true, rng);
  if (class_token) params.add(prefix + ".cls", truncated_normal<Real>({1, dim}, rng));
  params.add(prefix + ".pos", truncated_normal<Real>({grid.count() + (class_token ? 1 : 0), dim}, rng));
}

template <typename Real>
Tensor<Real> patch_embed(const ParameterSet<Real>& params, const std::string& prefix, const Tensor<Real>& image,
                         const PatchGrid& grid, bool class_token) {
  if (image.dim(1) != grid.side)
    throw ShapeError("expected image side " + std::to_string(grid.side) + ", got " + shape_str(image.shape()));
  auto tokens = linear(params, prefix + ".proj", patchify(image, grid.patch));
  if (class_token) tokens = concat<Real>({params.get(prefix + ".cls"), tokens}, 0);
  const auto& pos = params.get(prefix + ".pos");
  return add(tokens, pos);
}

template <typename Real>
void init_mhsa(ParameterSet<Real>& params, const std::string& prefix, std::int64_t dim, Rng& rng) {
  init_linear(params, prefix + ".q", dim, dim, false, rng);
  init_linear(params, prefix + ".k", dim, dim, false, rng);
  init_linear(params, prefix + ".v", dim, dim, false, rng);
  init_linear(params, prefix + ".o", dim, dim, true, rng);
}

template <typename Real>
Tensor<Real> mhsa(const ParameterSet<Real>& params, const std::string& prefix, const Tensor<Real>& x,
                  const MhsaOptions& options, const Tensor<Real>& key_bias) {
  if (x.rank() != 2 || x.dim(1) % options.heads != 0)
    throw ShapeError("mhsa expects [N,D] with D divisible by heads, got " + shape_str(x.shape()));
  const auto f = static_cast<Real>(options.lora_factor);
  const auto q = linear(params, prefix + ".q", x, f);
  const auto k = linear(params, prefix + ".k", x, f);
  const auto v = linear(params, prefix + ".v", x, f);
  AttentionInputs<Real> in;
  in.heads = options.heads;
  in.key_bias = key_bias;
  return linear(params, prefix + ".o", attention(q, k, v, in), f);
}

template <typename Real>
void init_ffn(ParameterSet<Real>& params, const std::string& prefix, std::int64_t dim, std::int64_t hidden, Rng& rng) {
  init_linear(params, prefix + ".fc1", dim, hidden, true, rng);
  init_linear(params, prefix + ".fc2", hidden, dim, true, rng);
}

template <typename Real>
Tensor<Real> ffn(const ParameterSet<Real>& params, const std::string& prefix, const Tensor<Real>& x) {
  return linear(params, prefix + ".fc2", gelu(linear(params, prefix + ".fc1", x)));
}

WindowLayout make_window_layout(int grid_h, int grid_w, int window, int shift) {
  if (window <= 0 || grid_h % window != 0 || grid_w % window != 0)
    throw ShapeError("token grid " + std::to_string(grid_h) + "x" + std::to_string(grid_w) +
                     " is not divisible by window " + std::to_string(window));
  if (shift < 0 || shift >= window) throw ShapeError("window shift must be in [0, window)");
  WindowLayout l;
  l.grid_h = grid_h;
  l.grid_w = grid_w;
  l.window = window;
  l.shift = shift;
  const int wh = grid_h / window, ww = grid_w / window;
  l.num_windows = static_cast<std::int64_t>(wh) * ww;
  const std::int64_t t = l.tokens_per_window();
  const std::int64_t n = static_cast<std::int64_t>(grid_h) * grid_w;
  l.order.resize(static_cast<std::size_t>(n));
  l.inverse.resize(static_cast<std::size_t>(n));
  std::vector<int> region(static_cast<std::size_t>(n));
  auto band = [&](int v, int size) { return v < size - window ? 0 : v < size - shift ? 1 : 2; };
  for (int wy = 0; wy < wh; ++wy)
    for (int wx = 0; wx < ww; ++wx)
      for (int iy = 0; iy < window; ++iy)
        for (int ix = 0; ix < window; ++ix) {
          const int sy = wy * window + iy, sx = wx * window + ix;  // shifted frame
          const int y = (sy + shift) % grid_h, x = (sx + shift) % grid_w;
          const std::int64_t slot = (static_cast<std::int64_t>(wy) * ww + wx) * t + iy * window + ix;
          l.order[static_cast<std::size_t>(slot)] = static_cast<std::int64_t>(y) * grid_w + x;
          l.inverse[static_cast<std::size_t>(static_cast<std::int64_t>(y) * grid_w + x)] = slot;
          region[static_cast<std::size_t>(slot)] = shift ? band(sy, grid_h) * 3 + band(sx, grid_w) : 0;
        }
  l.relative_index.resize(static_cast<std::size_t>(t * t));
  for (std::int64_t a = 0; a < t; ++a)
    for (std::int64_t b = 0; b < t; ++b) {
      const std::int64_t dy = a / window - b / window + window - 1;
      const std::int64_t dx = a % window - b % window + window - 1;
      l.relative_index[static_cast<std::size_t>(a * t + b)] = dy * (2 * window - 1) + dx;
    }
  if (shift) {
    l.blocked.resize(static_cast<std::size_t>(l.num_windows * t * t));
    for (std::int64_t g = 0; g < l.num_windows; ++g)
      for (std::int64_t a = 0; a < t; ++a)
        for (std::int64_t b = 0; b < t; ++b)
          l.blocked[static_cast<std::size_t>((g * t + a) * t + b)] =
              region[static_cast<std::size_t>(g * t + a)] != region[static_cast<std::size_t>(g * t + b)];
    auto mf = std::make_shared<std::vector<float>>(l.blocked.size());
    auto md = std::make_shared<std::vector<double>>(l.blocked.size());
    for (std::size_t i = 0; i < l.blocked.size(); ++i) {
      (*mf)[i] = l.blocked[i] ? static_cast<float>(kMaskedLogit) : 0.f;
      (*md)[i] = l.blocked[i] ? kMaskedLogit : 0.0;
    }
    l.mask_f_ = std::move(mf);
    l.mask_d_ = std::move(md);
  }
  return l;
}

template <>
std::shared_ptr<const std::vector<float>> WindowLayout::mask<float>() const {
  return mask_f_;
}
template <>
std::shared_ptr<const std::vector<double>> WindowLayout::mask<double>() const {
  return mask_d_;
}

template <typename Real>
Tensor<Real> window_partition(const Tensor<Real>& grid_tokens, const WindowLayout& layout) {
  const std::int64_t n = static_cast<std::int64_t>(layout.order.size());
  if (grid_tokens.rank() != 2 || grid_tokens.dim(0) != n)
    throw ShapeError("window_partition expects [" + std::to_string(n) + ",D], got " + shape_str(grid_tokens.shape()));
  const std::int64_t d = grid_tokens.dim(1);
  auto idx = std::make_shared<std::vector<std::int64_t>>();
  idx->reserve(static_cast<std::size_t>(n * d));
  for (auto row : layout.order)
    for (std::int64_t c = 0; c < d; ++c) idx->push_back(row * d + c);
  return take(grid_tokens, Index(idx), {layout.num_windows, layout.tokens_per_window(), d});
}

template <typename Real>
Tensor<Real> window_reverse(const Tensor<Real>& windows, const WindowLayout& layout) {
  const std::int64_t n = static_cast<std::int64_t>(layout.order.size());
  if (static_cast<std::int64_t>(windows.numel()) % n != 0)
    throw ShapeError("window_reverse got " + shape_str(windows.shape()));
  const std::int64_t d = static_cast<std::int64_t>(windows.numel()) / n;
  auto idx = std::make_shared<std::vector<std::int64_t>>();
  idx->reserve(static_cast<std::size_t>(n * d));
  for (auto slot : layout.inverse)
    for (std::int64_t c = 0; c < d; ++c) idx->push_back(slot * d + c);
  return take(windows, Index(idx), {n, d});
}

template <typename Real>
void init_window_attention(ParameterSet<Real>& params, const std::string& prefix, std::int64_t dim, int heads,
                           int window, Rng& rng) {
  init_mhsa(params, prefix, dim, rng);
  const std::int64_t table = static_cast<std::int64_t>(2 * window - 1) * (2 * window - 1);
  params.add(prefix + ".rel_bias", truncated_normal<Real>({table, heads}, rng));
}

namespace {

template <typename Real>
AttentionInputs<Real> window_inputs(const ParameterSet<Real>& params, const std::string& prefix,
                                    const Tensor<Real>& windows, int heads, const WindowLayout& layout) {
  const std::int64_t t = layout.tokens_per_window();
  if (windows.rank() != 3 || windows.dim(0) != layout.num_windows || windows.dim(1) != t)
    throw ShapeError("window_attention got " + shape_str(windows.shape()));
  const auto& table = params.get(prefix + ".rel_bias");
  if (table.dim(0) != layout.table_size() || table.dim(1) != heads)
    throw ShapeError("relative bias table " + shape_str(table.shape()) + " does not match the window layout");
  auto idx = std::make_shared<std::vector<std::int64_t>>();
  idx->reserve(static_cast<std::size_t>(heads * t * t));
  for (int h = 0; h < heads; ++h)
    for (auto r : layout.relative_index) idx->push_back(r * heads + h);
  AttentionInputs<Real> in;
  in.heads = heads;
  in.group_size = t;
  in.head_bias = take(table, Index(idx), {heads, t, t});
  in.mask = layout.mask<Real>();
  return in;
}

template <typename Real>
Tensor<Real> region_bias(const ParameterSet<Real>& params, const std::string& prefix, const Tensor<Real>& x) {
  const std::int64_t n = x.dim(0);
  const auto r = reshape(region_scores(params, prefix, slice(x, 0, 1, n)), {n - 1});
  return concat<Real>({Tensor<Real>::zeros({1}), r}, 0);
}

}  // namespace

template <typename Real>
Tensor<Real> window_attention(const ParameterSet<Real>& params, const std::string& prefix, const Tensor<Real>& windows,
                              int heads, const WindowLayout& layout) {
  const auto in = window_inputs(params, prefix, windows, heads, layout);
  const std::int64_t t = layout.tokens_per_window();
  const std::int64_t d = windows.dim(-1);
  const auto flat = reshape(windows, {layout.num_windows * t, d});
  const auto out = attention(linear(params, prefix + ".q", flat), linear(params, prefix + ".k", flat),
                             linear(params, prefix + ".v", flat), in);
  return reshape(linear(params, prefix + ".o", out), {layout.num_windows, t, d});
}

template <typename Real>
std::vector<Real> window_attention_weights(const ParameterSet<Real>& params, const std::string& prefix,
                                           const Tensor<Real>& windows, int heads, const WindowLayout& layout) {
  NoGradGuard guard;
  const auto in = window_inputs(params, prefix, windows, heads, layout);
  const auto flat = reshape(windows, {layout.num_windows * layout.tokens_per_window(), windows.dim(-1)});
  return attention_weights(linear(params, prefix + ".q", flat), linear(params, prefix + ".k", flat), in);
}

template <typename Real>
void init_region_attention(ParameterSet<Real>& params, const std::string& prefix, std::int64_t dim, Rng& rng) {
  init_mhsa(params, prefix, dim, rng);
  init_linear(params, prefix + ".region.fc1", dim, dim / 2, true, rng);
  init_linear(params, prefix + ".region.fc2", dim / 2, 1, true, rng);
}

template <typename Real>
Tensor<Real> region_scores(const ParameterSet<Real>& params, const std::string& prefix, const Tensor<Real>& x) {
  return linear(params, prefix + ".region.fc2", gelu(linear(params, prefix + ".region.fc1", x)));
}

template <typename Real>
Tensor<Real> region_aware_attention(const ParameterSet<Real>& params, const std::string& prefix, const Tensor<Real>& x,
                                    const MhsaOptions& options) {
  return mhsa(params, prefix, x, options, region_bias(params, prefix, x));
}

template <typename Real>
std::vector<Real> region_attention_weights(const ParameterSet<Real>& params, const std::string& prefix,
                                           const Tensor<Real>& x, const MhsaOptions& options) {
  NoGradGuard guard;
  const auto f = static_cast<Real>(options.lora_factor);
  AttentionInputs<Real> in;
  in.heads = options.heads;
  in.key_bias = region_bias(params, prefix, x);
  return attention_weights(linear(params, prefix + ".q", x, f), linear(params, prefix + ".k", x, f), in);
}

template <typename Real>
void init_block(ParameterSet<Real>& params, const std::string& prefix, const BlockSpec& spec, Rng& rng) {
  init_layer_norm(params, prefix + ".norm1", spec.dim);
  switch (spec.mixer) {
    case MixerKind::kGlobal:
      init_mhsa(params, prefix + ".attn", spec.dim, rng);
      break;
    case MixerKind::kWindow:
      if (!spec.layout) throw ContractError("window block needs a layout");
      init_window_attention(params, prefix + ".attn", spec.dim, spec.heads, spec.layout->window, rng);
      break;
    case MixerKind::kRegion:
      init_region_attention(params, prefix + ".attn", spec.dim, rng);
      break;
  }
  init_layer_norm(params, prefix + ".norm2", spec.dim);
  init_ffn(params, prefix + ".ffn", spec.dim, spec.dim * spec.ffn_ratio, rng);
}

template <typename Real>
Tensor<Real> transformer_block(const ParameterSet<Real>& params, const std::string& prefix, const Tensor<Real>& x,
                               const BlockSpec& spec, Tensor<Real>* mixer_input) {
  const auto h = layer_norm(params, prefix + ".norm1", x);
  if (mixer_input) *mixer_input = h;
  const MhsaOptions opts{spec.heads, spec.lora_factor};
  Tensor<Real> mixed;
  switch (spec.mixer) {
    case MixerKind::kGlobal:
      mixed = mhsa(params, prefix + ".attn", h, opts);
      break;
    case MixerKind::kWindow:
      mixed = window_reverse(
          window_attention(params, prefix + ".attn", window_partition(h, *spec.layout), spec.heads, *spec.layout),
          *spec.layout);
      break;
    case MixerKind::kRegion:
      mixed = region_aware_attention(params, prefix + ".attn", h, opts);
      break;
  }
  const auto y = add(x, mixed);
  return add(y, ffn(params, prefix + ".ffn", layer_norm(params, prefix + ".norm2", y)));
}

template <typename Real>
void init_patch_merging(ParameterSet<Real>& params, const std::string& prefix, std::int64_t dim, std::int64_t out_dim,
                        Rng& rng) {
  init_layer_norm(params, prefix + ".norm", 4 * dim);
  init_linear(params, prefix + ".reduction", 4 * dim, out_dim, false, rng);
}

template <typename Real>
Tensor<Real> patch_merging(const ParameterSet<Real>& params, const std::string& prefix, const Tensor<Real>& x, int grid_h,
                           int grid_w) {
  if (grid_h % 2 || grid_w % 2 || x.rank() != 2 || x.dim(0) != static_cast<std::int64_t>(grid_h) * grid_w)
    throw ShapeError("patch_merging needs an even token grid, got " + shape_str(x.shape()));
  const std::int64_t d = x.dim(1);
  const int oh = grid_h / 2, ow = grid_w / 2;
  auto idx = std::make_shared<std::vector<std::int64_t>>();
  idx->reserve(x.numel());
  constexpr int kOffsets[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};  // (dy, dx)
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox)
      for (const auto& o : kOffsets) {
        const std::int64_t row = static_cast<std::int64_t>(2 * oy + o[0]) * grid_w + 2 * ox + o[1];
        for (std::int64_t c = 0; c < d; ++c) idx->push_back(row * d + c);
      }
  const auto merged = take(x, Index(idx), {static_cast<std::int64_t>(oh) * ow, 4 * d});
  return linear(params, prefix + ".reduction", layer_norm(params, prefix + ".norm", merged));
}

#define DS_INSTANTIATE_BLOCKS(Real)                                                                                     \
  template Tensor<Real> linear(const ParameterSet<Real>&, const std::string&, const Tensor<Real>&, Real);              \
  template Tensor<Real> layer_norm(const ParameterSet<Real>&, const std::string&, const Tensor<Real>&);                \
  template Tensor<Real> patchify(const Tensor<Real>&, std::int64_t);                                                   \
  template void init_patch_embed(ParameterSet<Real>&, const std::string&, const PatchGrid&, std::int64_t, bool, Rng&); \
  template Tensor<Real> patch_embed(const ParameterSet<Real>&, const std::string&, const Tensor<Real>&,                 \
                                    const PatchGrid&, bool);                                                           \
  template void init_mhsa(ParameterSet<Real>&, const std::string&, std::int64_t, Rng&);                                \
  template Tensor<Real> mhsa(const ParameterSet<Real>&, const std::string&, const Tensor<Real>&, const MhsaOptions&,   \
                             const Tensor<Real>&);                                                                     \
  template void init_ffn(ParameterSet<Real>&, const std::string&, std::int64_t, std::int64_t, Rng&);                   \
  template Tensor<Real> ffn(const ParameterSet<Real>&, const std::string&, const Tensor<Real>&);                       \
  template Tensor<Real> window_partition(const Tensor<Real>&, const WindowLayout&);                                    \
  template Tensor<Real> window_reverse(const Tensor<Real>&, const WindowLayout&);                                      \
  template void init_window_attention(ParameterSet<Real>&, const std::string&, std::int64_t, int, int, Rng&);          \
  template Tensor<Real> window_attention(const ParameterSet<Real>&, const std::string&, const Tensor<Real>&, int,      \
                                         const WindowLayout&);                                                         \
  template void init_region_attention(ParameterSet<Real>&, const std::string&, std::int64_t, Rng&);                    \
  template Tensor<Real> region_scores(const ParameterSet<Real>&, const std::string&, const Tensor<Real>&);             \
  template Tensor<Real> region_aware_attention(const ParameterSet<Real>&, const std::string&, const Tensor<Real>&,     \
                                               const MhsaOptions&);                                                    \
  template std::vector<Real> window_attention_weights(const ParameterSet<Real>&, const std::string&,                   \
                                                      const Tensor<Real>&, int, const WindowLayout&);                  \
  template std::vector<Real> region_attention_weights(const ParameterSet<Real>&, const std::string&,                   \
                                                      const Tensor<Real>&, const MhsaOptions&);                        \
  template void init_block(ParameterSet<Real>&, const std::string&, const BlockSpec&, Rng&);                           \
  template Tensor<Real> transformer_block(const ParameterSet<Real>&, const std::string&, const Tensor<Real>&,          \
                                          const BlockSpec&, Tensor<Real>*);                                                         \
  template void init_patch_merging(ParameterSet<Real>&, const std::string&, std::int64_t, std::int64_t, Rng&);         \
  template Tensor<Real> patch_merging(const ParameterSet<Real>&, const std::string&, const Tensor<Real>&, int, int);

DS_INSTANTIATE_BLOCKS(float)
DS_INSTANTIATE_BLOCKS(double)

}  // namespace ds
