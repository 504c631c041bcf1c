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

#include "xai/explain.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "core/error.hpp"
#include "core/log.hpp"
#include "core/parallel.hpp"

namespace ds {

const char* method_name(CamMethod method) {
  switch (method) {
    case CamMethod::kGradCam: return "gradcam";
    case CamMethod::kGradCamPP: return "gradcampp";
    case CamMethod::kScoreCam: return "scorecam";
    case CamMethod::kLime: return "lime";
  }
  return "unknown";
}

CamMethod parse_method(const std::string& name) {
  for (auto m : {CamMethod::kGradCam, CamMethod::kGradCamPP, CamMethod::kScoreCam, CamMethod::kLime})
    if (name == method_name(m)) return m;
  throw ConfigError("unknown explanation method '" + name + "' (expected gradcam, gradcampp, scorecam, lime)");
}

std::array<int, 2> SaliencyMap::argmax() const {
  if (normalized.empty()) throw ContractError("saliency map is empty");
  const auto i = static_cast<int>(std::max_element(normalized.begin(), normalized.end()) - normalized.begin());
  return {i / width, i % width};
}

std::vector<double> min_max(std::vector<double> map) {
  if (map.empty()) return map;
  const auto [lo_it, hi_it] = std::minmax_element(map.begin(), map.end());
  const double lo = *lo_it, hi = *hi_it;
  if (hi - lo <= 0.0) {
    std::fill(map.begin(), map.end(), hi > 0.0 ? 1.0 : 0.0);
    return map;
  }
  for (auto& v : map) v = (v - lo) / (hi - lo);
  return map;
}

std::vector<double> upsample_bilinear(const std::vector<double>& map, int h, int w, int out_h, int out_w) {
  if (static_cast<std::size_t>(h) * static_cast<std::size_t>(w) != map.size() || h < 1 || w < 1 || out_h < 1 ||
      out_w < 1)
    throw ShapeError("bilinear upsampling: map size does not match its grid");
  std::vector<double> out(static_cast<std::size_t>(out_h) * static_cast<std::size_t>(out_w));
  const double sy = static_cast<double>(h) / out_h, sx = static_cast<double>(w) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, h - 1);
    const double ty = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, w - 1);
      const double tx = fx - x0;
      const auto v = [&](int yy, int xx) { return map[static_cast<std::size_t>(yy) * w + xx]; };
      const double top = v(y0, x0) + (v(y0, x1) - v(y0, x0)) * tx;
      const double bottom = v(y1, x0) + (v(y1, x1) - v(y1, x0)) * tx;
      out[static_cast<std::size_t>(y) * out_w + x] = top + (bottom - top) * ty;
    }
  }
  return out;
}

namespace {

void check_pair(const FeatureGrid& a, const FeatureGrid& g) {
  if (a.height != g.height || a.width != g.width || a.channels != g.channels || a.values.size() != g.values.size() ||
      a.values.size() != static_cast<std::size_t>(a.height) * a.width * a.channels)
    throw ShapeError("activation and gradient grids differ in shape");
}

std::vector<double> weighted_relu_sum(const FeatureGrid& a, const std::vector<double>& w,
                                      const std::vector<int>* channels = nullptr) {
  const int cells = a.height * a.width;
  std::vector<double> map(static_cast<std::size_t>(cells), 0.0);
  for (int i = 0; i < cells; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) s += w[k] * a.at(i, channels ? (*channels)[k] : static_cast<int>(k));
    map[static_cast<std::size_t>(i)] = std::max(s, 0.0);
  }
  return map;
}

}  // namespace

std::vector<double> grad_cam_map(const FeatureGrid& activations, const FeatureGrid& gradients,
                                 std::vector<double>* weights) {
  check_pair(activations, gradients);
  const int cells = activations.height * activations.width;
  std::vector<double> alpha(static_cast<std::size_t>(activations.channels), 0.0);
  for (int k = 0; k < activations.channels; ++k) {
    double s = 0.0;
    for (int i = 0; i < cells; ++i) s += gradients.at(i, k);
    alpha[static_cast<std::size_t>(k)] = s / cells;
  }
  auto map = weighted_relu_sum(activations, alpha);
  if (weights) *weights = std::move(alpha);
  return map;
}

std::vector<double> grad_cam_pp_map(const FeatureGrid& activations, const FeatureGrid& gradients,
                                    std::vector<double>* weights) {
  check_pair(activations, gradients);
  const int cells = activations.height * activations.width;
  std::vector<double> w(static_cast<std::size_t>(activations.channels), 0.0);
  for (int k = 0; k < activations.channels; ++k) {
    double total = 0.0;
    for (int i = 0; i < cells; ++i) total += activations.at(i, k);
    double wk = 0.0;
    for (int i = 0; i < cells; ++i) {
      const double g = gradients.at(i, k);
      const double g2 = g * g;
      const double alpha = g2 / (2.0 * g2 + total * g2 * g + 1e-8);
      wk += alpha * std::max(g, 0.0);
    }
    w[static_cast<std::size_t>(k)] = wk;
  }
  auto map = weighted_relu_sum(activations, w);
  if (weights) *weights = std::move(w);
  return map;
}

FeatureGrid tap_grid(const ActivationRecord<float>::Tap& tap, bool gradient) {
  if (tap.grid_h <= 0 || tap.grid_w <= 0)
    throw ConfigError("activation '" + tap.name + "' has no spatial grid; choose a token-grid layer");
  const auto& shape = tap.value.shape();
  if (shape.size() != 2) throw ShapeError("activation '" + tap.name + "' is not a token matrix");
  const std::int64_t skip = tap.has_class_token ? 1 : 0;
  const std::int64_t cells = static_cast<std::int64_t>(tap.grid_h) * tap.grid_w;
  if (shape[0] - skip != cells) throw ShapeError("activation '" + tap.name + "' does not match its grid");
  FeatureGrid g;
  g.height = tap.grid_h;
  g.width = tap.grid_w;
  g.channels = static_cast<int>(shape[1]);
  std::span<const float> src;
  if (gradient) {
    if (!tap.value.has_grad()) throw ContractError("activation '" + tap.name + "' received no gradient");
    src = tap.value.grad();
  } else {
    src = tap.value.data();
  }
  g.values.assign(src.begin() + skip * g.channels, src.end());
  return g;
}

namespace {

void check_class(const ExplainContext& ctx, int class_index) {
  if (class_index < 0 || class_index >= ctx.model.num_classes())
    throw IndexError("class " + std::to_string(class_index) + " outside [0, " +
                     std::to_string(ctx.model.num_classes()) + ")");
}

std::string resolve_target(const ExplainContext& ctx, const std::string& target) {
  return target.empty() ? ctx.model.default_target() : target;
}

void finish(SaliencyMap& m, int height, int width) {
  m.height = height;
  m.width = width;
  m.all_zero = std::all_of(m.raw.begin(), m.raw.end(), [](double v) { return v <= 0.0; });
  if (m.all_zero) m.warnings.push_back("map is zero everywhere after ReLU");
  m.normalized = upsample_bilinear(min_max(m.raw), m.grid_h, m.grid_w, height, width);
}

SaliencyMap gradient_cam(const ExplainContext& ctx, const Image& image, int class_index, const std::string& target,
                         CamMethod method) {
  check_class(ctx, class_index);
  SaliencyMap m;
  m.method = method;
  m.class_index = class_index;
  m.target = resolve_target(ctx, target);
  auto input = preprocess(image, ctx.model.image_size(), ctx.norm);
  input.set_requires_grad(true);
  ActivationRecord<float> record;
  const auto logits = ctx.model.forward(ctx.params, input, &record);
  const auto& tap = record.get(m.target);
  backward(sum(slice(logits, 0, class_index, class_index + 1)));
  const auto a = tap_grid(tap, false);
  const auto g = tap_grid(tap, true);
  m.grid_h = a.height;
  m.grid_w = a.width;
  m.raw = method == CamMethod::kGradCam ? grad_cam_map(a, g, &m.weights) : grad_cam_pp_map(a, g, &m.weights);
  finish(m, image.height, image.width);
  return m;
}

std::vector<double> softmax_row(std::span<const float> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  const double mx = *std::max_element(p.begin(), p.end());
  double s = 0.0;
  for (auto& v : p) s += (v = std::exp(v - mx));
  for (auto& v : p) v /= s;
  return p;
}

double class_probability(const ExplainContext& ctx, const TensorF& input, int class_index) {
  NoGradGuard guard;
  return softmax_row(ctx.model.forward(ctx.params, input).data())[static_cast<std::size_t>(class_index)];
}

}  // namespace

SaliencyMap grad_cam(const ExplainContext& ctx, const Image& image, int class_index, const std::string& target) {
  return gradient_cam(ctx, image, class_index, target, CamMethod::kGradCam);
}

SaliencyMap grad_cam_pp(const ExplainContext& ctx, const Image& image, int class_index, const std::string& target) {
  return gradient_cam(ctx, image, class_index, target, CamMethod::kGradCamPP);
}

std::vector<double> predict_proba(const ExplainContext& ctx, const Image& image) {
  NoGradGuard guard;
  return softmax_row(ctx.model.forward(ctx.params, preprocess(image, ctx.model.image_size(), ctx.norm)).data());
}

SaliencyMap score_cam(const ExplainContext& ctx, const Image& image, int class_index, const std::string& target,
                      const ScoreCamOptions& options) {
  check_class(ctx, class_index);
  if (options.top_channels < 1) throw ConfigError("Score-CAM needs at least one channel");
  SaliencyMap m;
  m.method = CamMethod::kScoreCam;
  m.class_index = class_index;
  m.target = resolve_target(ctx, target);
  const int size = ctx.model.image_size();
  const auto input = preprocess(image, size, ctx.norm);
  FeatureGrid a;
  {
    NoGradGuard guard;
    ActivationRecord<float> record;
    ctx.model.forward(ctx.params, input, &record);
    a = tap_grid(record.get(m.target), false);
  }
  m.grid_h = a.height;
  m.grid_w = a.width;
  const int cells = a.height * a.width;

  int top = options.top_channels;
  if (top > a.channels) {
    m.warnings.push_back("requested " + std::to_string(top) + " channels but the layer has " +
                         std::to_string(a.channels) + "; using all");
    log_warning("Score-CAM: " + m.warnings.back());
    top = a.channels;
  }
  std::vector<double> energy(static_cast<std::size_t>(a.channels), 0.0);
  for (int k = 0; k < a.channels; ++k)
    for (int i = 0; i < cells; ++i) energy[static_cast<std::size_t>(k)] += a.at(i, k) * a.at(i, k);
  std::vector<int> order(static_cast<std::size_t>(a.channels));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return energy[x] > energy[y]; });
  m.channels.assign(order.begin(), order.begin() + top);

  const double base = class_probability(ctx, TensorF::zeros(input.shape()), class_index);
  std::vector<double> increase(static_cast<std::size_t>(top), 0.0);
  const auto pixels = static_cast<std::size_t>(size) * static_cast<std::size_t>(size);
  parallel_for(static_cast<std::size_t>(top), ctx.threads, [&](std::size_t j) {
    std::vector<double> channel(static_cast<std::size_t>(cells));
    for (int i = 0; i < cells; ++i) channel[static_cast<std::size_t>(i)] = a.at(i, m.channels[j]);
    const auto mask = upsample_bilinear(min_max(std::move(channel)), a.height, a.width, size, size);
    std::vector<float> masked(input.data().begin(), input.data().end());
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t p = 0; p < pixels; ++p) masked[c * pixels + p] *= static_cast<float>(mask[p]);
    increase[j] = class_probability(ctx, TensorF::from(input.shape(), std::move(masked)), class_index) - base;
  });
  const double mx = *std::max_element(increase.begin(), increase.end());
  double s = 0.0;
  m.weights.resize(increase.size());
  for (std::size_t j = 0; j < increase.size(); ++j) s += (m.weights[j] = std::exp(increase[j] - mx));
  for (auto& w : m.weights) w /= s;
  m.raw = weighted_relu_sum(a, m.weights, &m.channels);
  finish(m, image.height, image.width);
  return m;
}

std::vector<int> grid_regions(int height, int width, int grid) {
  if (grid < 1 || grid > height || grid > width) throw ConfigError("LIME grid must be between 1 and the image side");
  std::vector<int> r(static_cast<std::size_t>(height) * static_cast<std::size_t>(width));
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      r[static_cast<std::size_t>(y) * width + x] = (y * grid / height) * grid + x * grid / width;
  return r;
}

Image lime_perturb(const Image& image, const std::vector<int>& regions, const std::vector<std::uint8_t>& bits,
                   const std::array<float, 3>& fill) {
  if (regions.size() != static_cast<std::size_t>(image.height) * image.width)
    throw ShapeError("region map does not match the image");
  Image out = image;
  for (std::size_t p = 0; p < regions.size(); ++p) {
    const auto r = static_cast<std::size_t>(regions[p]);
    if (r >= bits.size()) throw IndexError("region index outside the mask");
    if (!bits[r])
      for (std::size_t c = 0; c < 3; ++c) out.pixels[p * 3 + c] = fill[c];
  }
  return out;
}

LimeFit fit_weighted_ridge(const std::vector<std::vector<std::uint8_t>>& masks, const std::vector<double>& y,
                           const std::vector<double>& weights, double ridge) {
  if (masks.empty() || masks.size() != y.size() || y.size() != weights.size())
    throw ShapeError("ridge fit needs equally many masks, targets and weights");
  const auto d = static_cast<Eigen::Index>(masks.front().size()) + 1;
  Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd xty = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd row(d);
  for (std::size_t n = 0; n < masks.size(); ++n) {
    if (static_cast<Eigen::Index>(masks[n].size()) + 1 != d) throw ShapeError("ragged masks");
    row[0] = 1.0;
    for (Eigen::Index j = 1; j < d; ++j) row[j] = masks[n][static_cast<std::size_t>(j - 1)];
    xtx.noalias() += weights[n] * row * row.transpose();
    xty += weights[n] * y[n] * row;
  }
  double lambda = ridge;
  for (int attempt = 0; attempt < 2; ++attempt, lambda *= 10.0) {
    Eigen::MatrixXd a = xtx;
    for (Eigen::Index j = 1; j < d; ++j) a(j, j) += lambda;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) continue;
    const Eigen::VectorXd beta = llt.solve(xty);
    if (!beta.allFinite()) continue;
    LimeFit fit;
    fit.intercept = beta[0];
    fit.coefficients.assign(beta.data() + 1, beta.data() + d);
    fit.ridge = lambda;
    return fit;
  }
  throw NumericError("LIME normal equations are singular even with ridge " + std::to_string(lambda / 10.0));
}

SaliencyMap lime_explain(const ExplainContext& ctx, const Image& image, int class_index, Rng& rng,
                         const LimeOptions& options) {
  check_class(ctx, class_index);
  if (options.samples < 1) throw ConfigError("LIME needs at least one sample");
  if (!(options.kernel_width > 0)) throw ConfigError("LIME kernel width must be positive");
  SaliencyMap m;
  m.method = CamMethod::kLime;
  m.class_index = class_index;
  m.target = "input";
  const int r = options.grid;
  const auto regions = grid_regions(image.height, image.width, r);
  const std::size_t count = static_cast<std::size_t>(r) * static_cast<std::size_t>(r);
  if (static_cast<std::size_t>(options.samples) < count + 1)
    m.warnings.push_back("fewer samples than regions plus one; the fit leans on the ridge term");

  std::vector<std::vector<std::uint8_t>> masks(static_cast<std::size_t>(options.samples));
  std::vector<double> kernel(masks.size());
  for (std::size_t n = 0; n < masks.size(); ++n) {
    masks[n].resize(count);
    std::size_t on = 0;
    for (auto& b : masks[n]) on += (b = rng.uniform() < 0.5 ? 1 : 0);
    const double cosine = std::sqrt(static_cast<double>(on) / static_cast<double>(count));
    const double dist = 1.0 - cosine;
    kernel[n] = std::exp(-dist * dist / (options.kernel_width * options.kernel_width));
  }
  std::vector<double> prob(masks.size());
  parallel_for(masks.size(), ctx.threads, [&](std::size_t n) {
    prob[n] = predict_proba(ctx, lime_perturb(image, regions, masks[n], options.fill))[static_cast<std::size_t>(class_index)];
  });
  const auto fit = fit_weighted_ridge(masks, prob, kernel, options.ridge);
  if (fit.ridge != options.ridge) m.warnings.push_back("ridge raised to " + std::to_string(fit.ridge));
  m.weights = fit.coefficients;
  m.intercept = fit.intercept;
  m.grid_h = r;
  m.grid_w = r;
  m.raw = fit.coefficients;

  std::vector<double> positive(count, 0.0);
  double lo = 0.0, hi = 0.0;
  bool any = false;
  for (double c : m.raw)
    if (c > 0.0) {
      lo = any ? std::min(lo, c) : c;
      hi = any ? std::max(hi, c) : c;
      any = true;
    }
  for (std::size_t i = 0; i < count; ++i)
    if (m.raw[i] > 0.0) positive[i] = hi > lo ? (m.raw[i] - lo) / (hi - lo) : 1.0;
  m.height = image.height;
  m.width = image.width;
  m.all_zero = !any;
  if (m.all_zero) m.warnings.push_back("no region has a positive coefficient");
  m.normalized = upsample_bilinear(positive, r, r, image.height, image.width);
  return m;
}

std::array<float, 3> heat_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  static constexpr std::array<std::array<float, 3>, 4> stops{{{0.f, 0.f, 1.f}, {0.f, 1.f, 1.f}, {1.f, 1.f, 0.f},
                                                              {1.f, 0.f, 0.f}}};
  const double pos = t * 3.0;
  const int i = std::min(static_cast<int>(pos), 2);
  const auto f = static_cast<float>(pos - i);
  std::array<float, 3> c{};
  for (std::size_t k = 0; k < 3; ++k) c[k] = stops[static_cast<std::size_t>(i)][k] * (1.f - f) + stops[static_cast<std::size_t>(i) + 1][k] * f;
  return c;
}

ImageU8 render_overlay(const Image& image, const SaliencyMap& map, double opacity) {
  if (map.height != image.height || map.width != image.width ||
      map.normalized.size() != static_cast<std::size_t>(image.height) * image.width)
    throw ShapeError("saliency map does not match the image size");
  if (!(opacity >= 0.0 && opacity <= 1.0)) throw ConfigError("opacity must lie in [0, 1]");
  Image out = image;
  if (opacity > 0.0) {
    const auto a = static_cast<float>(opacity);
    for (std::size_t p = 0; p < map.normalized.size(); ++p) {
      const auto c = heat_color(map.normalized[p]);
      for (std::size_t k = 0; k < 3; ++k) out.pixels[p * 3 + k] = (1.f - a) * image.pixels[p * 3 + k] + a * c[k];
    }
  }
  return to_u8(out);
}

nlohmann::json to_json(const SaliencyMap& map) {
  nlohmann::json j{{"method", method_name(map.method)},
                   {"class", map.class_index},
                   {"target", map.target},
                   {"grid", {map.grid_h, map.grid_w}},
                   {"size", {map.height, map.width}},
                   {"raw", map.raw},
                   {"all_zero", map.all_zero},
                   {"warnings", map.warnings}};
  if (map.method == CamMethod::kLime) {
    j["coefficients"] = map.weights;
    j["intercept"] = map.intercept;
  } else {
    j["weights"] = map.weights;
  }
  if (!map.channels.empty()) j["channels"] = map.channels;
  return j;
}

}  // namespace ds
