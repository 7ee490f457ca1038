#pragma once

// Optimization-based style transfer: gradient descent on the pixels of a
// generated image against content and Gram-matrix style losses computed on a
// frozen feature backbone.

#include <chrono>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "livestyle/backbone.hpp"

namespace livestyle::gatys {

enum class Init { content_copy, noise };

struct GatysConfig {
  std::vector<std::string> content_layers;
  std::vector<std::string> style_layers;
  std::vector<double> layer_weights;  // one per style layer
  double content_weight = 1.0;        // alpha
  double style_weight = 1e3;          // beta
  std::size_t iterations = 100;
  double step_size = 0.02;
  double momentum = 0.0;  // 0 for plain gradient descent, typically 0.9 otherwise
  Init init = Init::content_copy;
  std::uint64_t seed = 0;

  void validate() const {
    if (style_layers.size() != layer_weights.size())
      throw InvalidParams("layer_weights must have one entry per style layer");
    double total = 0.0;
    for (double w : layer_weights) {
      if (!(w >= 0.0)) throw InvalidParams("layer weights must be >= 0");
      total += w;
    }
    if (!style_layers.empty() && !(total > 0.0)) throw InvalidParams("layer weights must not all be zero");
    if (content_layers.empty() && style_layers.empty()) throw InvalidParams("no loss layers configured");
    if (!(content_weight >= 0.0) || !(style_weight >= 0.0)) throw InvalidParams("loss weights must be >= 0");
    if (iterations < 1) throw InvalidParams("iterations must be >= 1");
    if (!(step_size > 0.0)) throw InvalidParams("step_size must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidParams("momentum must be in [0,1)");
  }

  // Canonical layer choice for the 19-layer preset.
  static GatysConfig vgg19_defaults() {
    GatysConfig c;
    c.content_layers = {"conv4_2"};
    c.style_layers = {"conv1_1", "conv2_1", "conv3_1", "conv4_1", "conv5_1"};
    c.layer_weights.assign(5, 0.2);
    return c;
  }

  // Layer choice for backbone::tiny_spec().
  static GatysConfig tiny_defaults() {
    GatysConfig c;
    c.content_layers = {"relu2_1"};
    c.style_layers = {"relu1_1", "relu1_2", "relu2_1"};
    c.layer_weights.assign(3, 1.0 / 3.0);
    return c;
  }
};

struct LossBreakdown {
  double content = 0.0;
  double style = 0.0;
  std::vector<double> per_layer_E;
  double total = 0.0;
};

struct IterationTrace {
  std::vector<LossBreakdown> losses;
  std::vector<double> seconds;
};

// 1/2 * sum (F - P)^2
template <typename T>
T content_loss(const backbone::FeatureMap<T>& F, const backbone::FeatureMap<T>& P) {
  if (F.channels != P.channels || F.spatial != P.spatial || F.data.size() != P.data.size())
    throw ShapeMismatch("content_loss: feature maps differ in shape");
  T s = 0;
  for (std::size_t i = 0; i < F.data.size(); ++i) s += (F.data[i] - P.data[i]) * (F.data[i] - P.data[i]);
  return s / T(2);
}

// E_l = 1/(4 N^2 M^2) * sum (Gx - Ga)^2
template <typename T>
T layer_style_error(const backbone::GramMatrix<T>& Gx, const backbone::GramMatrix<T>& Ga, std::size_t N,
                    std::size_t M) {
  if (Gx.size != Ga.size || Gx.size != N || Gx.data.size() != N * N || Ga.data.size() != N * N)
    throw ShapeMismatch("layer_style_error: Gram matrices must both be " + std::to_string(N) + "x" +
                        std::to_string(N));
  if (M == 0) throw InvalidParams("layer_style_error: M must be > 0");
  T s = 0;
  for (std::size_t i = 0; i < Gx.data.size(); ++i) s += (Gx.data[i] - Ga.data[i]) * (Gx.data[i] - Ga.data[i]);
  const T n = static_cast<T>(N), m = static_cast<T>(M);
  return s / (T(4) * n * n * m * m);
}

inline double style_loss(std::span<const double> errors, std::span<const double> weights) {
  if (errors.size() != weights.size()) throw ShapeMismatch("style_loss: errors and weights differ in length");
  double s = 0.0;
  for (std::size_t i = 0; i < errors.size(); ++i) s += weights[i] * errors[i];
  return s;
}

inline double total_loss(double content, double style, double alpha, double beta) {
  return alpha * content + beta * style;
}

// Fixed quantities derived from the content and style images.
template <typename T>
struct Targets {
  std::vector<ag::Var<T>> content_features;  // per content layer
  std::vector<ag::Var<T>> style_grams;       // per style layer
};

template <typename T>
Targets<T> make_targets(const backbone::BackboneModel<T>& model, const GatysConfig& cfg, const Tensor<T>& content,
                        const Tensor<T>& style) {
  Targets<T> t;
  auto cf = model.forward(ag::Var<T>::constant(content), cfg.content_layers);
  for (const auto& id : cfg.content_layers) t.content_features.push_back(cf.at(id).detach());
  auto sf = model.forward(ag::Var<T>::constant(style), cfg.style_layers);
  for (const auto& id : cfg.style_layers) t.style_grams.push_back(ag::gram(sf.at(id)).detach());
  return t;
}

// Differentiable total loss of a generated [3,H,W] image in backbone range.
template <typename T>
std::pair<ag::Var<T>, LossBreakdown> objective(const backbone::BackboneModel<T>& model, const GatysConfig& cfg,
                                               const Targets<T>& targets, const ag::Var<T>& x) {
  std::vector<std::string> wanted = cfg.content_layers;
  wanted.insert(wanted.end(), cfg.style_layers.begin(), cfg.style_layers.end());
  auto feats = model.forward(x, wanted);

  LossBreakdown lb;
  ag::Var<T> content = ag::Var<T>::constant(Tensor<T>({1}));
  for (std::size_t i = 0; i < cfg.content_layers.size(); ++i) {
    const auto& F = feats.at(cfg.content_layers[i]);
    content = ag::add(content, ag::scale(ag::sum_sq(ag::sub(F, targets.content_features[i])), T(0.5)));
  }
  ag::Var<T> style = ag::Var<T>::constant(Tensor<T>({1}));
  for (std::size_t l = 0; l < cfg.style_layers.size(); ++l) {
    const auto& F = feats.at(cfg.style_layers[l]);
    const T N = static_cast<T>(F.value().dim(0));
    const T M = static_cast<T>(F.value().dim(1) * F.value().dim(2));
    auto E = ag::scale(ag::sum_sq(ag::sub(ag::gram(F), targets.style_grams[l])), T(1) / (T(4) * N * N * M * M));
    lb.per_layer_E.push_back(static_cast<double>(E.item()));
    style = ag::add(style, ag::scale(E, static_cast<T>(cfg.layer_weights[l])));
  }
  auto total = ag::add(ag::scale(content, static_cast<T>(cfg.content_weight)),
                       ag::scale(style, static_cast<T>(cfg.style_weight)));
  lb.content = static_cast<double>(content.item());
  lb.style = static_cast<double>(style.item());
  lb.total = static_cast<double>(total.item());
  return {total, lb};
}

// Optimizes the generated image for cfg.iterations steps. Inputs must be in
// backbone range; the result is denormalized to UNIT range.
template <typename T>
std::pair<image::ImageTensor, IterationTrace> run_gatys(const image::ImageTensor& content,
                                                        const image::ImageTensor& style,
                                                        const backbone::BackboneModel<T>& model,
                                                        const GatysConfig& cfg) {
  cfg.validate();
  if (content.range != image::Range::backbone || style.range != image::Range::backbone)
    throw RangeMismatch("run_gatys expects BACKBONE-range inputs");
  const auto& spec = model.input_spec();
  const auto targets = make_targets(model, cfg, image::to_chw<T>(content), image::to_chw<T>(style));

  Tensor<T> init;
  if (cfg.init == Init::content_copy) {
    init = image::to_chw<T>(content);
  } else {
    Rng rng(cfg.seed);
    image::ImageTensor noise(content.height, content.width, image::Range::unit);
    for (auto& v : noise.data) v = static_cast<float>(rng.uniform());
    init = image::to_chw<T>(image::normalize(noise, spec));
  }
  auto x = ag::Var<T>::parameter(std::move(init));
  const std::size_t hw = content.height * content.width;
  Tensor<T> velocity(x.shape());

  IterationTrace trace;
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const auto t0 = std::chrono::steady_clock::now();
    x.zero_grad();
    auto [loss, lb] = objective(model, cfg, targets, x);
    if (!std::isfinite(lb.total)) throw DivergedLoss(it);
    ag::backward(loss);
    const auto& g = x.grad();
    auto& px = x.mutable_value();
    for (std::size_t i = 0; i < px.numel(); ++i) {
      velocity[i] = static_cast<T>(cfg.momentum) * velocity[i] + g[i];
      px[i] -= static_cast<T>(cfg.step_size) * velocity[i];
    }
    for (std::size_t c = 0; c < 3; ++c) {
      const T lo = spec.normalized_min(c), hi = spec.normalized_max(c);
      for (std::size_t p = 0; p < hw; ++p) px[c * hw + p] = std::clamp(px[c * hw + p], lo, hi);
    }
    if (!px.all_finite()) throw DivergedLoss(it);
    trace.losses.push_back(std::move(lb));
    trace.seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return {image::denormalize(image::from_chw(x.value(), image::Range::backbone), spec), std::move(trace)};
}

}  // namespace livestyle::gatys
