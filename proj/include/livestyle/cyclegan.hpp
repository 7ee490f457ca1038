#pragma once

// Desk-scale CycleGAN: two generators (X->Y and Y->X), two patch
// discriminators, least-squares adversarial losses and an L1
// cycle-consistency term weighted by lambda.

#include <cmath>
#include <string>
#include <vector>

#include "livestyle/image.hpp"
#include "livestyle/params.hpp"

namespace livestyle::cyclegan {

namespace detail {

template <typename T>
ag::Var<T> conv(const NamedParams<T>& params, const std::string& name, const ag::Var<T>& x, std::size_t stride) {
  for (std::size_t i = 0; i + 1 < params.size(); ++i)
    if (params[i].first == name + ".weight") return ag::conv2d(x, params[i].second, params[i + 1].second, stride, 1);
  throw UnknownLayer(name);
}

template <typename T>
void add_conv(NamedParams<T>& params, const std::string& name, std::size_t out, std::size_t in, Rng& rng) {
  params.push_back({name + ".weight", he_conv_param<T>(rng, out, in, 3)});
  params.push_back({name + ".bias", filled_param<T>({out})});
}

template <typename T>
ag::Var<T> in_relu(const ag::Var<T>& x) {
  return ag::relu(ag::instance_norm(x, T(1e-5)));
}

}  // namespace detail

// Encoder (two stride-2 convs), residual blocks, decoder (two upsample +
// conv stages) and a tanh head. Operates on [-1,1] images whose side is a
// multiple of 4.
template <typename T = float>
class Generator {
 public:
  Generator() : Generator(8, 2, 0) {}
  Generator(std::size_t width, std::size_t residual_blocks, std::uint64_t seed)
      : width_(width), blocks_(residual_blocks) {
    Rng rng(seed);
    detail::add_conv(params_, "enc1", width, 3, rng);
    detail::add_conv(params_, "enc2", 2 * width, width, rng);
    for (std::size_t r = 0; r < blocks_; ++r) {
      detail::add_conv(params_, res_name(r, 1), 2 * width, 2 * width, rng);
      detail::add_conv(params_, res_name(r, 2), 2 * width, 2 * width, rng);
    }
    detail::add_conv(params_, "dec1", width, 2 * width, rng);
    detail::add_conv(params_, "dec2", width, width, rng);
    detail::add_conv(params_, "head", 3, width, rng);
  }

  ag::Var<T> forward(const ag::Var<T>& x) const {
    const auto& s = x.value().shape;
    if (s.size() != 3 || s[0] != 3 || s[1] % 4 || s[2] % 4 || s[1] == 0 || s[2] == 0)
      throw ShapeMismatch("generator expects [3,H,W] with H and W multiples of 4, got " + shape_str(s));
    auto h = detail::in_relu(detail::conv(params_, "enc1", x, 2));
    h = detail::in_relu(detail::conv(params_, "enc2", h, 2));
    for (std::size_t r = 0; r < blocks_; ++r) {
      auto b = detail::in_relu(detail::conv(params_, res_name(r, 1), h, 1));
      b = ag::instance_norm(detail::conv(params_, res_name(r, 2), b, 1), T(1e-5));
      h = ag::add(h, b);
    }
    h = detail::in_relu(detail::conv(params_, "dec1", ag::upsample2x(h), 1));
    h = detail::in_relu(detail::conv(params_, "dec2", ag::upsample2x(h), 1));
    return ag::tanh(detail::conv(params_, "head", h, 1));
  }

  NamedParams<T>& params() { return params_; }
  const NamedParams<T>& params() const { return params_; }
  std::size_t width() const { return width_; }
  std::size_t residual_blocks() const { return blocks_; }

  Generator clone() const {
    Generator c = *this;
    for (auto& [name, v] : c.params_) v = ag::Var<T>::parameter(v.value());
    return c;
  }

  static Generator from_archive(const WeightArchive& a, const std::string& prefix) {
    const auto width = a.entry(prefix + "enc1.weight").shape.at(0);
    std::size_t blocks = 0;
    while (a.contains(prefix + res_name(blocks, 1) + ".weight")) ++blocks;
    Generator g(width, blocks, 0);
    load_from_archive(a, prefix, g.params_);
    return g;
  }

 private:
  static std::string res_name(std::size_t r, int k) {
    return "res" + std::to_string(r) + ".conv" + std::to_string(k);
  }

  std::size_t width_, blocks_;
  NamedParams<T> params_;
};

// Patch classifier: two stride-2 conv/LeakyReLU stages and a 1-channel conv
// producing a score map of side H/4.
template <typename T = float>
class Discriminator {
 public:
  Discriminator() : Discriminator(8, 0) {}
  Discriminator(std::size_t width, std::uint64_t seed) {
    Rng rng(seed);
    detail::add_conv(params_, "conv1", width, 3, rng);
    detail::add_conv(params_, "conv2", 2 * width, width, rng);
    detail::add_conv(params_, "score", 1, 2 * width, rng);
  }

  ag::Var<T> forward(const ag::Var<T>& x) const {
    auto h = ag::leaky_relu(detail::conv(params_, "conv1", x, 2), T(0.2));
    h = ag::leaky_relu(detail::conv(params_, "conv2", h, 2), T(0.2));
    return detail::conv(params_, "score", h, 1);
  }

  NamedParams<T>& params() { return params_; }
  const NamedParams<T>& params() const { return params_; }

 private:
  NamedParams<T> params_;
};

// mean((scores - t)^2), t = 1 for real and 0 for fake.
template <typename T>
T adversarial_loss(const Tensor<T>& scores, bool target_real) {
  return ag::mean_sq_to(ag::Var<T>::constant(scores), target_real ? T(1) : T(0)).item();
}

// Mean absolute element-wise difference.
inline double cycle_consistency_loss(const image::ImageTensor& x, const image::ImageTensor& x_rec) {
  if (x.height != x_rec.height || x.width != x_rec.width || x.data.size() != x_rec.data.size())
    throw ShapeMismatch("cycle_consistency_loss: images differ in shape");
  double s = 0.0;
  for (std::size_t i = 0; i < x.data.size(); ++i) s += std::abs(static_cast<double>(x.data[i]) - x_rec.data[i]);
  return s / static_cast<double>(x.data.size());
}

inline double cyclegan_total_loss(double adv, double cycle, double lambda) { return adv + lambda * cycle; }

// UNIT image -> [3,H,W] in [-1,1].
template <typename T>
Tensor<T> to_signed(const image::ImageTensor& img) {
  Tensor<T> t = image::to_chw<T>(img);
  for (auto& v : t.data) v = T(2) * v - T(1);
  return t;
}

template <typename T>
image::ImageTensor from_signed(const Tensor<T>& t) {
  Tensor<T> u = t;
  for (auto& v : u.data) v = std::clamp((v + T(1)) / T(2), T(0), T(1));
  return image::from_chw(u, image::Range::unit);
}

template <typename T>
image::ImageTensor translate(const Generator<T>& g, const image::ImageTensor& img) {
  if (img.range != image::Range::unit) throw RangeMismatch("translate expects a UNIT image");
  return from_signed(g.forward(ag::Var<T>::constant(to_signed<T>(img))).value());
}

struct CycleGanConfig {
  double lambda = 10.0;
  std::size_t steps = 500;
  double step_size = 1e-3;
  std::size_t image_side = 32;
  std::size_t residual_blocks = 2;
  std::size_t width = 8;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(lambda >= 0.0)) throw InvalidParams("lambda must be >= 0");
    if (!(step_size > 0.0)) throw InvalidParams("step_size must be > 0");
    if (image_side < 16 || image_side % 4) throw InvalidParams("image_side must be >= 16 and a multiple of 4");
    if (width == 0) throw InvalidParams("width must be > 0");
  }
};

struct StepReport {
  double adv_G = 0, adv_F = 0, disc_X = 0, disc_Y = 0, cycle = 0, total = 0;
};

using TrainReport = std::vector<StepReport>;

template <typename T = float>
struct CycleGanModels {
  Generator<T> G;  // X -> Y
  Generator<T> F;  // Y -> X
  Discriminator<T> DX;
  Discriminator<T> DY;
};

template <typename T>
CycleGanModels<T> init_models(const CycleGanConfig& cfg) {
  return {Generator<T>(cfg.width, cfg.residual_blocks, cfg.seed * 4 + 1),
          Generator<T>(cfg.width, cfg.residual_blocks, cfg.seed * 4 + 2), Discriminator<T>(cfg.width, cfg.seed * 4 + 3),
          Discriminator<T>(cfg.width, cfg.seed * 4 + 4)};
}

template <typename T>
struct CycleGanResult {
  CycleGanModels<T> models;
  TrainReport report;
};

// Alternating updates: generators on adversarial + lambda * bidirectional
// cycle loss, then discriminators on real vs generated samples.
template <typename T>
CycleGanResult<T> train_cyclegan(const std::vector<image::ImageTensor>& X, const std::vector<image::ImageTensor>& Y,
                                 const CycleGanConfig& cfg) {
  cfg.validate();
  if (X.empty() || Y.empty()) throw EmptyDataset("both domains need at least one image");
  for (const auto* set : {&X, &Y})
    for (const auto& img : *set)
      if (img.height != cfg.image_side || img.width != cfg.image_side || img.range != image::Range::unit)
        throw ShapeMismatch("dataset images must be UNIT " + std::to_string(cfg.image_side) + "x" +
                            std::to_string(cfg.image_side));

  CycleGanResult<T> r{init_models<T>(cfg), {}};
  if (cfg.steps == 0) return r;
  auto& m = r.models;

  std::vector<Tensor<T>> xs, ys;
  for (const auto& img : X) xs.push_back(to_signed<T>(img));
  for (const auto& img : Y) ys.push_back(to_signed<T>(img));

  NamedParams<T> gen = m.G.params();
  gen.insert(gen.end(), m.F.params().begin(), m.F.params().end());
  NamedParams<T> disc = m.DX.params();
  disc.insert(disc.end(), m.DY.params().begin(), m.DY.params().end());
  Adam<T> opt_g(gen, cfg.step_size, 0.5, 0.999);
  Adam<T> opt_d(disc, cfg.step_size, 0.5, 0.999);

  const T lambda = static_cast<T>(cfg.lambda);
  Rng rng(cfg.seed);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    auto x = ag::Var<T>::constant(xs[rng.index(xs.size())]);
    auto y = ag::Var<T>::constant(ys[rng.index(ys.size())]);

    opt_g.zero_grad();
    auto fake_y = m.G.forward(x);
    auto rec_x = m.F.forward(fake_y);
    auto fake_x = m.F.forward(y);
    auto rec_y = m.G.forward(fake_x);
    auto adv_g = ag::mean_sq_to(m.DY.forward(fake_y), T(1));
    auto adv_f = ag::mean_sq_to(m.DX.forward(fake_x), T(1));
    auto cycle = ag::add(ag::mean_abs_diff(rec_x, x), ag::mean_abs_diff(rec_y, y));
    auto total = ag::add(ag::add(adv_g, adv_f), ag::scale(cycle, lambda));
    if (!std::isfinite(total.item())) throw DivergedLoss(step);
    ag::backward(total);
    opt_g.step();

    opt_d.zero_grad();
    auto disc_y = ag::scale(ag::add(ag::mean_sq_to(m.DY.forward(y), T(1)),
                                    ag::mean_sq_to(m.DY.forward(fake_y.detach()), T(0))),
                            T(0.5));
    auto disc_x = ag::scale(ag::add(ag::mean_sq_to(m.DX.forward(x), T(1)),
                                    ag::mean_sq_to(m.DX.forward(fake_x.detach()), T(0))),
                            T(0.5));
    auto disc_total = ag::add(disc_x, disc_y);
    if (!std::isfinite(disc_total.item())) throw DivergedLoss(step);
    ag::backward(disc_total);
    opt_d.step();

    r.report.push_back({static_cast<double>(adv_g.item()), static_cast<double>(adv_f.item()),
                        static_cast<double>(disc_x.item()), static_cast<double>(disc_y.item()),
                        static_cast<double>(cycle.item()), static_cast<double>(total.item())});
  }
  return r;
}

template <typename T>
WeightArchive to_archive(const Generator<T>& G, const Generator<T>& F) {
  WeightArchive a;
  append_to_archive(a, "G.", G.params());
  append_to_archive(a, "F.", F.params());
  return a;
}

}  // namespace livestyle::cyclegan
