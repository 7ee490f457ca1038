#pragma once

// Arbitrary style transfer. A style-prediction network maps a style image to
// a StyleEmbedding (per-channel scale/shift for every conditional instance
// normalization site); the transfer network stylizes a content image with
// those parameters. Embeddings live in a linear space, so styles can be
// blended and stylization strength interpolated.

#include <chrono>
#include <cmath>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "livestyle/backbone.hpp"
#include "livestyle/params.hpp"

namespace livestyle::ast {

inline constexpr double kInstanceNormEps = 1e-5;

struct StyleEmbedding {
  std::vector<float> gamma;
  std::vector<float> beta;

  std::size_t dimension() const { return gamma.size(); }
  bool operator==(const StyleEmbedding&) const = default;
};

struct BlendSpec {
  std::vector<std::pair<StyleEmbedding, double>> entries;
};

// Coordinate-wise weighted average of embeddings. Weights must be >= 0 and
// sum to 1 within 1e-6.
inline StyleEmbedding blend_embeddings(const BlendSpec& spec) {
  if (spec.entries.empty()) throw InvalidWeights("blend needs at least one entry");
  const std::size_t D = spec.entries.front().first.dimension();
  double total = 0.0;
  for (const auto& [e, w] : spec.entries) {
    if (e.gamma.size() != D || e.beta.size() != D)
      throw DimensionMismatch("blend entries must share dimension " + std::to_string(D));
    if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidWeights("blend weights must be finite and >= 0");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-6) throw InvalidWeights("blend weights sum to " + std::to_string(total));
  std::vector<double> g(D, 0.0), b(D, 0.0);
  for (const auto& [e, w] : spec.entries)
    for (std::size_t i = 0; i < D; ++i) {
      g[i] += w * e.gamma[i];
      b[i] += w * e.beta[i];
    }
  return {{g.begin(), g.end()}, {b.begin(), b.end()}};
}

// alpha * style + (1 - alpha) * content.
inline StyleEmbedding strength_blend(const StyleEmbedding& content_emb, const StyleEmbedding& style_emb,
                                     double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidStrength("strength must be in [0,1]");
  return blend_embeddings({{{style_emb, alpha}, {content_emb, 1.0 - alpha}}});
}

// Conditional normalization site: instance norm, then per-channel gamma/beta.
template <typename T>
ag::Var<T> conditional_instance_norm(const ag::Var<T>& x, const ag::Var<T>& gamma, const ag::Var<T>& beta) {
  return ag::channel_affine(ag::instance_norm(x, static_cast<T>(kInstanceNormEps)), gamma, beta);
}

// Feed-forward stylization network.
//
//   enc1: conv3x3 3->w1, CIN, ReLU
//   enc2: conv3x3 stride 2 w1->w2, CIN, ReLU
//   res:  conv3x3 w2->w2, CIN, ReLU, added to its input
//   dec1: upsample x2, conv3x3 w2->w1, CIN, ReLU
//   out:  conv3x3 w1->3, sigmoid
//
// Embedding layout: gamma and beta each concatenate the sites in the order
// enc1 (w1), enc2 (w2), res (w2), dec1 (w1).
template <typename T = float>
class TransferNetwork {
 public:
  TransferNetwork() : TransferNetwork(8, 16, 0) {}
  TransferNetwork(std::size_t w1, std::size_t w2, std::uint64_t seed) : w1_(w1), w2_(w2) {
    Rng rng(seed);
    add("enc1", w1, 3, rng);
    add("enc2", w2, w1, rng);
    add("res", w2, w2, rng);
    add("dec1", w1, w2, rng);
    add("out", 3, w1, rng);
  }

  std::vector<std::pair<std::string, std::size_t>> site_order() const {
    return {{"enc1", w1_}, {"enc2", w2_}, {"res", w2_}, {"dec1", w1_}};
  }
  std::size_t embedding_dimension() const { return 2 * w1_ + 2 * w2_; }
  std::size_t width1() const { return w1_; }
  std::size_t width2() const { return w2_; }

  // x: [3,H,W] UNIT image with even H and W. gamma/beta: [D].
  // When `sites` is non-null, each site's modulated activation (before ReLU)
  // is appended to it.
  ag::Var<T> forward(const ag::Var<T>& x, const ag::Var<T>& gamma, const ag::Var<T>& beta,
                     std::vector<Tensor<T>>* sites = nullptr) const {
    const std::size_t D = embedding_dimension();
    if (gamma.numel() != D || beta.numel() != D)
      throw DimensionMismatch("embedding dimension " + std::to_string(gamma.numel()) + ", network expects " +
                              std::to_string(D));
    if (x.value().rank() != 3 || x.value().dim(0) != 3 || x.value().dim(1) % 2 || x.value().dim(2) % 2 ||
        x.value().dim(1) < 2 || x.value().dim(2) < 2)
      throw ShapeMismatch("transfer network expects a [3,H,W] input with even H and W, got " +
                          shape_str(x.value().shape));
    std::size_t offset = 0;
    auto site = [&](const ag::Var<T>& h, std::size_t ch) {
      auto y = conditional_instance_norm(h, ag::slice(gamma, offset, ch), ag::slice(beta, offset, ch));
      offset += ch;
      if (sites) sites->push_back(y.value());
      return ag::relu(y);
    };
    auto h = site(conv("enc1", x, 1), w1_);
    h = site(conv("enc2", h, 2), w2_);
    h = ag::add(h, site(conv("res", h, 1), w2_));
    h = site(conv("dec1", ag::upsample2x(h), 1), w1_);
    return ag::sigmoid(conv("out", h, 1));
  }

  NamedParams<T>& params() { return params_; }
  const NamedParams<T>& params() const { return params_; }

  TransferNetwork clone() const {
    TransferNetwork c = *this;
    for (auto& [name, v] : c.params_) v = ag::Var<T>::parameter(v.value());
    return c;
  }

  static TransferNetwork from_archive(const WeightArchive& a, const std::string& prefix = "transfer.") {
    const auto w1 = a.entry(prefix + "enc1.weight").shape.at(0);
    const auto w2 = a.entry(prefix + "enc2.weight").shape.at(0);
    TransferNetwork net(w1, w2, 0);
    load_from_archive(a, prefix, net.params_);
    return net;
  }

 private:
  void add(const std::string& name, std::size_t out, std::size_t in, Rng& rng) {
    params_.push_back({name + ".weight", he_conv_param<T>(rng, out, in, 3)});
    params_.push_back({name + ".bias", filled_param<T>({out})});
  }

  ag::Var<T> conv(const std::string& name, const ag::Var<T>& x, std::size_t stride) const {
    for (std::size_t i = 0; i < params_.size(); i += 2)
      if (params_[i].first == name + ".weight")
        return ag::conv2d(x, params_[i].second, params_[i + 1].second, stride, 1);
    throw UnknownLayer(name);
  }

  std::size_t w1_, w2_;
  NamedParams<T> params_;
};

// Style prediction network: two stride-2 conv/ReLU stages, global average
// pooling and an affine head emitting gamma || beta.
template <typename T = float>
class StylePredictor {
 public:
  StylePredictor() : StylePredictor(8, 16, 48, 0) {}
  StylePredictor(std::size_t w1, std::size_t w2, std::size_t embedding_dim, std::uint64_t seed)
      : dim_(embedding_dim) {
    Rng rng(seed);
    params_.push_back({"conv1.weight", he_conv_param<T>(rng, w1, 3, 3)});
    params_.push_back({"conv1.bias", filled_param<T>({w1})});
    params_.push_back({"conv2.weight", he_conv_param<T>(rng, w2, w1, 3)});
    params_.push_back({"conv2.bias", filled_param<T>({w2})});
    Tensor<T> head({2 * dim_, w2});
    for (auto& v : head.data) v = static_cast<T>(rng.normal() * 0.05);
    Tensor<T> bias({2 * dim_});
    // Start near the identity modulation: gamma = 1, beta = 0.
    for (std::size_t i = 0; i < dim_; ++i) bias[i] = T(1);
    params_.push_back({"head.weight", ag::Var<T>::parameter(std::move(head))});
    params_.push_back({"head.bias", ag::Var<T>::parameter(std::move(bias))});
  }

  std::size_t embedding_dimension() const { return dim_; }

  // Returns the [2D] vector gamma || beta for a [3,H,W] UNIT image.
  ag::Var<T> forward(const ag::Var<T>& style) const {
    const auto& s = style.value();
    if (s.rank() != 3 || s.dim(0) != 3 || s.dim(1) < 4 || s.dim(2) < 4)
      throw ShapeMismatch("style predictor expects a [3,H,W] input with H,W >= 4, got " + shape_str(s.shape));
    auto h = ag::relu(ag::conv2d(style, p(0), p(1), 2, 1));
    h = ag::relu(ag::conv2d(h, p(2), p(3), 2, 1));
    return ag::linear(ag::global_avg_pool(h), p(4), p(5));
  }

  NamedParams<T>& params() { return params_; }
  const NamedParams<T>& params() const { return params_; }

  StylePredictor clone() const {
    StylePredictor c = *this;
    for (auto& [name, v] : c.params_) v = ag::Var<T>::parameter(v.value());
    return c;
  }

  static StylePredictor from_archive(const WeightArchive& a, const std::string& prefix = "predictor.") {
    const auto w1 = a.entry(prefix + "conv1.weight").shape.at(0);
    const auto w2 = a.entry(prefix + "conv2.weight").shape.at(0);
    const auto d2 = a.entry(prefix + "head.weight").shape.at(0);
    StylePredictor pred(w1, w2, d2 / 2, 0);
    load_from_archive(a, prefix, pred.params_);
    return pred;
  }

 private:
  const ag::Var<T>& p(std::size_t i) const { return params_[i].second; }

  std::size_t dim_;
  NamedParams<T> params_;
};

template <typename T>
StyleEmbedding to_embedding(const Tensor<T>& v) {
  const std::size_t D = v.numel() / 2;
  StyleEmbedding e;
  for (std::size_t i = 0; i < D; ++i) {
    e.gamma.push_back(static_cast<float>(v[i]));
    e.beta.push_back(static_cast<float>(v[D + i]));
  }
  return e;
}

template <typename T>
StyleEmbedding predict_style(const StylePredictor<T>& predictor, const image::ImageTensor& style) {
  if (style.range != image::Range::unit) throw RangeMismatch("predict_style expects a UNIT image");
  return to_embedding(predictor.forward(ag::Var<T>::constant(image::to_chw<T>(style))).value());
}

template <typename T>
std::pair<ag::Var<T>, ag::Var<T>> embedding_vars(const StyleEmbedding& e) {
  if (e.beta.size() != e.gamma.size()) throw DimensionMismatch("gamma and beta differ in length");
  return {ag::Var<T>::constant(Tensor<T>({e.dimension()}, std::vector<T>(e.gamma.begin(), e.gamma.end()))),
          ag::Var<T>::constant(Tensor<T>({e.dimension()}, std::vector<T>(e.beta.begin(), e.beta.end())))};
}

template <typename T>
image::ImageTensor stylize(const TransferNetwork<T>& net, const image::ImageTensor& content,
                           const StyleEmbedding& emb, std::vector<Tensor<T>>* sites = nullptr) {
  if (content.range != image::Range::unit) throw RangeMismatch("stylize expects a UNIT content image");
  if (emb.dimension() != net.embedding_dimension())
    throw DimensionMismatch("embedding dimension " + std::to_string(emb.dimension()) + ", network expects " +
                            std::to_string(net.embedding_dimension()));
  auto [g, b] = embedding_vars<T>(emb);
  auto out = net.forward(ag::Var<T>::constant(image::to_chw<T>(content)), g, b, sites);
  return image::from_chw(out.value(), image::Range::unit);
}

// ------------------------------------------------------------------ losses

// ||Gx - Gs||_F^2 / n
template <typename T>
T ast_style_term(const backbone::GramMatrix<T>& Gx, const backbone::GramMatrix<T>& Gs, double n) {
  if (Gx.size != Gs.size || Gx.data.size() != Gs.data.size()) throw ShapeMismatch("Gram matrices differ in size");
  if (!(n > 0)) throw InvalidParams("normalizer n must be > 0");
  T s = 0;
  for (std::size_t i = 0; i < Gx.data.size(); ++i) s += (Gx.data[i] - Gs.data[i]) * (Gx.data[i] - Gs.data[i]);
  return s / static_cast<T>(n);
}

// ||Fx - Fc||_2^2 / n over the flattened map.
template <typename T>
T ast_content_term(const backbone::FeatureMap<T>& Fx, const backbone::FeatureMap<T>& Fc, double n) {
  if (Fx.data.size() != Fc.data.size()) throw ShapeMismatch("feature maps differ in size");
  if (!(n > 0)) throw InvalidParams("normalizer n must be > 0");
  T s = 0;
  for (std::size_t i = 0; i < Fx.data.size(); ++i) s += (Fx.data[i] - Fc.data[i]) * (Fx.data[i] - Fc.data[i]);
  return s / static_cast<T>(n);
}

namespace detail {

inline image::ImageTensor to_backbone(const image::ImageTensor& t, const image::PreprocessSpec& spec) {
  return t.range == image::Range::unit ? image::normalize(t, spec) : t;
}

template <typename T>
std::vector<double> normalizers(const std::map<std::string, backbone::FeatureMap<T>>& f,
                                const std::vector<std::string>& layers, const std::vector<double>& given) {
  if (!given.empty() && given.size() != layers.size())
    throw InvalidParams("one normalizer per layer required");
  std::vector<double> n;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& m = f.at(layers[i]);
    n.push_back(given.empty() ? static_cast<double>(m.channels * m.spatial) : given[i]);
  }
  return n;
}

}  // namespace detail

// sum over style layers of ||G[f_i(x)] - G[f_i(s)]||_F^2 / n_i, with
// n_i = channels_i * spatial_i unless given. UNIT inputs are normalized to
// the backbone range first.
template <typename T>
T ast_style_loss(const image::ImageTensor& x, const image::ImageTensor& s, const backbone::BackboneModel<T>& model,
                 const std::vector<std::string>& style_layers, const std::vector<double>& n = {}) {
  const std::set<std::string> layers(style_layers.begin(), style_layers.end());
  auto fx = backbone::extract_features(model, detail::to_backbone(x, model.input_spec()), layers);
  auto fs = backbone::extract_features(model, detail::to_backbone(s, model.input_spec()), layers);
  const auto norm = detail::normalizers(fx, style_layers, n);
  T total = 0;
  for (std::size_t i = 0; i < style_layers.size(); ++i)
    total += ast_style_term(backbone::gram_matrix(fx.at(style_layers[i])),
                            backbone::gram_matrix(fs.at(style_layers[i])), norm[i]);
  return total;
}

// sum over content layers of ||f_j(x) - f_j(c)||^2 / n_j.
template <typename T>
T ast_content_loss(const image::ImageTensor& x, const image::ImageTensor& c, const backbone::BackboneModel<T>& model,
                   const std::vector<std::string>& content_layers, const std::vector<double>& n = {}) {
  const std::set<std::string> layers(content_layers.begin(), content_layers.end());
  auto fx = backbone::extract_features(model, detail::to_backbone(x, model.input_spec()), layers);
  auto fc = backbone::extract_features(model, detail::to_backbone(c, model.input_spec()), layers);
  const auto norm = detail::normalizers(fx, content_layers, n);
  T total = 0;
  for (std::size_t i = 0; i < content_layers.size(); ++i)
    total += ast_content_term(fx.at(content_layers[i]), fc.at(content_layers[i]), norm[i]);
  return total;
}

// ------------------------------------------------------------------ training

struct AstTrainConfig {
  double lambda_s = 50.0;
  double lambda_c = 1.0;
  std::size_t steps = 200;
  double step_size = 1e-2;
  std::uint64_t seed = 0;
  std::vector<std::string> content_layers{"relu2_1"};
  std::vector<std::string> style_layers{"relu1_1", "relu1_2", "relu2_1"};
};

struct AstLoss {
  double content = 0.0;
  double style = 0.0;
  double total = 0.0;
};

// Maps a [3,H,W] UNIT graph value into backbone range.
template <typename T>
ag::Var<T> backbone_input(const ag::Var<T>& x, const image::PreprocessSpec& spec) {
  Tensor<T> scale({3}), shift({3});
  for (std::size_t c = 0; c < 3; ++c) {
    scale[c] = static_cast<T>(1.0 / spec.channel_stds[c]);
    shift[c] = static_cast<T>(-spec.channel_means[c] / spec.channel_stds[c]);
  }
  return ag::channel_affine(x, ag::Var<T>::constant(scale), ag::Var<T>::constant(shift));
}

// Training objective lambda_c * content + lambda_s * style for one
// content/style pair ([3,H,W] UNIT tensors).
template <typename T>
std::pair<ag::Var<T>, AstLoss> ast_objective(const StylePredictor<T>& predictor, const TransferNetwork<T>& net,
                                             const backbone::BackboneModel<T>& model, const Tensor<T>& content,
                                             const Tensor<T>& style, const AstTrainConfig& cfg) {
  const auto& spec = model.input_spec();
  const std::size_t D = net.embedding_dimension();
  auto emb = predictor.forward(ag::Var<T>::constant(style));
  auto out = net.forward(ag::Var<T>::constant(content), ag::slice(emb, 0, D), ag::slice(emb, D, D));

  std::vector<std::string> wanted = cfg.content_layers;
  wanted.insert(wanted.end(), cfg.style_layers.begin(), cfg.style_layers.end());
  auto fo = model.forward(backbone_input(out, spec), wanted);
  auto fc = model.forward(backbone_input(ag::Var<T>::constant(content), spec), cfg.content_layers);
  auto fs = model.forward(backbone_input(ag::Var<T>::constant(style), spec), cfg.style_layers);

  ag::Var<T> content_loss = ag::Var<T>::constant(Tensor<T>({1}));
  for (const auto& id : cfg.content_layers) {
    const auto& F = fo.at(id);
    content_loss =
        ag::add(content_loss, ag::scale(ag::sum_sq(ag::sub(F, fc.at(id))), T(1) / static_cast<T>(F.numel())));
  }
  ag::Var<T> style_loss = ag::Var<T>::constant(Tensor<T>({1}));
  for (const auto& id : cfg.style_layers) {
    const auto& F = fo.at(id);
    style_loss = ag::add(style_loss, ag::scale(ag::sum_sq(ag::sub(ag::gram(F), ag::gram(fs.at(id)))),
                                               T(1) / static_cast<T>(F.numel())));
  }

  auto total = ag::add(ag::scale(content_loss, static_cast<T>(cfg.lambda_c)),
                       ag::scale(style_loss, static_cast<T>(cfg.lambda_s)));
  return {total, AstLoss{static_cast<double>(content_loss.item()), static_cast<double>(style_loss.item()),
                         static_cast<double>(total.item())}};
}

template <typename T>
struct AstTrainResult {
  StylePredictor<T> predictor;
  TransferNetwork<T> net;
  std::vector<AstLoss> trace;
};

// Trains copies of the given networks; the inputs are left untouched.
template <typename T>
AstTrainResult<T> train_ast(const StylePredictor<T>& predictor, const TransferNetwork<T>& net,
                            const std::vector<image::ImageTensor>& content_set,
                            const std::vector<image::ImageTensor>& style_set,
                            const backbone::BackboneModel<T>& model, const AstTrainConfig& cfg) {
  if (content_set.empty() || style_set.empty()) throw EmptyDataset("train_ast needs content and style images");
  if (predictor.embedding_dimension() != net.embedding_dimension())
    throw DimensionMismatch("predictor and transfer network disagree on embedding dimension");
  AstTrainResult<T> r{predictor.clone(), net.clone(), {}};
  if (cfg.steps == 0) return r;

  std::vector<Tensor<T>> contents, styles;
  for (const auto& c : content_set) contents.push_back(image::to_chw<T>(c));
  for (const auto& s : style_set) styles.push_back(image::to_chw<T>(s));

  NamedParams<T> all = r.predictor.params();
  all.insert(all.end(), r.net.params().begin(), r.net.params().end());
  Adam<T> opt(all, cfg.step_size);
  Rng rng(cfg.seed);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const auto& c = contents[rng.index(contents.size())];
    const auto& s = styles[rng.index(styles.size())];
    opt.zero_grad();
    auto [loss, parts] = ast_objective(r.predictor, r.net, model, c, s, cfg);
    if (!std::isfinite(parts.total)) throw DivergedLoss(step);
    ag::backward(loss);
    opt.step();
    r.trace.push_back(parts);
  }
  return r;
}

// Mean objective over every content/style pair.
template <typename T>
AstLoss ast_dataset_loss(const StylePredictor<T>& predictor, const TransferNetwork<T>& net,
                         const std::vector<image::ImageTensor>& content_set,
                         const std::vector<image::ImageTensor>& style_set, const backbone::BackboneModel<T>& model,
                         const AstTrainConfig& cfg) {
  AstLoss mean;
  for (const auto& c : content_set)
    for (const auto& s : style_set) {
      auto parts = ast_objective(predictor, net, model, image::to_chw<T>(c), image::to_chw<T>(s), cfg).second;
      mean.content += parts.content;
      mean.style += parts.style;
      mean.total += parts.total;
    }
  const double n = static_cast<double>(content_set.size() * style_set.size());
  return {mean.content / n, mean.style / n, mean.total / n};
}

template <typename T>
WeightArchive to_archive(const StylePredictor<T>& predictor, const TransferNetwork<T>& net) {
  WeightArchive a;
  append_to_archive(a, "predictor.", predictor.params());
  append_to_archive(a, "transfer.", net.params());
  return a;
}

}  // namespace livestyle::ast
