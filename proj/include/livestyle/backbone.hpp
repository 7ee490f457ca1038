#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "livestyle/archive.hpp"
#include "livestyle/autograd.hpp"
#include "livestyle/image.hpp"
#include "livestyle/rng.hpp"

namespace livestyle::backbone {

enum class LayerKind { conv3x3, relu, maxpool2x2 };

struct LayerSpec {
  std::string layer_id;
  LayerKind kind = LayerKind::conv3x3;
  std::size_t in_channels = 0;   // conv only
  std::size_t out_channels = 0;  // conv only
};

// Activations of one layer, [channels, spatial] with spatial = height*width.
template <typename T = float>
struct FeatureMap {
  std::string layer_id;
  std::size_t channels = 0;
  std::size_t spatial = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<T> data;
};

template <typename T = float>
struct GramMatrix {
  std::size_t size = 0;
  std::vector<T> data;

  T operator()(std::size_t i, std::size_t j) const { return data[i * size + j]; }
};

// Unnormalized Gram matrix: G[i][j] = sum_k f[i][k] f[j][k]. The upper
// triangle is computed and mirrored, so the result is exactly symmetric.
template <typename T>
GramMatrix<T> gram_matrix(const FeatureMap<T>& f) {
  if (f.data.size() != f.channels * f.spatial) throw ShapeMismatch("feature map data length mismatch");
  auto v = ag::Var<T>::constant(Tensor<T>({f.channels, f.spatial}, f.data));
  return {f.channels, ag::gram(v).value().data};
}

template <typename T = float>
class BackboneModel {
 public:
  struct Layer {
    LayerSpec spec;
    ag::Var<T> weights;
    ag::Var<T> biases;
  };

  BackboneModel() = default;
  BackboneModel(std::vector<Layer> layers, image::PreprocessSpec input_spec)
      : layers_(std::move(layers)), input_spec_(input_spec) {}

  const std::vector<Layer>& layers() const { return layers_; }
  const image::PreprocessSpec& input_spec() const { return input_spec_; }

  bool has_layer(const std::string& id) const {
    return std::any_of(layers_.begin(), layers_.end(), [&](const Layer& l) { return l.spec.layer_id == id; });
  }

  // Output channel count at a layer.
  std::size_t channels_at(const std::string& id) const {
    std::size_t ch = 3;
    for (const auto& l : layers_) {
      if (l.spec.kind == LayerKind::conv3x3) ch = l.spec.out_channels;
      if (l.spec.layer_id == id) return ch;
    }
    throw UnknownLayer(id);
  }

  // Differentiable forward pass over a [3,H,W] input in backbone range.
  // Returns the activation of every requested layer; stops after the
  // deepest one.
  std::map<std::string, ag::Var<T>> forward(const ag::Var<T>& x, const std::vector<std::string>& wanted) const {
    std::set<std::string> remaining(wanted.begin(), wanted.end());
    for (const auto& id : remaining)
      if (!has_layer(id)) throw UnknownLayer(id);
    std::map<std::string, ag::Var<T>> out;
    ag::Var<T> h = x;
    for (const auto& l : layers_) {
      if (remaining.empty()) break;
      switch (l.spec.kind) {
        case LayerKind::conv3x3: h = ag::conv2d(h, l.weights, l.biases, 1, 1); break;
        case LayerKind::relu: h = ag::relu(h); break;
        case LayerKind::maxpool2x2: h = ag::maxpool2x2(h); break;
      }
      if (remaining.erase(l.spec.layer_id)) out[l.spec.layer_id] = h;
    }
    return out;
  }

  template <typename U>
  BackboneModel<U> cast() const {
    std::vector<typename BackboneModel<U>::Layer> ls;
    for (const auto& l : layers_) {
      typename BackboneModel<U>::Layer nl{l.spec, {}, {}};
      if (l.weights.valid()) {
        nl.weights = ag::Var<U>::constant(l.weights.value().template cast<U>());
        nl.biases = ag::Var<U>::constant(l.biases.value().template cast<U>());
      }
      ls.push_back(std::move(nl));
    }
    return BackboneModel<U>(std::move(ls), input_spec_);
  }

 private:
  std::vector<Layer> layers_;
  image::PreprocessSpec input_spec_;
};

// Binds archive tensors "<layer>.weight" [out,in,3,3] and "<layer>.bias"
// [out] to every conv layer of `expected`.
template <typename T = float>
BackboneModel<T> load_weights(const WeightArchive& archive, const std::vector<LayerSpec>& expected,
                              const image::PreprocessSpec& input_spec = {}) {
  archive.validate();
  std::set<std::string> ids;
  std::vector<typename BackboneModel<T>::Layer> layers;
  std::size_t channels = 3;
  for (const auto& spec : expected) {
    if (!ids.insert(spec.layer_id).second) throw InvalidParams("duplicate layer id '" + spec.layer_id + "'");
    typename BackboneModel<T>::Layer layer{spec, {}, {}};
    if (spec.kind == LayerKind::conv3x3) {
      if (spec.in_channels != channels)
        throw ShapeMismatch(spec.layer_id + ": expects " + std::to_string(spec.in_channels) +
                            " input channels but receives " + std::to_string(channels));
      const std::string wname = spec.layer_id + ".weight";
      const std::string bname = spec.layer_id + ".bias";
      const Shape wshape{spec.out_channels, spec.in_channels, 3, 3};
      const Shape bshape{spec.out_channels};
      if (!archive.contains(wname)) throw MissingTensor(wname);
      if (!archive.contains(bname)) throw MissingTensor(bname);
      if (archive.entry(wname).shape != wshape)
        throw ShapeMismatch(wname + ": expected " + shape_str(wshape) + ", archive has " +
                            shape_str(archive.entry(wname).shape));
      if (archive.entry(bname).shape != bshape)
        throw ShapeMismatch(bname + ": expected " + shape_str(bshape) + ", archive has " +
                            shape_str(archive.entry(bname).shape));
      layer.weights = ag::Var<T>::constant(archive.get(wname).template cast<T>());
      layer.biases = ag::Var<T>::constant(archive.get(bname).template cast<T>());
      channels = spec.out_channels;
    }
    layers.push_back(std::move(layer));
  }
  return BackboneModel<T>(std::move(layers), input_spec);
}

template <typename T>
std::map<std::string, FeatureMap<T>> extract_features(const BackboneModel<T>& model, const image::ImageTensor& img,
                                                      const std::set<std::string>& layers) {
  if (img.range != image::Range::backbone)
    throw RangeMismatch("extract_features expects a BACKBONE-range image");
  auto x = ag::Var<T>::constant(image::to_chw<T>(img));
  auto acts = model.forward(x, {layers.begin(), layers.end()});
  std::map<std::string, FeatureMap<T>> out;
  for (auto& [id, v] : acts) {
    const auto& t = v.value();
    out[id] = FeatureMap<T>{id, t.dim(0), t.dim(1) * t.dim(2), t.dim(1), t.dim(2), t.data};
  }
  return out;
}

// ------------------------------------------------------------------ presets

// The 16 convolutional layers of VGG-19 with their ReLUs and pools.
inline std::vector<LayerSpec> vgg19_spec() {
  const std::size_t convs[] = {2, 2, 4, 4, 4};
  const std::size_t widths[] = {64, 128, 256, 512, 512};
  std::vector<LayerSpec> spec;
  std::size_t in = 3;
  for (int b = 0; b < 5; ++b) {
    for (std::size_t i = 1; i <= convs[b]; ++i) {
      const std::string suffix = std::to_string(b + 1) + "_" + std::to_string(i);
      spec.push_back({"conv" + suffix, LayerKind::conv3x3, in, widths[b]});
      spec.push_back({"relu" + suffix, LayerKind::relu});
      in = widths[b];
    }
    spec.push_back({"pool" + std::to_string(b + 1), LayerKind::maxpool2x2});
  }
  return spec;
}

// Three-conv desk-scale backbone using VGG-style layer names.
inline std::vector<LayerSpec> tiny_spec(std::size_t width1 = 8, std::size_t width2 = 16) {
  return {
      {"conv1_1", LayerKind::conv3x3, 3, width1},
      {"relu1_1", LayerKind::relu},
      {"conv1_2", LayerKind::conv3x3, width1, width1},
      {"relu1_2", LayerKind::relu},
      {"pool1", LayerKind::maxpool2x2},
      {"conv2_1", LayerKind::conv3x3, width1, width2},
      {"relu2_1", LayerKind::relu},
  };
}

// He-normal conv weights, zero biases.
inline WeightArchive random_weights(const std::vector<LayerSpec>& spec, std::uint64_t seed) {
  Rng rng(seed);
  WeightArchive archive;
  for (const auto& l : spec) {
    if (l.kind != LayerKind::conv3x3) continue;
    Tensor<float> w({l.out_channels, l.in_channels, 3, 3});
    const double stddev = std::sqrt(2.0 / (9.0 * l.in_channels));
    for (auto& v : w.data) v = static_cast<float>(rng.normal() * stddev);
    archive.add(l.layer_id + ".weight", w);
    archive.add(l.layer_id + ".bias", Tensor<float>({l.out_channels}));
  }
  return archive;
}

}  // namespace livestyle::backbone
