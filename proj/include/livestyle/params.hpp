#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "livestyle/archive.hpp"
#include "livestyle/autograd.hpp"
#include "livestyle/rng.hpp"

namespace livestyle {

template <typename T>
using NamedParams = std::vector<std::pair<std::string, ag::Var<T>>>;

template <typename T>
ag::Var<T> he_conv_param(Rng& rng, std::size_t out, std::size_t in, std::size_t k) {
  Tensor<T> w({out, in, k, k});
  const double stddev = std::sqrt(2.0 / static_cast<double>(in * k * k));
  for (auto& v : w.data) v = static_cast<T>(rng.normal() * stddev);
  return ag::Var<T>::parameter(std::move(w));
}

template <typename T>
ag::Var<T> filled_param(const Shape& s, T value = T(0)) {
  return ag::Var<T>::parameter(Tensor<T>(s, value));
}

template <typename T>
void append_to_archive(WeightArchive& archive, const std::string& prefix, const NamedParams<T>& params) {
  for (const auto& [name, v] : params) archive.add(prefix + name, v.value());
}

// Overwrites every parameter from "<prefix><name>"; shapes must match.
template <typename T>
void load_from_archive(const WeightArchive& archive, const std::string& prefix, NamedParams<T>& params) {
  for (auto& [name, v] : params) {
    const std::string full = prefix + name;
    if (!archive.contains(full)) throw MissingTensor(full);
    if (archive.entry(full).shape != v.shape())
      throw ShapeMismatch(full + ": expected " + shape_str(v.shape()) + ", archive has " +
                          shape_str(archive.entry(full).shape));
    v.mutable_value() = archive.get(full).template cast<T>();
  }
}

template <typename T>
void zero_grads(NamedParams<T>& params) {
  for (auto& p : params) p.second.zero_grad();
}

// Adam over a fixed parameter list.
template <typename T>
class Adam {
 public:
  Adam(NamedParams<T> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
    for (const auto& p : params_) {
      m_.emplace_back(p.second.numel(), 0.0);
      v_.emplace_back(p.second.numel(), 0.0);
    }
  }

  void zero_grad() { zero_grads(params_); }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& var = params_[k].second;
      const auto& g = var.grad();
      auto& w = var.mutable_value();
      for (std::size_t i = 0; i < w.numel(); ++i) {
        const double gi = static_cast<double>(g[i]);
        m_[k][i] = b1_ * m_[k][i] + (1.0 - b1_) * gi;
        v_[k][i] = b2_ * v_[k][i] + (1.0 - b2_) * gi * gi;
        w[i] -= static_cast<T>(lr_ * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + eps_));
      }
    }
  }

 private:
  NamedParams<T> params_;
  double lr_, b1_, b2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace livestyle
