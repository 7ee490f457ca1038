#pragma once

// Minimal reverse-mode automatic differentiation over dense tensors.
//
// A Var is a handle to a graph node. Results of operations on Vars that
// require gradients record a backward closure; results built only from
// constants are plain constants and retain no graph. Gradients accumulate
// only into nodes that require them, so frozen parameters shared between
// threads are never written during backward().

#include <algorithm>
#include <cassert>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "livestyle/tensor.hpp"

namespace livestyle::ag {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor<T>& grad_buffer() {
    if (grad.empty() && !value.empty()) grad = Tensor<T>(value.shape);
    return grad;
  }
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

  static Var constant(Tensor<T> v) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(v);
    return Var(std::move(n));
  }
  static Var parameter(Tensor<T> v) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(v);
    n->requires_grad = true;
    return Var(std::move(n));
  }

  bool valid() const { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape; }
  std::size_t numel() const { return node_->value.numel(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool r) { node_->requires_grad = r; }

  // Gradient buffer; zero-filled when nothing has been accumulated yet.
  const Tensor<T>& grad() const { return node_->grad_buffer(); }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.data.begin(), node_->grad.data.end(), T(0));
  }

  // Scalar value of a one-element tensor.
  T item() const { return node_->value.data.at(0); }

  Var detach() const { return constant(node_->value); }

  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

namespace detail {

// Builds a result node. The backward closure is only kept when at least one
// parent needs a gradient.
template <typename T>
Var<T> make(Tensor<T> value, std::initializer_list<Var<T>> parents,
            std::function<void(Node<T>&)> backward) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  for (const auto& p : parents)
    if (p.requires_grad()) n->requires_grad = true;
  if (n->requires_grad) {
    for (const auto& p : parents) n->parents.push_back(p.node());
    n->backward_fn = std::move(backward);
  }
  return Var<T>(std::move(n));
}

template <typename T>
Tensor<T>* grad_of(const std::shared_ptr<Node<T>>& p) {
  return p->requires_grad ? &p->grad_buffer() : nullptr;
}

}  // namespace detail

// Runs reverse accumulation from a scalar root. Gradients of leaves
// accumulate; call zero_grad() on parameters between steps.
template <typename T>
void backward(const Var<T>& root) {
  if (!root.requires_grad()) return;
  if (root.numel() != 1) throw ShapeMismatch("backward() needs a scalar root");

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node<T>* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  root.node()->grad_buffer().data[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

// ---------------------------------------------------------------- elementwise

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b.value()[i];
  auto pa = a.node(), pb = b.node();
  return detail::make<T>(std::move(out), {a, b}, [pa, pb](Node<T>& self) {
    for (auto* g : {detail::grad_of(pa), detail::grad_of(pb)})
      if (g)
        for (std::size_t i = 0; i < g->numel(); ++i) (*g)[i] += self.grad[i];
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b.value()[i];
  auto pa = a.node(), pb = b.node();
  return detail::make<T>(std::move(out), {a, b}, [pa, pb](Node<T>& self) {
    if (auto* g = detail::grad_of(pa))
      for (std::size_t i = 0; i < g->numel(); ++i) (*g)[i] += self.grad[i];
    if (auto* g = detail::grad_of(pb))
      for (std::size_t i = 0; i < g->numel(); ++i) (*g)[i] -= self.grad[i];
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  Tensor<T> out = a.value();
  for (auto& v : out.data) v *= s;
  auto pa = a.node();
  return detail::make<T>(std::move(out), {a}, [pa, s](Node<T>& self) {
    auto* g = detail::grad_of(pa);
    for (std::size_t i = 0; i < g->numel(); ++i) (*g)[i] += s * self.grad[i];
  });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T s) {
  Tensor<T> out = a.value();
  for (auto& v : out.data) v += s;
  auto pa = a.node();
  return detail::make<T>(std::move(out), {a}, [pa](Node<T>& self) {
    auto* g = detail::grad_of(pa);
    for (std::size_t i = 0; i < g->numel(); ++i) (*g)[i] += self.grad[i];
  });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& v : out.data) v = v > T(0) ? v : T(0);
  auto pa = a.node();
  return detail::make<T>(std::move(out), {a}, [pa](Node<T>& self) {
    auto* g = detail::grad_of(pa);
    for (std::size_t i = 0; i < g->numel(); ++i)
      if (pa->value[i] > T(0)) (*g)[i] += self.grad[i];
  });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& a, T slope) {
  Tensor<T> out = a.value();
  for (auto& v : out.data) v = v > T(0) ? v : slope * v;
  auto pa = a.node();
  return detail::make<T>(std::move(out), {a}, [pa, slope](Node<T>& self) {
    auto* g = detail::grad_of(pa);
    for (std::size_t i = 0; i < g->numel(); ++i)
      (*g)[i] += (pa->value[i] > T(0) ? T(1) : slope) * self.grad[i];
  });
}

template <typename T>
Var<T> tanh(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& v : out.data) v = std::tanh(v);
  auto pa = a.node();
  return detail::make<T>(std::move(out), {a}, [pa](Node<T>& self) {
    auto* g = detail::grad_of(pa);
    for (std::size_t i = 0; i < g->numel(); ++i) {
      const T y = self.value[i];
      (*g)[i] += (T(1) - y * y) * self.grad[i];
    }
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& v : out.data) v = T(1) / (T(1) + std::exp(-v));
  auto pa = a.node();
  return detail::make<T>(std::move(out), {a}, [pa](Node<T>& self) {
    auto* g = detail::grad_of(pa);
    for (std::size_t i = 0; i < g->numel(); ++i) {
      const T y = self.value[i];
      (*g)[i] += y * (T(1) - y) * self.grad[i];
    }
  });
}

// ---------------------------------------------------------------- reductions

template <typename T>
Var<T> sum(const Var<T>& a) {
  T s = 0;
  for (T v : a.value().data) s += v;
  auto pa = a.node();
  return detail::make<T>(Tensor<T>({1}, s), {a}, [pa](Node<T>& self) {
    auto* g = detail::grad_of(pa);
    for (auto& v : g->data) v += self.grad[0];
  });
}

// Sum of squared elements.
template <typename T>
Var<T> sum_sq(const Var<T>& a) {
  T s = 0;
  for (T v : a.value().data) s += v * v;
  auto pa = a.node();
  return detail::make<T>(Tensor<T>({1}, s), {a}, [pa](Node<T>& self) {
    auto* g = detail::grad_of(pa);
    for (std::size_t i = 0; i < g->numel(); ++i) (*g)[i] += T(2) * pa->value[i] * self.grad[0];
  });
}

// mean(|a - b|)
template <typename T>
Var<T> mean_abs_diff(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.value(), b.value(), "mean_abs_diff");
  const std::size_t n = a.numel();
  T s = 0;
  for (std::size_t i = 0; i < n; ++i) s += std::abs(a.value()[i] - b.value()[i]);
  auto pa = a.node(), pb = b.node();
  return detail::make<T>(Tensor<T>({1}, s / T(n)), {a, b}, [pa, pb, n](Node<T>& self) {
    const T go = self.grad[0] / T(n);
    auto* ga = detail::grad_of(pa);
    auto* gb = detail::grad_of(pb);
    for (std::size_t i = 0; i < n; ++i) {
      const T d = pa->value[i] - pb->value[i];
      const T sg = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
      if (ga) (*ga)[i] += sg * go;
      if (gb) (*gb)[i] -= sg * go;
    }
  });
}

// mean((a - target)^2) for a constant scalar target.
template <typename T>
Var<T> mean_sq_to(const Var<T>& a, T target) {
  const std::size_t n = a.numel();
  T s = 0;
  for (T v : a.value().data) s += (v - target) * (v - target);
  auto pa = a.node();
  return detail::make<T>(Tensor<T>({1}, s / T(n)), {a}, [pa, n, target](Node<T>& self) {
    auto* g = detail::grad_of(pa);
    const T k = T(2) * self.grad[0] / T(n);
    for (std::size_t i = 0; i < n; ++i) (*g)[i] += k * (pa->value[i] - target);
  });
}

// ---------------------------------------------------------------- layers

// 2-D convolution. x: [C,H,W], w: [O,C,K,K], b: [O]. Zero padding.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, std::size_t stride, std::size_t pad) {
  const auto& X = x.value();
  const auto& W = w.value();
  if (X.rank() != 3 || W.rank() != 4 || W.dim(1) != X.dim(0) || W.dim(2) != W.dim(3) ||
      b.value().shape != Shape{W.dim(0)})
    throw ShapeMismatch("conv2d: input " + shape_str(X.shape) + ", weight " + shape_str(W.shape) +
                        ", bias " + shape_str(b.value().shape));
  const std::size_t C = X.dim(0), H = X.dim(1), Wd = X.dim(2);
  const std::size_t O = W.dim(0), K = W.dim(2);
  if (H + 2 * pad < K || Wd + 2 * pad < K) throw ShapeMismatch("conv2d: input smaller than kernel");
  const std::size_t Ho = (H + 2 * pad - K) / stride + 1;
  const std::size_t Wo = (Wd + 2 * pad - K) / stride + 1;

  // Valid output column range for kernel column kx.
  auto col_range = [=](std::size_t kx) {
    const long p = static_cast<long>(pad) - static_cast<long>(kx);
    const long s = static_cast<long>(stride);
    const long lo = p <= 0 ? 0 : (p + s - 1) / s;
    const long top = static_cast<long>(Wd) - 1 + p;
    const long hi = top < 0 ? -1 : std::min<long>(top / s, static_cast<long>(Wo) - 1);
    return std::pair<long, long>{lo, hi};
  };

  Tensor<T> out({O, Ho, Wo});
  for (std::size_t o = 0; o < O; ++o) {
    T* out_o = out.ptr() + o * Ho * Wo;
    std::fill(out_o, out_o + Ho * Wo, b.value()[o]);
    for (std::size_t c = 0; c < C; ++c) {
      const T* in_c = X.ptr() + c * H * Wd;
      for (std::size_t ky = 0; ky < K; ++ky) {
        for (std::size_t kx = 0; kx < K; ++kx) {
          const T wv = W[((o * C + c) * K + ky) * K + kx];
          const auto [lo, hi] = col_range(kx);
          for (std::size_t oy = 0; oy < Ho; ++oy) {
            const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
            if (iy < 0 || iy >= static_cast<long>(H)) continue;
            const T* in_row = in_c + iy * Wd;
            T* out_row = out_o + oy * Wo;
            for (long ox = lo; ox <= hi; ++ox)
              out_row[ox] += wv * in_row[ox * static_cast<long>(stride) + static_cast<long>(kx) -
                                         static_cast<long>(pad)];
          }
        }
      }
    }
  }

  auto px = x.node(), pw = w.node(), pb = b.node();
  return detail::make<T>(std::move(out), {x, w, b}, [=](Node<T>& self) {
    auto* gx = detail::grad_of(px);
    auto* gw = detail::grad_of(pw);
    auto* gb = detail::grad_of(pb);
    const auto& Xv = px->value;
    const auto& Wv = pw->value;
    for (std::size_t o = 0; o < O; ++o) {
      const T* go_o = self.grad.ptr() + o * Ho * Wo;
      if (gb) {
        T s = 0;
        for (std::size_t i = 0; i < Ho * Wo; ++i) s += go_o[i];
        (*gb)[o] += s;
      }
      for (std::size_t c = 0; c < C; ++c) {
        const T* in_c = Xv.ptr() + c * H * Wd;
        T* gin_c = gx ? gx->ptr() + c * H * Wd : nullptr;
        for (std::size_t ky = 0; ky < K; ++ky) {
          for (std::size_t kx = 0; kx < K; ++kx) {
            const std::size_t widx = ((o * C + c) * K + ky) * K + kx;
            const T wv = Wv[widx];
            const auto [lo, hi] = col_range(kx);
            T wacc = 0;
            for (std::size_t oy = 0; oy < Ho; ++oy) {
              const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
              if (iy < 0 || iy >= static_cast<long>(H)) continue;
              const T* go_row = go_o + oy * Wo;
              const long off = static_cast<long>(kx) - static_cast<long>(pad);
              const long st = static_cast<long>(stride);
              if (gw) {
                const T* in_row = in_c + iy * Wd;
                for (long ox = lo; ox <= hi; ++ox) wacc += go_row[ox] * in_row[ox * st + off];
              }
              if (gin_c) {
                T* gin_row = gin_c + iy * Wd;
                for (long ox = lo; ox <= hi; ++ox) gin_row[ox * st + off] += wv * go_row[ox];
              }
            }
            if (gw) (*gw)[widx] += wacc;
          }
        }
      }
    }
  });
}

// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
template <typename T>
Var<T> maxpool2x2(const Var<T>& x) {
  const auto& X = x.value();
  if (X.rank() != 3) throw ShapeMismatch("maxpool2x2 expects [C,H,W]");
  const std::size_t C = X.dim(0), H = X.dim(1), W = X.dim(2);
  const std::size_t Ho = H / 2, Wo = W / 2;
  if (Ho == 0 || Wo == 0) throw ShapeMismatch("maxpool2x2: input " + shape_str(X.shape) + " too small");
  Tensor<T> out({C, Ho, Wo});
  std::vector<std::size_t> argmax(out.numel());
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t oy = 0; oy < Ho; ++oy)
      for (std::size_t ox = 0; ox < Wo; ++ox) {
        std::size_t best = (c * H + 2 * oy) * W + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (c * H + 2 * oy + dy) * W + 2 * ox + dx;
            if (X[idx] > X[best]) best = idx;
          }
        const std::size_t o = (c * Ho + oy) * Wo + ox;
        out[o] = X[best];
        argmax[o] = best;
      }
  auto px = x.node();
  return detail::make<T>(std::move(out), {x}, [px, argmax = std::move(argmax)](Node<T>& self) {
    auto* g = detail::grad_of(px);
    for (std::size_t o = 0; o < argmax.size(); ++o) (*g)[argmax[o]] += self.grad[o];
  });
}

// Nearest-neighbour 2x upsampling.
template <typename T>
Var<T> upsample2x(const Var<T>& x) {
  const auto& X = x.value();
  const std::size_t C = X.dim(0), H = X.dim(1), W = X.dim(2);
  Tensor<T> out({C, 2 * H, 2 * W});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < 2 * H; ++y)
      for (std::size_t xx = 0; xx < 2 * W; ++xx)
        out[(c * 2 * H + y) * 2 * W + xx] = X[(c * H + y / 2) * W + xx / 2];
  auto px = x.node();
  return detail::make<T>(std::move(out), {x}, [px, C, H, W](Node<T>& self) {
    auto* g = detail::grad_of(px);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = 0; y < 2 * H; ++y)
        for (std::size_t xx = 0; xx < 2 * W; ++xx)
          (*g)[(c * H + y / 2) * W + xx / 2] += self.grad[(c * 2 * H + y) * 2 * W + xx];
  });
}

// Per-channel normalization to zero mean / unit variance over spatial
// positions (biased variance).
template <typename T>
Var<T> instance_norm(const Var<T>& x, T eps) {
  const auto& X = x.value();
  if (X.rank() != 3) throw ShapeMismatch("instance_norm expects [C,H,W]");
  const std::size_t C = X.dim(0), M = X.dim(1) * X.dim(2);
  Tensor<T> out(X.shape);
  std::vector<T> inv_std(C);
  for (std::size_t c = 0; c < C; ++c) {
    const T* in = X.ptr() + c * M;
    T mean = 0;
    for (std::size_t i = 0; i < M; ++i) mean += in[i];
    mean /= T(M);
    T var = 0;
    for (std::size_t i = 0; i < M; ++i) var += (in[i] - mean) * (in[i] - mean);
    var /= T(M);
    inv_std[c] = T(1) / std::sqrt(var + eps);
    T* o = out.ptr() + c * M;
    for (std::size_t i = 0; i < M; ++i) o[i] = (in[i] - mean) * inv_std[c];
  }
  auto px = x.node();
  return detail::make<T>(std::move(out), {x}, [px, C, M, inv_std = std::move(inv_std)](Node<T>& self) {
    auto* g = detail::grad_of(px);
    for (std::size_t c = 0; c < C; ++c) {
      const T* y = self.value.ptr() + c * M;
      const T* dy = self.grad.ptr() + c * M;
      T mdy = 0, mdyy = 0;
      for (std::size_t i = 0; i < M; ++i) {
        mdy += dy[i];
        mdyy += dy[i] * y[i];
      }
      mdy /= T(M);
      mdyy /= T(M);
      T* gx = g->ptr() + c * M;
      for (std::size_t i = 0; i < M; ++i) gx[i] += inv_std[c] * (dy[i] - mdy - y[i] * mdyy);
    }
  });
}

// y[c] = x[c] * gamma[c] + beta[c]
template <typename T>
Var<T> channel_affine(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta) {
  const auto& X = x.value();
  const std::size_t C = X.dim(0), M = X.numel() / C;
  if (gamma.numel() != C || beta.numel() != C)
    throw DimensionMismatch("channel_affine: " + std::to_string(C) + " channels, gamma " +
                            std::to_string(gamma.numel()) + ", beta " + std::to_string(beta.numel()));
  Tensor<T> out(X.shape);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < M; ++i)
      out[c * M + i] = X[c * M + i] * gamma.value()[c] + beta.value()[c];
  auto px = x.node(), pg = gamma.node(), pb = beta.node();
  return detail::make<T>(std::move(out), {x, gamma, beta}, [px, pg, pb, C, M](Node<T>& self) {
    auto* gx = detail::grad_of(px);
    auto* gg = detail::grad_of(pg);
    auto* gb = detail::grad_of(pb);
    for (std::size_t c = 0; c < C; ++c) {
      T sg = 0, sb = 0;
      const T gam = pg->value[c];
      for (std::size_t i = 0; i < M; ++i) {
        const T d = self.grad[c * M + i];
        sb += d;
        sg += d * px->value[c * M + i];
        if (gx) (*gx)[c * M + i] += d * gam;
      }
      if (gg) (*gg)[c] += sg;
      if (gb) (*gb)[c] += sb;
    }
  });
}

// Contiguous range [offset, offset+len) of a vector.
template <typename T>
Var<T> slice(const Var<T>& v, std::size_t offset, std::size_t len) {
  if (offset + len > v.numel()) throw DimensionMismatch("slice out of range");
  Tensor<T> out({len});
  std::copy_n(v.value().data.begin() + offset, len, out.data.begin());
  auto pv = v.node();
  return detail::make<T>(std::move(out), {v}, [pv, offset, len](Node<T>& self) {
    auto* g = detail::grad_of(pv);
    for (std::size_t i = 0; i < len; ++i) (*g)[offset + i] += self.grad[i];
  });
}

// [C,H,W] -> [C]
template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
  const std::size_t C = x.value().dim(0), M = x.numel() / C;
  Tensor<T> out({C});
  for (std::size_t c = 0; c < C; ++c) {
    T s = 0;
    for (std::size_t i = 0; i < M; ++i) s += x.value()[c * M + i];
    out[c] = s / T(M);
  }
  auto px = x.node();
  return detail::make<T>(std::move(out), {x}, [px, C, M](Node<T>& self) {
    auto* g = detail::grad_of(px);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < M; ++i) (*g)[c * M + i] += self.grad[c] / T(M);
  });
}

// y = W v + b with W: [O, I], v: [I], b: [O]
template <typename T>
Var<T> linear(const Var<T>& v, const Var<T>& w, const Var<T>& b) {
  const std::size_t O = w.value().dim(0), I = w.value().dim(1);
  if (v.numel() != I || b.numel() != O) throw ShapeMismatch("linear: incompatible shapes");
  Tensor<T> out({O});
  for (std::size_t o = 0; o < O; ++o) {
    T s = b.value()[o];
    for (std::size_t i = 0; i < I; ++i) s += w.value()[o * I + i] * v.value()[i];
    out[o] = s;
  }
  auto pv = v.node(), pw = w.node(), pb = b.node();
  return detail::make<T>(std::move(out), {v, w, b}, [pv, pw, pb, O, I](Node<T>& self) {
    auto* gv = detail::grad_of(pv);
    auto* gw = detail::grad_of(pw);
    auto* gb = detail::grad_of(pb);
    for (std::size_t o = 0; o < O; ++o) {
      const T d = self.grad[o];
      if (gb) (*gb)[o] += d;
      for (std::size_t i = 0; i < I; ++i) {
        if (gw) (*gw)[o * I + i] += d * pv->value[i];
        if (gv) (*gv)[i] += d * pw->value[o * I + i];
      }
    }
  });
}

// Unnormalized channel Gram matrix of a [C, ...] feature tensor: G = F F^T.
template <typename T>
Var<T> gram(const Var<T>& f) {
  const std::size_t C = f.value().dim(0), M = f.numel() / C;
  const T* F = f.value().ptr();
  Tensor<T> out({C, C});
  for (std::size_t i = 0; i < C; ++i)
    for (std::size_t j = i; j < C; ++j) {
      T s = 0;
      for (std::size_t k = 0; k < M; ++k) s += F[i * M + k] * F[j * M + k];
      out[i * C + j] = s;
      out[j * C + i] = s;
    }
  auto pf = f.node();
  return detail::make<T>(std::move(out), {f}, [pf, C, M](Node<T>& self) {
    auto* g = detail::grad_of(pf);
    const T* F = pf->value.ptr();
    for (std::size_t i = 0; i < C; ++i)
      for (std::size_t j = 0; j < C; ++j) {
        const T s = self.grad[i * C + j] + self.grad[j * C + i];
        if (s == T(0)) continue;
        T* gi = g->ptr() + i * M;
        const T* fj = F + j * M;
        for (std::size_t k = 0; k < M; ++k) gi[k] += s * fj[k];
      }
  });
}

}  // namespace livestyle::ag
