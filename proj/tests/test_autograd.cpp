#include <gtest/gtest.h>

#include "livestyle/autograd.hpp"
#include "test_util.hpp"

using namespace livestyle;
using V = ag::Var<double>;
using testutil::all_coords;
using testutil::check_gradient;
using testutil::random_tensor;

namespace {

// Weighted sum with fixed random weights, so every output element carries a
// distinct upstream gradient.
V probe(const V& y, std::uint64_t seed = 99) {
  Rng rng(seed);
  auto w = V::constant(random_tensor(y.shape(), rng));
  // sum(y * w) == 0.25 * (sum_sq(y + w) - sum_sq(y - w))
  return ag::scale(ag::sub(ag::sum_sq(ag::add(y, w)), ag::sum_sq(ag::sub(y, w))), 0.25);
}

void expect_grad(const std::function<V()>& f, V& x, double tol = 1e-6) {
  auto r = check_gradient(f, x, all_coords(x.numel()));
  EXPECT_LT(r.max_rel_error, tol);
}

}  // namespace

TEST(Autograd, ElementwiseOps) {
  Rng rng(1);
  auto a = V::parameter(random_tensor({2, 3, 3}, rng));
  auto b = V::parameter(random_tensor({2, 3, 3}, rng));
  expect_grad([&] { return probe(ag::add(a, b)); }, a);
  expect_grad([&] { return probe(ag::sub(a, b)); }, b);
  expect_grad([&] { return probe(ag::scale(a, 1.7)); }, a);
  expect_grad([&] { return probe(ag::add_scalar(a, 0.3)); }, a);
  expect_grad([&] { return probe(ag::tanh(a)); }, a);
  expect_grad([&] { return probe(ag::sigmoid(a)); }, a);
  expect_grad([&] { return probe(ag::relu(a)); }, a);
  expect_grad([&] { return probe(ag::leaky_relu(a, 0.2)); }, a);
}

TEST(Autograd, Reductions) {
  Rng rng(2);
  auto a = V::parameter(random_tensor({3, 4}, rng));
  auto b = V::parameter(random_tensor({3, 4}, rng));
  expect_grad([&] { return ag::sum(a); }, a);
  expect_grad([&] { return ag::sum_sq(a); }, a);
  expect_grad([&] { return ag::mean_abs_diff(a, b); }, a);
  expect_grad([&] { return ag::mean_abs_diff(a, b); }, b);
  expect_grad([&] { return ag::mean_sq_to(a, 0.5); }, a);
}

TEST(Autograd, ReductionValues) {
  auto a = V::constant(Tensor<double>({4}, {1, -2, 3, -4}));
  auto b = V::constant(Tensor<double>({4}, {0, 0, 0, 0}));
  EXPECT_DOUBLE_EQ(ag::sum(a).item(), -2.0);
  EXPECT_DOUBLE_EQ(ag::sum_sq(a).item(), 30.0);
  EXPECT_DOUBLE_EQ(ag::mean_abs_diff(a, b).item(), 2.5);
  EXPECT_DOUBLE_EQ(ag::mean_sq_to(a, 1.0).item(), (0 + 9 + 4 + 25) / 4.0);
}

TEST(Autograd, Conv2dGradients) {
  Rng rng(3);
  auto x = V::parameter(random_tensor({2, 5, 6}, rng));
  auto w = V::parameter(random_tensor({3, 2, 3, 3}, rng));
  auto b = V::parameter(random_tensor({3}, rng));
  for (std::size_t stride : {1u, 2u}) {
    auto f = [&] { return probe(ag::conv2d(x, w, b, stride, 1)); };
    expect_grad(f, x);
    expect_grad(f, w);
    expect_grad(f, b);
  }
}

TEST(Autograd, Conv2dHandComputed) {
  // 1 channel 3x3 input, 3x3 kernel of ones, zero padding 1: each output is
  // the sum of its 3x3 neighbourhood.
  Tensor<double> xin({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  auto y = ag::conv2d(V::constant(xin), V::constant(Tensor<double>({1, 1, 3, 3}, 1.0)),
                      V::constant(Tensor<double>({1}, 0.5)), 1, 1);
  ASSERT_EQ(y.shape(), (Shape{1, 3, 3}));
  const std::vector<double> expect{12, 21, 16, 27, 45, 33, 24, 39, 28};
  for (std::size_t i = 0; i < 9; ++i) EXPECT_DOUBLE_EQ(y.value()[i], expect[i] + 0.5);
  auto s = ag::conv2d(V::constant(xin), V::constant(Tensor<double>({1, 1, 3, 3}, 1.0)),
                      V::constant(Tensor<double>({1}, 0.0)), 2, 1);
  ASSERT_EQ(s.shape(), (Shape{1, 2, 2}));
  EXPECT_DOUBLE_EQ(s.value()[0], 12);
  EXPECT_DOUBLE_EQ(s.value()[3], 28);
}

TEST(Autograd, PoolingAndResampling) {
  Rng rng(4);
  auto x = V::parameter(random_tensor({2, 4, 6}, rng));
  expect_grad([&] { return probe(ag::maxpool2x2(x)); }, x);
  expect_grad([&] { return probe(ag::upsample2x(x)); }, x);
  expect_grad([&] { return probe(ag::global_avg_pool(x)); }, x);

  auto m = ag::maxpool2x2(V::constant(Tensor<double>({1, 2, 2}, {1, 5, 3, 2})));
  EXPECT_DOUBLE_EQ(m.item(), 5.0);
  auto u = ag::upsample2x(V::constant(Tensor<double>({1, 1, 2}, {1, 2})));
  EXPECT_EQ(u.value().data, (std::vector<double>{1, 1, 2, 2, 1, 1, 2, 2}));
}

TEST(Autograd, InstanceNormAndAffine) {
  Rng rng(5);
  auto x = V::parameter(random_tensor({3, 4, 4}, rng));
  auto g = V::parameter(random_tensor({3}, rng));
  auto b = V::parameter(random_tensor({3}, rng));
  expect_grad([&] { return probe(ag::instance_norm(x, 1e-5)); }, x, 1e-5);
  auto f = [&] { return probe(ag::channel_affine(ag::instance_norm(x, 1e-5), g, b)); };
  expect_grad(f, g);
  expect_grad(f, b);

  auto n = ag::instance_norm(x, 1e-5).value();
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0, var = 0;
    for (std::size_t i = 0; i < 16; ++i) mean += n[c * 16 + i] / 16;
    for (std::size_t i = 0; i < 16; ++i) var += (n[c * 16 + i] - mean) * (n[c * 16 + i] - mean) / 16;
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(var, 1.0, 1e-3);
  }
}

TEST(Autograd, LinearSliceGram) {
  Rng rng(6);
  auto v = V::parameter(random_tensor({5}, rng));
  auto w = V::parameter(random_tensor({4, 5}, rng));
  auto b = V::parameter(random_tensor({4}, rng));
  auto f = [&] { return probe(ag::linear(v, w, b)); };
  expect_grad(f, v);
  expect_grad(f, w);
  expect_grad(f, b);
  expect_grad([&] { return probe(ag::slice(v, 1, 3)); }, v);

  auto feat = V::parameter(random_tensor({3, 2, 3}, rng));
  expect_grad([&] { return probe(ag::gram(feat)); }, feat);
}

TEST(Autograd, SharedSubgraphAccumulates) {
  auto x = V::parameter(Tensor<double>({1}, 3.0));
  auto y = ag::add(ag::sum_sq(x), ag::scale(x, 2.0));  // x^2 + 2x
  ag::backward(y);
  EXPECT_DOUBLE_EQ(x.grad()[0], 8.0);
}

TEST(Autograd, ConstantsCarryNoGraph) {
  auto c = V::constant(Tensor<double>({2}, 1.0));
  auto y = ag::sum_sq(c);
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(y.node()->parents.empty());
  ag::backward(y);  // no-op
}

TEST(Autograd, ShapeErrors) {
  auto a = V::constant(Tensor<double>({2, 2}));
  auto b = V::constant(Tensor<double>({3}));
  EXPECT_THROW(ag::add(a, b), ShapeMismatch);
  EXPECT_THROW(ag::conv2d(a, a, b, 1, 1), ShapeMismatch);
  auto p = V::parameter(Tensor<double>({2}));
  EXPECT_THROW(ag::backward(ag::scale(p, 2.0)), ShapeMismatch);
}
