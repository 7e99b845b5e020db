#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mvseg/layers.hpp"
#include "test_util.hpp"

using namespace mvseg;

namespace {

// Direct-loop references. Out-of-image taps read zero.
Tensor naive_conv(const Tensor& in, const Tensor& w, const Tensor& b, int k) {
  const int r = k / 2;
  const auto H = static_cast<int>(in.height()), W = static_cast<int>(in.width());
  Tensor out({w.channels(), in.height(), in.width()});
  for (std::size_t o = 0; o < w.channels(); ++o) {
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        double s = b(o, 0, 0);
        for (std::size_t i = 0; i < in.channels(); ++i) {
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              const int yy = y + ky - r, xx = x + kx - r;
              if (yy < 0 || xx < 0 || yy >= H || xx >= W) continue;
              s += w(o, i, static_cast<std::size_t>(ky * k + kx)) * in(i, yy, xx);
            }
          }
        }
        out(o, y, x) = s;
      }
    }
  }
  return out;
}

Tensor naive_deconv(const Tensor& in, const Tensor& w, const Tensor& b, int k) {
  const int r = k / 2;
  const auto H = static_cast<int>(in.height()), W = static_cast<int>(in.width());
  Tensor out({w.height(), in.height(), in.width()});
  for (std::size_t o = 0; o < w.height(); ++o) {
    for (std::size_t p = 0; p < out.shape().plane(); ++p) out.channel(o)[p] = b(o, 0, 0);
  }
  for (std::size_t i = 0; i < in.channels(); ++i) {
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        for (std::size_t o = 0; o < w.height(); ++o) {
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              const int yy = y + ky - r, xx = x + kx - r;
              if (yy < 0 || xx < 0 || yy >= H || xx >= W) continue;
              out(o, yy, xx) += w(i, o, static_cast<std::size_t>(ky * k + kx)) * in(i, y, x);
            }
          }
        }
      }
    }
  }
  return out;
}

void expect_near(const Tensor& a, const Tensor& b, double tol) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.data()[i], b.data()[i], tol) << i;
}

}  // namespace

TEST(Conv, MatchesNaive) {
  std::mt19937_64 rng(1);
  for (int k : {1, 3, 5}) {
    const Tensor in = mvtest::random_tensor({3, 7, 6}, rng);
    const Tensor w = mvtest::random_tensor({4, 3, static_cast<std::size_t>(k * k)}, rng);
    const Tensor b = mvtest::random_tensor({4, 1, 1}, rng);
    expect_near(conv2d(in, w, b, k), naive_conv(in, w, b, k), 1e-12);
  }
}

TEST(Conv, ShapeErrors) {
  EXPECT_THROW(conv2d(Tensor({2, 4, 4}), Tensor({3, 3, 9}), Tensor({3, 1, 1}), 3), ShapeError);
  EXPECT_THROW(conv2d(Tensor({2, 4, 4}), Tensor({3, 2, 4}), Tensor({3, 1, 1}), 2), ConfigError);
}

TEST(Conv, Gradients) {
  std::mt19937_64 rng(2);
  Tensor in = mvtest::random_tensor({2, 8, 7}, rng);
  Tensor w = mvtest::random_tensor({3, 2, 9}, rng);
  Tensor b = mvtest::random_tensor({3, 1, 1}, rng);
  const Tensor r = mvtest::random_tensor({3, 8, 7}, rng);
  auto f = [&] { return mvtest::dot(r, conv2d(in, w, b, 3)); };
  const ConvGrads g = conv2d_backward(r, in, w, 3);
  EXPECT_LT(mvtest::fd_check(in, g.input, f, rng), 1e-5);
  EXPECT_LT(mvtest::fd_check(w, g.weight, f, rng), 1e-5);
  EXPECT_LT(mvtest::fd_check(b, g.bias, f, rng), 1e-5);
}

TEST(Deconv, MatchesNaive) {
  std::mt19937_64 rng(3);
  const Tensor in = mvtest::random_tensor({3, 5, 6}, rng);
  const Tensor w = mvtest::random_tensor({3, 2, 9}, rng);
  const Tensor b = mvtest::random_tensor({2, 1, 1}, rng);
  expect_near(conv_transpose2d(in, w, b, 3), naive_deconv(in, w, b, 3), 1e-12);
}

TEST(Deconv, IsAdjointOfConv) {
  // With zero bias, deconv with weight (Cin, Cout) is the transpose of conv
  // with the same tensor read as (Cout, Cin).
  std::mt19937_64 rng(4);
  const Tensor w = mvtest::random_tensor({3, 2, 9}, rng);
  const Tensor x = mvtest::random_tensor({2, 6, 6}, rng);
  const Tensor y = mvtest::random_tensor({3, 6, 6}, rng);
  const double lhs = mvtest::dot(conv2d(x, w, Tensor({3, 1, 1}), 3), y);
  const double rhs = mvtest::dot(x, conv_transpose2d(y, w, Tensor({2, 1, 1}), 3));
  EXPECT_NEAR(lhs, rhs, 1e-10);
}

TEST(Deconv, Gradients) {
  std::mt19937_64 rng(5);
  Tensor in = mvtest::random_tensor({3, 6, 8}, rng);
  Tensor w = mvtest::random_tensor({3, 2, 9}, rng);
  Tensor b = mvtest::random_tensor({2, 1, 1}, rng);
  const Tensor r = mvtest::random_tensor({2, 6, 8}, rng);
  auto f = [&] { return mvtest::dot(r, conv_transpose2d(in, w, b, 3)); };
  const ConvGrads g = conv_transpose2d_backward(r, in, w, 3);
  EXPECT_LT(mvtest::fd_check(in, g.input, f, rng), 1e-5);
  EXPECT_LT(mvtest::fd_check(w, g.weight, f, rng), 1e-5);
  EXPECT_LT(mvtest::fd_check(b, g.bias, f, rng), 1e-5);
}

TEST(Relu, ForwardBackward) {
  const Tensor x({1, 1, 3}, std::vector<double>{-1, 0.5, 2});
  const Tensor y = relu(x);
  EXPECT_EQ(y(0, 0, 0), 0.0);
  EXPECT_EQ(y(0, 0, 2), 2.0);
  const Tensor g = relu_backward(Tensor({1, 1, 3}, 1.0), y);
  EXPECT_EQ(g(0, 0, 0), 0.0);
  EXPECT_EQ(g(0, 0, 1), 1.0);
}

TEST(MaxPool, ValuesAndSwitches) {
  const Tensor x({1, 2, 4}, std::vector<double>{1, 5, 2, 2, 3, 4, 2, 2});
  const PoolResult p = max_pool2(x);
  ASSERT_EQ(p.output.shape(), (Shape{1, 1, 2}));
  EXPECT_EQ(p.output(0, 0, 0), 5.0);
  EXPECT_EQ(p.switches[0], 1u);
  // Tie resolves to the first element in raster order.
  EXPECT_EQ(p.switches[1], 2u);
  EXPECT_THROW(max_pool2(Tensor({1, 3, 4})), ShapeError);
}

TEST(MaxPool, Gradients) {
  std::mt19937_64 rng(6);
  Tensor x = mvtest::random_tensor({2, 8, 6}, rng);
  const Tensor r = mvtest::random_tensor({2, 4, 3}, rng);
  const Tensor g = max_pool2_backward(r, max_pool2(x).switches, x.shape());
  EXPECT_LT(mvtest::fd_check(x, g, [&] { return mvtest::dot(r, max_pool2(x).output); }, rng), 1e-5);
}

TEST(Unpool, PlacesAtSwitches) {
  const Tensor x({1, 2, 2}, std::vector<double>{1, 9, 3, 4});
  const PoolResult p = max_pool2(x);
  const Tensor u = max_unpool2(Tensor({1, 1, 1}, 7.0), p.switches, x.shape());
  EXPECT_EQ(u(0, 0, 1), 7.0);
  EXPECT_EQ(u(0, 0, 0) + u(0, 1, 0) + u(0, 1, 1), 0.0);
}

TEST(Unpool, Gradients) {
  std::mt19937_64 rng(7);
  const PoolResult p = max_pool2(mvtest::random_tensor({2, 6, 6}, rng));
  Tensor x = mvtest::random_tensor(p.output.shape(), rng);
  const Tensor r = mvtest::random_tensor({2, 6, 6}, rng);
  const Tensor g = max_unpool2_backward(r, p.switches, x.shape());
  EXPECT_LT(mvtest::fd_check(x, g, [&] { return mvtest::dot(r, max_unpool2(x, p.switches, {2, 6, 6})); }, rng),
            1e-5);
}

TEST(CrossEntropy, ClosedFormExample) {
  const Tensor s({3, 1, 1}, std::vector<double>{1, 2, 3});
  const LossResult l = cross_entropy_loss(s, LabelMap(1, 1, 2));
  EXPECT_NEAR(l.loss, std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0)) - 3.0, 1e-15);
  EXPECT_NEAR(l.loss, 0.4076, 1e-4);
}

TEST(CrossEntropy, UniformIsLogK) {
  const LossResult l = cross_entropy_loss(Tensor({5, 2, 3}, 0.7), LabelMap(2, 3, 4));
  EXPECT_NEAR(l.loss, std::log(5.0), 1e-14);
}

TEST(CrossEntropy, ConfidentCorrectApproachesZero) {
  Tensor s({2, 1, 1}, 0.0);
  s(1, 0, 0) = 50.0;
  EXPECT_LT(cross_entropy_loss(s, LabelMap(1, 1, 1)).loss, 1e-20);
}

TEST(CrossEntropy, IgnoredPixelsAndMask) {
  std::mt19937_64 rng(8);
  const Tensor s = mvtest::random_tensor({3, 2, 2}, rng);
  LabelMap gt(2, 2, {0, 1, kIgnoreLabel, 2});
  Mask m(2, 2, {1, 0, 1, 1});
  const LossResult l = cross_entropy_loss(s, gt, &m);
  EXPECT_EQ(l.pixels, 2u);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_EQ(l.grad(c, 0, 1), 0.0);
    EXPECT_EQ(l.grad(c, 1, 0), 0.0);
  }
  EXPECT_THROW(cross_entropy_loss(s, LabelMap(2, 2, kIgnoreLabel)), DegenerateSampleError);
}

TEST(CrossEntropy, Gradient) {
  std::mt19937_64 rng(9);
  Tensor s = mvtest::random_tensor({3, 5, 5}, rng, 2.0);
  LabelMap gt(5, 5);
  std::uniform_int_distribution<int> l(0, 2);
  for (auto& v : gt.data()) v = Label(l(rng));
  gt(2, 2) = kIgnoreLabel;
  const Tensor g = cross_entropy_loss(s, gt).grad;
  EXPECT_LT(mvtest::fd_check(s, g, [&] { return cross_entropy_loss(s, gt).loss; }, rng), 1e-5);
}

TEST(StochasticPool, UniformBlock) {
  std::mt19937_64 rng(10);
  const LabelMap out = stochastic_pool_labels(LabelMap(4, 4, 3), 2, rng);
  EXPECT_EQ(out, LabelMap(2, 2, 3));
}

TEST(StochasticPool, AllIgnoreBlock) {
  std::mt19937_64 rng(11);
  LabelMap gt(2, 4, kIgnoreLabel);
  gt(0, 2) = 1;
  const LabelMap out = stochastic_pool_labels(gt, 2, rng);
  EXPECT_EQ(out(0, 0), kIgnoreLabel);
  EXPECT_EQ(out(0, 1), 1);
}

TEST(StochasticPool, ThreeToOneFrequencies) {
  std::mt19937_64 rng(12);
  LabelMap gt(2, 2, {0, 0, 0, 1});
  const int n = 100000;
  int zeros = 0;
  for (int i = 0; i < n; ++i) zeros += stochastic_pool_labels(gt, 2, rng)(0, 0) == 0;
  const double sigma = std::sqrt(0.75 * 0.25 / n);
  EXPECT_NEAR(static_cast<double>(zeros) / n, 0.75, 3 * sigma);
}

TEST(StochasticPool, FactorErrors) {
  std::mt19937_64 rng(13);
  EXPECT_THROW(stochastic_pool_labels(LabelMap(6, 6), 4, rng), ShapeError);
  EXPECT_THROW(stochastic_pool_labels(LabelMap(6, 6), 3, rng), ConfigError);
}
