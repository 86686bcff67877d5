#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "vtp/error.hpp"
#include "vtp/nn/gradcheck.hpp"
#include "vtp/nn/ops.hpp"

using namespace vtp::nn;

namespace {

std::mt19937_64 rng_for(int seed) { return std::mt19937_64(static_cast<uint64_t>(seed)); }

void expect_grad_ok(const std::function<Tensor()>& f, const std::vector<Tensor>& xs, double tol = 1e-6) {
  const auto r = check_gradients(f, xs);
  EXPECT_LT(r.max_relative_error, tol);
}

}  // namespace

TEST(Ops, ElementwiseGradients) {
  auto rng = rng_for(1);
  Tensor a = Tensor::randn({3, 4}, rng), b = Tensor::randn({3, 4}, rng);
  Tensor w = Tensor::randn({3, 4}, rng);
  expect_grad_ok([&] { return sum(mul(add(a, b) * sub(a, b), w)); }, {a, b});
  expect_grad_ok([&] { return sum(mul(mish(a), w)); }, {a});
  expect_grad_ok([&] { return sum(mul(gelu(a), w)); }, {a});
  expect_grad_ok([&] { return sum(mul(exp(a), w)); }, {a});
  expect_grad_ok([&] { return sum(mul(square(a), w)); }, {a});
  Tensor pos = Tensor::uniform({3, 4}, rng, 0.5, 2.0);
  expect_grad_ok([&] { return sum(mul(log(pos), w)); }, {pos});
}

TEST(Ops, MatmulMatchesNaive) {
  auto rng = rng_for(2);
  Tensor a = Tensor::randn({3, 5}, rng), b = Tensor::randn({5, 2}, rng);
  Tensor c = matmul(a, b);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j) {
      double s = 0;
      for (int k = 0; k < 5; ++k) s += a.data()[i * 5 + k] * b.data()[k * 2 + j];
      EXPECT_NEAR(c.data()[i * 2 + j], s, 1e-12);
    }
  Tensor w = Tensor::randn({3, 2}, rng);
  expect_grad_ok([&] { return sum(mul(matmul(a, b), w)); }, {a, b});
}

TEST(Ops, BmmAndLinearGradients) {
  auto rng = rng_for(3);
  Tensor a = Tensor::randn({2, 3, 4}, rng), b = Tensor::randn({2, 4, 2}, rng);
  Tensor w1 = Tensor::randn({2, 3, 2}, rng);
  expect_grad_ok([&] { return sum(mul(bmm(a, b), w1)); }, {a, b});

  Tensor x = Tensor::randn({2, 3, 4}, rng), W = Tensor::randn({5, 4}, rng), bias = Tensor::randn({5}, rng);
  Tensor w2 = Tensor::randn({2, 3, 5}, rng);
  expect_grad_ok([&] { return sum(mul(linear(x, W, bias), w2)); }, {x, W, bias});
}

TEST(Ops, Conv2dMatchesNaive) {
  auto rng = rng_for(4);
  const int N = 2, C = 3, H = 7, W = 6, O = 4, K = 3;
  Tensor x = Tensor::randn({N, C, H, W}, rng), w = Tensor::randn({O, C, K, K}, rng), b = Tensor::randn({O}, rng);
  const Conv2dGeometry g{2, 2, 1, 1};
  Tensor y = conv2d(x, w, b, g);
  const int Ho = (H + 2 - K) / 2 + 1, Wo = (W + 2 - K) / 2 + 1;
  ASSERT_EQ(y.shape(), (Shape{N, O, Ho, Wo}));
  for (int n = 0; n < N; ++n)
    for (int o = 0; o < O; ++o)
      for (int i = 0; i < Ho; ++i)
        for (int j = 0; j < Wo; ++j) {
          double s = b.data()[o];
          for (int c = 0; c < C; ++c)
            for (int ki = 0; ki < K; ++ki)
              for (int kj = 0; kj < K; ++kj) {
                const int r = i * 2 - 1 + ki, q = j * 2 - 1 + kj;
                if (r < 0 || r >= H || q < 0 || q >= W) continue;
                s += x.data()[((n * C + c) * H + r) * W + q] * w.data()[((o * C + c) * K + ki) * K + kj];
              }
          EXPECT_NEAR(y.data()[((n * O + o) * Ho + i) * Wo + j], s, 1e-10);
        }
  Tensor probe_w = Tensor::randn(y.shape(), rng);
  expect_grad_ok([&] { return sum(mul(conv2d(x, w, b, g), probe_w)); }, {x, w, b});
}

TEST(Ops, Conv1dAndUpsampleGradients) {
  auto rng = rng_for(5);
  Tensor x = Tensor::randn({2, 3, 8}, rng), w = Tensor::randn({4, 3, 3}, rng), b = Tensor::randn({4}, rng);
  Tensor p = Tensor::randn({2, 4, 4}, rng);
  expect_grad_ok([&] { return sum(mul(conv1d(x, w, b, 2, 1), p)); }, {x, w, b});
  Tensor q = Tensor::randn({2, 3, 16}, rng);
  expect_grad_ok([&] { return sum(mul(upsample_nearest1d(x, 2), q)); }, {x});
}

TEST(Ops, NormalizationGradients) {
  auto rng = rng_for(6);
  Tensor x = Tensor::randn({2, 4, 3, 3}, rng);
  Tensor gamma = Tensor::randn({4}, rng), beta = Tensor::randn({4}, rng);
  Tensor p = Tensor::randn({2, 4, 3, 3}, rng);
  expect_grad_ok([&] { return sum(mul(group_norm(x, 2, gamma, beta), p)); }, {x, gamma, beta});

  Tensor y = Tensor::randn({3, 5}, rng);
  Tensor g2 = Tensor::randn({5}, rng), b2 = Tensor::randn({5}, rng), p2 = Tensor::randn({3, 5}, rng);
  expect_grad_ok([&] { return sum(mul(layer_norm(y, g2, b2), p2)); }, {y, g2, b2});
}

TEST(Ops, GroupNormNormalizesEachGroup) {
  auto rng = rng_for(7);
  Tensor x = Tensor::randn({1, 4, 5}, rng, 3.0);
  Tensor y = group_norm(x, 2, Tensor::full({4}, 1.0), Tensor::zeros({4}));
  for (int g = 0; g < 2; ++g) {
    double m = 0, v = 0;
    for (int i = 0; i < 10; ++i) m += y.data()[g * 10 + i];
    m /= 10;
    for (int i = 0; i < 10; ++i) v += std::pow(y.data()[g * 10 + i] - m, 2);
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v / 10, 1.0, 1e-4);
  }
}

TEST(Ops, SoftmaxFamily) {
  auto rng = rng_for(8);
  Tensor x = Tensor::randn({3, 4}, rng, 2.0);
  Tensor s = softmax(x), ls = log_softmax(x);
  for (int r = 0; r < 3; ++r) {
    double total = 0;
    for (int c = 0; c < 4; ++c) {
      total += s.data()[r * 4 + c];
      EXPECT_NEAR(std::log(s.data()[r * 4 + c]), ls.data()[r * 4 + c], 1e-12);
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
  Tensor p = Tensor::randn({3, 4}, rng);
  expect_grad_ok([&] { return sum(mul(softmax(x), p)); }, {x});
  expect_grad_ok([&] { return sum(mul(log_softmax(x), p)); }, {x});
  expect_grad_ok([&] { return sum(mul(l2_normalize(x), p)); }, {x});
  Tensor n = l2_normalize(x);
  for (int r = 0; r < 3; ++r) {
    double s2 = 0;
    for (int c = 0; c < 4; ++c) s2 += n.data()[r * 4 + c] * n.data()[r * 4 + c];
    EXPECT_NEAR(s2, 1.0, 1e-12);
  }
}

TEST(Ops, LayoutGradients) {
  auto rng = rng_for(9);
  Tensor x = Tensor::randn({2, 3, 4}, rng);
  Tensor p = Tensor::randn({4, 2, 3}, rng);
  expect_grad_ok([&] { return sum(mul(permute(x, {2, 0, 1}), p)); }, {x});
  Tensor y = Tensor::randn({2, 5, 4}, rng);
  Tensor pc = Tensor::randn({2, 8, 4}, rng);
  expect_grad_ok(
      [&] {
        std::vector<Tensor> parts{x, y};
        return sum(mul(concat(parts, 1), pc));
      },
      {x, y});
  Tensor ps = Tensor::randn({2, 2, 4}, rng);
  expect_grad_ok([&] { return sum(mul(slice(y, 1, 2, 2), ps)); }, {y});
  Tensor pos = Tensor::randn({3, 4}, rng), pb = Tensor::randn({2, 3, 4}, rng);
  expect_grad_ok([&] { return sum(mul(add_broadcast_batch(x, pos), pb)); }, {x, pos});
  expect_grad_ok([&] { return sum(mul(repeat_batch(pos, 2), pb)); }, {pos});
  Tensor img = Tensor::randn({2, 3, 2, 2}, rng), bias = Tensor::randn({3}, rng);
  Tensor pi = Tensor::randn({2, 3, 2, 2}, rng), pg = Tensor::randn({2, 3}, rng);
  expect_grad_ok([&] { return sum(mul(add_channel_bias(img, bias), pi)); }, {img, bias});
  expect_grad_ok([&] { return sum(mul(global_avg_pool2d(img), pg)); }, {img});
}

TEST(Ops, FilmIsPerChannelAffine) {
  auto rng = rng_for(10);
  Tensor x = Tensor::randn({1, 3, 4}, rng);
  Tensor ones = Tensor::full({1, 3}, 1.0), zeros = Tensor::zeros({1, 3});
  Tensor same = film(x, ones, zeros);
  for (int i = 0; i < 12; ++i) EXPECT_EQ(same.data()[i], x.data()[i]);
  Tensor gamma = Tensor::from({1, 3}, {1.0, 2.0, 1.0});
  Tensor doubled = film(x, gamma, zeros);
  for (int c = 0; c < 3; ++c)
    for (int t = 0; t < 4; ++t)
      EXPECT_DOUBLE_EQ(doubled.data()[c * 4 + t], (c == 1 ? 2.0 : 1.0) * x.data()[c * 4 + t]);
  Tensor sc = Tensor::randn({1, 3}, rng), sh = Tensor::randn({1, 3}, rng), p = Tensor::randn({1, 3, 4}, rng);
  expect_grad_ok([&] { return sum(mul(film(x, sc, sh), p)); }, {x, sc, sh});
}

TEST(Ops, LossGradients) {
  auto rng = rng_for(11);
  Tensor a = Tensor::randn({4, 3}, rng), b = Tensor::randn({4, 3}, rng);
  expect_grad_ok([&] { return mse_loss(a, b); }, {a, b});
  expect_grad_ok([&] { return l1_loss(a, b); }, {a, b});
}

TEST(Ops, ShapeErrors) {
  Tensor a = Tensor::zeros({2, 3}), b = Tensor::zeros({3, 2});
  try {
    add(a, b);
    FAIL();
  } catch (const vtp::Error& e) {
    EXPECT_EQ(e.code(), vtp::ErrorCode::kShapeMismatch);
  }
  EXPECT_THROW(matmul(a, a), vtp::Error);
}

TEST(Ops, NoGradGuardSkipsGraph) {
  Tensor a = Tensor::full({2}, 1.0);
  a.set_requires_grad(true);
  {
    NoGradGuard g;
    Tensor y = square(a);
    EXPECT_FALSE(y.requires_grad());
  }
  EXPECT_TRUE(square(a).requires_grad());
}
