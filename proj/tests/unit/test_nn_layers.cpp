#include <gtest/gtest.h>

#include "vtp/error.hpp"
#include "vtp/nn/gradcheck.hpp"
#include "vtp/nn/layers.hpp"
#include "vtp/nn/optim.hpp"

using namespace vtp::nn;

TEST(Layers, LinearParameterNamesAndCount) {
  std::mt19937_64 rng(1);
  Linear l(4, 3, rng);
  const auto named = l.named_parameters("fc.");
  ASSERT_EQ(named.size(), 2u);
  EXPECT_EQ(named[0].name, "fc.weight");
  EXPECT_EQ(named[1].name, "fc.bias");
  EXPECT_EQ(l.parameter_count(), 15);
  Linear nb(4, 3, rng, false);
  EXPECT_EQ(nb.parameter_count(), 12);
}

TEST(Layers, CopyAndLoadParameters) {
  std::mt19937_64 rng(2);
  Conv2d a(3, 4, 3, 1, 1, rng), b(3, 4, 3, 1, 1, rng);
  copy_parameters(a, b);
  EXPECT_TRUE(std::equal(a.weight.data().begin(), a.weight.data().end(), b.weight.data().begin()));
  EXPECT_NE(a.weight.node(), b.weight.node());

  Conv2d c(3, 4, 3, 1, 1, rng);
  load_parameters(c, a.named_parameters("enc."), "enc.");
  EXPECT_TRUE(std::equal(a.bias.data().begin(), a.bias.data().end(), c.bias.data().begin()));
  EXPECT_THROW(load_parameters(c, a.named_parameters("x."), "enc."), vtp::Error);
  Conv2d wrong(2, 4, 3, 1, 1, rng);
  EXPECT_THROW(load_parameters(wrong, a.named_parameters(""), ""), vtp::Error);
}

TEST(Layers, TransformerGradients) {
  std::mt19937_64 rng(3);
  TransformerEncoderLayer enc(8, 2, 16, rng);
  TransformerDecoderLayer dec(8, 2, 16, rng);
  Tensor src = Tensor::randn({2, 5, 8}, rng), pos = Tensor::randn({2, 5, 8}, rng);
  Tensor tgt = Tensor::randn({2, 3, 8}, rng), qpos = Tensor::randn({2, 3, 8}, rng);
  Tensor probe = Tensor::randn({2, 3, 8}, rng);
  auto loss = [&] {
    Tensor mem = enc.forward(src, pos);
    return sum(mul(dec.forward(tgt, mem, qpos, pos), probe));
  };
  std::vector<Tensor> inputs{src, tgt};
  for (const auto& p : enc.parameters()) inputs.push_back(p);
  for (const auto& p : dec.parameters()) inputs.push_back(p);
  EXPECT_LT(check_gradients(loss, inputs).max_relative_error, 1e-6);
}

TEST(Layers, AttentionOverIdenticalValues) {
  std::mt19937_64 rng(4);
  MultiheadAttention mha(4, 1, rng);
  // Every key/value row is the same, so any attention weighting yields the same output row.
  Tensor v = Tensor::full({1, 3, 4}, 0.5);
  Tensor q = Tensor::randn({1, 2, 4}, rng);
  Tensor out = mha.forward(q, v, v);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(out.data()[i], out.data()[4 + i], 1e-12);
}

TEST(Optim, FrozenParametersUntouched) {
  std::mt19937_64 rng(5);
  Linear a(3, 2, rng), b(3, 2, rng);
  b.set_trainable(false);
  std::vector<Tensor> params = a.parameters();
  for (auto& p : b.parameters()) params.push_back(p);
  const std::vector<double> before(b.weight.data().begin(), b.weight.data().end());
  const std::vector<double> a_before(a.weight.data().begin(), a.weight.data().end());
  AdamW opt(params, 1e-2);
  Tensor x = Tensor::randn({4, 3}, rng);
  for (int i = 0; i < 3; ++i) {
    opt.zero_grad();
    sum(square(a.forward(x)) + square(b.forward(x))).backward();
    opt.step();
  }
  EXPECT_TRUE(std::equal(before.begin(), before.end(), b.weight.data().begin()));
  EXPECT_FALSE(std::equal(a_before.begin(), a_before.end(), a.weight.data().begin()));
}

TEST(Optim, SgdDescendsQuadratic) {
  Tensor x = Tensor::from({2}, {3.0, -2.0});
  x.set_requires_grad(true);
  Sgd opt({x}, 0.1, 0.5);
  for (int i = 0; i < 100; ++i) {
    opt.zero_grad();
    sum(square(x)).backward();
    opt.step();
  }
  EXPECT_NEAR(x.data()[0], 0.0, 1e-6);
  EXPECT_NEAR(x.data()[1], 0.0, 1e-6);
}

TEST(Optim, ClipGradNorm) {
  Tensor x = Tensor::from({2}, {3.0, 4.0});
  x.set_requires_grad(true);
  sum(mul(x, Tensor::from({2}, {3.0, 4.0}))).backward();
  EXPECT_NEAR(clip_grad_norm({x}, 1.0), 5.0, 1e-12);
  EXPECT_NEAR(x.grad()[0], 0.6, 1e-12);
  EXPECT_NEAR(x.grad()[1], 0.8, 1e-12);
}
