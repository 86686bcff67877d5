#include <gtest/gtest.h>

#include <cmath>

#include "vtp/data/episode.hpp"
#include "vtp/error.hpp"
#include "vtp/nn/gradcheck.hpp"
#include "vtp/pretrain/pretrain.hpp"

using namespace vtp;
using pretrain::clip_loss;

namespace {

nn::Tensor unit_rows(int64_t n, int64_t l, Rng& rng) {
  auto x = nn::Tensor::randn({n, l}, rng);
  return nn::l2_normalize(x).detach();
}

nn::Tensor same_rows(int64_t n, int64_t l) {
  std::vector<double> v(static_cast<size_t>(n * l), 0.0);
  for (int64_t i = 0; i < n; ++i) v[static_cast<size_t>(i * l)] = 1.0;
  return nn::Tensor::from({n, l}, v);
}

sim::EnvConfig small_env() {
  sim::EnvConfig cfg;
  cfg.image_size = 32;
  cfg.tactile_size = 24;
  return cfg;
}

}  // namespace

TEST(ClipLoss, UniformSimilarityGivesCLogN) {
  for (auto [c, n] : {std::pair{1, 2}, std::pair{3, 16}, std::pair{2, 5}}) {
    const auto t = same_rows(n, 4);
    const std::vector<nn::Tensor> v(static_cast<size_t>(c), same_rows(n, 4));
    for (double tau : {0.07, 1.0})
      EXPECT_NEAR(clip_loss(t, v, tau).item(), c * std::log(static_cast<double>(n)), 1e-6);
  }
}

TEST(ClipLoss, TwoByTwoOrthonormal) {
  const auto e = nn::Tensor::from({2, 2}, {1, 0, 0, 1});
  const std::vector<nn::Tensor> v{e};
  const double expect = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));
  EXPECT_NEAR(clip_loss(e, v, 1.0).item(), expect, 1e-12);
  EXPECT_NEAR(clip_loss(e, v, 1.0).item(), 0.3133, 1e-4);
}

TEST(ClipLoss, DecreasesWithTemperatureOnAlignedPairs) {
  const auto e = nn::Tensor::from({2, 2}, {1, 0, 0, 1});
  const std::vector<nn::Tensor> v{e};
  const double a = clip_loss(e, v, 1.0).item(), b = clip_loss(e, v, 0.1).item(), c = clip_loss(e, v, 0.01).item();
  EXPECT_GT(a, b);
  EXPECT_GT(b, c);
  EXPECT_LT(c, 1e-6);
}

TEST(ClipLoss, SumsOverCameras) {
  Rng rng(1);
  const auto t = unit_rows(6, 5, rng);
  const auto v1 = unit_rows(6, 5, rng), v2 = unit_rows(6, 5, rng);
  const std::vector<nn::Tensor> both{v1, v2}, a{v1}, b{v2};
  EXPECT_NEAR(clip_loss(t, both, 0.2).item(), clip_loss(t, a, 0.2).item() + clip_loss(t, b, 0.2).item(), 1e-12);
}

TEST(ClipLoss, Contracts) {
  Rng rng(2);
  const auto t = unit_rows(4, 3, rng);
  const std::vector<nn::Tensor> v{unit_rows(4, 3, rng)};
  auto expect_code = [](auto fn, ErrorCode code) {
    try {
      fn();
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), code);
    }
  };
  expect_code([&] { clip_loss(t, v, 0.0); }, ErrorCode::kContract);
  expect_code([&] { clip_loss(t, v, -1.0); }, ErrorCode::kContract);
  const auto one = unit_rows(1, 3, rng);
  const std::vector<nn::Tensor> v1{one};
  expect_code([&] { clip_loss(one, v1, 0.1); }, ErrorCode::kContract);
  const auto scaled = nn::scale(t, 1.01);
  expect_code([&] { clip_loss(scaled, v, 0.1); }, ErrorCode::kContract);
}

TEST(ClipLoss, GradientMatchesFiniteDifferences) {
  Rng rng(3);
  // Gradient through the normalization so the unit-row contract holds under perturbation.
  const auto rt = nn::Tensor::randn({4, 3}, rng).set_requires_grad(true);
  const auto r1 = nn::Tensor::randn({4, 3}, rng).set_requires_grad(true);
  const auto r2 = nn::Tensor::randn({4, 3}, rng).set_requires_grad(true);
  const auto res = nn::check_gradients(
      [&] {
        const std::vector<nn::Tensor> v{nn::l2_normalize(r1), nn::l2_normalize(r2)};
        return clip_loss(nn::l2_normalize(rt), v, 0.5);
      },
      {rt, r1, r2});
  EXPECT_LT(res.max_relative_error, 1e-4);
}

TEST(Pretrain, DeterministicAndLossDecreases) {
  const auto cfg = small_env();
  sim::Environment env(cfg);
  std::vector<data::Episode> eps;
  for (int i = 0; i < 4; ++i)
    eps.push_back(data::record_episode(env, data::expert_controller(cfg, i), {.seed = (uint64_t)i}));
  pretrain::PretrainConfig pc;
  pc.trunk.channels = {16, 16, 16, 16};
  pc.trunk.groups = 2;
  pc.batch = 8;
  pc.lr = 0.002;
  pc.max_updates = 120;
  const auto a = pretrain::pretrain(eps, pc);
  ASSERT_EQ(a.losses.size(), 120u);
  double head = 0.0, tail = 0.0;
  for (int i = 0; i < 20; ++i) {
    head += a.losses[static_cast<size_t>(i)];
    tail += a.losses[static_cast<size_t>(100 + i)];
  }
  EXPECT_LT(tail, 0.8 * head);

  pc.max_updates = 10;
  const auto b = pretrain::pretrain(eps, pc), c = pretrain::pretrain(eps, pc);
  EXPECT_EQ(b.losses, c.losses);
  EXPECT_EQ(b.checkpoint.kind, "pretrain");
  for (const char* comp : {"vision_encoder", "tactile_encoder", "vision_head", "tactile_head"})
    EXPECT_TRUE(b.checkpoint.has_component(comp)) << comp;

  const auto model = pretrain::PretrainModel::from_checkpoint(b.checkpoint);
  EXPECT_EQ(model.tactile_head.proprio_dim, 3);
  EXPECT_EQ(model.vision_head.proprio_dim, 0);
}

TEST(Pretrain, ConfigValidation) {
  pretrain::PretrainConfig pc;
  pc.batch = 1;
  EXPECT_THROW(pc.validate(), Error);
  pc = {};
  pc.tau = 0.0;
  EXPECT_THROW(pc.validate(), Error);
  pc = {};
  const auto back = nlohmann::json(pc).get<pretrain::PretrainConfig>();
  EXPECT_EQ(nlohmann::json(back), nlohmann::json(pc));
}
