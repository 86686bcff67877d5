#include <gtest/gtest.h>

#include <cmath>

#include "vtp/data/episode.hpp"
#include "vtp/diffusion/denoiser.hpp"
#include "vtp/diffusion/policy.hpp"
#include "vtp/diffusion/schedule.hpp"
#include "vtp/error.hpp"
#include "vtp/nn/gradcheck.hpp"
#include "vtp/nn/optim.hpp"
#include "vtp/pretrain/pretrain.hpp"

using namespace vtp;
using namespace vtp::diffusion;

namespace {

DenoiserConfig tiny_denoiser() {
  DenoiserConfig c;
  c.action_dim = 2;
  c.horizon = 4;
  c.cond_dim = 2;
  c.down_dims = {2, 4};
  c.kernel = 3;
  c.step_embed_dim = 2;
  c.groups = 1;
  return c;
}

sim::EnvConfig small_env() {
  sim::EnvConfig cfg;
  cfg.image_size = 16;
  cfg.tactile_size = 12;
  return cfg;
}

DiffusionConfig small_policy_config() {
  DiffusionConfig c;
  c.down_dims = {8, 16};
  c.groups = 4;
  c.step_embed_dim = 8;
  c.trunk.channels = {8, 8, 8, 8};
  c.trunk.groups = 2;
  c.batch = 8;
  c.warmup = 5;
  return c;
}

std::vector<data::Episode> demos(int n) {
  const auto cfg = small_env();
  sim::Environment env(cfg);
  std::vector<data::Episode> out;
  for (int i = 0; i < n; ++i)
    out.push_back(data::record_episode(env, data::expert_controller(cfg, i), {.seed = (uint64_t)i}));
  return out;
}

}  // namespace

TEST(Schedule, MonotoneAndBounded) {
  for (auto kind : {ScheduleKind::kSquaredCosine, ScheduleKind::kLinear})
    for (int K : {1, 2, 10, 100, 1000}) {
      const auto s = build_schedule(K, 1, kind);
      EXPECT_EQ(s.alpha_bar(0), 1.0);
      for (int k = 1; k <= K; ++k) {
        EXPECT_GT(s.beta(k), 0.0);
        EXPECT_LT(s.beta(k), 1.0);
        EXPECT_LT(s.alpha_bar(k), s.alpha_bar(k - 1));
        EXPECT_GT(s.alpha_bar(k), 0.0);
      }
    }
  const auto s = build_schedule(100, 10);
  EXPECT_GT(s.alpha_bar(1), s.alpha_bar(50));
  EXPECT_GT(s.alpha_bar(50), s.alpha_bar(100));
}

TEST(Schedule, InferenceSubsetIsStrided) {
  const auto s = build_schedule(100, 10);
  EXPECT_EQ(s.inference_steps, (std::vector<int>{10, 20, 30, 40, 50, 60, 70, 80, 90, 100}));
  const auto one = build_schedule(1, 1);
  EXPECT_EQ(one.inference_steps, std::vector<int>{1});
  EXPECT_THROW(build_schedule(5, 10), Error);
  EXPECT_THROW(build_schedule(0, 0), Error);
}

TEST(Schedule, JsonRoundTrip) {
  const auto s = build_schedule(50, 5, ScheduleKind::kLinear);
  const auto back = schedule_from_json(nlohmann::json(s));
  EXPECT_EQ(back.betas, s.betas);
  EXPECT_EQ(back.alpha_bars, s.alpha_bars);
  EXPECT_EQ(back.inference_steps, s.inference_steps);
}

TEST(AddNoise, ClosedFormAndLimits) {
  NoiseSchedule s;
  s.train_steps = 1;
  s.betas = {0.36};
  s.alpha_bars = {1.0, 0.64};
  s.inference_steps = {1};
  const std::vector<double> zero(6, 0.0), ones(6, 1.0);
  for (double v : add_noise(s, zero, ones, 1)) EXPECT_NEAR(v, 0.6, 1e-15);
  EXPECT_THROW(add_noise(s, zero, ones, 2), Error);
  EXPECT_THROW(add_noise(s, zero, std::vector<double>(5, 1.0), 1), Error);
}

TEST(AddNoise, OracleInverseRecoversChunk) {
  const auto s = build_schedule(100, 10);
  Rng rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> a0(60), eps(60);
  for (int k = 1; k <= 100; ++k) {
    for (auto& v : a0) v = n(rng);
    for (auto& v : eps) v = n(rng);
    const auto ak = add_noise(s, a0, eps, k);
    const double ab = s.alpha_bar(k);
    for (size_t i = 0; i < a0.size(); ++i)
      EXPECT_NEAR((ak[i] - std::sqrt(1 - ab) * eps[i]) / std::sqrt(ab), a0[i], 1e-9);
  }
}

TEST(AddNoise, BatchedMatchesSpan) {
  const auto s = build_schedule(100, 10);
  Rng rng(2);
  const auto a0 = nn::Tensor::randn({2, 4, 3}, rng), eps = nn::Tensor::randn({2, 4, 3}, rng);
  const auto out = add_noise(s, a0, eps, {7, 93});
  for (int r = 0; r < 2; ++r) {
    const auto ref = add_noise(s, a0.data().subspan(r * 12, 12), eps.data().subspan(r * 12, 12), r ? 93 : 7);
    for (int i = 0; i < 12; ++i) EXPECT_EQ(out.data()[r * 12 + i], ref[i]);
  }
}

TEST(ReverseStep, TerminalIsNoiseFreeAndOracleExact) {
  const auto s = build_schedule(100, 10);
  const auto c = reverse_coefficients(s, 10, 0);
  EXPECT_EQ(c.sigma, 0.0);
  // With the true noise the terminal step returns x0 exactly.
  Rng rng(3);
  std::vector<double> a0{0.3, -0.2, 0.5}, eps{0.1, 1.2, -0.7};
  auto x = add_noise(s, a0, eps, 10);
  reverse_step(s, x, eps, 10, 0, rng, false);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(x[i], a0[i], 1e-12);
}

TEST(ReverseStep, ClippedRouteMatchesEpsilonFormInsideRange) {
  const auto s = build_schedule(100, 10);
  std::vector<double> a0{0.3, -0.2, 0.5}, eps{0.1, 1.2, -0.7};
  for (auto [k, kp] : {std::pair{100, 90}, std::pair{50, 40}, std::pair{20, 10}}) {
    auto x1 = add_noise(s, a0, eps, k), x2 = x1;
    Rng r1(9), r2(9);
    reverse_step(s, x1, eps, k, kp, r1, false);
    reverse_step(s, x2, eps, k, kp, r2, true);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(x1[i], x2[i], 1e-10);
  }
}

TEST(Film, IdentityAtInitAndPerChannel) {
  Rng rng(4);
  FilmLayer film(3, 4, rng);
  const auto x = nn::Tensor::randn({2, 4, 5}, rng);
  const auto cond = nn::Tensor::randn({2, 3}, rng);
  const auto y = film.modulate(x, cond);
  for (int64_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.data()[i], x.data()[i]);

  // gamma = 1 + b_g: set channel 1 to 2.
  film.scale_map.bias.mutable_data()[1] = 1.0;
  const auto z = film.modulate(x, cond);
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 4; ++c)
      for (int t = 0; t < 5; ++t) {
        const int i = (n * 4 + c) * 5 + t;
        EXPECT_DOUBLE_EQ(z.data()[i], (c == 1 ? 2.0 : 1.0) * x.data()[i]);
      }
}

TEST(Denoiser, ShapesAndParameterNames) {
  Rng rng(5);
  DenoiserConfig cfg;
  cfg.cond_dim = 10;
  ConditionalUnet1D net(cfg, rng);
  const auto out = net.forward(nn::Tensor::randn({3, 20, 3}, rng), {1, 50, 100}, nn::Tensor::randn({3, 10}, rng));
  EXPECT_EQ(out.shape(), (nn::Shape{3, 20, 3}));
  bool film = false;
  for (const auto& p : net.named_parameters())
    if (p.name.find("film.scale.") != std::string::npos) film = true;
  EXPECT_TRUE(film);
  cfg.horizon = 7;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(Denoiser, StepEmbeddingDistinguishesSteps) {
  const auto e = step_embedding({1, 2}, 8);
  double d = 0.0;
  for (int i = 0; i < 8; ++i) d += std::abs(e.data()[i] - e.data()[8 + i]);
  EXPECT_GT(d, 1e-3);
}

TEST(TrainingLoss, GradientMatchesFiniteDifferences) {
  Rng rng(6);
  const auto cfg = tiny_denoiser();
  ConditionalUnet1D net(cfg, rng);
  ASSERT_LE(net.parameter_count(), 1000);
  // Nonzero FiLM and output weights so every path carries gradient.
  for (auto& p : net.named_parameters())
    for (auto& v : p.tensor.mutable_data())
      if (v == 0.0) v = std::normal_distribution<double>(0.0, 0.1)(rng);
  const auto s = build_schedule(10, 2);
  const auto cond = nn::Tensor::randn({2, 2}, rng).set_requires_grad(true);
  const auto a0 = nn::Tensor::randn({2, 4, 2}, rng);
  const auto eps = nn::Tensor::randn({2, 4, 2}, rng);
  auto inputs = net.parameters();
  inputs.push_back(cond);
  const auto r = nn::check_gradients([&] { return training_loss(net, s, cond, a0, {2, 7}, eps); }, inputs);
  EXPECT_LT(r.max_relative_error, 1e-4);
}

TEST(TrainingLoss, ZeroPredictorGivesUnitLoss) {
  Rng rng(7);
  DenoiserConfig cfg = tiny_denoiser();
  cfg.horizon = 8;
  ConditionalUnet1D net(cfg, rng);
  for (auto& v : net.out_conv.weight.mutable_data()) v = 0.0;
  for (auto& v : net.out_conv.bias.mutable_data()) v = 0.0;
  const auto s = build_schedule(100, 10);
  const int n = 2000;
  std::vector<int> ks(n);
  std::uniform_int_distribution<int> pick(1, 100);
  for (auto& k : ks) k = pick(rng);
  const auto loss = training_loss(net, s, nn::Tensor::randn({n, 2}, rng), nn::Tensor::randn({n, 8, 2}, rng), ks,
                                  nn::Tensor::randn({n, 8, 2}, rng));
  EXPECT_NEAR(loss.item(), 1.0, 0.03);
}

TEST(Sampling, OverfitOneChunk) {
  Rng rng(8);
  DenoiserConfig cfg;
  cfg.horizon = 20;
  cfg.cond_dim = 4;
  cfg.down_dims = {16, 32};
  cfg.groups = 4;
  cfg.step_embed_dim = 16;
  ConditionalUnet1D net(cfg, rng);
  const auto s = build_schedule(100, 10);
  std::vector<double> target(60);
  for (int t = 0; t < 20; ++t) {
    target[t * 3] = -0.8 + 0.08 * t;
    target[t * 3 + 1] = 0.5 * std::sin(0.3 * t);
    target[t * 3 + 2] = t < 10 ? 1.0 : -1.0;
  }
  const int batch = 32;
  std::vector<double> a0v;
  for (int b = 0; b < batch; ++b) a0v.insert(a0v.end(), target.begin(), target.end());
  const auto a0 = nn::Tensor::from({batch, 20, 3}, a0v);
  const auto cond = nn::Tensor::zeros({batch, 4});
  nn::AdamW opt(net.parameters(), 2e-3, 0.0);
  std::uniform_int_distribution<int> pick(1, 100);
  for (int u = 0; u < 1500; ++u) {
    std::vector<int> ks(batch);
    for (auto& k : ks) k = pick(rng);
    const auto loss = training_loss(net, s, cond, a0, ks, nn::Tensor::randn({batch, 20, 3}, rng));
    opt.set_lr(nn::warmup_cosine_lr(2e-3, u, 50, 1500));
    opt.zero_grad();
    loss.backward();
    opt.step();
  }
  Rng sr(11);
  const auto sample = sample_chunk(net, s, nn::Tensor::zeros({1, 4}), sr, true);
  ASSERT_EQ(sample.size(), 60u);
  double worst = 0.0;
  for (size_t i = 0; i < 60; ++i) worst = std::max(worst, std::abs(sample[i] - target[i]));
  EXPECT_LT(worst, 0.05);

  Rng a(3), b(3);
  EXPECT_EQ(sample_chunk(net, s, nn::Tensor::zeros({1, 4}), a, true),
            sample_chunk(net, s, nn::Tensor::zeros({1, 4}), b, true));
}

TEST(ConditioningLayout, OrderAndVisionOnly) {
  const auto l = ConditioningLayout::make(3, 64, true);
  ASSERT_EQ(l.slots.size(), 5u);
  EXPECT_EQ(l.slots[3].name, "tactile");
  EXPECT_EQ(l.slots[3].offset, 192);
  EXPECT_EQ(l.dim, 4 * 64 + 3);
  const auto v = ConditioningLayout::make(3, 64, false);
  EXPECT_FALSE(v.has("tactile"));
  EXPECT_EQ(v.dim, 3 * 64 + 3);
}

TEST(DiffusionConfig, Validation) {
  DiffusionConfig c;
  c.vision_only = true;
  c.freeze_tactile = true;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.action_steps = 21;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  const auto back = nlohmann::json(c).get<DiffusionConfig>();
  EXPECT_EQ(nlohmann::json(back), nlohmann::json(c));
}

TEST(TrainDiffusion, FreezeKeepsTactileBitIdentical) {
  const auto eps = demos(2);
  pretrain::PretrainConfig pc;
  pc.trunk = small_policy_config().trunk;
  pc.max_updates = 2;
  pc.batch = 4;
  const auto pre = pretrain::pretrain(eps, pc);

  auto cfg = small_policy_config();
  cfg.updates = 20;
  cfg.freeze_tactile = true;
  const auto frozen = train_diffusion(eps, cfg, &pre.checkpoint);
  EXPECT_TRUE(frozen.checkpoint.is_frozen("tactile_encoder"));
  cfg.freeze_tactile = false;
  const auto free = train_diffusion(eps, cfg, &pre.checkpoint);

  int changed_frozen = 0, changed_free = 0;
  for (const auto& p : pre.checkpoint.params) {
    if (p.name.rfind("tactile_encoder.", 0) != 0) continue;
    const auto a = frozen.checkpoint.param(p.name).data();
    const auto b = free.checkpoint.param(p.name).data();
    const auto o = p.tensor.data();
    if (!std::equal(a.begin(), a.end(), o.begin())) ++changed_frozen;
    if (!std::equal(b.begin(), b.end(), o.begin())) ++changed_free;
  }
  EXPECT_EQ(changed_frozen, 0);
  EXPECT_GT(changed_free, 0);

  // every camera starts from the shared pretrained encoder
  cfg.updates = 0;
  const auto init = train_diffusion(eps, cfg, &pre.checkpoint);
  for (int c = 0; c < 3; ++c) {
    const auto a = init.checkpoint.param("camera" + std::to_string(c) + "_encoder.trunk.conv0.weight").data();
    const auto o = pre.checkpoint.param("vision_encoder.trunk.conv0.weight").data();
    EXPECT_TRUE(std::equal(a.begin(), a.end(), o.begin()));
  }
}

TEST(TrainDiffusion, VisionOnlyOmitsTactile) {
  const auto eps = demos(1);
  auto cfg = small_policy_config();
  cfg.vision_only = true;
  cfg.updates = 2;
  const auto r = train_diffusion(eps, cfg);
  EXPECT_FALSE(r.checkpoint.has_component("tactile_encoder"));
  EXPECT_EQ(r.checkpoint.config.at("denoiser").at("cond_dim").get<int>(), 3 * 8 + 3);
  for (const auto& slot : r.checkpoint.extra.at("conditioning").at("slots")) EXPECT_NE(slot.at("name"), "tactile");
}

TEST(TrainDiffusion, OverfitsOneEpisode) {
  const auto eps = demos(1);
  auto cfg = small_policy_config();
  cfg.down_dims = {64, 128};
  cfg.step_embed_dim = 16;
  cfg.trunk.channels = {16, 16, 16, 16};
  cfg.updates = 500;
  cfg.batch = 64;
  cfg.lr = 3e-3;
  const auto r = train_diffusion(eps, cfg);
  double tail = 0.0;
  for (int i = 450; i < 500; ++i) tail += r.losses[static_cast<size_t>(i)];
  EXPECT_LT(tail / 50, 0.05);
}

TEST(DiffusionPolicy, RecedingHorizonReplans) {
  const auto eps = demos(1);
  auto cfg = small_policy_config();
  cfg.updates = 1;
  const auto ckpt = train_diffusion(eps, cfg).checkpoint;
  auto policy = DiffusionPolicy::from_checkpoint(ckpt);
  sim::Environment env(small_env());
  auto r = execute_receding_horizon(env, *policy, {.seed = 1, .step_cap = 24});
  EXPECT_FALSE(r.success);
  EXPECT_EQ(r.steps, 24);
  EXPECT_EQ(policy->replans(), 3);

  policy->set_action_steps(20);
  r = execute_receding_horizon(env, *policy, {.seed = 1, .step_cap = 24});
  EXPECT_EQ(policy->replans(), 2);
  EXPECT_THROW(policy->set_action_steps(21), Error);
}

TEST(DiffusionPolicy, CheckpointRoundTripSamplesIdentically) {
  const auto eps = demos(1);
  auto cfg = small_policy_config();
  cfg.updates = 3;
  const auto ckpt = train_diffusion(eps, cfg).checkpoint;
  auto a = DiffusionPolicy::from_checkpoint(ckpt);
  auto b = DiffusionPolicy::from_checkpoint(ckpt);
  data::Observation obs;
  for (int c = 0; c < 3; ++c) obs.views.push_back(eps[0].camera_image(0, c));
  obs.tactile = data::TactileWindow::init(eps[0].tactile_frame(0), 5);
  obs.proprio = eps[0].proprio(0);
  Rng ra(4), rb(4);
  const auto ca = a->sample(obs, ra), cb = b->sample(obs, rb);
  ASSERT_EQ(ca.size(), 20u);
  EXPECT_EQ(ca, cb);

  obs.tactile = data::TactileWindow::init(eps[0].tactile_frame(0), 3);
  try {
    a->sample(obs, ra);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kHorizonMismatch);
  }
}
