#include <gtest/gtest.h>

#include <cmath>

#include "vtp/act/act.hpp"
#include "vtp/data/batch.hpp"
#include "vtp/error.hpp"
#include "vtp/nn/gradcheck.hpp"
#include "vtp/pretrain/pretrain.hpp"

using namespace vtp;
using namespace vtp::act;

namespace {

sim::EnvConfig small_env() {
  sim::EnvConfig cfg;
  cfg.image_size = 16;
  cfg.tactile_size = 12;
  return cfg;
}

ActConfig small_config() {
  ActConfig c;
  c.d_model = 16;
  c.heads = 2;
  c.ffn_dim = 32;
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  c.latent_dim = 4;
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

TEST(Ensemble, WeightsPositiveNormalized) {
  for (size_t n : {1u, 2u, 5u, 20u})
    for (double k : {0.0, 0.25, 1.0}) {
      const auto w = ensemble_weights(n, k);
      double s = 0.0;
      for (double v : w) {
        EXPECT_GT(v, 0.0);
        s += v;
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(Ensemble, TwoEntryExample) {
  const std::vector<Action> buf{{0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}};
  const auto a = temporal_ensemble(buf, 0.25);
  EXPECT_NEAR(a[0], std::exp(-0.25) / (1 + std::exp(-0.25)), 1e-12);
  EXPECT_NEAR(a[0], 0.4378, 1e-4);
  // The other convention weights the newest entry highest.
  const auto b = temporal_ensemble(buf, 0.25, false);
  EXPECT_NEAR(b[0], 1.0 / (1 + std::exp(-0.25)), 1e-12);
}

TEST(Ensemble, KZeroIsMeanAndSingleIsIdentity) {
  const std::vector<Action> buf{{1, 2, 3}, {3, 4, 5}, {5, 0, 1}};
  const auto a = temporal_ensemble(buf, 0.0);
  EXPECT_NEAR(a[0], 3.0, 1e-12);
  EXPECT_NEAR(a[1], 2.0, 1e-12);
  EXPECT_NEAR(a[2], 3.0, 1e-12);
  const std::vector<Action> one{{0.7, -0.2, 0.4}};
  EXPECT_EQ(temporal_ensemble(one, 0.25), one[0]);
  EXPECT_THROW(temporal_ensemble(std::vector<Action>{}, 0.25), Error);
}

TEST(Ensemble, ConvexCombination) {
  Rng rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 10000; ++trial) {
    const size_t n = 1 + rng() % 20;
    std::vector<Action> buf(n);
    for (auto& a : buf)
      for (auto& v : a) v = u(rng);
    const auto out = temporal_ensemble(buf, 0.25, trial % 2 == 0);
    for (size_t d = 0; d < 3; ++d) {
      double lo = 1e9, hi = -1e9;
      for (const auto& a : buf) {
        lo = std::min(lo, a[d]);
        hi = std::max(hi, a[d]);
      }
      ASSERT_GE(out[d], lo - 1e-12);
      ASSERT_LE(out[d], hi + 1e-12);
    }
  }
}

TEST(EnsembleBuffer, GathersLivePredictionsOldestFirst) {
  EnsembleBuffer buf(3, 0.0, true);
  auto chunk = [](double base) { return std::vector<Action>{{base, 0, 0}, {base + 1, 0, 0}, {base + 2, 0, 0}}; };
  buf.add(0, chunk(0));
  buf.add(1, chunk(10));
  buf.add(2, chunk(20));
  const auto live = buf.live(2);
  ASSERT_EQ(live.size(), 3u);
  EXPECT_EQ(live[0][0], 2.0);
  EXPECT_EQ(live[1][0], 11.0);
  EXPECT_EQ(live[2][0], 20.0);
  EXPECT_NEAR(buf.action(2)[0], 11.0, 1e-12);
  buf.add(3, chunk(30));
  EXPECT_EQ(buf.live(3).size(), 3u);
  EXPECT_EQ(buf.size(), 3u);  // the tick-0 chunk is pruned
}

TEST(RelativeFrame, ShiftingOriginMovesOnlyGlobalTargets) {
  const std::vector<Action> rel{{0.01, -0.02, 1.0}, {0.02, -0.03, 0.0}};
  const auto g1 = to_global(rel, {0.5, 0.4, 0.08});
  const auto g2 = to_global(rel, {0.6, 0.3, 0.02});
  for (size_t j = 0; j < rel.size(); ++j) {
    EXPECT_NEAR(g2[j][0] - g1[j][0], 0.1, 1e-12);
    EXPECT_NEAR(g2[j][1] - g1[j][1], -0.1, 1e-12);
    EXPECT_EQ(g1[j][2], rel[j][2]);
    EXPECT_NEAR(g1[j][0] - 0.5, rel[j][0], 1e-12);
  }
}

TEST(ActLoss, ClosedFormKl) {
  Rng rng(2);
  const auto mu = nn::Tensor::randn({4, 3}, rng), logvar = nn::Tensor::randn({4, 3}, rng);
  double expect = 0.0;
  for (int i = 0; i < 12; ++i) {
    const double m = mu.data()[i], lv = logvar.data()[i];
    expect += 0.5 * (std::exp(lv) + m * m - 1.0 - lv);
  }
  EXPECT_NEAR(gaussian_kl(mu, logvar).item(), expect / 4, 1e-9);

  const auto zero = nn::Tensor::zeros({4, 3});
  double sq = 0.0;
  for (double v : mu.data()) sq += v * v;
  const auto pred = nn::Tensor::randn({4, 5, 3}, rng);
  EXPECT_NEAR(act_loss(pred, pred, mu, zero, 10.0).total.item(), 10.0 * sq / 2 / 4, 1e-9);
  EXPECT_EQ(act_loss(pred, pred, zero, zero, 10.0).total.item(), 0.0);
  const double k1 = act_loss(pred, pred, mu, logvar, 1.0).total.item();
  const double k2 = act_loss(pred, pred, mu, logvar, 2.0).total.item();
  EXPECT_NEAR(k2, 2 * k1, 1e-12);
}

TEST(ActLoss, KlGradientMatchesFiniteDifferences) {
  Rng rng(3);
  const auto mu = nn::Tensor::randn({3, 4}, rng).set_requires_grad(true);
  const auto logvar = nn::Tensor::randn({3, 4}, rng).set_requires_grad(true);
  const auto r = nn::check_gradients([&] { return gaussian_kl(mu, logvar); }, {mu, logvar});
  EXPECT_LT(r.max_relative_error, 1e-4);
}

TEST(ActModel, LayoutAndShapes) {
  Rng rng(4);
  const auto cfg = small_config();
  ActModel m(cfg, 3, 16, 12, rng);
  // 16px -> 1x1 maps with the small trunk; tactile 12px -> 1x1.
  ASSERT_EQ(m.layout().size(), 6u);
  EXPECT_EQ(m.layout()[0].name, "latent");
  EXPECT_EQ(m.layout()[5].name, "tactile");
  const std::vector<nn::Tensor> views(3, nn::Tensor::uniform({2, 3, 16, 16}, rng, 0, 1));
  const auto tac = nn::Tensor::uniform({2, 15, 12, 12}, rng, 0, 1);
  const auto prop = nn::Tensor::randn({2, 3}, rng);
  const auto out = m.forward(views, &tac, prop, nullptr, nullptr);
  EXPECT_EQ(out.actions.shape(), (nn::Shape{2, 20, 3}));
  EXPECT_FALSE(out.mu.defined());
  const auto chunk = nn::Tensor::randn({2, 20, 3}, rng);
  const auto train = m.forward(views, &tac, prop, &chunk, &rng);
  EXPECT_EQ(train.mu.shape(), (nn::Shape{2, 4}));

  auto vcfg = cfg;
  vcfg.vision_only = true;
  ActModel v(vcfg, 3, 16, 12, rng);
  for (const auto& s : v.layout()) EXPECT_NE(s.name, "tactile");
  EXPECT_FALSE(v.tactile.has_value());
}

TEST(ActModel, InferenceIsDeterministic) {
  Rng rng(5);
  ActModel m(small_config(), 1, 16, 12, rng);
  const std::vector<nn::Tensor> views{nn::Tensor::uniform({1, 3, 16, 16}, rng, 0, 1)};
  const auto tac = nn::Tensor::uniform({1, 15, 12, 12}, rng, 0, 1);
  const auto prop = nn::Tensor::randn({1, 3}, rng);
  const auto a = m.forward(views, &tac, prop, nullptr, nullptr).actions;
  const auto b = m.forward(views, &tac, prop, nullptr, nullptr).actions;
  EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
}

TEST(TrainAct, OverfitsOneEpisode) {
  const auto eps = demos(1);
  auto cfg = small_config();
  cfg.d_model = 32;
  cfg.ffn_dim = 64;
  cfg.updates = 2000;
  cfg.batch = 32;
  cfg.lr = 2e-3;
  const auto r = train_act(eps, cfg);
  // reconstruction of the training chunks with z = 0
  auto policy = ActPolicy::from_checkpoint(r.checkpoint);
  const auto norm = r.checkpoint.extra.at("norm").get<data::NormStats>();
  double l1 = 0.0;
  int count = 0;
  for (int64_t t = 0; t < eps[0].length(); t += 3) {
    data::Observation obs;
    for (int c = 0; c < 3; ++c) obs.views.push_back(eps[0].camera_image(t, c));
    obs.tactile = data::TactileWindow::init(eps[0].tactile_frame(std::max<int64_t>(0, t - 4)), 5);
    for (int64_t k = std::max<int64_t>(0, t - 4) + 1; k <= t; ++k) obs.tactile.push(eps[0].tactile_frame(k));
    obs.proprio = eps[0].proprio(t);
    auto pred = policy->predict(obs);
    const auto truth = data::action_chunk(eps[0], t, cfg.horizon, true);
    for (int j = 0; j < cfg.horizon; ++j) {
      std::array<double, 3> a = pred[static_cast<size_t>(j)], b{truth[j * 3], truth[j * 3 + 1], truth[j * 3 + 2]};
      norm.normalize_action(a);
      norm.normalize_action(b);
      for (int d = 0; d < 3; ++d) l1 += std::abs(a[d] - b[d]);
      count += 3;
    }
  }
  EXPECT_LT(l1 / count, 0.02);
}

TEST(TrainAct, SameSeedSameLoss) {
  const auto eps = demos(1);
  auto cfg = small_config();
  cfg.updates = 5;
  const auto a = train_act(eps, cfg), b = train_act(eps, cfg);
  EXPECT_NEAR(a.losses.back(), b.losses.back(), 1e-6);
  EXPECT_EQ(a.losses, b.losses);
}

TEST(TrainAct, PretrainedInitAndFrozenRejected) {
  const auto eps = demos(1);
  pretrain::PretrainConfig pc;
  pc.trunk = small_config().trunk;
  pc.max_updates = 1;
  pc.batch = 4;
  const auto pre = pretrain::pretrain(eps, pc);
  auto cfg = small_config();
  cfg.updates = 0;
  const auto r = train_act(eps, cfg, &pre.checkpoint);
  const auto a = r.checkpoint.param("backbone.trunk.conv0.weight").data();
  const auto o = pre.checkpoint.param("vision_encoder.trunk.conv0.weight").data();
  EXPECT_TRUE(std::equal(a.begin(), a.end(), o.begin()));
  const auto frozen = model::freeze(pre.checkpoint, "tactile_encoder");
  EXPECT_THROW(train_act(eps, cfg, &frozen), Error);
}

TEST(ActPolicy, QueriesEveryTickAndEnsembles) {
  const auto eps = demos(1);
  auto cfg = small_config();
  cfg.updates = 1;
  auto policy = ActPolicy::from_checkpoint(train_act(eps, cfg).checkpoint);
  sim::Environment env(small_env());
  const auto r = policy::rollout(env, *policy, {.seed = 2, .step_cap = 5});
  EXPECT_EQ(r.steps, 5);
}
