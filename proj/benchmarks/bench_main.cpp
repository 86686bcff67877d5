#include <benchmark/benchmark.h>

#include "vtp/diffusion/denoiser.hpp"
#include "vtp/eval/tsne.hpp"
#include "vtp/nn/layers.hpp"
#include "vtp/sim/render.hpp"
#include "vtp/sim/world.hpp"

using namespace vtp;

static void BM_Conv2dForwardBackward(benchmark::State& st) {
  const auto size = st.range(0);
  std::mt19937_64 rng(0);
  nn::Conv2d conv(3, 32, 3, 1, 1, rng);
  const auto x = nn::Tensor::randn({8, 3, size, size}, rng);
  for (auto _ : st) {
    auto y = nn::sum(conv.forward(x));
    y.backward();
    benchmark::DoNotOptimize(conv.weight.grad());
    conv.weight.zero_grad();
    conv.bias.zero_grad();
  }
  st.SetItemsProcessed(st.iterations() * 8);
}
BENCHMARK(BM_Conv2dForwardBackward)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

static void BM_DenoiserForward(benchmark::State& st) {
  const int batch = static_cast<int>(st.range(0));
  diffusion::DenoiserConfig cfg;
  cfg.cond_dim = 256;
  std::mt19937_64 rng(0);
  diffusion::ConditionalUnet1D net(cfg, rng);
  const auto noisy = nn::Tensor::randn({batch, cfg.horizon, cfg.action_dim}, rng);
  const auto cond = nn::Tensor::randn({batch, cfg.cond_dim}, rng);
  const std::vector<int> steps(static_cast<size_t>(batch), 50);
  nn::NoGradGuard guard;
  for (auto _ : st) benchmark::DoNotOptimize(net.forward(noisy, steps, cond));
  st.SetItemsProcessed(st.iterations() * batch);
}
BENCHMARK(BM_DenoiserForward)->Arg(1)->Arg(64)->Unit(benchmark::kMillisecond);

static void BM_RenderObservation(benchmark::State& st) {
  sim::EnvConfig cfg;
  sim::Environment env(cfg);
  const auto state = env.reset(0, false);
  Rng rng(1);
  for (auto _ : st) {
    benchmark::DoNotOptimize(sim::render_views(cfg, state, cfg.num_cameras));
    benchmark::DoNotOptimize(sim::render_tactile(cfg, state, env.layout(), rng));
  }
}
BENCHMARK(BM_RenderObservation)->Unit(benchmark::kMicrosecond);

static void BM_Tsne(benchmark::State& st) {
  const auto n = st.range(0);
  eval::Matrix x(n, 32);
  Rng rng(2);
  std::normal_distribution<double> g(0.0, 1.0);
  for (auto& v : x.values) v = g(rng);
  eval::TsneConfig cfg;
  cfg.iterations = 300;
  cfg.exaggeration_iters = 100;
  for (auto _ : st) benchmark::DoNotOptimize(eval::tsne(x, cfg));
}
BENCHMARK(BM_Tsne)->Arg(200)->Arg(600)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
