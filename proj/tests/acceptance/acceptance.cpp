// Acceptance checks, one line per criterion. With no arguments every
// criterion runs; otherwise only the numbers given.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <list>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>

#include "vtp/act/act.hpp"
#include "vtp/app/commands.hpp"
#include "vtp/data/window.hpp"
#include "vtp/diffusion/denoiser.hpp"
#include "vtp/diffusion/policy.hpp"
#include "vtp/diffusion/schedule.hpp"
#include "vtp/eval/embedding.hpp"
#include "vtp/eval/tsne.hpp"
#include "vtp/nn/gradcheck.hpp"
#include "vtp/nn/optim.hpp"
#include "vtp/pretrain/pretrain.hpp"

using namespace vtp;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "FAILED " << what << "; ";
    }
  }
};

using Clock = std::chrono::steady_clock;
double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

fs::path scratch(const std::string& tag) {
  auto d = fs::temp_directory_path() / ("vtp_accept_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

nn::Tensor same_rows(int64_t n, int64_t l) {
  std::vector<double> v(static_cast<size_t>(n * l), 0.0);
  for (int64_t i = 0; i < n; ++i) v[static_cast<size_t>(i * l)] = 1.0;
  return nn::Tensor::from({n, l}, v);
}

sim::EnvConfig small_env() {
  sim::EnvConfig cfg;
  cfg.image_size = 16;
  cfg.tactile_size = 12;
  return cfg;
}

std::vector<data::Episode> record(sim::Environment& env, int n, std::uint64_t first_seed) {
  std::vector<data::Episode> out;
  for (int i = 0; i < n; ++i) {
    const auto seed = first_seed + static_cast<std::uint64_t>(i);
    out.push_back(data::record_episode(env, data::expert_controller(env.config(), seed), {.seed = seed}));
  }
  return out;
}

// 1. contrastive loss closed forms
void clip_closed_form(Outcome& o) {
  double worst = 0.0;
  for (auto [c, n] : {std::pair{1, 2}, std::pair{3, 16}}) {
    const std::vector<nn::Tensor> views(static_cast<size_t>(c), same_rows(n, 4));
    const double loss = pretrain::clip_loss(same_rows(n, 4), views, 0.07).item();
    worst = std::max(worst, std::abs(loss - c * std::log(static_cast<double>(n))));
  }
  o.check(worst < 1e-6, "uniform similarity gives C log n");
  const auto e = nn::Tensor::from({2, 2}, {1, 0, 0, 1});
  const std::vector<nn::Tensor> v{e};
  const double two = pretrain::clip_loss(e, v, 1.0).item();
  o.check(std::abs(two - 0.3133) < 1e-4, "2x2 orthonormal case");
  o.detail << "max |loss - C log n| = " << worst << ", 2x2 loss = " << two;
}

// 2. gradient checks
void gradient_checks(Outcome& o) {
  Rng rng(3);
  const auto rt = nn::Tensor::randn({4, 3}, rng).set_requires_grad(true);
  const auto r1 = nn::Tensor::randn({4, 3}, rng).set_requires_grad(true);
  const auto r2 = nn::Tensor::randn({4, 3}, rng).set_requires_grad(true);
  const double clip = nn::check_gradients(
                          [&] {
                            const std::vector<nn::Tensor> v{nn::l2_normalize(r1), nn::l2_normalize(r2)};
                            return pretrain::clip_loss(nn::l2_normalize(rt), v, 0.5);
                          },
                          {rt, r1, r2})
                          .max_relative_error;

  diffusion::DenoiserConfig dc;
  dc.action_dim = 2;
  dc.horizon = 4;
  dc.cond_dim = 2;
  dc.down_dims = {2, 4};
  dc.step_embed_dim = 2;
  dc.groups = 1;
  diffusion::ConditionalUnet1D net(dc, rng);
  for (auto& p : net.named_parameters())
    for (auto& x : p.tensor.mutable_data())
      if (x == 0.0) x = std::normal_distribution<double>(0.0, 0.1)(rng);
  const auto s = diffusion::build_schedule(10, 2);
  const auto cond = nn::Tensor::randn({2, 2}, rng).set_requires_grad(true);
  const auto a0 = nn::Tensor::randn({2, 4, 2}, rng), eps = nn::Tensor::randn({2, 4, 2}, rng);
  auto inputs = net.parameters();
  inputs.push_back(cond);
  const double denoise =
      nn::check_gradients([&] { return diffusion::training_loss(net, s, cond, a0, {2, 7}, eps); }, inputs)
          .max_relative_error;

  const auto mu = nn::Tensor::randn({3, 4}, rng).set_requires_grad(true);
  const auto logvar = nn::Tensor::randn({3, 4}, rng).set_requires_grad(true);
  const double kl =
      nn::check_gradients([&] { return act::gaussian_kl(mu, logvar); }, {mu, logvar}).max_relative_error;

  eval::Matrix x(5, 3), y(5, 2);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& v : x.values) v = n(rng);
  for (auto& v : y.values) v = n(rng);
  const auto p = eval::joint_affinities(eval::conditional_affinities(x, 1.2).conditional);
  const auto g = eval::tsne_gradient(p, y);
  double tsne = 0.0;
  for (size_t k = 0; k < y.values.size(); ++k) {
    const double h = 1e-6, orig = y.values[k];
    y.values[k] = orig + h;
    const double up = eval::tsne_kl(p, y);
    y.values[k] = orig - h;
    const double down = eval::tsne_kl(p, y);
    y.values[k] = orig;
    const double fd = (up - down) / (2 * h);
    tsne = std::max(tsne, std::abs(fd - g.values[k]) / std::max(1e-8, std::abs(fd) + std::abs(g.values[k])));
  }
  o.check(clip < 1e-4, "contrastive loss");
  o.check(net.parameter_count() <= 1000 && denoise < 1e-4, "denoising loss");
  o.check(kl < 1e-4, "Gaussian KL");
  o.check(tsne < 1e-4, "tSNE KL");
  o.detail << "rel err clip " << clip << ", denoiser(" << net.parameter_count() << " params) " << denoise << ", kl "
           << kl << ", tsne " << tsne;
}

// 3. diffusion process identities
void diffusion_identities(Outcome& o) {
  const auto s = diffusion::build_schedule(100, 10);
  bool monotone = s.alpha_bar(0) == 1.0;
  for (int k = 1; k <= 100; ++k) monotone = monotone && s.alpha_bar(k) < s.alpha_bar(k - 1);
  o.check(monotone, "alpha_bar decreasing");

  Rng rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  double worst = 0.0;
  std::vector<double> a0(60), eps(60);
  for (int k = 1; k <= 100; ++k) {
    for (auto& v : a0) v = n(rng);
    for (auto& v : eps) v = n(rng);
    const auto ak = diffusion::add_noise(s, a0, eps, k);
    const double ab = s.alpha_bar(k);
    for (size_t i = 0; i < a0.size(); ++i)
      worst = std::max(worst, std::abs((ak[i] - std::sqrt(1 - ab) * eps[i]) / std::sqrt(ab) - a0[i]));
  }
  o.check(worst < 1e-9, "forward then oracle inverse");

  diffusion::DenoiserConfig dc;
  dc.horizon = 20;
  dc.cond_dim = 4;
  dc.down_dims = {16, 32};
  dc.groups = 4;
  dc.step_embed_dim = 16;
  Rng init(8);
  diffusion::ConditionalUnet1D net(dc, init);
  std::vector<double> target(60);
  for (int t = 0; t < 20; ++t) {
    target[t * 3] = -0.8 + 0.08 * t;
    target[t * 3 + 1] = 0.5 * std::sin(0.3 * t);
    target[t * 3 + 2] = t < 10 ? 1.0 : -1.0;
  }
  const int batch = 32, updates = 1500;
  std::vector<double> stacked;
  for (int b = 0; b < batch; ++b) stacked.insert(stacked.end(), target.begin(), target.end());
  const auto chunk = nn::Tensor::from({batch, 20, 3}, stacked);
  const auto cond = nn::Tensor::zeros({batch, 4});
  nn::AdamW opt(net.parameters(), 2e-3, 0.0);
  std::uniform_int_distribution<int> pick(1, 100);
  for (int u = 0; u < updates; ++u) {
    std::vector<int> ks(batch);
    for (auto& k : ks) k = pick(init);
    const auto loss = diffusion::training_loss(net, s, cond, chunk, ks, nn::Tensor::randn({batch, 20, 3}, init));
    opt.set_lr(nn::warmup_cosine_lr(2e-3, u, 50, updates));
    opt.zero_grad();
    loss.backward();
    opt.step();
  }
  Rng sr(11);
  const auto sample = diffusion::sample_chunk(net, s, nn::Tensor::zeros({1, 4}), sr, true);
  double linf = 0.0;
  for (size_t i = 0; i < 60; ++i) linf = std::max(linf, std::abs(sample[i] - target[i]));
  o.check(linf < 0.05, "memorized chunk sampled back");
  o.detail << "reconstruction err " << worst << ", overfit sample Linf " << linf;
}

// 4. temporal ensembling
void ensembling(Outcome& o) {
  bool weights_ok = true;
  for (size_t n : {1u, 2u, 7u, 20u})
    for (double k : {0.0, 0.25, 1.0}) {
      double sum = 0.0;
      for (double w : act::ensemble_weights(n, k)) {
        weights_ok = weights_ok && w > 0.0;
        sum += w;
      }
      weights_ok = weights_ok && std::abs(sum - 1.0) <= 1e-12;
    }
  o.check(weights_ok, "weights positive and normalized");

  const std::vector<act::Action> three{{1, 2, 3}, {3, 4, 5}, {5, 0, 1}};
  const auto mean = act::temporal_ensemble(three, 0.0);
  o.check(std::abs(mean[0] - 3.0) < 1e-12 && std::abs(mean[1] - 2.0) < 1e-12 && std::abs(mean[2] - 3.0) < 1e-12,
          "k = 0 is the mean");

  const std::vector<act::Action> two{{0, 0, 0}, {1, 1, 1}};
  const double example = act::temporal_ensemble(two, 0.25)[0];
  o.check(std::abs(example - 0.4378) < 1e-4, "two-entry example");

  Rng rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int violations = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<act::Action> buf(1 + rng() % 20);
    for (auto& a : buf)
      for (auto& v : a) v = u(rng);
    const auto out = act::temporal_ensemble(buf, 0.25);
    for (size_t d = 0; d < 3; ++d) {
      double lo = 1e9, hi = -1e9;
      for (const auto& a : buf) {
        lo = std::min(lo, a[d]);
        hi = std::max(hi, a[d]);
      }
      if (out[d] < lo - 1e-12 || out[d] > hi + 1e-12) ++violations;
    }
  }
  o.check(violations == 0, "convex hull bound");
  o.detail << "two-entry value " << example << ", convexity violations " << violations << "/10000 buffers";
}

sim::Image noise_image(int size, Rng& rng) {
  std::uniform_real_distribution<float> u(0.f, 1.f);
  sim::Image img{size, size, 3, std::vector<float>(static_cast<size_t>(size * size * 3))};
  for (auto& v : img.pixels) v = u(rng);
  return img;
}

// 5. tactile window
void tactile_window(Outcome& o) {
  Rng rng(2);
  const auto first = noise_image(48, rng);
  const auto w = data::TactileWindow::init(first, 5);
  bool dup = w.horizon() == 5;
  for (const auto& f : w.frames()) dup = dup && f == first;
  o.check(dup, "5 duplicates after init");
  const auto flat = w.collapsed();
  bool collapse = flat.size() == 15u * 48 * 48;
  for (int c = 0; collapse && c < 15; ++c)
    for (int r = 0; r < 48; ++r)
      for (int x = 0; x < 48; ++x)
        collapse = collapse && flat[(static_cast<size_t>(c) * 48 + r) * 48 + x] == first.at(r, x, c % 3);
  o.check(collapse, "15 x 48 x 48 collapse");

  int mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int h = 1 + static_cast<int>(rng() % 8);
    const auto start = noise_image(6, rng);
    auto win = data::TactileWindow::init(start, h);
    std::list<sim::Image> oracle(static_cast<size_t>(h), start);
    const int pushes = static_cast<int>(rng() % 20);
    for (int p = 0; p < pushes; ++p) {
      const auto f = noise_image(6, rng);
      win.push(f);
      oracle.pop_front();
      oracle.push_back(f);
    }
    std::vector<const sim::Image*> ptrs;
    for (const auto& f : oracle) ptrs.push_back(&f);
    if (!std::equal(win.frames().begin(), win.frames().end(), oracle.begin(), oracle.end()) ||
        win.collapsed() != data::collapse_frames(ptrs))
      ++mismatches;
  }
  o.check(mismatches == 0, "FIFO against list oracle");
  o.detail << "collapsed channels " << w.channels() << ", oracle mismatches " << mismatches << "/200";
}

// 6. freezing
void freezing(Outcome& o) {
  const auto env_cfg = small_env();
  sim::Environment env(env_cfg);
  const auto eps = record(env, 2, 0);
  pretrain::PretrainConfig pc;
  pc.trunk.channels = {8, 8, 8, 8};
  pc.trunk.groups = 2;
  pc.max_updates = 5;
  pc.batch = 4;
  const auto pre = pretrain::pretrain(eps, pc);

  diffusion::DiffusionConfig cfg;
  cfg.down_dims = {8, 16};
  cfg.groups = 4;
  cfg.step_embed_dim = 8;
  cfg.trunk = pc.trunk;
  cfg.batch = 8;
  cfg.updates = 100;
  cfg.freeze_tactile = true;
  const auto frozen = diffusion::train_diffusion(eps, cfg, &pre.checkpoint);
  cfg.freeze_tactile = false;
  const auto free = diffusion::train_diffusion(eps, cfg, &pre.checkpoint);

  int tactile = 0, changed_frozen = 0, changed_free = 0;
  for (const auto& p : pre.checkpoint.params) {
    if (p.name.rfind("tactile_encoder.", 0) != 0) continue;
    ++tactile;
    const auto orig = p.tensor.data();
    const auto a = frozen.checkpoint.param(p.name).data();
    const auto b = free.checkpoint.param(p.name).data();
    if (!std::equal(a.begin(), a.end(), orig.begin(), orig.end())) ++changed_frozen;
    if (!std::equal(b.begin(), b.end(), orig.begin(), orig.end())) ++changed_free;
  }
  o.check(tactile > 0 && changed_frozen == 0, "frozen tactile encoder bit-identical");
  o.check(changed_free > 0, "unfrozen tactile encoder moves");
  o.detail << "tactile tensors " << tactile << ": changed frozen " << changed_frozen << ", changed unfrozen "
           << changed_free << " after 100 updates";
}

// 7. distribution-shift diagnostic
void distribution_shift(Outcome& o) {
  const sim::EnvConfig cfg;
  sim::Environment train_env(cfg);
  const auto train = record(train_env, 20, 0);
  sim::Environment test_env(cfg);
  for (int k = 0; k < 5; ++k) test_env.mutable_layout().drift_step();
  const auto test = record(test_env, 10, 1000);

  pretrain::PretrainConfig pc;
  pc.max_updates = 100;
  const auto ckpt = pretrain::pretrain(train, pc).checkpoint;
  const auto e_train = eval::embed_dataset(ckpt, train, {.stride = 2});
  const auto e_test = eval::embed_dataset(ckpt, test, {.stride = 2});
  const std::span<const data::Episode> all(train);
  const auto e_a = eval::embed_dataset(ckpt, all.subspan(0, 10), {.stride = 2});
  const auto e_b = eval::embed_dataset(ckpt, all.subspan(10), {.stride = 2});
  const double shift = eval::shift_score(e_train, e_test), halves = eval::shift_score(e_a, e_b);
  o.check(shift >= 2.0 * halves, "drifted test set stands apart");

  eval::TsneConfig tc;
  const auto r = eval::tsne(eval::Matrix::vstack(e_train, e_test), tc);
  double worst = 0.0;
  for (double h : r.affinities.entropy) worst = std::max(worst, std::abs(h - std::log(r.perplexity)));
  o.check(worst < 1e-4, "P-row entropies match log(perplexity)");
  o.detail << "shift(train, drifted) " << shift << " vs shift(half A, half B) " << halves << "; " << r.layout.rows
           << "-point tSNE, max entropy err " << worst;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

json table_row(const fs::path& root, const char* dir, int trials, std::uint64_t seed, double noise) {
  auto c = app::experiment_for(model::load_checkpoint(root / dir / app::kCheckpointFile));
  c.checkpoint = dir;
  c.trials = trials;
  c.seed = seed;
  c.goal_noise = noise;
  return c;
}

// 8. end-to-end smoke at desk scale
void end_to_end(Outcome& o) {
  const auto root = scratch("e2e");
  const auto t0 = Clock::now();
  auto run = [&](const std::string& cmd, std::vector<std::pair<std::string, json>> overrides) {
    const auto t = Clock::now();
    app::run_command(cmd, app::resolve_settings(cmd, nullptr, overrides), root);
    std::fprintf(stderr, "[accept] %s %.1fs\n", cmd.c_str(), since(t));
  };
  run("gen-demos", {{"n", 100}});
  run("pretrain", {});
  run("train-diffusion", {{"pretrained", "pretrain"}, {"diffusion.vision_only", true}});

  const double noise = 0.0025;
  const std::uint64_t first_trial = 100000;  // disjoint from the demo seeds
  eval::ExperimentConfig expert;
  expert.kind = eval::PolicyKind::kExpert;
  expert.trials = 20;
  expert.seed = first_trial;
  expert.goal_noise = noise;
  json rows = json::array({table_row(root, "diffusion", 20, first_trial, noise), json(expert)});
  run("eval", {{"experiments", rows}});
  const double total = since(t0);

  const auto results = json::parse(slurp(root / "eval" / "results.json"));
  const double policy = results[0].value("success_rate", 0.0), scripted = results[1].value("success_rate", 0.0);
  o.check(policy >= 0.6, "pretrained vision-only diffusion >= 60%");
  o.check(scripted >= 0.8, "scripted expert >= 80%");
  o.check(total < 45 * 60, "pipeline under 45 min");
  o.detail << "diffusion " << results[0].value("successes", 0) << "/20, expert " << results[1].value("successes", 0)
           << "/20 at sigma 2.5 mm; pipeline " << static_cast<int>(total) << " s";
  fs::remove_all(root);
}

// 9. reproducibility of every command
void reproducibility(Outcome& o) {
  const json small = json::parse(R"({
    "gen-demos": {"n": 4, "env": {"image_size": 16, "tactile_size": 12}},
    "pretrain": {"pretrain": {"max_updates": 20, "batch": 8, "trunk": {"channels": [8, 8, 8, 8], "groups": 2}}},
    "train-diffusion": {"pretrained": "pretrain", "diffusion": {"updates": 20, "batch": 8, "down_dims": [8, 16],
                        "groups": 4, "step_embed_dim": 8}},
    "train-act": {"act": {"updates": 20, "batch": 8, "d_model": 16, "heads": 2, "ffn_dim": 32,
                  "trunk": {"channels": [8, 8, 8, 8], "groups": 2}}},
    "tsne-report": {"max_points": 60, "tsne": {"iterations": 150, "exaggeration_iters": 50}}
  })");
  std::vector<fs::path> roots{scratch("rep_a"), scratch("rep_b")};
  for (const auto& root : roots) {
    auto run = [&](const std::string& cmd, std::vector<std::pair<std::string, json>> overrides = {}) {
      app::run_command(cmd, app::resolve_settings(cmd, small, overrides), root);
    };
    run("gen-demos");
    run("gen-demos", {{"out", "demos_drift"}, {"seed", 500}, {"drift_steps", 5}});
    run("pretrain");
    run("train-diffusion");
    run("train-act");
    json rows = json::array({table_row(root, "diffusion", 2, 50, 0.0025), table_row(root, "act", 2, 50, 0.0025)});
    run("eval", {{"experiments", rows}});
    run("tsne-report");
  }
  int files = 0, differing = 0;
  for (const auto& entry : fs::recursive_directory_iterator(roots[0])) {
    if (!entry.is_regular_file()) continue;
    ++files;
    const auto rel = fs::relative(entry.path(), roots[0]);
    if (!fs::exists(roots[1] / rel) || slurp(entry.path()) != slurp(roots[1] / rel)) {
      ++differing;
      o.detail << "differs: " << rel.string() << "; ";
    }
  }
  o.check(files >= 25 && differing == 0, "all outputs bit-identical");
  o.detail << files << " output files compared across 7 command runs, " << differing << " differ";
  for (const auto& r : roots) fs::remove_all(r);
}

struct Criterion {
  int id;
  const char* name;
  std::function<void(Outcome&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "contrastive loss closed form", clip_closed_form},
      {2, "gradient checks", gradient_checks},
      {3, "diffusion process identities", diffusion_identities},
      {4, "temporal ensembling", ensembling},
      {5, "tactile window", tactile_window},
      {6, "tactile encoder freezing", freezing},
      {7, "distribution-shift diagnostic", distribution_shift},
      {8, "end-to-end desk-scale smoke", end_to_end},
      {9, "command reproducibility", reproducibility},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    Outcome o;
    const auto t0 = Clock::now();
    try {
      c.run(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    std::printf("criterion %d [%s] %s (%.1fs): %s\n", c.id, c.name, o.pass ? "PASS" : "FAIL", since(t0),
                o.detail.str().c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
