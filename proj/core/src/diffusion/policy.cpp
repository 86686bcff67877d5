#include "vtp/diffusion/policy.hpp"

#include <algorithm>
#include <cmath>

#include "vtp/data/batch.hpp"
#include "vtp/error.hpp"
#include "vtp/log.hpp"
#include "vtp/nn/optim.hpp"

namespace vtp::diffusion {

void DiffusionConfig::validate() const {
  require(horizon >= 1, ErrorCode::kInvalidHorizon, "prediction horizon must be >= 1");
  require(action_steps >= 1 && action_steps <= horizon, ErrorCode::kInvalidHorizon,
          "action_steps must lie in [1, horizon]");
  require(train_steps >= 1 && inference_steps >= 1 && inference_steps <= train_steps, ErrorCode::kInvalidArgument,
          "need 1 <= inference_steps <= train_steps");
  require(batch >= 1 && updates >= 0, ErrorCode::kInvalidArgument, "batch must be >= 1 and updates >= 0");
  require(lr > 0.0 && warmup >= 0, ErrorCode::kInvalidArgument, "lr must be > 0");
  require(ema_decay >= 0.0 && ema_decay < 1.0, ErrorCode::kInvalidArgument, "ema_decay must lie in [0, 1)");
  require(tactile_horizon >= 1, ErrorCode::kInvalidHorizon, "tactile horizon must be >= 1");
  require(!(vision_only && freeze_tactile), ErrorCode::kInvalidArgument,
          "freeze_tactile has no effect on a vision-only policy");
  trunk.validate();
}

void to_json(nlohmann::json& j, const DiffusionConfig& c) {
  j = {{"horizon", c.horizon},
       {"action_steps", c.action_steps},
       {"train_steps", c.train_steps},
       {"inference_steps", c.inference_steps},
       {"schedule", to_string(c.schedule)},
       {"clip_sample", c.clip_sample},
       {"batch", c.batch},
       {"updates", c.updates},
       {"lr", c.lr},
       {"weight_decay", c.weight_decay},
       {"warmup", c.warmup},
       {"grad_clip", c.grad_clip},
       {"ema_decay", c.ema_decay},
       {"seed", c.seed},
       {"vision_only", c.vision_only},
       {"freeze_tactile", c.freeze_tactile},
       {"tactile_horizon", c.tactile_horizon},
       {"trunk", c.trunk},
       {"down_dims", c.down_dims},
       {"kernel", c.kernel},
       {"step_embed_dim", c.step_embed_dim},
       {"groups", c.groups}};
}

void from_json(const nlohmann::json& j, DiffusionConfig& c) {
  j.at("horizon").get_to(c.horizon);
  j.at("action_steps").get_to(c.action_steps);
  j.at("train_steps").get_to(c.train_steps);
  j.at("inference_steps").get_to(c.inference_steps);
  c.schedule = schedule_kind_from(j.at("schedule").get<std::string>());
  j.at("clip_sample").get_to(c.clip_sample);
  j.at("batch").get_to(c.batch);
  j.at("updates").get_to(c.updates);
  j.at("lr").get_to(c.lr);
  j.at("weight_decay").get_to(c.weight_decay);
  j.at("warmup").get_to(c.warmup);
  j.at("grad_clip").get_to(c.grad_clip);
  j.at("ema_decay").get_to(c.ema_decay);
  j.at("seed").get_to(c.seed);
  j.at("vision_only").get_to(c.vision_only);
  j.at("freeze_tactile").get_to(c.freeze_tactile);
  j.at("tactile_horizon").get_to(c.tactile_horizon);
  j.at("trunk").get_to(c.trunk);
  j.at("down_dims").get_to(c.down_dims);
  j.at("kernel").get_to(c.kernel);
  j.at("step_embed_dim").get_to(c.step_embed_dim);
  j.at("groups").get_to(c.groups);
}

ConditioningLayout ConditioningLayout::make(int num_cameras, int embed_dim, bool with_tactile, int proprio_dim) {
  ConditioningLayout l;
  auto add = [&](std::string name, int size) {
    l.slots.push_back({std::move(name), l.dim, size});
    l.dim += size;
  };
  for (int c = 0; c < num_cameras; ++c) add("camera" + std::to_string(c), embed_dim);
  if (with_tactile) add("tactile", embed_dim);
  add("proprio", proprio_dim);
  return l;
}

bool ConditioningLayout::has(const std::string& name) const {
  return std::any_of(slots.begin(), slots.end(), [&](const Slot& s) { return s.name == name; });
}

void to_json(nlohmann::json& j, const ConditioningLayout& l) {
  j = {{"dim", l.dim}, {"slots", nlohmann::json::array()}};
  for (const auto& s : l.slots) j["slots"].push_back({{"name", s.name}, {"offset", s.offset}, {"size", s.size}});
}

namespace {

DenoiserConfig denoiser_config(const DiffusionConfig& cfg, int cond_dim) {
  DenoiserConfig d;
  d.action_dim = 3;
  d.horizon = cfg.horizon;
  d.cond_dim = cond_dim;
  d.down_dims = cfg.down_dims;
  d.kernel = cfg.kernel;
  d.step_embed_dim = cfg.step_embed_dim;
  d.groups = cfg.groups;
  return d;
}

}  // namespace

DiffusionModel::DiffusionModel(const DiffusionConfig& cfg, int num_cameras, int image_size, int tactile_size, Rng& rng)
    : layout(ConditioningLayout::make(num_cameras, cfg.trunk.embed_dim(), !cfg.vision_only)) {
  require(num_cameras >= 1, ErrorCode::kInvalidArgument, "need at least one camera");
  for (int c = 0; c < num_cameras; ++c) cameras.emplace_back(image_size, cfg.trunk, rng);
  if (!cfg.vision_only) tactile.emplace(cfg.tactile_horizon, tactile_size, cfg.trunk, rng);
  denoiser = ConditionalUnet1D(denoiser_config(cfg, layout.dim), rng);
}

nn::Tensor DiffusionModel::condition(std::span<const nn::Tensor> views, const nn::Tensor* tactile_in,
                                     const nn::Tensor& proprio) const {
  require(views.size() == cameras.size(), ErrorCode::kShapeMismatch,
          "expected " + std::to_string(cameras.size()) + " camera views");
  std::vector<nn::Tensor> parts;
  for (size_t c = 0; c < cameras.size(); ++c) parts.push_back(cameras[c].encode(views[c]).embedding);
  if (tactile) {
    require(tactile_in != nullptr, ErrorCode::kMissingInput, "this policy needs tactile input");
    parts.push_back(tactile->encode(*tactile_in).embedding);
  }
  parts.push_back(proprio);
  return nn::concat(parts, 1);
}

void DiffusionModel::collect_parameters(const std::string& prefix, std::vector<nn::NamedTensor>& out) const {
  for (size_t c = 0; c < cameras.size(); ++c)
    cameras[c].collect_parameters(prefix + "camera" + std::to_string(c) + "_encoder.", out);
  if (tactile) tactile->collect_parameters(prefix + "tactile_encoder.", out);
  denoiser.collect_parameters(prefix + "denoiser.", out);
}

nn::Tensor training_loss(const ConditionalUnet1D& denoiser, const NoiseSchedule& schedule, const nn::Tensor& cond,
                         const nn::Tensor& a0, const std::vector<int>& steps, const nn::Tensor& eps) {
  const nn::Tensor noisy = add_noise(schedule, a0, eps, steps);
  return nn::mse_loss(denoiser.forward(noisy, steps, cond), eps);
}

std::vector<double> sample_chunk(const ConditionalUnet1D& denoiser, const NoiseSchedule& schedule,
                                 const nn::Tensor& cond, Rng& rng, bool clip_x0) {
  nn::NoGradGuard no_grad;
  const auto& dcfg = denoiser.config();
  const int64_t T = dcfg.horizon, A = dcfg.action_dim;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> x(static_cast<size_t>(T * A));
  for (auto& v : x) v = normal(rng);
  const auto& ks = schedule.inference_steps;
  for (size_t i = ks.size(); i-- > 0;) {
    const int k = ks[i];
    const int k_prev = i > 0 ? ks[i - 1] : 0;
    const nn::Tensor eps = denoiser.forward(nn::Tensor::from({1, T, A}, x), {k}, cond);
    reverse_step(schedule, x, eps.data(), k, k_prev, rng, clip_x0);
    for (double v : x)
      if (!std::isfinite(v)) fail(ErrorCode::kDivergence, "non-finite sample at diffusion step " + std::to_string(k));
  }
  for (auto& v : x) v = std::clamp(v, -1.0, 1.0);
  return x;
}

DiffusionPolicy::DiffusionPolicy(DiffusionConfig cfg, std::unique_ptr<DiffusionModel> model, NoiseSchedule schedule,
                                 data::NormStats norm)
    : cfg_(std::move(cfg)), model_(std::move(model)), schedule_(std::move(schedule)), norm_(std::move(norm)) {}

std::unique_ptr<DiffusionPolicy> DiffusionPolicy::from_checkpoint(const model::Checkpoint& ckpt) {
  require(ckpt.kind == "diffusion", ErrorCode::kInvalidArgument,
          "expected a diffusion checkpoint, got '" + ckpt.kind + "'");
  const auto cfg = ckpt.config.at("diffusion").get<DiffusionConfig>();
  Rng rng(0);
  auto model = std::make_unique<DiffusionModel>(cfg, ckpt.config.at("num_cameras").get<int>(),
                                                ckpt.config.at("image_size").get<int>(),
                                                ckpt.config.at("tactile_size").get<int>(), rng);
  nn::load_parameters(*model, ckpt.params, "");
  return std::make_unique<DiffusionPolicy>(cfg, std::move(model), schedule_from_json(ckpt.extra.at("schedule")),
                                           ckpt.extra.at("norm").get<data::NormStats>());
}

std::vector<std::array<double, 3>> DiffusionPolicy::sample(const data::Observation& obs, Rng& rng) const {
  nn::NoGradGuard no_grad;
  const std::vector<const data::Observation*> batch{&obs};
  std::vector<nn::Tensor> views;
  for (size_t c = 0; c < model_->cameras.size(); ++c) views.push_back(data::views_batch(batch, static_cast<int>(c)));
  nn::Tensor tac;
  if (model_->tactile) {
    require(obs.tactile.horizon() == cfg_.tactile_horizon, ErrorCode::kHorizonMismatch,
            "observation window has h=" + std::to_string(obs.tactile.horizon()) + ", policy expects " +
                std::to_string(cfg_.tactile_horizon));
    tac = data::tactile_window_batch(batch);
  }
  const nn::Tensor cond =
      model_->condition(views, model_->tactile ? &tac : nullptr, data::proprio_obs_batch(batch, norm_));
  auto x = sample_chunk(model_->denoiser, schedule_, cond, rng, cfg_.clip_sample);
  std::vector<std::array<double, 3>> out(static_cast<size_t>(cfg_.horizon));
  for (size_t j = 0; j < out.size(); ++j) {
    std::copy_n(&x[j * 3], 3, out[j].begin());
    norm_.denormalize_action(out[j]);
  }
  return out;
}

void DiffusionPolicy::reset(std::uint64_t seed) {
  rng_ = make_rng(seed, Stream::kPolicy);
  queue_.clear();
  replans_ = 0;
}

sim::ActionCommand DiffusionPolicy::act(const data::Observation& obs, const sim::WorldState&) {
  if (queue_.empty()) {
    const auto chunk = sample(obs, rng_);
    queue_.assign(chunk.begin(), chunk.begin() + cfg_.action_steps);
    ++replans_;
  }
  const auto a = queue_.front();
  queue_.pop_front();
  return {{a[0], a[1]}, std::clamp(a[2], 0.0, 1.0)};
}

void DiffusionPolicy::set_action_steps(int steps) {
  require(steps >= 1 && steps <= cfg_.horizon, ErrorCode::kInvalidHorizon, "action_steps must lie in [1, horizon]");
  cfg_.action_steps = steps;
  queue_.clear();
}

policy::RolloutResult execute_receding_horizon(sim::Environment& env, DiffusionPolicy& policy,
                                               const policy::RolloutOptions& options) {
  return policy::rollout(env, policy, options);
}

DiffusionTrainResult train_diffusion(std::span<const data::Episode> episodes, const DiffusionConfig& cfg_in,
                                     const model::Checkpoint* pretrained) {
  require(!episodes.empty(), ErrorCode::kMissingInput, "diffusion training needs at least one episode");
  DiffusionConfig cfg = cfg_in;
  if (pretrained) {
    require(pretrained->kind == "pretrain", ErrorCode::kInvalidArgument,
            "initialization checkpoint must come from pretraining, got '" + pretrained->kind + "'");
    const auto& pc = pretrained->config;
    require(pc.at("image_size").get<int>() == episodes[0].image_size() &&
                pc.at("tactile_size").get<int>() == episodes[0].tactile_size(),
            ErrorCode::kShapeMismatch, "pretrained encoders were built for different image sizes");
    cfg.trunk = pc.at("pretrain").at("trunk").get<model::TrunkConfig>();
    cfg.tactile_horizon = pc.at("pretrain").at("horizon").get<int>();
  }
  const bool freeze = !cfg.vision_only && (cfg.freeze_tactile || (pretrained && pretrained->is_frozen("tactile_encoder")));
  cfg.freeze_tactile = freeze;
  cfg.validate();

  Rng rng = make_rng(cfg.seed, Stream::kPolicy);
  const int cams = episodes[0].num_cameras();
  auto model = std::make_unique<DiffusionModel>(cfg, cams, episodes[0].image_size(), episodes[0].tactile_size(), rng);
  if (pretrained) {
    for (int c = 0; c < cams; ++c) nn::load_parameters(model->cameras[static_cast<size_t>(c)], pretrained->params, "vision_encoder.");
    if (model->tactile) nn::load_parameters(*model->tactile, pretrained->params, "tactile_encoder.");
  }
  if (freeze) model->tactile->set_trainable(false);

  const NoiseSchedule schedule = build_schedule(cfg.train_steps, cfg.inference_steps, cfg.schedule);
  const data::NormStats norm = data::NormStats::compute(episodes);
  const auto samples = data::all_samples(episodes);
  const auto params = model->parameters();
  nn::AdamW opt(params, cfg.lr, cfg.weight_decay);

  std::vector<std::vector<double>> ema;
  if (cfg.ema_decay > 0.0)
    for (const auto& p : params) ema.emplace_back(p.data().begin(), p.data().end());

  std::uniform_int_distribution<size_t> pick(0, samples.size() - 1);
  std::uniform_int_distribution<int> pick_k(1, cfg.train_steps);
  std::normal_distribution<double> normal(0.0, 1.0);
  DiffusionTrainResult result;
  for (int u = 0; u < cfg.updates; ++u) {
    std::vector<data::Sample> batch;
    for (int i = 0; i < cfg.batch; ++i) batch.push_back(samples[pick(rng)]);
    std::vector<int> ks;
    for (int i = 0; i < cfg.batch; ++i) ks.push_back(pick_k(rng));
    const nn::Tensor a0 = data::chunk_batch(batch, cfg.horizon, false, norm);
    nn::Tensor eps = nn::Tensor::zeros(a0.shape());
    for (auto& v : eps.mutable_data()) v = normal(rng);

    std::vector<nn::Tensor> views;
    for (int c = 0; c < cams; ++c) views.push_back(data::camera_batch(batch, c));
    nn::Tensor tac;
    if (model->tactile) tac = data::tactile_batch(batch, cfg.tactile_horizon);
    const nn::Tensor cond = model->condition(views, model->tactile ? &tac : nullptr, data::proprio_batch(batch, norm));
    const nn::Tensor loss = training_loss(model->denoiser, schedule, cond, a0, ks, eps);
    const double value = loss.item();
    if (!std::isfinite(value))
      fail(ErrorCode::kDivergence, "diffusion loss became non-finite at update " + std::to_string(u) + " (lr " +
                                       std::to_string(cfg.lr) + ")");

    opt.set_lr(nn::warmup_cosine_lr(cfg.lr, u, cfg.warmup, cfg.updates));
    opt.zero_grad();
    loss.backward();
    if (cfg.grad_clip > 0.0) nn::clip_grad_norm(params, cfg.grad_clip);
    opt.step();
    if (!ema.empty()) {
      const double d = std::min(cfg.ema_decay, (1.0 + u) / (10.0 + u));
      for (size_t i = 0; i < params.size(); ++i) {
        if (!params[i].requires_grad()) continue;
        const auto p = params[i].data();
        for (size_t k = 0; k < p.size(); ++k) ema[i][k] = d * ema[i][k] + (1.0 - d) * p[k];
      }
    }
    result.losses.push_back(value);
    if ((u + 1) % 100 == 0 || u + 1 == cfg.updates)
      log::info("diffusion update " + std::to_string(u + 1) + "/" + std::to_string(cfg.updates) + " loss " +
                std::to_string(value));
  }
  if (!ema.empty())
    for (size_t i = 0; i < params.size(); ++i)
      if (params[i].requires_grad()) {
        nn::Tensor p = params[i];
        std::copy(ema[i].begin(), ema[i].end(), p.mutable_data().begin());
      }

  model::Checkpoint& ckpt = result.checkpoint;
  ckpt.kind = "diffusion";
  ckpt.config = {{"diffusion", cfg},
                 {"num_cameras", cams},
                 {"image_size", episodes[0].image_size()},
                 {"tactile_size", episodes[0].tactile_size()},
                 {"pretrained", pretrained != nullptr},
                 {"denoiser", model->denoiser.config()}};
  ckpt.extra = {{"norm", norm}, {"schedule", schedule}, {"conditioning", model->layout}, {"losses", result.losses}};
  ckpt.params = model::snapshot(*model, "");
  if (freeze) ckpt.frozen = {"tactile_encoder"};
  return result;
}

}  // namespace vtp::diffusion
