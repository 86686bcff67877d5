#include "vtp/act/act.hpp"

#include <algorithm>
#include <cmath>

#include "vtp/data/batch.hpp"
#include "vtp/error.hpp"
#include "vtp/log.hpp"
#include "vtp/nn/optim.hpp"

namespace vtp::act {

void ActConfig::validate() const {
  require(horizon >= 1, ErrorCode::kInvalidHorizon, "prediction horizon must be >= 1");
  require(d_model >= 1 && heads >= 1 && d_model % heads == 0, ErrorCode::kInvalidArgument,
          "d_model must be a positive multiple of heads");
  require(ffn_dim >= 1 && encoder_layers >= 1 && decoder_layers >= 1 && latent_dim >= 1,
          ErrorCode::kInvalidArgument, "transformer sizes must be >= 1");
  require(kl_weight >= 0.0, ErrorCode::kInvalidArgument, "kl_weight must be >= 0");
  require(batch >= 1 && updates >= 0, ErrorCode::kInvalidArgument, "batch must be >= 1 and updates >= 0");
  require(lr > 0.0 && warmup >= 0, ErrorCode::kInvalidArgument, "lr must be > 0");
  require(tactile_horizon >= 1, ErrorCode::kInvalidHorizon, "tactile horizon must be >= 1");
  require(ensemble_k >= 0.0, ErrorCode::kInvalidArgument, "ensemble_k must be >= 0");
  trunk.validate();
}

void to_json(nlohmann::json& j, const ActConfig& c) {
  j = {{"horizon", c.horizon},
       {"d_model", c.d_model},
       {"heads", c.heads},
       {"ffn_dim", c.ffn_dim},
       {"encoder_layers", c.encoder_layers},
       {"decoder_layers", c.decoder_layers},
       {"latent_dim", c.latent_dim},
       {"kl_weight", c.kl_weight},
       {"batch", c.batch},
       {"updates", c.updates},
       {"lr", c.lr},
       {"weight_decay", c.weight_decay},
       {"warmup", c.warmup},
       {"grad_clip", c.grad_clip},
       {"seed", c.seed},
       {"vision_only", c.vision_only},
       {"tactile_horizon", c.tactile_horizon},
       {"ensemble_k", c.ensemble_k},
       {"ensemble_oldest_first", c.ensemble_oldest_first},
       {"trunk", c.trunk}};
}

void from_json(const nlohmann::json& j, ActConfig& c) {
  j.at("horizon").get_to(c.horizon);
  j.at("d_model").get_to(c.d_model);
  j.at("heads").get_to(c.heads);
  j.at("ffn_dim").get_to(c.ffn_dim);
  j.at("encoder_layers").get_to(c.encoder_layers);
  j.at("decoder_layers").get_to(c.decoder_layers);
  j.at("latent_dim").get_to(c.latent_dim);
  j.at("kl_weight").get_to(c.kl_weight);
  j.at("batch").get_to(c.batch);
  j.at("updates").get_to(c.updates);
  j.at("lr").get_to(c.lr);
  j.at("weight_decay").get_to(c.weight_decay);
  j.at("warmup").get_to(c.warmup);
  j.at("grad_clip").get_to(c.grad_clip);
  j.at("seed").get_to(c.seed);
  j.at("vision_only").get_to(c.vision_only);
  j.at("tactile_horizon").get_to(c.tactile_horizon);
  j.at("ensemble_k").get_to(c.ensemble_k);
  j.at("ensemble_oldest_first").get_to(c.ensemble_oldest_first);
  j.at("trunk").get_to(c.trunk);
}

std::vector<TokenSegment> token_layout(int num_cameras, int camera_tokens, int tactile_tokens) {
  std::vector<TokenSegment> out;
  int offset = 0;
  auto add = [&](std::string name, int length) {
    out.push_back({std::move(name), offset, length});
    offset += length;
  };
  add("latent", 1);
  add("proprio", 1);
  for (int c = 0; c < num_cameras; ++c) add("camera" + std::to_string(c), camera_tokens);
  if (tactile_tokens > 0) add("tactile", tactile_tokens);
  return out;
}

void to_json(nlohmann::json& j, const TokenSegment& s) {
  j = {{"name", s.name}, {"offset", s.offset}, {"length", s.length}};
}

namespace {

nn::Tensor learned(nn::Shape shape, Rng& rng) {
  auto t = nn::Tensor::randn(std::move(shape), rng, 0.02);
  t.set_requires_grad(true);
  return t;
}

void push(std::vector<nn::NamedTensor>& out, const std::string& name, const nn::Tensor& t) {
  out.push_back({name, t});
}

// [N, D, H, W] -> [N, H*W, D]
nn::Tensor flatten_tokens(const nn::Tensor& fmap) {
  const auto& s = fmap.shape();
  return nn::permute(nn::reshape(fmap, {s[0], s[1], s[2] * s[3]}), {0, 2, 1});
}

nn::Tensor as_token(const nn::Tensor& x) { return nn::reshape(x, {x.dim(0), 1, x.dim(1)}); }

}  // namespace

ActModel::ActModel(const ActConfig& cfg, int num_cameras, int image_size, int tactile_size, Rng& rng)
    : cfg_(cfg), num_cameras_(num_cameras) {
  cfg.validate();
  require(num_cameras >= 1, ErrorCode::kInvalidArgument, "need at least one camera");
  const int d = cfg.d_model, fd = cfg.trunk.embed_dim();
  backbone = model::VisionEncoder(image_size, cfg.trunk, rng);
  const int cam_tokens = backbone.feature_size() * backbone.feature_size();
  int tac_tokens = 0;
  if (!cfg.vision_only) {
    tactile.emplace(cfg.tactile_horizon, tactile_size, cfg.trunk, rng);
    tac_tokens = tactile->feature_size() * tactile->feature_size();
    tactile_proj = nn::Linear(fd, d, rng);
  }
  layout_ = token_layout(num_cameras, cam_tokens, tac_tokens);
  vision_proj = nn::Linear(fd, d, rng);
  proprio_proj = nn::Linear(3, d, rng);
  latent_proj = nn::Linear(cfg.latent_dim, d, rng);
  encoder_pos = learned({sequence_length(), d}, rng);
  query_embed = learned({cfg.horizon, d}, rng);
  for (int i = 0; i < cfg.encoder_layers; ++i) encoder.emplace_back(d, cfg.heads, cfg.ffn_dim, rng);
  for (int i = 0; i < cfg.decoder_layers; ++i) decoder.emplace_back(d, cfg.heads, cfg.ffn_dim, rng);
  action_head = nn::Linear(d, 3, rng);

  cvae_cls = learned({1, d}, rng);
  cvae_pos = learned({cfg.horizon + 2, d}, rng);
  cvae_action_proj = nn::Linear(3, d, rng);
  cvae_proprio_proj = nn::Linear(3, d, rng);
  cvae_latent = nn::Linear(d, 2 * cfg.latent_dim, rng);
  for (int i = 0; i < cfg.encoder_layers; ++i) cvae_encoder.emplace_back(d, cfg.heads, cfg.ffn_dim, rng);
}

ActOutput ActModel::forward(std::span<const nn::Tensor> views, const nn::Tensor* tactile_in,
                            const nn::Tensor& proprio, const nn::Tensor* actions, Rng* rng) const {
  require(static_cast<int>(views.size()) == num_cameras_, ErrorCode::kShapeMismatch,
          "expected " + std::to_string(num_cameras_) + " camera views");
  require(proprio.ndim() == 2 && proprio.dim(1) == 3, ErrorCode::kShapeMismatch, "proprio must be [N, 3]");
  const int64_t n = proprio.dim(0);
  const int64_t L = cfg_.latent_dim;
  ActOutput out;

  nn::Tensor z;
  if (actions) {
    require(actions->ndim() == 3 && actions->dim(0) == n && actions->dim(1) == cfg_.horizon && actions->dim(2) == 3,
            ErrorCode::kShapeMismatch, "action chunk must be [N, horizon, 3], got " + nn::shape_str(actions->shape()));
    require(rng != nullptr, ErrorCode::kContract, "posterior sampling needs an rng");
    const std::vector<nn::Tensor> seq{nn::repeat_batch(cvae_cls, n), as_token(cvae_proprio_proj.forward(proprio)),
                                      cvae_action_proj.forward(*actions)};
    nn::Tensor h = nn::concat(seq, 1);
    const nn::Tensor pos = nn::repeat_batch(cvae_pos, n);
    for (const auto& layer : cvae_encoder) h = layer.forward(h, pos);
    const nn::Tensor stats = cvae_latent.forward(nn::reshape(nn::slice(h, 1, 0, 1), {n, cfg_.d_model}));
    out.mu = nn::slice(stats, 1, 0, L);
    out.logvar = nn::slice(stats, 1, L, L);
    const nn::Tensor eps = nn::Tensor::randn({n, L}, *rng);
    z = out.mu + nn::exp(nn::scale(out.logvar, 0.5)) * eps;
  } else {
    z = nn::Tensor::zeros({n, L});
  }

  std::vector<nn::Tensor> tokens{as_token(latent_proj.forward(z)), as_token(proprio_proj.forward(proprio))};
  for (const auto& v : views) tokens.push_back(vision_proj.forward(flatten_tokens(backbone.encode(v).feature_map)));
  if (tactile) {
    require(tactile_in != nullptr, ErrorCode::kMissingInput, "this policy needs tactile input");
    tokens.push_back(tactile_proj.forward(flatten_tokens(tactile->encode(*tactile_in).feature_map)));
  }
  nn::Tensor memory = nn::concat(tokens, 1);
  require(memory.dim(1) == sequence_length(), ErrorCode::kShapeMismatch, "token sequence has unexpected length");
  const nn::Tensor pos = nn::repeat_batch(encoder_pos, n);
  for (const auto& layer : encoder) memory = layer.forward(memory, pos);

  nn::Tensor h = nn::Tensor::zeros({n, cfg_.horizon, cfg_.d_model});
  const nn::Tensor qpos = nn::repeat_batch(query_embed, n);
  for (const auto& layer : decoder) h = layer.forward(h, memory, qpos, pos);
  out.actions = action_head.forward(h);
  return out;
}

void ActModel::collect_parameters(const std::string& prefix, std::vector<nn::NamedTensor>& out) const {
  backbone.collect_parameters(prefix + "backbone.", out);
  if (tactile) tactile->collect_parameters(prefix + "tactile_encoder.", out);
  const std::string t = prefix + "transformer.";
  vision_proj.collect_parameters(t + "vision_proj.", out);
  if (tactile) tactile_proj.collect_parameters(t + "tactile_proj.", out);
  proprio_proj.collect_parameters(t + "proprio_proj.", out);
  latent_proj.collect_parameters(t + "latent_proj.", out);
  push(out, t + "encoder_pos", encoder_pos);
  push(out, t + "query_embed", query_embed);
  for (size_t i = 0; i < encoder.size(); ++i) encoder[i].collect_parameters(t + "encoder" + std::to_string(i) + ".", out);
  for (size_t i = 0; i < decoder.size(); ++i) decoder[i].collect_parameters(t + "decoder" + std::to_string(i) + ".", out);
  action_head.collect_parameters(t + "action_head.", out);
  const std::string c = prefix + "cvae.";
  push(out, c + "cls", cvae_cls);
  push(out, c + "pos", cvae_pos);
  cvae_action_proj.collect_parameters(c + "action_proj.", out);
  cvae_proprio_proj.collect_parameters(c + "proprio_proj.", out);
  cvae_latent.collect_parameters(c + "latent.", out);
  for (size_t i = 0; i < cvae_encoder.size(); ++i)
    cvae_encoder[i].collect_parameters(c + "encoder" + std::to_string(i) + ".", out);
}

nn::Tensor gaussian_kl(const nn::Tensor& mu, const nn::Tensor& logvar) {
  require(mu.shape() == logvar.shape() && mu.ndim() == 2, ErrorCode::kShapeMismatch, "mu and logvar must be [N, L]");
  const nn::Tensor terms = nn::add_scalar(logvar - nn::square(mu) - nn::exp(logvar), 1.0);
  return nn::scale(nn::sum(terms), -0.5 / static_cast<double>(mu.dim(0)));
}

ActLoss act_loss(const nn::Tensor& pred, const nn::Tensor& target, const nn::Tensor& mu, const nn::Tensor& logvar,
                 double kl_weight) {
  ActLoss out;
  out.l1 = nn::l1_loss(pred, target);
  out.kl = gaussian_kl(mu, logvar);
  out.total = out.l1 + nn::scale(out.kl, kl_weight);
  return out;
}

std::vector<double> ensemble_weights(std::size_t n, double k, bool oldest_first) {
  std::vector<double> w(n);
  double total = 0.0;
  for (size_t j = 0; j < n; ++j) {
    const double i = static_cast<double>(oldest_first ? j : n - 1 - j);
    w[j] = std::exp(-k * i);
    total += w[j];
  }
  for (auto& v : w) v /= total;
  return w;
}

Action temporal_ensemble(std::span<const Action> actions, double k, bool oldest_first) {
  require(!actions.empty(), ErrorCode::kInvalidArgument, "temporal ensemble of an empty buffer");
  const auto w = ensemble_weights(actions.size(), k, oldest_first);
  Action out{0.0, 0.0, 0.0};
  for (size_t j = 0; j < actions.size(); ++j)
    for (size_t d = 0; d < 3; ++d) out[d] += w[j] * actions[j][d];
  return out;
}

std::vector<Action> to_global(std::span<const Action> relative, const std::array<double, 3>& origin) {
  std::vector<Action> out(relative.begin(), relative.end());
  for (auto& a : out) {
    a[0] += origin[0];
    a[1] += origin[1];
  }
  return out;
}

EnsembleBuffer::EnsembleBuffer(int horizon, double k, bool oldest_first)
    : horizon_(horizon), k_(k), oldest_first_(oldest_first) {}

void EnsembleBuffer::add(std::int64_t tick, std::vector<Action> global_chunk) {
  require(static_cast<int>(global_chunk.size()) == horizon_, ErrorCode::kShapeMismatch,
          "chunk length differs from the ensemble horizon");
  require(chunks_.empty() || chunks_.back().first < tick, ErrorCode::kContract, "chunks must arrive in tick order");
  chunks_.emplace_back(tick, std::move(global_chunk));
}

std::vector<Action> EnsembleBuffer::live(std::int64_t tick) {
  while (!chunks_.empty() && chunks_.front().first + horizon_ <= tick) chunks_.pop_front();
  std::vector<Action> out;
  for (const auto& [start, chunk] : chunks_)
    if (start <= tick) out.push_back(chunk[static_cast<size_t>(tick - start)]);
  return out;
}

Action EnsembleBuffer::action(std::int64_t tick) {
  const auto actions = live(tick);
  return temporal_ensemble(actions, k_, oldest_first_);
}

ActPolicy::ActPolicy(ActConfig cfg, std::unique_ptr<ActModel> model, data::NormStats norm)
    : cfg_(std::move(cfg)),
      model_(std::move(model)),
      norm_(std::move(norm)),
      buffer_(cfg_.horizon, cfg_.ensemble_k, cfg_.ensemble_oldest_first) {}

std::unique_ptr<ActPolicy> ActPolicy::from_checkpoint(const model::Checkpoint& ckpt) {
  require(ckpt.kind == "act", ErrorCode::kInvalidArgument, "expected an act checkpoint, got '" + ckpt.kind + "'");
  const auto cfg = ckpt.config.at("act").get<ActConfig>();
  Rng rng(0);
  auto model = std::make_unique<ActModel>(cfg, ckpt.config.at("num_cameras").get<int>(),
                                          ckpt.config.at("image_size").get<int>(),
                                          ckpt.config.at("tactile_size").get<int>(), rng);
  nn::load_parameters(*model, ckpt.params, "");
  return std::make_unique<ActPolicy>(cfg, std::move(model), ckpt.extra.at("norm").get<data::NormStats>());
}

std::vector<Action> ActPolicy::predict(const data::Observation& obs) const {
  nn::NoGradGuard no_grad;
  const std::vector<const data::Observation*> batch{&obs};
  std::vector<nn::Tensor> views;
  for (int c = 0; c < static_cast<int>(obs.views.size()); ++c) views.push_back(data::views_batch(batch, c));
  nn::Tensor tac;
  if (model_->tactile) {
    require(obs.tactile.horizon() == cfg_.tactile_horizon, ErrorCode::kHorizonMismatch,
            "observation window has h=" + std::to_string(obs.tactile.horizon()) + ", policy expects " +
                std::to_string(cfg_.tactile_horizon));
    tac = data::tactile_window_batch(batch);
  }
  const auto out = model_->forward(views, model_->tactile ? &tac : nullptr, data::proprio_obs_batch(batch, norm_),
                                   nullptr, nullptr);
  const auto v = out.actions.data();
  std::vector<Action> chunk(static_cast<size_t>(cfg_.horizon));
  for (size_t j = 0; j < chunk.size(); ++j) {
    std::copy_n(&v[j * 3], 3, chunk[j].begin());
    norm_.denormalize_action(chunk[j]);
  }
  return chunk;
}

void ActPolicy::reset(std::uint64_t) {
  buffer_.clear();
  tick_ = 0;
}

sim::ActionCommand ActPolicy::act(const data::Observation& obs, const sim::WorldState&) {
  buffer_.add(tick_, to_global(predict(obs), obs.proprio));
  const Action a = buffer_.action(tick_);
  ++tick_;
  return {{a[0], a[1]}, std::clamp(a[2], 0.0, 1.0)};
}

void ActPolicy::set_ensemble(double k, bool oldest_first) {
  require(k >= 0.0, ErrorCode::kInvalidArgument, "ensemble_k must be >= 0");
  cfg_.ensemble_k = k;
  cfg_.ensemble_oldest_first = oldest_first;
  buffer_ = EnsembleBuffer(cfg_.horizon, k, oldest_first);
  tick_ = 0;
}

data::NormStats relative_norm(std::span<const data::Episode> episodes, int horizon) {
  std::vector<double> actions, proprio;
  for (const auto& ep : episodes) {
    const auto p = ep.proprio_values();
    proprio.insert(proprio.end(), p.begin(), p.end());
    for (int64_t t = 0; t < ep.length(); ++t) {
      const auto chunk = data::action_chunk(ep, t, horizon, true);
      actions.insert(actions.end(), chunk.begin(), chunk.end());
    }
  }
  return data::NormStats::from_rows(actions, proprio, 3, 3);
}

ActTrainResult train_act(std::span<const data::Episode> episodes, const ActConfig& cfg_in,
                         const model::Checkpoint* pretrained) {
  require(!episodes.empty(), ErrorCode::kMissingInput, "ACT training needs at least one episode");
  ActConfig cfg = cfg_in;
  if (pretrained) {
    require(pretrained->kind == "pretrain", ErrorCode::kInvalidArgument,
            "initialization checkpoint must come from pretraining, got '" + pretrained->kind + "'");
    require(pretrained->frozen.empty(), ErrorCode::kInvalidArgument,
            "ACT consumes full feature maps, so frozen encoders are not supported");
    const auto& pc = pretrained->config;
    require(pc.at("image_size").get<int>() == episodes[0].image_size() &&
                pc.at("tactile_size").get<int>() == episodes[0].tactile_size(),
            ErrorCode::kShapeMismatch, "pretrained encoders were built for different image sizes");
    cfg.trunk = pc.at("pretrain").at("trunk").get<model::TrunkConfig>();
    cfg.tactile_horizon = pc.at("pretrain").at("horizon").get<int>();
  }
  cfg.validate();

  Rng rng = make_rng(cfg.seed, Stream::kPolicy);
  const int cams = episodes[0].num_cameras();
  ActModel model(cfg, cams, episodes[0].image_size(), episodes[0].tactile_size(), rng);
  if (pretrained) {
    nn::load_parameters(model.backbone, pretrained->params, "vision_encoder.");
    if (model.tactile) nn::load_parameters(*model.tactile, pretrained->params, "tactile_encoder.");
  }

  const data::NormStats norm = relative_norm(episodes, cfg.horizon);
  const auto samples = data::all_samples(episodes);
  const auto params = model.parameters();
  nn::AdamW opt(params, cfg.lr, cfg.weight_decay);
  std::uniform_int_distribution<size_t> pick(0, samples.size() - 1);

  ActTrainResult result;
  for (int u = 0; u < cfg.updates; ++u) {
    std::vector<data::Sample> batch;
    for (int i = 0; i < cfg.batch; ++i) batch.push_back(samples[pick(rng)]);
    const nn::Tensor target = data::chunk_batch(batch, cfg.horizon, true, norm);
    std::vector<nn::Tensor> views;
    for (int c = 0; c < cams; ++c) views.push_back(data::camera_batch(batch, c));
    nn::Tensor tac;
    if (model.tactile) tac = data::tactile_batch(batch, cfg.tactile_horizon);
    const auto out =
        model.forward(views, model.tactile ? &tac : nullptr, data::proprio_batch(batch, norm), &target, &rng);
    const ActLoss loss = act_loss(out.actions, target, out.mu, out.logvar, cfg.kl_weight);
    const double value = loss.total.item();
    if (!std::isfinite(value))
      fail(ErrorCode::kDivergence, "ACT loss became non-finite at update " + std::to_string(u) + " (lr " +
                                       std::to_string(cfg.lr) + ")");
    opt.set_lr(nn::warmup_cosine_lr(cfg.lr, u, cfg.warmup, cfg.updates));
    opt.zero_grad();
    loss.total.backward();
    if (cfg.grad_clip > 0.0) nn::clip_grad_norm(params, cfg.grad_clip);
    opt.step();
    result.losses.push_back(value);
    if ((u + 1) % 100 == 0 || u + 1 == cfg.updates)
      log::info("act update " + std::to_string(u + 1) + "/" + std::to_string(cfg.updates) + " loss " +
                std::to_string(value) + " (l1 " + std::to_string(loss.l1.item()) + ")");
  }

  model::Checkpoint& ckpt = result.checkpoint;
  ckpt.kind = "act";
  ckpt.config = {{"act", cfg},
                 {"num_cameras", cams},
                 {"image_size", episodes[0].image_size()},
                 {"tactile_size", episodes[0].tactile_size()},
                 {"pretrained", pretrained != nullptr}};
  ckpt.extra = {{"norm", norm}, {"tokens", model.layout()}, {"losses", result.losses}};
  ckpt.params = model::snapshot(model, "");
  return result;
}

}  // namespace vtp::act
