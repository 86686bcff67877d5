#include "vtp/pretrain/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vtp/data/batch.hpp"
#include "vtp/error.hpp"
#include "vtp/log.hpp"
#include "vtp/nn/optim.hpp"

namespace vtp::pretrain {

namespace {

void require_unit_rows(const nn::Tensor& x, const char* what) {
  const int64_t n = x.dim(0), l = x.dim(1);
  const auto d = x.data();
  for (int64_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (int64_t k = 0; k < l; ++k) s += d[i * l + k] * d[i * l + k];
    require(std::abs(std::sqrt(s) - 1.0) <= 1e-3, ErrorCode::kContract,
            std::string(what) + " row " + std::to_string(i) + " is not unit norm");
  }
}

nn::Tensor identity(int64_t n) {
  std::vector<double> v(static_cast<size_t>(n * n), 0.0);
  for (int64_t i = 0; i < n; ++i) v[static_cast<size_t>(i * n + i)] = 1.0;
  return nn::Tensor::from({n, n}, std::move(v));
}

}  // namespace

nn::Tensor clip_loss(const nn::Tensor& tactile, std::span<const nn::Tensor> vision, double tau) {
  require(tau > 0.0 && std::isfinite(tau), ErrorCode::kContract, "temperature must be positive");
  require(tactile.ndim() == 2, ErrorCode::kShapeMismatch, "tactile latents must be [n, L]");
  require(!vision.empty(), ErrorCode::kContract, "need at least one camera");
  const int64_t n = tactile.dim(0);
  require(n >= 2, ErrorCode::kContract, "contrastive batch needs n >= 2");
  require_unit_rows(tactile, "tactile latent");
  for (const auto& v : vision) {
    require(v.shape() == tactile.shape(), ErrorCode::kShapeMismatch, "vision latents must match tactile shape");
    require_unit_rows(v, "vision latent");
  }
  const nn::Tensor eye = identity(n);
  nn::Tensor total;
  for (const auto& v : vision) {
    const nn::Tensor sim = nn::scale(nn::matmul(tactile, nn::transpose2d(v)), 1.0 / tau);
    const nn::Tensor rows = nn::sum(nn::mul(nn::log_softmax(sim), eye));
    const nn::Tensor cols = nn::sum(nn::mul(nn::log_softmax(nn::transpose2d(sim)), eye));
    const nn::Tensor cam = nn::scale(nn::add(rows, cols), -1.0 / (2.0 * static_cast<double>(n)));
    total = total.defined() ? nn::add(total, cam) : cam;
  }
  return total;
}

void PretrainConfig::validate() const {
  require(epochs >= 1, ErrorCode::kInvalidArgument, "epochs must be >= 1");
  require(batch >= 2, ErrorCode::kInvalidArgument, "contrastive batch must be >= 2");
  require(tau > 0.0, ErrorCode::kInvalidArgument, "tau must be > 0");
  require(lr > 0.0, ErrorCode::kInvalidArgument, "lr must be > 0");
  require(momentum >= 0.0 && momentum < 1.0, ErrorCode::kInvalidArgument, "momentum must lie in [0, 1)");
  require(horizon >= 1, ErrorCode::kInvalidHorizon, "tactile horizon must be >= 1");
  require(latent_dim >= 1 && head_hidden >= 1, ErrorCode::kInvalidArgument, "head sizes must be >= 1");
  require(max_updates >= 0, ErrorCode::kInvalidArgument, "max_updates must be >= 0");
  trunk.validate();
}

void to_json(nlohmann::json& j, const PretrainConfig& c) {
  j = {{"epochs", c.epochs},       {"batch", c.batch},         {"tau", c.tau},
       {"lr", c.lr},               {"momentum", c.momentum},   {"weight_decay", c.weight_decay},
       {"grad_clip", c.grad_clip}, {"seed", c.seed},           {"horizon", c.horizon},
       {"latent_dim", c.latent_dim}, {"head_hidden", c.head_hidden}, {"max_updates", c.max_updates},
       {"trunk", c.trunk}};
}

void from_json(const nlohmann::json& j, PretrainConfig& c) {
  j.at("epochs").get_to(c.epochs);
  j.at("batch").get_to(c.batch);
  j.at("tau").get_to(c.tau);
  j.at("lr").get_to(c.lr);
  j.at("momentum").get_to(c.momentum);
  j.at("weight_decay").get_to(c.weight_decay);
  j.at("grad_clip").get_to(c.grad_clip);
  j.at("seed").get_to(c.seed);
  j.at("horizon").get_to(c.horizon);
  j.at("latent_dim").get_to(c.latent_dim);
  j.at("head_hidden").get_to(c.head_hidden);
  j.at("max_updates").get_to(c.max_updates);
  j.at("trunk").get_to(c.trunk);
}

PretrainModel::PretrainModel(const PretrainConfig& cfg, int image_size, int tactile_size, Rng& rng)
    : vision(image_size, cfg.trunk, rng),
      tactile(cfg.horizon, tactile_size, cfg.trunk, rng),
      vision_head(cfg.trunk.embed_dim(), 0, cfg.head_hidden, cfg.latent_dim, rng),
      tactile_head(cfg.trunk.embed_dim(), 3, cfg.head_hidden, cfg.latent_dim, rng) {}

PretrainModel PretrainModel::from_checkpoint(const model::Checkpoint& ckpt) {
  require(ckpt.kind == "pretrain", ErrorCode::kInvalidArgument, "expected a pretrain checkpoint, got '" + ckpt.kind + "'");
  const PretrainConfig cfg = ckpt.config.at("pretrain").get<PretrainConfig>();
  Rng rng(0);
  PretrainModel m(cfg, ckpt.config.at("image_size").get<int>(), ckpt.config.at("tactile_size").get<int>(), rng);
  nn::load_parameters(m, ckpt.params, "");
  return m;
}

void PretrainModel::collect_parameters(const std::string& prefix, std::vector<nn::NamedTensor>& out) const {
  vision.collect_parameters(prefix + "vision_encoder.", out);
  tactile.collect_parameters(prefix + "tactile_encoder.", out);
  vision_head.collect_parameters(prefix + "vision_head.", out);
  tactile_head.collect_parameters(prefix + "tactile_head.", out);
}

PretrainResult pretrain(std::span<const data::Episode> episodes, const PretrainConfig& cfg) {
  require(!episodes.empty(), ErrorCode::kMissingInput, "pretraining needs at least one episode");
  cfg.validate();
  const int cams = episodes[0].num_cameras();
  for (const auto& ep : episodes)
    require(ep.length() >= 2, ErrorCode::kInvalidArgument, "every episode needs at least 2 timesteps");

  Rng rng = make_rng(cfg.seed, Stream::kPolicy);
  const data::NormStats norm = data::NormStats::compute(episodes);
  PretrainModel model(cfg, episodes[0].image_size(), episodes[0].tactile_size(), rng);
  const auto params = model.parameters();
  nn::Sgd opt(params, cfg.lr, cfg.momentum, cfg.weight_decay);

  const int64_t num_eps = static_cast<int64_t>(episodes.size());
  const int64_t updates = cfg.max_updates > 0 ? cfg.max_updates : cfg.epochs * num_eps;
  std::vector<size_t> order(episodes.size());
  PretrainResult result;
  for (int64_t u = 0; u < updates; ++u) {
    if (u % num_eps == 0) {
      std::iota(order.begin(), order.end(), size_t{0});
      std::shuffle(order.begin(), order.end(), rng);
    }
    const data::Episode& ep = episodes[order[static_cast<size_t>(u % num_eps)]];
    const int64_t n = std::min<int64_t>(cfg.batch, ep.length());
    // Partial Fisher-Yates: n distinct timesteps.
    std::vector<int64_t> ts(static_cast<size_t>(ep.length()));
    std::iota(ts.begin(), ts.end(), int64_t{0});
    for (int64_t i = 0; i < n; ++i) {
      std::uniform_int_distribution<int64_t> pick(i, ep.length() - 1);
      std::swap(ts[static_cast<size_t>(i)], ts[static_cast<size_t>(pick(rng))]);
    }
    std::vector<data::Sample> samples;
    for (int64_t i = 0; i < n; ++i) samples.push_back({&ep, ts[static_cast<size_t>(i)]});

    std::vector<nn::Tensor> views;
    for (int c = 0; c < cams; ++c) views.push_back(data::camera_batch(samples, c));
    const nn::Tensor all_views = nn::concat(views, 0);
    const nn::Tensor vis_latent = model.vision_head.project(model.vision.encode(all_views).embedding);
    std::vector<nn::Tensor> per_cam;
    for (int c = 0; c < cams; ++c) per_cam.push_back(nn::slice(vis_latent, 0, c * n, n));
    const nn::Tensor prop = data::proprio_batch(samples, norm);
    const nn::Tensor tac_latent =
        model.tactile_head.project(model.tactile.encode(data::tactile_batch(samples, cfg.horizon)).embedding, &prop);

    const nn::Tensor loss = clip_loss(tac_latent, per_cam, cfg.tau);
    const double value = loss.item();
    if (!std::isfinite(value))
      fail(ErrorCode::kDivergence, "contrastive loss became non-finite at update " + std::to_string(u) +
                                       " (episode seed " + std::to_string(ep.meta.seed) + ", lr " +
                                       std::to_string(cfg.lr) + ")");
    opt.zero_grad();
    loss.backward();
    if (cfg.grad_clip > 0.0) nn::clip_grad_norm(params, cfg.grad_clip);
    opt.step();
    result.losses.push_back(value);
    if ((u + 1) % 50 == 0 || u + 1 == updates)
      log::info("pretrain update " + std::to_string(u + 1) + "/" + std::to_string(updates) +
                " loss " + std::to_string(value));
  }

  model::Checkpoint& ckpt = result.checkpoint;
  ckpt.kind = "pretrain";
  ckpt.config = {{"pretrain", cfg},
                 {"image_size", episodes[0].image_size()},
                 {"tactile_size", episodes[0].tactile_size()},
                 {"num_cameras", cams}};
  ckpt.extra = {{"norm", norm}, {"losses", result.losses}};
  ckpt.params = model::snapshot(model, "");
  return result;
}

}  // namespace vtp::pretrain
