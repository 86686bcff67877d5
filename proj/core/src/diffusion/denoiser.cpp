#include "vtp/diffusion/denoiser.hpp"

#include <cmath>

#include "vtp/error.hpp"

namespace vtp::diffusion {

void DenoiserConfig::validate() const {
  require(action_dim >= 1 && horizon >= 1 && cond_dim >= 0, ErrorCode::kInvalidArgument, "bad denoiser sizes");
  require(!down_dims.empty(), ErrorCode::kInvalidArgument, "denoiser needs at least one level");
  require(horizon % (1 << (down_dims.size() - 1)) == 0, ErrorCode::kInvalidHorizon,
          "prediction horizon must be divisible by 2^(levels-1)");
  require(kernel % 2 == 1, ErrorCode::kInvalidArgument, "denoiser kernel must be odd");
  require(step_embed_dim >= 2 && step_embed_dim % 2 == 0, ErrorCode::kInvalidArgument, "step_embed_dim must be even");
  for (int d : down_dims)
    require(d % groups == 0, ErrorCode::kInvalidArgument, "denoiser widths must divide into groups");
}

void to_json(nlohmann::json& j, const DenoiserConfig& c) {
  j = {{"action_dim", c.action_dim}, {"horizon", c.horizon},
       {"cond_dim", c.cond_dim},     {"down_dims", c.down_dims},
       {"kernel", c.kernel},         {"step_embed_dim", c.step_embed_dim},
       {"groups", c.groups}};
}

void from_json(const nlohmann::json& j, DenoiserConfig& c) {
  j.at("action_dim").get_to(c.action_dim);
  j.at("horizon").get_to(c.horizon);
  j.at("cond_dim").get_to(c.cond_dim);
  j.at("down_dims").get_to(c.down_dims);
  j.at("kernel").get_to(c.kernel);
  j.at("step_embed_dim").get_to(c.step_embed_dim);
  j.at("groups").get_to(c.groups);
}

namespace {

void zero(nn::Tensor& t) {
  for (auto& v : t.mutable_data()) v = 0.0;
}

}  // namespace

FilmLayer::FilmLayer(int cond_dim, int channels, Rng& rng)
    : scale_map(cond_dim, channels, rng), shift_map(cond_dim, channels, rng) {
  zero(scale_map.weight);
  zero(scale_map.bias);
  zero(shift_map.weight);
  zero(shift_map.bias);
}

nn::Tensor FilmLayer::modulate(const nn::Tensor& features, const nn::Tensor& cond) const {
  require(features.ndim() == 3 && cond.ndim() == 2 && features.dim(0) == cond.dim(0), ErrorCode::kShapeMismatch,
          "film: expected features [N, C, T] and cond [N, D]");
  require(cond.dim(1) == scale_map.weight.dim(1), ErrorCode::kShapeMismatch, "film: conditioning width mismatch");
  require(features.dim(1) == scale_map.weight.dim(0), ErrorCode::kShapeMismatch, "film: channel count mismatch");
  const nn::Tensor gamma = nn::add_scalar(scale_map.forward(cond), 1.0);
  return nn::film(features, gamma, shift_map.forward(cond));
}

void FilmLayer::collect_parameters(const std::string& prefix, std::vector<nn::NamedTensor>& out) const {
  scale_map.collect_parameters(prefix + "scale.", out);
  shift_map.collect_parameters(prefix + "shift.", out);
}

ResidualBlock1D::ResidualBlock1D(int in, int out, int cond_dim, int kernel, int groups, Rng& rng)
    : conv1(in, out, kernel, 1, kernel / 2, rng),
      conv2(out, out, kernel, 1, kernel / 2, rng),
      norm1(groups, out),
      norm2(groups, out),
      film(cond_dim, out, rng),
      has_residual_conv(in != out) {
  if (has_residual_conv) residual = nn::Conv1d(in, out, 1, 1, 0, rng);
}

nn::Tensor ResidualBlock1D::forward(const nn::Tensor& x, const nn::Tensor& cond) const {
  nn::Tensor h = nn::mish(norm1.forward(conv1.forward(x)));
  h = film.modulate(h, cond);
  h = nn::mish(norm2.forward(conv2.forward(h)));
  return nn::add(h, has_residual_conv ? residual.forward(x) : x);
}

void ResidualBlock1D::collect_parameters(const std::string& prefix, std::vector<nn::NamedTensor>& out) const {
  conv1.collect_parameters(prefix + "conv1.", out);
  norm1.collect_parameters(prefix + "norm1.", out);
  film.collect_parameters(prefix + "film.", out);
  conv2.collect_parameters(prefix + "conv2.", out);
  norm2.collect_parameters(prefix + "norm2.", out);
  if (has_residual_conv) residual.collect_parameters(prefix + "residual.", out);
}

nn::Tensor step_embedding(const std::vector<int>& steps, int dim) {
  const int half = dim / 2;
  const double scale = half > 1 ? std::log(10000.0) / (half - 1) : 0.0;
  std::vector<double> v;
  v.reserve(steps.size() * static_cast<size_t>(dim));
  for (int k : steps) {
    for (int i = 0; i < half; ++i) v.push_back(std::sin(k * std::exp(-scale * i)));
    for (int i = 0; i < half; ++i) v.push_back(std::cos(k * std::exp(-scale * i)));
  }
  return nn::Tensor::from({static_cast<int64_t>(steps.size()), dim}, std::move(v));
}

ConditionalUnet1D::ConditionalUnet1D(const DenoiserConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg.validate();
  const int dsed = cfg.step_embed_dim;
  step_fc1 = nn::Linear(dsed, 4 * dsed, rng);
  step_fc2 = nn::Linear(4 * dsed, dsed, rng);
  const int cond = dsed + cfg.cond_dim;
  const auto& dims = cfg.down_dims;
  const size_t levels = dims.size();
  int in = cfg.action_dim;
  for (size_t i = 0; i < levels; ++i) {
    down_blocks.emplace_back(in, dims[i], cond, cfg.kernel, cfg.groups, rng);
    if (i + 1 < levels) downsamples.emplace_back(dims[i], dims[i], 3, 2, 1, rng);
    in = dims[i];
  }
  mid_block = ResidualBlock1D(dims.back(), dims.back(), cond, cfg.kernel, cfg.groups, rng);
  for (size_t i = levels - 1; i >= 1; --i) {
    up_blocks.emplace_back(2 * dims[i], dims[i - 1], cond, cfg.kernel, cfg.groups, rng);
    upsample_convs.emplace_back(dims[i - 1], dims[i - 1], 3, 1, 1, rng);
  }
  final_conv = nn::Conv1d(dims[0], dims[0], cfg.kernel, 1, cfg.kernel / 2, rng);
  final_norm = nn::GroupNorm(cfg.groups, dims[0]);
  out_conv = nn::Conv1d(dims[0], cfg.action_dim, 1, 1, 0, rng);
}

nn::Tensor ConditionalUnet1D::forward(const nn::Tensor& noisy, const std::vector<int>& steps,
                                      const nn::Tensor& obs_cond) const {
  require(noisy.ndim() == 3 && noisy.dim(1) == cfg_.horizon && noisy.dim(2) == cfg_.action_dim,
          ErrorCode::kShapeMismatch,
          "denoiser expects [N, " + std::to_string(cfg_.horizon) + ", " + std::to_string(cfg_.action_dim) + "], got " +
              nn::shape_str(noisy.shape()));
  const int64_t N = noisy.dim(0);
  require(static_cast<int64_t>(steps.size()) == N, ErrorCode::kShapeMismatch, "one diffusion step per row");
  require(obs_cond.ndim() == 2 && obs_cond.dim(0) == N && obs_cond.dim(1) == cfg_.cond_dim, ErrorCode::kShapeMismatch,
          "conditioning must be [N, " + std::to_string(cfg_.cond_dim) + "]");

  const nn::Tensor step_feat =
      step_fc2.forward(nn::mish(step_fc1.forward(step_embedding(steps, cfg_.step_embed_dim))));
  const nn::Tensor parts[] = {step_feat, obs_cond};
  const nn::Tensor cond = nn::concat(parts, 1);

  nn::Tensor h = nn::permute(noisy, {0, 2, 1});
  std::vector<nn::Tensor> skips;
  for (size_t i = 0; i < down_blocks.size(); ++i) {
    h = down_blocks[i].forward(h, cond);
    skips.push_back(h);
    if (i < downsamples.size()) h = downsamples[i].forward(h);
  }
  h = mid_block.forward(h, cond);
  for (size_t i = 0; i < up_blocks.size(); ++i) {
    const nn::Tensor cat[] = {h, skips[skips.size() - 1 - i]};
    h = up_blocks[i].forward(nn::concat(cat, 1), cond);
    h = upsample_convs[i].forward(nn::upsample_nearest1d(h, 2));
  }
  h = nn::mish(final_norm.forward(final_conv.forward(h)));
  return nn::permute(out_conv.forward(h), {0, 2, 1});
}

void ConditionalUnet1D::collect_parameters(const std::string& prefix, std::vector<nn::NamedTensor>& out) const {
  step_fc1.collect_parameters(prefix + "step_fc1.", out);
  step_fc2.collect_parameters(prefix + "step_fc2.", out);
  for (size_t i = 0; i < down_blocks.size(); ++i) {
    down_blocks[i].collect_parameters(prefix + "down" + std::to_string(i) + ".", out);
    if (i < downsamples.size()) downsamples[i].collect_parameters(prefix + "downsample" + std::to_string(i) + ".", out);
  }
  mid_block.collect_parameters(prefix + "mid.", out);
  for (size_t i = 0; i < up_blocks.size(); ++i) {
    up_blocks[i].collect_parameters(prefix + "up" + std::to_string(i) + ".", out);
    upsample_convs[i].collect_parameters(prefix + "upsample" + std::to_string(i) + ".", out);
  }
  final_conv.collect_parameters(prefix + "final_conv.", out);
  final_norm.collect_parameters(prefix + "final_norm.", out);
  out_conv.collect_parameters(prefix + "out_conv.", out);
}

}  // namespace vtp::diffusion
