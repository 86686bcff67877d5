#pragma once

#include <nlohmann/json.hpp>
#include <vector>

#include "vtp/nn/layers.hpp"
#include "vtp/rng.hpp"

namespace vtp::diffusion {

struct DenoiserConfig {
  int action_dim = 3;
  int horizon = 20;   // must be divisible by 2^(levels - 1)
  int cond_dim = 0;   // observation conditioning width
  std::vector<int> down_dims{32, 64, 128};
  int kernel = 5;
  int step_embed_dim = 32;
  int groups = 8;

  void validate() const;
};

void to_json(nlohmann::json& j, const DenoiserConfig& c);
void from_json(const nlohmann::json& j, DenoiserConfig& c);

// Per-channel modulation out = gamma(cond) * x + beta(cond), where
// gamma = 1 + W_g cond + b_g and beta = W_b cond + b_b. Both maps start at
// zero, so the layer is the identity at initialization.
class FilmLayer : public nn::Module {
 public:
  FilmLayer() = default;
  FilmLayer(int cond_dim, int channels, Rng& rng);

  // features [N, C, T], cond [N, cond_dim].
  nn::Tensor modulate(const nn::Tensor& features, const nn::Tensor& cond) const;
  void collect_parameters(const std::string& prefix, std::vector<nn::NamedTensor>& out) const override;

  nn::Linear scale_map, shift_map;
};

// conv -> GroupNorm -> Mish -> FiLM -> conv -> GroupNorm -> Mish, plus a
// residual path (1x1 conv when widths differ).
class ResidualBlock1D : public nn::Module {
 public:
  ResidualBlock1D() = default;
  ResidualBlock1D(int in, int out, int cond_dim, int kernel, int groups, Rng& rng);

  nn::Tensor forward(const nn::Tensor& x, const nn::Tensor& cond) const;
  void collect_parameters(const std::string& prefix, std::vector<nn::NamedTensor>& out) const override;

  nn::Conv1d conv1, conv2, residual;
  nn::GroupNorm norm1, norm2;
  FilmLayer film;
  bool has_residual_conv = false;
};

// Sinusoidal features of integer step indices, [N, dim].
nn::Tensor step_embedding(const std::vector<int>& steps, int dim);

// 1-D temporal U-Net predicting the noise in an action chunk. Each level has
// one FiLM residual block; downsampling is a stride-2 conv, upsampling is
// nearest x2 followed by a conv.
class ConditionalUnet1D : public nn::Module {
 public:
  ConditionalUnet1D() = default;
  ConditionalUnet1D(const DenoiserConfig& cfg, Rng& rng);

  // noisy [N, T, A], steps (one per row), obs_cond [N, cond_dim] -> [N, T, A].
  nn::Tensor forward(const nn::Tensor& noisy, const std::vector<int>& steps, const nn::Tensor& obs_cond) const;
  void collect_parameters(const std::string& prefix, std::vector<nn::NamedTensor>& out) const override;

  const DenoiserConfig& config() const { return cfg_; }

  nn::Linear step_fc1, step_fc2;
  std::vector<ResidualBlock1D> down_blocks;
  std::vector<nn::Conv1d> downsamples;
  ResidualBlock1D mid_block;
  std::vector<ResidualBlock1D> up_blocks;
  std::vector<nn::Conv1d> upsample_convs;
  nn::Conv1d final_conv, out_conv;
  nn::GroupNorm final_norm;

 private:
  DenoiserConfig cfg_;
};

}  // namespace vtp::diffusion
