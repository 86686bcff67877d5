#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <span>
#include <vector>

#include "vtp/data/episode.hpp"
#include "vtp/data/norm.hpp"
#include "vtp/model/checkpoint.hpp"
#include "vtp/model/encoders.hpp"

namespace vtp::pretrain {

// Symmetric contrastive loss between tactile latents [n, L] and one [n, L]
// vision latent matrix per camera, summed over cameras. Rows must be unit
// norm (within 1e-3); tau > 0; n >= 2.
nn::Tensor clip_loss(const nn::Tensor& tactile, std::span<const nn::Tensor> vision, double tau);

struct PretrainConfig {
  int epochs = 20;
  int batch = 16;  // timesteps per update, all from one episode
  double tau = 0.07;
  double lr = 0.005;
  double momentum = 0.9;
  double weight_decay = 0.0;
  double grad_clip = 5.0;  // 0 disables
  std::uint64_t seed = 0;
  int horizon = 5;  // tactile frames per window
  int latent_dim = 32;
  int head_hidden = 128;
  int max_updates = 0;  // 0: epochs * episodes
  model::TrunkConfig trunk;

  void validate() const;
};

void to_json(nlohmann::json& j, const PretrainConfig& c);
void from_json(const nlohmann::json& j, PretrainConfig& c);

// One shared vision encoder for every camera, the tactile encoder, and a
// projection head per modality. Parameter prefixes: "vision_encoder.",
// "tactile_encoder.", "vision_head.", "tactile_head.".
class PretrainModel : public nn::Module {
 public:
  PretrainModel(const PretrainConfig& cfg, int image_size, int tactile_size, Rng& rng);
  static PretrainModel from_checkpoint(const model::Checkpoint& ckpt);

  void collect_parameters(const std::string& prefix, std::vector<nn::NamedTensor>& out) const override;

  model::VisionEncoder vision;
  model::TactileEncoder tactile;
  model::ProjectionHead vision_head;
  model::ProjectionHead tactile_head;
};

struct PretrainResult {
  model::Checkpoint checkpoint;
  std::vector<double> losses;  // one per update
};

// Momentum SGD on clip_loss. Each epoch visits every episode once in a
// seeded shuffled order, drawing `batch` distinct timesteps from it.
PretrainResult pretrain(std::span<const data::Episode> episodes, const PretrainConfig& cfg);

}  // namespace vtp::pretrain
