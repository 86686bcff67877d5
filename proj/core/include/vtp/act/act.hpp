#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vtp/data/episode.hpp"
#include "vtp/data/norm.hpp"
#include "vtp/model/checkpoint.hpp"
#include "vtp/model/encoders.hpp"
#include "vtp/nn/layers.hpp"
#include "vtp/policy/policy.hpp"

namespace vtp::act {

using Action = std::array<double, 3>;

struct ActConfig {
  int horizon = 20;
  int d_model = 64;
  int heads = 4;
  int ffn_dim = 256;
  int encoder_layers = 2;
  int decoder_layers = 2;
  int latent_dim = 8;
  double kl_weight = 10.0;
  int batch = 32;
  int updates = 2000;
  double lr = 5e-4;
  double weight_decay = 1e-4;
  int warmup = 100;
  double grad_clip = 1.0;  // 0 disables
  std::uint64_t seed = 0;
  bool vision_only = false;
  int tactile_horizon = 5;
  double ensemble_k = 0.25;
  bool ensemble_oldest_first = true;  // weight index 0 = oldest prediction
  model::TrunkConfig trunk;

  void validate() const;
};

void to_json(nlohmann::json& j, const ActConfig& c);
void from_json(const nlohmann::json& j, ActConfig& c);

// Named run of positions in the encoder input sequence.
struct TokenSegment {
  std::string name;
  int offset = 0;
  int length = 0;
};

// Encoder sequence, in order:
//   latent                 1
//   proprio                1
//   camera0 .. camera{C-1} Hf*Wf each (flattened feature maps, no pooling)
//   tactile                Ht*Wt (absent for vision-only policies)
std::vector<TokenSegment> token_layout(int num_cameras, int camera_tokens, int tactile_tokens);
void to_json(nlohmann::json& j, const TokenSegment& s);

struct ActOutput {
  nn::Tensor actions;  // [N, T, 3], normalized relative frame
  nn::Tensor mu;       // [N, latent]; undefined at inference
  nn::Tensor logvar;
};

// One vision backbone shared by all cameras, an optional tactile encoder, the
// CVAE demo encoder and the transformer. Components: "backbone",
// "tactile_encoder", "cvae", "transformer".
class ActModel : public nn::Module {
 public:
  ActModel(const ActConfig& cfg, int num_cameras, int image_size, int tactile_size, Rng& rng);

  // With `actions` ([N, T, 3]) the latent is drawn from the demo encoder's
  // posterior using `rng`; without, z = 0.
  ActOutput forward(std::span<const nn::Tensor> views, const nn::Tensor* tactile, const nn::Tensor& proprio,
                    const nn::Tensor* actions, Rng* rng) const;
  void collect_parameters(const std::string& prefix, std::vector<nn::NamedTensor>& out) const override;

  const std::vector<TokenSegment>& layout() const { return layout_; }
  int sequence_length() const { return layout_.back().offset + layout_.back().length; }

  model::VisionEncoder backbone;
  std::optional<model::TactileEncoder> tactile;
  // feature channels -> d_model, applied per token
  nn::Linear vision_proj, tactile_proj, proprio_proj, latent_proj;
  nn::Tensor encoder_pos;  // [S, d]
  nn::Tensor query_embed;  // [T, d]
  std::vector<nn::TransformerEncoderLayer> encoder;
  std::vector<nn::TransformerDecoderLayer> decoder;
  nn::Linear action_head;

  // CVAE demo encoder over [CLS, proprio, a_1 .. a_T].
  nn::Tensor cvae_cls;  // [1, d]
  nn::Tensor cvae_pos;  // [T + 2, d]
  nn::Linear cvae_action_proj, cvae_proprio_proj, cvae_latent;
  std::vector<nn::TransformerEncoderLayer> cvae_encoder;

 private:
  ActConfig cfg_;
  int num_cameras_ = 0;
  std::vector<TokenSegment> layout_;
};

// KL(N(mu, exp(logvar)) || N(0, I)), summed over latent dims, averaged over rows.
nn::Tensor gaussian_kl(const nn::Tensor& mu, const nn::Tensor& logvar);

struct ActLoss {
  nn::Tensor total;
  nn::Tensor l1;
  nn::Tensor kl;
};

// Mean L1 reconstruction + kl_weight * gaussian_kl.
ActLoss act_loss(const nn::Tensor& pred, const nn::Tensor& target, const nn::Tensor& mu, const nn::Tensor& logvar,
                 double kl_weight);

// Normalized weights e^{-k i} for n predictions listed oldest first. With
// oldest_first, i = 0 is the oldest entry; otherwise the newest.
std::vector<double> ensemble_weights(std::size_t n, double k, bool oldest_first = true);

// Weighted average of `actions` (oldest first). Empty input raises kInvalidArgument.
Action temporal_ensemble(std::span<const Action> actions, double k, bool oldest_first = true);

// Adds the origin gripper position to x and y of a relative chunk.
std::vector<Action> to_global(std::span<const Action> relative, const std::array<double, 3>& origin);

// Global-frame predictions keyed by the tick they were made on.
class EnsembleBuffer {
 public:
  EnsembleBuffer(int horizon, double k, bool oldest_first);
  void clear() { chunks_.clear(); }
  void add(std::int64_t tick, std::vector<Action> global_chunk);
  // Predictions targeting `tick`, oldest first. Chunks that can no longer
  // reach `tick` are dropped.
  std::vector<Action> live(std::int64_t tick);
  Action action(std::int64_t tick);
  std::size_t size() const { return chunks_.size(); }

 private:
  int horizon_;
  double k_;
  bool oldest_first_;
  std::deque<std::pair<std::int64_t, std::vector<Action>>> chunks_;
};

class ActPolicy : public policy::Policy {
 public:
  ActPolicy(ActConfig cfg, std::unique_ptr<ActModel> model, data::NormStats norm);
  static std::unique_ptr<ActPolicy> from_checkpoint(const model::Checkpoint& ckpt);

  // Relative chunk (denormalized) for one observation, z = 0.
  std::vector<Action> predict(const data::Observation& obs) const;

  void reset(std::uint64_t seed) override;
  sim::ActionCommand act(const data::Observation& obs, const sim::WorldState& state) override;
  std::string name() const override { return "act"; }
  int tactile_horizon() const override { return cfg_.tactile_horizon; }

  void set_ensemble(double k, bool oldest_first);
  const ActConfig& config() const { return cfg_; }
  const ActModel& model() const { return *model_; }

 private:
  ActConfig cfg_;
  std::unique_ptr<ActModel> model_;
  data::NormStats norm_;
  EnsembleBuffer buffer_;
  std::int64_t tick_ = 0;
};

// Normalization for ACT: proprio as usual, actions scaled over every entry of
// every relative chunk in the data.
data::NormStats relative_norm(std::span<const data::Episode> episodes, int horizon);

struct ActTrainResult {
  model::Checkpoint checkpoint;
  std::vector<double> losses;
};

// With `pretrained` the backbone starts from its vision encoder and the
// tactile encoder from its tactile encoder. Frozen flags are rejected.
ActTrainResult train_act(std::span<const data::Episode> episodes, const ActConfig& cfg,
                         const model::Checkpoint* pretrained = nullptr);

}  // namespace vtp::act
