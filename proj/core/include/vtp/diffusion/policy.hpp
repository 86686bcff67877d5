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
#include "vtp/diffusion/denoiser.hpp"
#include "vtp/diffusion/schedule.hpp"
#include "vtp/model/checkpoint.hpp"
#include "vtp/model/encoders.hpp"
#include "vtp/policy/policy.hpp"

namespace vtp::diffusion {

struct DiffusionConfig {
  int horizon = 20;       // predicted actions per chunk
  int action_steps = 8;   // executed before replanning
  int train_steps = 100;
  int inference_steps = 10;
  ScheduleKind schedule = ScheduleKind::kSquaredCosine;
  bool clip_sample = true;

  int batch = 64;
  int updates = 2000;
  double lr = 1e-3;
  double weight_decay = 1e-6;
  int warmup = 100;
  double grad_clip = 1.0;  // 0 disables
  double ema_decay = 0.0;  // 0 disables
  std::uint64_t seed = 0;

  bool vision_only = false;
  bool freeze_tactile = false;
  int tactile_horizon = 5;
  model::TrunkConfig trunk;
  std::vector<int> down_dims{32, 64, 128};
  int kernel = 5;
  int step_embed_dim = 32;
  int groups = 8;

  void validate() const;
};

void to_json(nlohmann::json& j, const DiffusionConfig& c);
void from_json(const nlohmann::json& j, DiffusionConfig& c);

// Observation vector layout, in order:
//   camera0 .. camera{C-1}   D each (pooled embeddings)
//   tactile                  D      (absent for vision-only policies)
//   proprio                  3      (standardized)
struct ConditioningLayout {
  struct Slot {
    std::string name;
    int offset = 0;
    int size = 0;
  };
  std::vector<Slot> slots;
  int dim = 0;

  static ConditioningLayout make(int num_cameras, int embed_dim, bool with_tactile, int proprio_dim = 3);
  bool has(const std::string& name) const;
};

void to_json(nlohmann::json& j, const ConditioningLayout& l);

// Per-camera encoders (independent weights), optional tactile encoder and the
// denoiser. Components: "camera<c>_encoder", "tactile_encoder", "denoiser".
class DiffusionModel : public nn::Module {
 public:
  DiffusionModel(const DiffusionConfig& cfg, int num_cameras, int image_size, int tactile_size, Rng& rng);

  // views: one [N, 3, S, S] per camera; tactile [N, 3h, St, St] or null.
  nn::Tensor condition(std::span<const nn::Tensor> views, const nn::Tensor* tactile, const nn::Tensor& proprio) const;
  void collect_parameters(const std::string& prefix, std::vector<nn::NamedTensor>& out) const override;

  std::vector<model::VisionEncoder> cameras;
  std::optional<model::TactileEncoder> tactile;
  ConditionalUnet1D denoiser;
  ConditioningLayout layout;
};

// MSE between eps and the denoiser's prediction at (add_noise(a0, eps, k), k, cond).
nn::Tensor training_loss(const ConditionalUnet1D& denoiser, const NoiseSchedule& schedule, const nn::Tensor& cond,
                         const nn::Tensor& a0, const std::vector<int>& steps, const nn::Tensor& eps);

// Reverse diffusion over the inference subset from a standard normal chunk,
// conditioned on `cond` [1, D]. Returns the normalized chunk (T x A,
// row-major) clipped to [-1, 1].
std::vector<double> sample_chunk(const ConditionalUnet1D& denoiser, const NoiseSchedule& schedule,
                                 const nn::Tensor& cond, Rng& rng, bool clip_x0);

class DiffusionPolicy : public policy::Policy {
 public:
  DiffusionPolicy(DiffusionConfig cfg, std::unique_ptr<DiffusionModel> model, NoiseSchedule schedule,
                  data::NormStats norm);
  static std::unique_ptr<DiffusionPolicy> from_checkpoint(const model::Checkpoint& ckpt);

  // Denormalized chunk of `horizon` actions.
  std::vector<std::array<double, 3>> sample(const data::Observation& obs, Rng& rng) const;

  void reset(std::uint64_t seed) override;
  sim::ActionCommand act(const data::Observation& obs, const sim::WorldState& state) override;
  std::string name() const override { return "diffusion"; }
  int tactile_horizon() const override { return cfg_.tactile_horizon; }

  void set_action_steps(int steps);
  const DiffusionConfig& config() const { return cfg_; }
  const DiffusionModel& model() const { return *model_; }
  int replans() const { return replans_; }

 private:
  DiffusionConfig cfg_;
  std::unique_ptr<DiffusionModel> model_;
  NoiseSchedule schedule_;
  data::NormStats norm_;
  Rng rng_;
  std::deque<std::array<double, 3>> queue_;
  int replans_ = 0;
};

// Runs the policy closed-loop: execute action_steps of each sampled chunk,
// then re-observe and resample, until success or the step cap.
policy::RolloutResult execute_receding_horizon(sim::Environment& env, DiffusionPolicy& policy,
                                               const policy::RolloutOptions& options);

struct DiffusionTrainResult {
  model::Checkpoint checkpoint;
  std::vector<double> losses;
};

// With `pretrained` (a pretrain checkpoint) every camera encoder starts from
// its shared vision encoder and the tactile encoder from its tactile encoder.
// The tactile encoder is frozen when cfg.freeze_tactile is set or the
// pretrained checkpoint flags it.
DiffusionTrainResult train_diffusion(std::span<const data::Episode> episodes, const DiffusionConfig& cfg,
                                     const model::Checkpoint* pretrained = nullptr);

}  // namespace vtp::diffusion
