#pragma once

#include <cstdint>
#include <string>

#include "vtp/data/batch.hpp"
#include "vtp/sim/world.hpp"

namespace vtp::policy {

// Closed-loop controller driven by rollout(). Learned policies read only the
// observation; the scripted expert also reads the world state.
class Policy {
 public:
  virtual ~Policy() = default;

  // Called at the start of every episode; seeds any sampling stream.
  virtual void reset(std::uint64_t seed) = 0;
  virtual sim::ActionCommand act(const data::Observation& obs, const sim::WorldState& state) = 0;

  virtual std::string name() const = 0;
  // Tactile frames per observation window.
  virtual int tactile_horizon() const { return 1; }
};

struct RolloutOptions {
  std::uint64_t seed = 0;
  bool drift = false;
  double goal_noise = 0.0;
  int step_cap = 200;
};

struct RolloutResult {
  bool success = false;
  int steps = 0;
  sim::WorldState final_state;
};

// Resets `env`, then per tick renders (and quantizes, as stored demos are)
// the camera views and a tactile frame, asks the policy for an action,
// injects goal noise and steps. Stops at success or the step cap.
RolloutResult rollout(sim::Environment& env, Policy& policy, const RolloutOptions& options);

class ExpertPolicy : public Policy {
 public:
  explicit ExpertPolicy(sim::EnvConfig cfg) : cfg_(std::move(cfg)) {}

  void reset(std::uint64_t seed) override { rng_ = make_rng(seed, Stream::kExpert); }
  sim::ActionCommand act(const data::Observation& obs, const sim::WorldState& state) override;
  std::string name() const override { return "expert"; }

 private:
  sim::EnvConfig cfg_;
  Rng rng_;
};

}  // namespace vtp::policy
