#pragma once

#include <string_view>

#include "vtp/sim/world.hpp"

namespace vtp::sim {

// Stage of the waypoint expert. The stage is a pure function of the world
// state, so the expert needs no memory and recovers from perturbations.
enum class ExpertStage {
  kApproach,  // move above the plug, gripper open
  kDescend,   // lower onto the plug
  kClose,     // close on the plug
  kReopen,    // missed grasp: open again
  kLift,      // raise the grasped plug to carry height
  kTransfer,  // carry above the target port
  kInsert,    // push down through the port line
  kRelease,   // open the gripper once seated
  kDone,      // hold
};

std::string_view to_string(ExpertStage stage);

struct ExpertParams {
  double approach_height = 0.05;  // above plug tip
  double carry_height = 0.05;     // plug tip above surface while carrying
  double align_window = 0.006;    // |plug.x - port.x| that starts insertion
  double close_radius = 0.006;    // start closing within this distance
  double keep_closing_radius = 0.012;
  double insert_overshoot = 0.01;  // commanded plug tip below the seat
};

ExpertStage expert_stage(const EnvConfig& cfg, const WorldState& state, const ExpertParams& params = {});

// Emits the stage's waypoint with per-coordinate Normal(0, expert_jitter^2)
// jitter on moving stages; holding stages target the current pose exactly.
ActionCommand scripted_expert(const EnvConfig& cfg, const WorldState& state, Rng& rng,
                              const ExpertParams& params = {});

}  // namespace vtp::sim
