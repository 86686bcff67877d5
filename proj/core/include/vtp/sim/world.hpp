#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <vector>

#include "vtp/rng.hpp"

namespace vtp::sim {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(Vec2 a, double s) { return {a.x * s, a.y * s}; }
  friend bool operator==(Vec2 a, Vec2 b) = default;
  double norm() const { return std::hypot(x, y); }
};

// Side view of the workcell: x runs along the table, y points up. The table
// and hub top are the horizontal line y = surface_y; each port is a socket
// whose seated plug position lies port_depth below that line.
struct EnvConfig {
  int num_cameras = 3;
  int image_size = 64;
  int tactile_size = 48;

  int num_beads = 12;
  double bead_radius = 0.045;    // blob std-dev, sensor-local units
  double jitter_sigma = 0.004;   // per-frame bead jitter
  double drift_sigma = 0.03;     // per-episode bead random walk
  double push_gain = 0.02;       // force -> bead displacement
  std::uint64_t layout_seed = 0;

  double max_step = 0.02;         // m per tick
  double max_width = 0.08;        // m
  double width_rate = 0.02;       // m per tick
  double grasp_radius = 0.015;    // m
  double grasp_close_threshold = 0.02;
  double release_threshold = 0.04;
  double insert_tolerance = 0.004;
  double plug_width = 0.012;
  double contact_stiffness = 50.0;
  double max_contact_force = 2.0;

  double surface_y = 0.30;
  double port_depth = 0.01;
  std::vector<double> port_x = {0.60, 0.66, 0.72};
  double gripper_start_x = 0.45;
  double gripper_start_y = 0.55;
  double plug_holder_x = 0.30;
  double plug_jitter = 0.003;

  double expert_jitter = 0.001;
  int step_cap = 200;

  std::vector<Vec2> port_positions() const;
  void validate() const;
};

void to_json(nlohmann::json& j, const EnvConfig& c);
// Unknown keys are rejected; absent keys keep their defaults.
void from_json(const nlohmann::json& j, EnvConfig& c);
EnvConfig load_env_config(const std::filesystem::path& path);

struct ActionCommand {
  Vec2 target_pos;          // absolute, world frame
  double gripper_cmd = 1.0;  // 0 closed, 1 open

  friend bool operator==(const ActionCommand&, const ActionCommand&) = default;
};

struct BeadLayout {
  std::vector<Vec2> bead_centers;  // sensor-local unit square
  Rng drift_rng;
  double jitter_sigma = 0.0;
  double drift_sigma = 0.0;
  std::int64_t drift_steps = 0;

  static BeadLayout initial(const EnvConfig& cfg);
  // One per-coordinate Normal(0, drift_sigma^2) random-walk step.
  void drift_step();
};

struct WorldState {
  Vec2 gripper_pos;
  double gripper_width = 0.0;
  Vec2 plug_pos;  // plug tip
  bool plug_grasped = false;
  Vec2 grasp_offset;  // plug_pos - gripper_pos while grasped
  std::vector<Vec2> port_positions;
  int target_port_index = 0;
  std::optional<int> plug_inserted_port;
  double contact_force = 0.0;
  Vec2 contact_point{0.5, 0.5};  // sensor-local
  std::int64_t step_count = 0;
  std::uint64_t seed = 0;

  friend bool operator==(const WorldState&, const WorldState&) = default;
};

// Owns the persistent bead layout; everything else about an episode lives in
// WorldState.
class Environment {
 public:
  explicit Environment(EnvConfig cfg);

  // drift=true advances the bead layout one random-walk step first.
  WorldState reset(std::uint64_t seed, bool drift);
  WorldState step(const WorldState& state, const ActionCommand& action) const;

  const EnvConfig& config() const { return cfg_; }
  const BeadLayout& layout() const { return layout_; }
  BeadLayout& mutable_layout() { return layout_; }

 private:
  EnvConfig cfg_;
  BeadLayout layout_;
};

WorldState reset_state(const EnvConfig& cfg, std::uint64_t seed);
WorldState step(const EnvConfig& cfg, const WorldState& state, const ActionCommand& action);
bool check_success(const EnvConfig& cfg, const WorldState& state);
ActionCommand inject_goal_noise(const ActionCommand& action, double sigma_m, Rng& rng);

// Gripper x, y and width.
std::array<double, 3> proprio(const WorldState& state);

}  // namespace vtp::sim
