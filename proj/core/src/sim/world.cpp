#include "vtp/sim/world.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "vtp/error.hpp"

namespace vtp::sim {

namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }
Vec2 clamp01(Vec2 v) { return {clamp01(v.x), clamp01(v.y)}; }

// Contact locations on the fingertip sensor pad, sensor-local coordinates.
constexpr Vec2 kGraspContact{0.5, 0.5};
constexpr Vec2 kTipContact{0.5, 0.9};

}  // namespace

std::vector<Vec2> EnvConfig::port_positions() const {
  std::vector<Vec2> out;
  for (double x : port_x) out.push_back({x, surface_y - port_depth});
  return out;
}

void EnvConfig::validate() const {
  require(num_cameras >= 1, ErrorCode::kInvalidArgument, "num_cameras must be >= 1");
  require(image_size >= 8 && tactile_size >= 8, ErrorCode::kInvalidArgument, "image sizes must be >= 8");
  require(num_beads >= 1, ErrorCode::kInvalidArgument, "num_beads must be >= 1");
  require(port_x.size() >= 2, ErrorCode::kInvalidArgument, "at least two ports are required");
  require(max_width > 0.0 && max_width <= 0.08, ErrorCode::kInvalidArgument, "max_width must lie in (0, 0.08]");
  require(plug_width < grasp_close_threshold && grasp_close_threshold < release_threshold &&
              release_threshold < max_width,
          ErrorCode::kInvalidArgument, "need plug_width < grasp_close_threshold < release_threshold < max_width");
  require(max_step > 0.0 && width_rate > 0.0, ErrorCode::kInvalidArgument, "rates must be positive");
  require(jitter_sigma >= 0.0 && drift_sigma >= 0.0 && plug_jitter >= 0.0 && expert_jitter >= 0.0,
          ErrorCode::kInvalidArgument, "noise scales must be non-negative");
  require(step_cap >= 1, ErrorCode::kInvalidArgument, "step_cap must be >= 1");
}

#define VTP_ENV_FIELDS(X)                                                                                      \
  X(num_cameras) X(image_size) X(tactile_size) X(num_beads) X(bead_radius) X(jitter_sigma) X(drift_sigma)      \
  X(push_gain) X(layout_seed) X(max_step) X(max_width) X(width_rate) X(grasp_radius) X(grasp_close_threshold) \
  X(release_threshold) X(insert_tolerance) X(plug_width) X(contact_stiffness) X(max_contact_force)            \
  X(surface_y) X(port_depth) X(port_x) X(gripper_start_x) X(gripper_start_y) X(plug_holder_x) X(plug_jitter) \
  X(expert_jitter) X(step_cap)

void to_json(nlohmann::json& j, const EnvConfig& c) {
  j = nlohmann::json::object();
#define X(name) j[#name] = c.name;
  VTP_ENV_FIELDS(X)
#undef X
}

void from_json(const nlohmann::json& j, EnvConfig& c) {
  static const std::set<std::string> known = {
#define X(name) #name,
      VTP_ENV_FIELDS(X)
#undef X
  };
  require(j.is_object(), ErrorCode::kInvalidArgument, "environment config must be a JSON object");
  for (const auto& [key, value] : j.items())
    require(known.count(key) > 0, ErrorCode::kInvalidArgument, "unknown environment config key '" + key + "'");
#define X(name) \
  if (j.contains(#name)) j.at(#name).get_to(c.name);
  VTP_ENV_FIELDS(X)
#undef X
  c.validate();
}

#undef VTP_ENV_FIELDS

EnvConfig load_env_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorCode::kIo, "cannot open environment config '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kInvalidArgument, "'" + path.string() + "': " + e.what());
  }
  return j.get<EnvConfig>();
}

BeadLayout BeadLayout::initial(const EnvConfig& cfg) {
  BeadLayout layout;
  Rng rng = make_rng(cfg.layout_seed, Stream::kLayout);
  std::normal_distribution<double> n(0.0, 0.02);
  const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(cfg.num_beads))));
  const int rows = (cfg.num_beads + cols - 1) / cols;
  for (int b = 0; b < cfg.num_beads; ++b) {
    const int i = b % cols, k = b / cols;
    const double x = (i + 0.5) / cols + n(rng);
    const double y = (k + 0.5) / rows + n(rng);
    layout.bead_centers.push_back({std::clamp(x, 0.05, 0.95), std::clamp(y, 0.05, 0.95)});
  }
  layout.drift_rng = make_rng(cfg.layout_seed, Stream::kDrift);
  layout.jitter_sigma = cfg.jitter_sigma;
  layout.drift_sigma = cfg.drift_sigma;
  return layout;
}

void BeadLayout::drift_step() {
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& c : bead_centers) {
    c.x = std::clamp(c.x + drift_sigma * n(drift_rng), 0.05, 0.95);
    c.y = std::clamp(c.y + drift_sigma * n(drift_rng), 0.05, 0.95);
  }
  ++drift_steps;
}

Environment::Environment(EnvConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  layout_ = BeadLayout::initial(cfg_);
}

WorldState Environment::reset(std::uint64_t seed, bool drift) {
  if (drift) layout_.drift_step();
  return reset_state(cfg_, seed);
}

WorldState Environment::step(const WorldState& state, const ActionCommand& action) const {
  return sim::step(cfg_, state, action);
}

WorldState reset_state(const EnvConfig& cfg, std::uint64_t seed) {
  Rng rng = make_rng(seed, Stream::kWorld);
  std::normal_distribution<double> n(0.0, 1.0);
  WorldState s;
  s.seed = seed;
  s.gripper_pos = {cfg.gripper_start_x, cfg.gripper_start_y};
  s.gripper_width = cfg.max_width;
  const double jitter = std::clamp(n(rng), -3.0, 3.0) * cfg.plug_jitter;
  s.plug_pos = {cfg.plug_holder_x + jitter, cfg.surface_y};
  s.port_positions = cfg.port_positions();
  double best = 1e300;
  for (size_t i = 0; i < s.port_positions.size(); ++i) {
    const double d = (s.port_positions[i] - s.gripper_pos).norm();
    if (d < best) {
      best = d;
      s.target_port_index = static_cast<int>(i);
    }
  }
  return s;
}

WorldState step(const EnvConfig& cfg, const WorldState& state, const ActionCommand& action) {
  if (!std::isfinite(action.target_pos.x) || !std::isfinite(action.target_pos.y) ||
      !std::isfinite(action.gripper_cmd))
    fail(ErrorCode::kInvalidAction, "action components must be finite");

  WorldState s = state;
  ++s.step_count;
  const Vec2 target = clamp01(action.target_pos);
  const double w_target = std::clamp(action.gripper_cmd, 0.0, 1.0) * cfg.max_width;
  double width = s.gripper_width + std::clamp(w_target - s.gripper_width, -cfg.width_rate, cfg.width_rate);

  Vec2 delta = target - s.gripper_pos;
  const double dist = delta.norm();
  if (dist > cfg.max_step) delta = delta * (cfg.max_step / dist);
  Vec2 gripper = s.gripper_pos + delta;

  const double k = cfg.contact_stiffness;
  double tip_force = 0.0;
  double grasp_force = 0.0;

  if (s.plug_grasped && s.plug_inserted_port) {
    // The socket holds the plug, so a closed gripper cannot move.
    const double push = s.plug_pos.y - (gripper.y + s.grasp_offset.y);
    if (push > 0.0) tip_force = k * push;
    gripper = s.gripper_pos;
  } else if (s.plug_grasped) {
    Vec2 plug = gripper + s.grasp_offset;
    if (plug.y < cfg.surface_y) {
      const bool from_above = s.plug_pos.y >= cfg.surface_y - 1e-12;
      const bool commanded_down = target.y + s.grasp_offset.y < cfg.surface_y;
      std::optional<int> port;
      if (from_above && commanded_down) {
        double best = cfg.insert_tolerance;
        for (size_t i = 0; i < s.port_positions.size(); ++i) {
          const double dx = std::abs(plug.x - s.port_positions[i].x);
          if (dx <= best) {
            best = dx;
            port = static_cast<int>(i);
          }
        }
      }
      if (port) {
        const Vec2 seat = s.port_positions[static_cast<size_t>(*port)];
        tip_force = k * std::max(0.0, seat.y - plug.y);
        plug = seat;
        s.plug_inserted_port = port;
      } else {
        tip_force = k * (cfg.surface_y - plug.y);
        plug.y = cfg.surface_y;
      }
      gripper = plug - s.grasp_offset;
    }
    s.plug_pos = plug;
  }
  s.gripper_pos = clamp01(gripper);

  if (!s.plug_grasped) {
    const double reach = (s.plug_pos - s.gripper_pos).norm();
    if (width < cfg.grasp_close_threshold && reach <= cfg.grasp_radius) {
      s.plug_grasped = true;
      // Parallel jaws centre the plug along the closing axis.
      if (!s.plug_inserted_port) s.plug_pos.x = s.gripper_pos.x;
      s.grasp_offset = s.plug_pos - s.gripper_pos;
    }
  }
  if (s.plug_grasped) {
    width = std::max(width, cfg.plug_width);
    if (width > cfg.grasp_close_threshold) {
      s.plug_grasped = false;
      s.grasp_offset = {};
      if (!s.plug_inserted_port) s.plug_pos.y = cfg.surface_y;
    } else {
      grasp_force = k * std::max(0.0, cfg.plug_width - w_target);
    }
  }
  s.gripper_width = std::clamp(width, 0.0, cfg.max_width);

  const double total = grasp_force + tip_force;
  s.contact_force = std::min(total, cfg.max_contact_force);
  s.contact_point = total > 0.0 ? kGraspContact * (grasp_force / total) + kTipContact * (tip_force / total)
                                : Vec2{0.5, 0.5};
  return s;
}

bool check_success(const EnvConfig& cfg, const WorldState& state) {
  return state.plug_inserted_port && *state.plug_inserted_port == state.target_port_index &&
         state.gripper_width > cfg.release_threshold;
}

ActionCommand inject_goal_noise(const ActionCommand& action, double sigma_m, Rng& rng) {
  require(sigma_m >= 0.0, ErrorCode::kInvalidArgument, "goal noise sigma must be >= 0");
  if (sigma_m == 0.0) return action;
  std::normal_distribution<double> n(0.0, sigma_m);
  ActionCommand out = action;
  out.target_pos.x += n(rng);
  out.target_pos.y += n(rng);
  return out;
}

std::array<double, 3> proprio(const WorldState& state) {
  return {state.gripper_pos.x, state.gripper_pos.y, state.gripper_width};
}

}  // namespace vtp::sim
