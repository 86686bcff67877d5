#include "vtp/sim/expert.hpp"

#include <cmath>

namespace vtp::sim {

std::string_view to_string(ExpertStage stage) {
  switch (stage) {
    case ExpertStage::kApproach: return "approach";
    case ExpertStage::kDescend: return "descend";
    case ExpertStage::kClose: return "close";
    case ExpertStage::kReopen: return "reopen";
    case ExpertStage::kLift: return "lift";
    case ExpertStage::kTransfer: return "transfer";
    case ExpertStage::kInsert: return "insert";
    case ExpertStage::kRelease: return "release";
    case ExpertStage::kDone: return "done";
  }
  return "?";
}

ExpertStage expert_stage(const EnvConfig& cfg, const WorldState& s, const ExpertParams& p) {
  if (s.plug_inserted_port)
    return s.gripper_width > cfg.release_threshold ? ExpertStage::kDone : ExpertStage::kRelease;

  if (s.plug_grasped) {
    const Vec2 port = s.port_positions[static_cast<size_t>(s.target_port_index)];
    if (std::abs(s.plug_pos.x - port.x) <= p.align_window) return ExpertStage::kInsert;
    if (s.plug_pos.y < cfg.surface_y + p.carry_height - 0.005) return ExpertStage::kLift;
    return ExpertStage::kTransfer;
  }

  const double reach = (s.plug_pos - s.gripper_pos).norm();
  const bool partly_closed = s.gripper_width < cfg.max_width - 0.01;
  if (reach <= p.close_radius || (partly_closed && reach <= p.keep_closing_radius)) return ExpertStage::kClose;
  if (partly_closed) return ExpertStage::kReopen;
  if (std::abs(s.gripper_pos.x - s.plug_pos.x) <= p.close_radius &&
      s.gripper_pos.y <= s.plug_pos.y + p.approach_height + 0.005)
    return ExpertStage::kDescend;
  return ExpertStage::kApproach;
}

ActionCommand scripted_expert(const EnvConfig& cfg, const WorldState& s, Rng& rng, const ExpertParams& p) {
  const ExpertStage stage = expert_stage(cfg, s, p);
  const Vec2 port = s.port_positions[static_cast<size_t>(s.target_port_index)];
  const Vec2 off = s.grasp_offset;
  const double carry_y = cfg.surface_y + p.carry_height;

  ActionCommand a{s.gripper_pos, 1.0};
  bool moving = true;
  switch (stage) {
    case ExpertStage::kApproach: a = {{s.plug_pos.x, s.plug_pos.y + p.approach_height}, 1.0}; break;
    case ExpertStage::kDescend: a = {s.plug_pos, 1.0}; break;
    case ExpertStage::kClose: a = {s.plug_pos, 0.0}; break;
    case ExpertStage::kLift: a = {{s.gripper_pos.x, carry_y - off.y}, 0.0}; break;
    case ExpertStage::kTransfer: a = {{port.x - off.x, carry_y - off.y}, 0.0}; break;
    case ExpertStage::kInsert: a = {{port.x - off.x, port.y - p.insert_overshoot - off.y}, 0.0}; break;
    case ExpertStage::kReopen:
    case ExpertStage::kRelease:
    case ExpertStage::kDone: moving = false; break;
  }
  if (moving && cfg.expert_jitter > 0.0) {
    std::normal_distribution<double> n(0.0, cfg.expert_jitter);
    a.target_pos.x += n(rng);
    a.target_pos.y += n(rng);
  }
  return a;
}

}  // namespace vtp::sim
