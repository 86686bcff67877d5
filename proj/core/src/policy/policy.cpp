#include "vtp/policy/policy.hpp"

#include "vtp/sim/expert.hpp"
#include "vtp/sim/render.hpp"

namespace vtp::policy {

sim::ActionCommand ExpertPolicy::act(const data::Observation&, const sim::WorldState& state) {
  return sim::scripted_expert(cfg_, state, rng_);
}

RolloutResult rollout(sim::Environment& env, Policy& policy, const RolloutOptions& opt) {
  const sim::EnvConfig& cfg = env.config();
  sim::WorldState state = env.reset(opt.seed, opt.drift);
  Rng tactile_rng = make_rng(opt.seed, Stream::kTactile);
  Rng noise_rng = make_rng(opt.seed, Stream::kGoalNoise);
  policy.reset(opt.seed);

  data::Observation obs;
  RolloutResult result;
  for (int t = 0; t < opt.step_cap; ++t) {
    const sim::Image frame = data::quantized(sim::render_tactile(cfg, state, env.layout(), tactile_rng));
    if (t == 0)
      obs.tactile = data::TactileWindow::init(frame, policy.tactile_horizon());
    else
      obs.tactile.push(frame);
    obs.views = sim::render_views(cfg, state, cfg.num_cameras);
    for (auto& v : obs.views) v = data::quantized(v);
    obs.proprio = sim::proprio(state);

    const sim::ActionCommand action = policy.act(obs, state);
    state = env.step(state, sim::inject_goal_noise(action, opt.goal_noise, noise_rng));
    result.steps = t + 1;
    if (sim::check_success(cfg, state)) {
      result.success = true;
      break;
    }
  }
  result.final_state = state;
  return result;
}

}  // namespace vtp::policy
