#include "vtp/eval/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <sstream>

#include "vtp/act/act.hpp"
#include "vtp/diffusion/policy.hpp"
#include "vtp/error.hpp"
#include "vtp/log.hpp"

namespace vtp::eval {

std::string to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::kDiffusion: return "diffusion";
    case PolicyKind::kAct: return "act";
    case PolicyKind::kExpert: return "expert";
  }
  return "?";
}

PolicyKind parse_policy_kind(const std::string& s) {
  if (s == "diffusion") return PolicyKind::kDiffusion;
  if (s == "act") return PolicyKind::kAct;
  if (s == "expert") return PolicyKind::kExpert;
  fail(ErrorCode::kInvalidArgument, "unknown policy kind '" + s + "' (diffusion, act, expert)");
}

void ExperimentConfig::validate() const {
  require(trials > 0, ErrorCode::kInvalidArgument, "trials must be > 0");
  require(goal_noise >= 0.0, ErrorCode::kInvalidArgument, "goal_noise must be >= 0");
  require(drift_steps >= 0 && step_cap >= 0, ErrorCode::kInvalidArgument, "drift_steps and step_cap must be >= 0");
  require(!freeze_tactile || kind == PolicyKind::kDiffusion, ErrorCode::kInvalidArgument,
          "freeze_tactile is only defined for diffusion policies");
  require(!(freeze_tactile && vision_only), ErrorCode::kInvalidArgument, "a vision-only policy has no tactile encoder");
  require(!freeze_tactile || pretrained, ErrorCode::kInvalidArgument, "freeze_tactile needs a pretrained encoder");
  require(kind != PolicyKind::kExpert || checkpoint.empty(), ErrorCode::kInvalidArgument,
          "the expert takes no checkpoint");
}

std::string ExperimentConfig::label() const {
  if (!name.empty()) return name;
  if (kind == PolicyKind::kExpert) return "expert";
  std::string s = to_string(kind);
  s += pretrained ? (freeze_tactile ? "/pretrained-frozen" : "/pretrained") : "/scratch";
  s += vision_only ? "/vision" : "/visuotactile";
  return s;
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = {{"name", c.name},
       {"kind", to_string(c.kind)},
       {"pretrained", c.pretrained},
       {"vision_only", c.vision_only},
       {"freeze_tactile", c.freeze_tactile},
       {"trials", c.trials},
       {"goal_noise", c.goal_noise},
       {"seed", c.seed},
       {"drift_steps", c.drift_steps},
       {"step_cap", c.step_cap},
       {"checkpoint", c.checkpoint.string()}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  j.at("name").get_to(c.name);
  c.kind = parse_policy_kind(j.at("kind").get<std::string>());
  j.at("pretrained").get_to(c.pretrained);
  j.at("vision_only").get_to(c.vision_only);
  j.at("freeze_tactile").get_to(c.freeze_tactile);
  j.at("trials").get_to(c.trials);
  j.at("goal_noise").get_to(c.goal_noise);
  j.at("seed").get_to(c.seed);
  j.at("drift_steps").get_to(c.drift_steps);
  j.at("step_cap").get_to(c.step_cap);
  c.checkpoint = j.at("checkpoint").get<std::string>();
}

int ResultRow::successes() const {
  int n = 0;
  for (const auto& o : outcomes) n += o.success ? 1 : 0;
  return n;
}

double ResultRow::success_rate() const {
  if (error || outcomes.empty()) return 0.0;
  return static_cast<double>(successes()) / static_cast<double>(outcomes.size());
}

std::string ResultsTable::to_text(bool with_runtime) const {
  std::size_t width = 10;
  for (const auto& r : rows) width = std::max(width, r.config.label().size());
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s  %9s  %6s", static_cast<int>(width), "condition", "successes", "rate");
  os << buf << (with_runtime ? "  runtime_s" : "") << "\n";
  for (const auto& r : rows) {
    const std::string label = r.config.label();
    if (r.error) {
      std::snprintf(buf, sizeof buf, "%-*s  error: ", static_cast<int>(width), label.c_str());
      os << buf << *r.error << "\n";
      continue;
    }
    std::snprintf(buf, sizeof buf, "%-*s  %4d/%-4zu  %6.3f", static_cast<int>(width), label.c_str(), r.successes(),
                  r.outcomes.size(), r.success_rate());
    os << buf;
    if (with_runtime) {
      std::snprintf(buf, sizeof buf, "  %9.1f", r.seconds);
      os << buf;
    }
    os << "\n";
  }
  return os.str();
}

std::string ResultsTable::to_csv() const {
  std::ostringstream os;
  os << "condition,kind,pretrained,vision_only,freeze_tactile,seed,success,steps\n";
  for (const auto& r : rows) {
    const auto& c = r.config;
    for (const auto& o : r.outcomes)
      os << c.label() << ',' << to_string(c.kind) << ',' << c.pretrained << ',' << c.vision_only << ','
         << c.freeze_tactile << ',' << o.seed << ',' << o.success << ',' << o.steps << "\n";
  }
  return os.str();
}

nlohmann::json ResultsTable::to_json() const {
  auto out = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json row = {{"condition", r.config.label()}, {"config", r.config}};
    if (r.error) {
      row["error"] = *r.error;
    } else {
      row["successes"] = r.successes();
      row["trials"] = r.outcomes.size();
      row["success_rate"] = r.success_rate();
      auto trials = nlohmann::json::array();
      for (const auto& o : r.outcomes) trials.push_back({{"seed", o.seed}, {"success", o.success}, {"steps", o.steps}});
      row["outcomes"] = std::move(trials);
    }
    out.push_back(std::move(row));
  }
  return out;
}

std::unique_ptr<policy::Policy> load_policy(const model::Checkpoint& ckpt) {
  if (ckpt.kind == "diffusion") return diffusion::DiffusionPolicy::from_checkpoint(ckpt);
  if (ckpt.kind == "act") return act::ActPolicy::from_checkpoint(ckpt);
  fail(ErrorCode::kInvalidArgument, "checkpoint of kind '" + ckpt.kind + "' is not a policy");
}

void check_condition(const ExperimentConfig& cfg, const model::Checkpoint& ckpt, const sim::EnvConfig& env) {
  require(ckpt.kind == to_string(cfg.kind), ErrorCode::kContract,
          "row expects a " + to_string(cfg.kind) + " checkpoint, got '" + ckpt.kind + "'");
  const auto& policy_cfg = ckpt.config.at(ckpt.kind);
  const bool vision_only = policy_cfg.at("vision_only").get<bool>();
  const bool pretrained = ckpt.config.at("pretrained").get<bool>();
  const bool frozen = ckpt.is_frozen("tactile_encoder");
  require(vision_only == cfg.vision_only, ErrorCode::kContract,
          std::string("checkpoint was trained ") + (vision_only ? "vision-only" : "visuo-tactile") +
              "; vision-only is a training-time condition");
  require(pretrained == cfg.pretrained, ErrorCode::kContract,
          std::string("checkpoint ") + (pretrained ? "is" : "is not") + " pretrained");
  require(frozen == cfg.freeze_tactile, ErrorCode::kContract,
          std::string("checkpoint tactile encoder ") + (frozen ? "is" : "is not") + " frozen");
  const int cams = ckpt.config.at("num_cameras").get<int>();
  const int image = ckpt.config.at("image_size").get<int>();
  const int tactile = ckpt.config.at("tactile_size").get<int>();
  require(cams == env.num_cameras && image == env.image_size && tactile == env.tactile_size,
          ErrorCode::kShapeMismatch,
          "checkpoint observes " + std::to_string(cams) + " cameras at " + std::to_string(image) + " px, tactile " +
              std::to_string(tactile) + " px; environment differs");
}

std::vector<TrialOutcome> run_trials(const sim::EnvConfig& env_cfg, policy::Policy& policy,
                                     const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<TrialOutcome> out;
  out.reserve(static_cast<std::size_t>(cfg.trials));
  for (int i = 0; i < cfg.trials; ++i) {
    sim::Environment env(env_cfg);
    for (int k = 0; k < cfg.drift_steps; ++k) env.mutable_layout().drift_step();
    const std::uint64_t seed = cfg.trial_seed(i);
    const auto r = policy::rollout(env, policy,
                                   {.seed = seed,
                                    .drift = false,
                                    .goal_noise = cfg.goal_noise,
                                    .step_cap = cfg.step_cap > 0 ? cfg.step_cap : env_cfg.step_cap});
    out.push_back({seed, r.success, r.steps});
  }
  return out;
}

ResultsTable run_matrix(const sim::EnvConfig& env, std::span<const ExperimentConfig> configs) {
  ResultsTable table;
  for (const auto& cfg : configs) {
    ResultRow row;
    row.config = cfg;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      cfg.validate();
      std::unique_ptr<policy::Policy> policy;
      if (cfg.kind == PolicyKind::kExpert) {
        policy = std::make_unique<policy::ExpertPolicy>(env);
      } else {
        require(!cfg.checkpoint.empty(), ErrorCode::kMissingInput, "no checkpoint given");
        require(std::filesystem::exists(cfg.checkpoint), ErrorCode::kMissingInput,
                "checkpoint not found: " + cfg.checkpoint.string());
        const auto ckpt = model::load_checkpoint(cfg.checkpoint);
        check_condition(cfg, ckpt, env);
        policy = load_policy(ckpt);
      }
      row.outcomes = run_trials(env, *policy, cfg);
    } catch (const std::exception& e) {
      row.error = e.what();
      log::warn(cfg.label() + ": " + e.what());
    }
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!row.error)
      log::info(cfg.label() + ": " + std::to_string(row.successes()) + "/" + std::to_string(cfg.trials) +
                " successes");
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace vtp::eval
