#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vtp/model/checkpoint.hpp"
#include "vtp/policy/policy.hpp"
#include "vtp/sim/world.hpp"

namespace vtp::eval {

enum class PolicyKind { kDiffusion, kAct, kExpert };

std::string to_string(PolicyKind kind);
PolicyKind parse_policy_kind(const std::string& s);

// One row of the experiment matrix. The condition flags describe how the
// checkpoint was trained; run_matrix checks them against the checkpoint
// instead of altering the policy at inference.
struct ExperimentConfig {
  std::string name;  // empty: derived from the condition
  PolicyKind kind = PolicyKind::kDiffusion;
  bool pretrained = false;
  bool vision_only = false;
  bool freeze_tactile = false;
  int trials = 20;
  double goal_noise = 0.0025;  // m
  std::uint64_t seed = 0;      // trial i runs seed + i
  int drift_steps = 0;         // bead-layout drift applied before every trial
  int step_cap = 0;            // 0: environment's
  std::filesystem::path checkpoint;

  void validate() const;
  std::string label() const;
  std::uint64_t trial_seed(int trial) const { return seed + static_cast<std::uint64_t>(trial); }
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

struct TrialOutcome {
  std::uint64_t seed = 0;
  bool success = false;
  int steps = 0;

  friend bool operator==(const TrialOutcome&, const TrialOutcome&) = default;
};

struct ResultRow {
  ExperimentConfig config;
  std::vector<TrialOutcome> outcomes;
  std::optional<std::string> error;  // set when the row could not run
  double seconds = 0.0;

  int successes() const;
  double success_rate() const;  // successes / trials; 0 for failed rows
};

struct ResultsTable {
  std::vector<ResultRow> rows;

  // Fixed-width table; runtime column only when asked, so files stay reproducible.
  std::string to_text(bool with_runtime = false) const;
  // One line per trial: label, kind, flags, seed, success, steps.
  std::string to_csv() const;
  nlohmann::json to_json() const;
};

// Builds the policy a checkpoint describes; kind comes from the checkpoint.
std::unique_ptr<policy::Policy> load_policy(const model::Checkpoint& ckpt);

// Raises kContract when the checkpoint was not trained under `cfg`'s
// condition, and kShapeMismatch when its observation shapes differ from `env`.
void check_condition(const ExperimentConfig& cfg, const model::Checkpoint& ckpt, const sim::EnvConfig& env);

// Runs cfg.trials seeded rollouts of `policy`, each in a fresh environment.
std::vector<TrialOutcome> run_trials(const sim::EnvConfig& env, policy::Policy& policy, const ExperimentConfig& cfg);

// Every row runs independently; a missing or mismatched checkpoint fills
// that row's error and the rest proceed.
ResultsTable run_matrix(const sim::EnvConfig& env, std::span<const ExperimentConfig> configs);

}  // namespace vtp::eval
