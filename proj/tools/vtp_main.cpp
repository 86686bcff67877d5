#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <optional>

#include "vtp/app/commands.hpp"
#include "vtp/error.hpp"
#include "vtp/model/checkpoint.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Invocation {
  std::string config_file;
  std::string output_root;
  std::vector<std::string> sets;
  std::vector<std::pair<std::string, json>> flags;

  // eval shortcuts
  std::vector<std::string> checkpoints;
  bool expert = false;
  std::optional<int> trials;
  std::optional<std::uint64_t> seed;
  std::optional<double> noise;
};

template <class T>
void flag(CLI::App* sub, Invocation& inv, const std::string& name, const std::string& key, const std::string& help) {
  sub->add_option_function<T>(name, [&inv, key](const T& v) { inv.flags.emplace_back(key, json(v)); }, help);
}

void switch_flag(CLI::App* sub, Invocation& inv, const std::string& name, const std::string& key,
                 const std::string& help) {
  sub->add_flag_callback(name, [&inv, key] { inv.flags.emplace_back(key, true); }, help);
}

json read_config(const std::string& path) {
  if (path.empty()) return nullptr;
  std::ifstream f(path);
  vtp::require(f.good(), vtp::ErrorCode::kMissingInput, "config file not found: " + path);
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    vtp::fail(vtp::ErrorCode::kInvalidArgument, "config file " + path + ": " + e.what());
  }
}

json eval_rows(const Invocation& inv, const fs::path& root) {
  json rows = json::array();
  auto finish = [&](vtp::eval::ExperimentConfig c) {
    if (inv.trials) c.trials = *inv.trials;
    if (inv.seed) c.seed = *inv.seed;
    if (inv.noise) c.goal_noise = *inv.noise;
    rows.push_back(c);
  };
  for (const auto& p : inv.checkpoints) {
    const fs::path file = vtp::app::checkpoint_file(vtp::app::resolve_path(root, p));
    vtp::eval::ExperimentConfig c;
    // A missing file still gets a row so the table reports it.
    if (fs::exists(file)) c = vtp::app::experiment_for(vtp::model::load_checkpoint(file));
    c.checkpoint = p;
    finish(c);
  }
  if (inv.expert) {
    vtp::eval::ExperimentConfig c;
    c.kind = vtp::eval::PolicyKind::kExpert;
    finish(c);
  }
  return rows;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Visuo-tactile imitation learning pipeline on a simulated cable-plugging task"};
  app.require_subcommand(1);
  Invocation inv;

  std::vector<CLI::App*> subs;
  auto add = [&](const std::string& name, const std::string& help) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", inv.config_file, "JSON config keyed by command name");
    sub->add_option("--set", inv.sets, "key=value override, dotted keys (repeatable)");
    sub->add_option("--output-root", inv.output_root, "base for relative paths (default $VTP_OUTPUT_ROOT or cwd)");
    subs.push_back(sub);
    return sub;
  };

  auto* gen = add("gen-demos", "record scripted-expert demonstrations");
  flag<int>(gen, inv, "-n,--n", "n", "episodes");
  flag<std::uint64_t>(gen, inv, "--seed", "seed", "seed of the first episode");
  flag<std::string>(gen, inv, "-o,--out", "out", "dataset directory");
  flag<int>(gen, inv, "--drift-steps", "drift_steps", "bead-layout drift applied before recording");

  auto* pre = add("pretrain", "contrastive visuo-tactile encoder pretraining");
  flag<std::string>(pre, inv, "-d,--dataset", "dataset", "dataset directory");
  flag<std::string>(pre, inv, "-o,--out", "out", "output directory");
  flag<int>(pre, inv, "--updates", "pretrain.max_updates", "update cap (0: epochs x episodes)");
  flag<std::uint64_t>(pre, inv, "--seed", "pretrain.seed", "seed");

  auto* dif = add("train-diffusion", "train a diffusion policy");
  flag<std::string>(dif, inv, "-d,--dataset", "dataset", "dataset directory");
  flag<std::string>(dif, inv, "-p,--pretrained", "pretrained", "pretrain checkpoint (file or directory)");
  flag<std::string>(dif, inv, "-o,--out", "out", "output directory");
  flag<int>(dif, inv, "--updates", "diffusion.updates", "optimizer updates");
  flag<std::uint64_t>(dif, inv, "--seed", "diffusion.seed", "seed");
  switch_flag(dif, inv, "--vision-only", "diffusion.vision_only", "train without tactile input");
  switch_flag(dif, inv, "--freeze-tactile", "diffusion.freeze_tactile", "keep the pretrained tactile encoder fixed");

  auto* act = add("train-act", "train an action-chunking transformer policy");
  flag<std::string>(act, inv, "-d,--dataset", "dataset", "dataset directory");
  flag<std::string>(act, inv, "-p,--pretrained", "pretrained", "pretrain checkpoint (file or directory)");
  flag<std::string>(act, inv, "-o,--out", "out", "output directory");
  flag<int>(act, inv, "--updates", "act.updates", "optimizer updates");
  flag<std::uint64_t>(act, inv, "--seed", "act.seed", "seed");
  switch_flag(act, inv, "--vision-only", "act.vision_only", "train without tactile input");

  auto* ev = add("eval", "run the experiment matrix");
  flag<std::string>(ev, inv, "-d,--dataset", "dataset", "dataset whose environment config is used");
  flag<std::string>(ev, inv, "-o,--out", "out", "output directory");
  ev->add_option("--checkpoint", inv.checkpoints, "add a row for this policy checkpoint (repeatable)");
  ev->add_flag("--expert", inv.expert, "add a scripted-expert row");
  ev->add_option("--trials", inv.trials, "trials for rows added by flags");
  ev->add_option("--seed", inv.seed, "first trial seed for rows added by flags");
  ev->add_option("--noise", inv.noise, "goal noise sigma in m for rows added by flags");

  auto* ts = add("tsne-report", "tactile embedding shift diagnostic");
  flag<std::string>(ts, inv, "--checkpoint", "checkpoint", "checkpoint with a tactile encoder");
  flag<std::string>(ts, inv, "--train", "train", "training dataset");
  flag<std::string>(ts, inv, "--test", "test", "test dataset");
  flag<std::string>(ts, inv, "-o,--out", "out", "output directory");
  flag<int>(ts, inv, "--stride", "stride", "timestep stride");

  CLI11_PARSE(app, argc, argv);

  std::string command;
  for (auto* s : subs)
    if (s->parsed()) command = s->get_name();

  try {
    const fs::path root = inv.output_root.empty() ? vtp::app::output_root_from_env() : fs::path(inv.output_root);
    auto overrides = inv.flags;
    for (const auto& s : inv.sets) overrides.push_back(vtp::app::parse_override(s));
    auto settings = vtp::app::resolve_settings(command, read_config(inv.config_file), overrides);
    if (command == "eval")
      for (auto& row : eval_rows(inv, root)) settings["experiments"].push_back(std::move(row));
    vtp::app::run_command(command, settings, root);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "vtp %s: %s\n", command.c_str(), e.what());
    return 1;
  }
  return 0;
}
