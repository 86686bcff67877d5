#include "vtp/app/commands.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "vtp/act/act.hpp"
#include "vtp/data/dataset.hpp"
#include "vtp/diffusion/policy.hpp"
#include "vtp/error.hpp"
#include "vtp/eval/embedding.hpp"
#include "vtp/eval/tsne.hpp"
#include "vtp/log.hpp"
#include "vtp/pretrain/pretrain.hpp"

namespace vtp::app {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), ErrorCode::kIo, "cannot write " + path.string());
  f << text;
  require(f.good(), ErrorCode::kIo, "write failed: " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

fs::path prepare_out(const fs::path& root, const json& settings) {
  const fs::path out = resolve_path(root, settings.at("out").get<std::string>());
  std::error_code ec;
  fs::create_directories(out, ec);
  require(!ec && fs::is_directory(out), ErrorCode::kIo, "cannot create output directory " + out.string());
  return out;
}

void write_resolved(const fs::path& out, const std::string& command, const json& settings) {
  write_json(out / kResolvedConfigFile, {{"command", command}, {"settings", settings}});
}

void write_losses(const fs::path& path, const std::vector<double>& losses) {
  std::ostringstream os;
  os << "update,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < losses.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i + 1, losses[i]);
    os << buf;
  }
  write_text(path, os.str());
}

data::Dataset load_dataset(const fs::path& root, const json& settings, const char* key = "dataset") {
  const fs::path dir = resolve_path(root, settings.at(key).get<std::string>());
  require(fs::exists(dir / data::kManifestName), ErrorCode::kMissingInput,
          std::string(key) + ": no dataset at " + dir.string() + " (run gen-demos first)");
  auto d = data::Dataset::load(dir);
  require(!d.episodes.empty(), ErrorCode::kMissingInput, std::string(key) + ": dataset at " + dir.string() + " is empty");
  return d;
}

model::Checkpoint load_input_checkpoint(const fs::path& root, const std::string& p, const char* what) {
  const fs::path file = checkpoint_file(resolve_path(root, p));
  require(fs::exists(file), ErrorCode::kMissingInput, std::string(what) + ": checkpoint not found: " + file.string());
  return model::load_checkpoint(file);
}

void save_training(const fs::path& out, const std::string& command, const json& settings,
                   const model::Checkpoint& ckpt, const std::vector<double>& losses) {
  model::save_checkpoint(out / kCheckpointFile, ckpt);
  write_losses(out / "losses.csv", losses);
  write_resolved(out, command, settings);
  log::info(command + ": wrote " + (out / kCheckpointFile).string());
}

void cmd_gen_demos(const json& s, const fs::path& root) {
  const int n = s.at("n").get<int>();
  require(n > 0, ErrorCode::kInvalidArgument, "gen-demos: n must be > 0");
  const int drift_steps = s.at("drift_steps").get<int>();
  require(drift_steps >= 0, ErrorCode::kInvalidArgument, "gen-demos: drift_steps must be >= 0");
  const auto env_cfg = s.at("env").get<sim::EnvConfig>();
  const auto seed = s.at("seed").get<std::uint64_t>();
  const bool drift_each = s.at("drift_each_episode").get<bool>();
  const double noise = s.at("goal_noise").get<double>();
  const fs::path out = prepare_out(root, s);

  // Rerunning replaces an earlier dataset in place.
  for (const auto& entry : fs::directory_iterator(out))
    if (entry.path().extension() == ".vtpe" || entry.path().filename() == data::kManifestName)
      fs::remove(entry.path());

  sim::Environment env(env_cfg);
  for (int k = 0; k < drift_steps; ++k) env.mutable_layout().drift_step();
  data::Manifest manifest;
  manifest.env_config = env_cfg;
  int successes = 0;
  for (int i = 0; i < n; ++i) {
    const std::uint64_t ep_seed = seed + static_cast<std::uint64_t>(i);
    const auto ep = data::record_episode(env, data::expert_controller(env_cfg, ep_seed),
                                         {.seed = ep_seed, .drift = drift_each, .goal_noise = noise});
    successes += ep.meta.success ? 1 : 0;
    data::append_episode(out, manifest, ep);
  }
  manifest.save(out);
  write_resolved(out, "gen-demos", s);
  log::info("gen-demos: " + std::to_string(n) + " episodes (" + std::to_string(successes) + " successful) in " +
            out.string());
}

void cmd_pretrain(const json& s, const fs::path& root) {
  const auto cfg = s.at("pretrain").get<pretrain::PretrainConfig>();
  cfg.validate();
  const auto d = load_dataset(root, s);
  const fs::path out = prepare_out(root, s);
  const auto r = pretrain::pretrain(d.episodes, cfg);
  save_training(out, "pretrain", s, r.checkpoint, r.losses);
}

void cmd_train_diffusion(const json& s, const fs::path& root) {
  const auto cfg = s.at("diffusion").get<diffusion::DiffusionConfig>();
  cfg.validate();
  const auto d = load_dataset(root, s);
  std::optional<model::Checkpoint> pre;
  if (const auto p = s.at("pretrained").get<std::string>(); !p.empty()) pre = load_input_checkpoint(root, p, "pretrained");
  const fs::path out = prepare_out(root, s);
  const auto r = diffusion::train_diffusion(d.episodes, cfg, pre ? &*pre : nullptr);
  save_training(out, "train-diffusion", s, r.checkpoint, r.losses);
}

void cmd_train_act(const json& s, const fs::path& root) {
  const auto cfg = s.at("act").get<act::ActConfig>();
  cfg.validate();
  const auto d = load_dataset(root, s);
  std::optional<model::Checkpoint> pre;
  if (const auto p = s.at("pretrained").get<std::string>(); !p.empty()) pre = load_input_checkpoint(root, p, "pretrained");
  const fs::path out = prepare_out(root, s);
  const auto r = act::train_act(d.episodes, cfg, pre ? &*pre : nullptr);
  save_training(out, "train-act", s, r.checkpoint, r.losses);
}

void cmd_eval(const json& s, const fs::path& root) {
  std::vector<eval::ExperimentConfig> rows;
  for (const auto& item : s.at("experiments")) {
    json base = eval::ExperimentConfig{};
    merge_strict(base, item, "experiments[]");
    rows.push_back(base.get<eval::ExperimentConfig>());
  }
  require(!rows.empty(), ErrorCode::kMissingInput, "eval: no experiments configured (pass --checkpoint or --expert)");
  const fs::path dataset = resolve_path(root, s.at("dataset").get<std::string>());
  require(fs::exists(dataset / data::kManifestName), ErrorCode::kMissingInput,
          "eval: the environment comes from a dataset manifest; none at " + dataset.string());
  const auto env = data::Manifest::load(dataset).env_config.get<sim::EnvConfig>();

  auto resolved = rows;
  for (auto& r : resolved)
    if (!r.checkpoint.empty()) r.checkpoint = checkpoint_file(resolve_path(root, r.checkpoint.string()));
  auto table = eval::run_matrix(env, resolved);
  for (std::size_t i = 0; i < rows.size(); ++i) table.rows[i].config = rows[i];

  const fs::path out = prepare_out(root, s);
  write_text(out / "results.txt", table.to_text());
  write_text(out / "results.csv", table.to_csv());
  write_json(out / "results.json", table.to_json());
  write_resolved(out, "eval", s);
  std::fputs(table.to_text(true).c_str(), stdout);

  int failed = 0;
  std::string first;
  for (const auto& r : table.rows)
    if (r.error && failed++ == 0) first = r.config.label() + ": " + *r.error;
  require(failed == 0, ErrorCode::kMissingInput,
          "eval: " + std::to_string(failed) + " row(s) failed; first: " + first);
}

void cmd_tsne_report(const json& s, const fs::path& root) {
  const auto cfg = s.at("tsne").get<eval::TsneConfig>();
  cfg.validate();
  const int stride = s.at("stride").get<int>();
  const int max_points = s.at("max_points").get<int>();
  require(max_points >= 4, ErrorCode::kInvalidArgument, "tsne-report: max_points must be >= 4");
  const auto ckpt = load_input_checkpoint(root, s.at("checkpoint").get<std::string>(), "checkpoint");
  const auto train = load_dataset(root, s, "train");
  const auto test = load_dataset(root, s, "test");
  require(train.episodes.size() >= 2, ErrorCode::kMissingInput, "tsne-report: the train set needs two episodes");

  const auto e_train = eval::embed_dataset(ckpt, train.episodes, {.stride = stride});
  const auto e_test = eval::embed_dataset(ckpt, test.episodes, {.stride = stride});
  const std::size_t half = train.episodes.size() / 2;
  const std::span<const data::Episode> all(train.episodes);
  const auto e_a = eval::embed_dataset(ckpt, all.subspan(0, half), {.stride = stride});
  const auto e_b = eval::embed_dataset(ckpt, all.subspan(half), {.stride = stride});
  const double shift = eval::shift_score(e_train, e_test);
  const double baseline = eval::shift_score(e_a, e_b);

  // Even subsample of each set keeps the exact O(n^2) layout affordable.
  auto thin = [](const eval::Matrix& m, std::int64_t keep) {
    if (m.rows <= keep) return m;
    eval::Matrix out(keep, m.cols);
    for (std::int64_t i = 0; i < keep; ++i) {
      const auto src = i * m.rows / keep;
      std::copy(m.row(src).begin(), m.row(src).end(), out.values.begin() + i * m.cols);
    }
    return out;
  };
  const auto n_total = e_train.rows + e_test.rows;
  const std::int64_t keep_train = std::max<std::int64_t>(2, max_points * e_train.rows / std::max<std::int64_t>(1, n_total));
  const auto x_train = thin(e_train, keep_train), x_test = thin(e_test, max_points - keep_train);
  const auto r = eval::tsne(eval::Matrix::vstack(x_train, x_test), cfg);

  double worst_entropy = 0.0;
  for (double h : r.affinities.entropy) worst_entropy = std::max(worst_entropy, std::abs(h - std::log(r.perplexity)));

  const fs::path out = prepare_out(root, s);
  std::ostringstream layout;
  layout << "set,x,y\n";
  char buf[96];
  for (std::int64_t i = 0; i < r.layout.rows; ++i) {
    std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g\n", i < x_train.rows ? "train" : "test", r.layout.at(i, 0),
                  r.layout.at(i, 1));
    layout << buf;
  }
  write_text(out / "layout.csv", layout.str());
  write_losses(out / "kl.csv", r.kl);
  write_json(out / "shift_score.json", {{"shift_score", shift},
                                        {"train_halves_score", baseline},
                                        {"ratio", baseline > 0.0 ? shift / baseline : 0.0},
                                        {"train_rows", e_train.rows},
                                        {"test_rows", e_test.rows},
                                        {"layout_points", r.layout.rows},
                                        {"perplexity", r.perplexity},
                                        {"max_entropy_error", worst_entropy},
                                        {"final_kl", r.kl.back()}});
  write_resolved(out, "tsne-report", s);
  log::info("tsne-report: shift score " + std::to_string(shift) + " vs train halves " + std::to_string(baseline));
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"gen-demos", "pretrain",  "train-diffusion",
                                              "train-act", "eval",      "tsne-report"};
  return names;
}

json default_settings(const std::string& command) {
  if (command == "gen-demos")
    return {{"n", 100}, {"seed", 0}, {"out", "demos"}, {"drift_steps", 0}, {"drift_each_episode", false},
            {"goal_noise", 0.0}, {"env", sim::EnvConfig{}}};
  if (command == "pretrain") return {{"dataset", "demos"}, {"out", "pretrain"}, {"pretrain", pretrain::PretrainConfig{}}};
  if (command == "train-diffusion")
    return {{"dataset", "demos"}, {"pretrained", ""}, {"out", "diffusion"}, {"diffusion", diffusion::DiffusionConfig{}}};
  if (command == "train-act")
    return {{"dataset", "demos"}, {"pretrained", ""}, {"out", "act"}, {"act", act::ActConfig{}}};
  if (command == "eval") return {{"dataset", "demos"}, {"out", "eval"}, {"experiments", json::array()}};
  if (command == "tsne-report")
    return {{"checkpoint", "pretrain"}, {"train", "demos"}, {"test", "demos_drift"}, {"stride", 2},
            {"max_points", 600}, {"out", "tsne"}, {"tsne", eval::TsneConfig{}}};
  fail(ErrorCode::kInvalidArgument, "unknown command '" + command + "'");
}

void merge_strict(json& base, const json& patch, const std::string& path) {
  require(patch.is_object(), ErrorCode::kInvalidArgument,
          "expected an object" + (path.empty() ? std::string() : " at '" + path + "'"));
  for (const auto& [key, value] : patch.items()) {
    const std::string where = path.empty() ? key : path + "." + key;
    require(base.contains(key), ErrorCode::kInvalidArgument, "unknown key '" + where + "'");
    auto& slot = base[key];
    if (slot.is_object() && value.is_object()) {
      merge_strict(slot, value, where);
      continue;
    }
    const bool both_numbers = slot.is_number() && value.is_number();
    require(both_numbers || slot.type() == value.type(), ErrorCode::kInvalidArgument,
            "key '" + where + "' expects a " + std::string(slot.type_name()) + ", got " + value.type_name());
    slot = value;
  }
}

std::pair<std::string, json> parse_override(const std::string& text) {
  const auto eq = text.find('=');
  require(eq != std::string::npos && eq > 0, ErrorCode::kInvalidArgument, "override '" + text + "' is not key=value");
  const std::string key = text.substr(0, eq), raw = text.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  return {key, value};
}

json resolve_settings(const std::string& command, const json& file,
                      const std::vector<std::pair<std::string, json>>& overrides) {
  json s = default_settings(command);
  if (!file.is_null()) {
    require(file.is_object(), ErrorCode::kInvalidArgument, "config file must hold an object keyed by command");
    for (const auto& [key, value] : file.items()) {
      const auto& names = command_names();
      require(std::find(names.begin(), names.end(), key) != names.end(), ErrorCode::kInvalidArgument,
              "unknown config section '" + key + "'");
    }
    if (file.contains(command)) merge_strict(s, file.at(command));
  }
  for (const auto& [key, value] : overrides) {
    // Dotted key -> nested patch.
    json patch = value;
    std::string rest = key;
    std::vector<std::string> parts;
    for (std::size_t dot; (dot = rest.find('.')) != std::string::npos; rest = rest.substr(dot + 1))
      parts.push_back(rest.substr(0, dot));
    parts.push_back(rest);
    for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, patch}};
    merge_strict(s, patch);
  }
  return s;
}

fs::path output_root_from_env() {
  if (const char* env = std::getenv("VTP_OUTPUT_ROOT"); env != nullptr && *env != '\0') return env;
  return fs::current_path();
}

fs::path resolve_path(const fs::path& root, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : root / path;
}

fs::path checkpoint_file(const fs::path& p) { return fs::is_directory(p) ? p / kCheckpointFile : p; }

eval::ExperimentConfig experiment_for(const model::Checkpoint& ckpt) {
  eval::ExperimentConfig c;
  c.kind = eval::parse_policy_kind(ckpt.kind);
  c.vision_only = ckpt.config.at(ckpt.kind).at("vision_only").get<bool>();
  c.pretrained = ckpt.config.at("pretrained").get<bool>();
  c.freeze_tactile = ckpt.is_frozen("tactile_encoder");
  return c;
}

void run_command(const std::string& command, const json& settings, const fs::path& root) {
  if (command == "gen-demos") return cmd_gen_demos(settings, root);
  if (command == "pretrain") return cmd_pretrain(settings, root);
  if (command == "train-diffusion") return cmd_train_diffusion(settings, root);
  if (command == "train-act") return cmd_train_act(settings, root);
  if (command == "eval") return cmd_eval(settings, root);
  if (command == "tsne-report") return cmd_tsne_report(settings, root);
  fail(ErrorCode::kInvalidArgument, "unknown command '" + command + "'");
}

}  // namespace vtp::app
