#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "vtp/eval/experiment.hpp"

namespace vtp::app {

// Subcommands in pipeline order.
const std::vector<std::string>& command_names();

// Built-in settings of a command; every key a config file may set.
nlohmann::json default_settings(const std::string& command);

// Overlays `patch` onto `base`. Keys absent from `base` raise kInvalidArgument
// naming the dotted path; objects merge recursively, anything else replaces.
void merge_strict(nlohmann::json& base, const nlohmann::json& patch, const std::string& path = "");

// "a.b=3" -> {"a.b", 3}. The value is parsed as JSON, falling back to a string.
std::pair<std::string, nlohmann::json> parse_override(const std::string& text);

// Defaults, then the command's section of `file` (an object keyed by command
// name; null for none), then the overrides in order.
nlohmann::json resolve_settings(const std::string& command, const nlohmann::json& file,
                                const std::vector<std::pair<std::string, nlohmann::json>>& overrides);

// VTP_OUTPUT_ROOT if set, else the working directory.
std::filesystem::path output_root_from_env();

// Relative paths resolve under `root`.
std::filesystem::path resolve_path(const std::filesystem::path& root, const std::string& p);

// A checkpoint argument may name the file or the directory a training command wrote.
std::filesystem::path checkpoint_file(const std::filesystem::path& p);
inline constexpr const char* kCheckpointFile = "checkpoint.ckpt";
inline constexpr const char* kResolvedConfigFile = "resolved_config.json";

// The experiment row matching how a checkpoint was trained.
eval::ExperimentConfig experiment_for(const model::Checkpoint& ckpt);

// Runs a command with resolved settings. Every command writes its outputs and
// resolved_config.json into its `out` directory. Failures raise vtp::Error;
// eval also raises after writing its table if any row failed.
void run_command(const std::string& command, const nlohmann::json& settings, const std::filesystem::path& root);

}  // namespace vtp::app
