#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "vtp/nn/layers.hpp"

namespace vtp::model {

// Named parameter arrays plus JSON config and bookkeeping. Components are the
// first segment of parameter names ("tactile_encoder.trunk.conv0.weight"
// belongs to "tactile_encoder").
//
// On disk: a container with magic "VTPCKPT1", meta
//   {"kind", "config", "extra", "frozen": [component...]}
// and one f64 array per parameter, named as the parameter.
struct Checkpoint {
  std::string kind;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json extra = nlohmann::json::object();
  std::vector<nn::NamedTensor> params;
  std::vector<std::string> frozen;

  bool has_component(const std::string& component) const;
  bool is_frozen(const std::string& component) const;
  std::vector<std::string> components() const;
  const nn::Tensor& param(const std::string& name) const;
};

inline constexpr const char* kCheckpointMagic = "VTPCKPT1";

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copy of `ckpt` with `component` flagged frozen; unknown names raise kUnknownComponent.
Checkpoint freeze(Checkpoint ckpt, const std::string& component);

// Deep copies of a module's parameters under `prefix`.
std::vector<nn::NamedTensor> snapshot(const nn::Module& module, const std::string& prefix);

}  // namespace vtp::model
