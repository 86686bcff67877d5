#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "vtp/data/episode.hpp"

namespace vtp::data {

// Dataset directory:
//   manifest.json         entries below plus the environment config
//   episode_00000.vtpe    one container per episode
struct ManifestEntry {
  std::string file;
  std::uint64_t seed = 0;
  bool success = false;
  std::int64_t length = 0;
  std::int64_t drift_episode = 0;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct Manifest {
  nlohmann::json env_config = nlohmann::json::object();
  std::vector<ManifestEntry> entries;

  static Manifest load(const std::filesystem::path& dir);
  void save(const std::filesystem::path& dir) const;
};

inline constexpr const char* kManifestName = "manifest.json";
std::string episode_file_name(std::size_t index);

// Writes the episode file and appends its manifest entry (manifest saved).
void append_episode(const std::filesystem::path& dir, Manifest& manifest, const Episode& episode);

struct Dataset {
  Manifest manifest;
  std::vector<Episode> episodes;

  static Dataset load(const std::filesystem::path& dir);
  std::int64_t total_steps() const;
};

}  // namespace vtp::data
