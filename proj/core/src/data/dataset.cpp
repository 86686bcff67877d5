#include "vtp/data/dataset.hpp"

#include <cstdio>
#include <fstream>

#include "vtp/error.hpp"

namespace vtp::data {

namespace fs = std::filesystem;

std::string episode_file_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "episode_%05zu.vtpe", index);
  return buf;
}

Manifest Manifest::load(const fs::path& dir) {
  const fs::path path = dir / kManifestName;
  std::ifstream is(path);
  if (!is) fail(ErrorCode::kMissingInput, "no dataset manifest at '" + path.string() + "'");
  Manifest m;
  try {
    const auto j = nlohmann::json::parse(is);
    require(j.value("format", "") == "vtp-dataset", ErrorCode::kCorrupt, "'" + path.string() + "' is not a dataset manifest");
    m.env_config = j.value("env_config", nlohmann::json::object());
    for (const auto& e : j.at("episodes"))
      m.entries.push_back({e.at("file").get<std::string>(), e.at("seed").get<std::uint64_t>(),
                           e.at("success").get<bool>(), e.at("length").get<std::int64_t>(),
                           e.at("drift_episode").get<std::int64_t>()});
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kCorrupt, "'" + path.string() + "': " + e.what());
  }
  return m;
}

void Manifest::save(const fs::path& dir) const {
  nlohmann::json eps = nlohmann::json::array();
  for (const auto& e : entries)
    eps.push_back({{"file", e.file},
                   {"seed", e.seed},
                   {"success", e.success},
                   {"length", e.length},
                   {"drift_episode", e.drift_episode}});
  const nlohmann::json j = {{"format", "vtp-dataset"}, {"version", 1}, {"env_config", env_config}, {"episodes", eps}};
  const fs::path path = dir / kManifestName;
  std::ofstream os(path);
  if (!os) fail(ErrorCode::kIo, "cannot write '" + path.string() + "'");
  os << j.dump(2) << '\n';
  if (!os) fail(ErrorCode::kIo, "write failed for '" + path.string() + "'");
}

void append_episode(const fs::path& dir, Manifest& manifest, const Episode& episode) {
  const std::string file = episode_file_name(manifest.entries.size());
  write_episode(dir / file, episode);
  manifest.entries.push_back(
      {file, episode.meta.seed, episode.meta.success, episode.length(), episode.meta.drift_episode});
  manifest.save(dir);
}

Dataset Dataset::load(const fs::path& dir) {
  Dataset d;
  d.manifest = Manifest::load(dir);
  for (const auto& e : d.manifest.entries) {
    Episode ep = read_episode(dir / e.file);
    require(ep.length() == e.length, ErrorCode::kCorrupt, "'" + e.file + "' length disagrees with the manifest");
    d.episodes.push_back(std::move(ep));
  }
  return d;
}

std::int64_t Dataset::total_steps() const {
  std::int64_t n = 0;
  for (const auto& e : episodes) n += e.length();
  return n;
}

}  // namespace vtp::data
