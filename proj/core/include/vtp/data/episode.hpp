#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "vtp/sim/render.hpp"
#include "vtp/sim/world.hpp"

namespace vtp::data {

// Images are stored as 8-bit values, v_u8 = round(clamp(v, 0, 1) * 255).
std::uint8_t quantize(float v);
inline float dequantize(std::uint8_t v) { return static_cast<float>(v) / 255.0f; }
// What a stored image reads back as; evaluation feeds policies the same values.
sim::Image quantized(const sim::Image& img);

struct EpisodeMeta {
  std::uint64_t seed = 0;
  std::int64_t drift_episode = 0;  // bead-layout drift steps taken before this episode
  bool success = false;
  int num_cameras = 0;
  int image_size = 0;
  int tactile_size = 0;
  double goal_noise = 0.0;
};

// One demonstration, stored column-wise:
//   cameras  [T, C, S, S, 3] u8
//   tactile  [T, St, St, 3] u8
//   proprio  [T, 3] f64   gripper x, y, width
//   actions  [T, 3] f64   target x, y, gripper_cmd
class Episode {
 public:
  Episode() = default;
  Episode(int num_cameras, int image_size, int tactile_size);

  // Appends one synchronized timestep; images that disagree with the episode's
  // shapes raise kCorrupt.
  void append(const std::vector<sim::Image>& views, const sim::Image& tactile, const std::array<double, 3>& proprio,
              const sim::ActionCommand& action);

  std::int64_t length() const { return length_; }
  int num_cameras() const { return meta.num_cameras; }
  int image_size() const { return meta.image_size; }
  int tactile_size() const { return meta.tactile_size; }

  sim::Image camera_image(std::int64_t t, int camera) const;
  sim::Image tactile_frame(std::int64_t t) const;
  std::array<double, 3> proprio(std::int64_t t) const;
  std::array<double, 3> action(std::int64_t t) const;

  // Writes camera `c` at time t as CHW doubles in [0, 1].
  void camera_chw(std::int64_t t, int camera, double* dst) const;
  // Writes the collapsed tactile window ending at t (3h x St x St). Frames
  // before the episode start repeat frame 0, as a freshly initialized window does.
  void tactile_window_chw(std::int64_t t, int horizon, double* dst) const;

  std::span<const std::uint8_t> camera_bytes() const { return cameras_; }
  std::span<const std::uint8_t> tactile_bytes() const { return tactile_; }
  std::span<const double> proprio_values() const { return proprio_; }
  std::span<const double> action_values() const { return actions_; }

  EpisodeMeta meta;

  friend bool operator==(const Episode& a, const Episode& b);

 private:
  friend Episode read_episode(const std::filesystem::path& path);

  std::int64_t length_ = 0;
  std::vector<std::uint8_t> cameras_;
  std::vector<std::uint8_t> tactile_;
  std::vector<double> proprio_;
  std::vector<double> actions_;
};

inline constexpr const char* kEpisodeMagic = "VTPEPIS1";

void write_episode(const std::filesystem::path& path, const Episode& episode);
Episode read_episode(const std::filesystem::path& path);

using Controller = std::function<sim::ActionCommand(const sim::WorldState&)>;

struct RecordOptions {
  std::uint64_t seed = 0;
  bool drift = false;
  double goal_noise = 0.0;  // injected into the executed action, not the recorded one
  int step_cap = 0;         // 0: environment's step_cap
};

// Rolls out `controller` from env.reset(seed, drift) until success or the step
// cap. Each recorded timestep pairs the observation with the commanded action.
Episode record_episode(sim::Environment& env, const Controller& controller, const RecordOptions& options);

// The scripted expert with its own seeded jitter stream.
Controller expert_controller(const sim::EnvConfig& cfg, std::uint64_t seed);

}  // namespace vtp::data
