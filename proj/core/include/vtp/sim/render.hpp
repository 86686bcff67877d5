#pragma once

#include <cstdint>
#include <vector>

#include "vtp/sim/world.hpp"

namespace vtp::sim {

// H x W x C, row-major, channels last, values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<float> pixels;

  float at(int row, int col, int ch) const { return pixels[(static_cast<size_t>(row) * width + col) * channels + ch]; }
  friend bool operator==(const Image&, const Image&) = default;
};

// Orthographic view: pixel (col, row) centre maps to
//   center + R(angle) * ((col + 0.5 - W/2) / W * span, -(row + 0.5 - H/2) / H * span).
struct Camera {
  Vec2 center;
  double span = 0.6;
  double angle = 0.0;

  Vec2 pixel_to_world(double col, double row, int size) const;
};

Camera camera_for(int index);

constexpr int kSupersample = 2;
constexpr double kPlugHeight = 0.03;

std::vector<Image> render_views(const EnvConfig& cfg, const WorldState& state, int num_cameras);

// Bead centres after force push and per-frame jitter. Jitter draws come from
// `rng` only when jitter_sigma > 0.
std::vector<Vec2> displaced_bead_centers(const EnvConfig& cfg, const WorldState& state, const BeadLayout& layout,
                                         Rng& rng);

Image render_tactile(const EnvConfig& cfg, const WorldState& state, const BeadLayout& layout, Rng& rng);

}  // namespace vtp::sim
