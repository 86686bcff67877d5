#include "vtp/sim/render.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "vtp/error.hpp"

namespace vtp::sim {

namespace {

using Color = std::array<float, 3>;

struct Rect {
  double x0, x1, y0, y1;
  Color color;
  bool contains(Vec2 p) const { return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1; }
};

constexpr Color kBackground{0.92f, 0.92f, 0.95f};
constexpr Color kTable{0.55f, 0.42f, 0.30f};
constexpr Color kHub{0.35f, 0.35f, 0.40f};
constexpr Color kPort{0.05f, 0.05f, 0.05f};
constexpr Color kHolder{0.20f, 0.50f, 0.20f};
constexpr Color kPlug{0.85f, 0.15f, 0.10f};
constexpr Color kGripper{0.15f, 0.25f, 0.85f};

constexpr double kInf = 1e9;

// Painter's order: later entries draw over earlier ones.
std::vector<Rect> scene(const EnvConfig& cfg, const WorldState& s) {
  std::vector<Rect> r;
  r.push_back({-kInf, kInf, -kInf, cfg.surface_y, kTable});
  const auto [mn, mx] = std::minmax_element(cfg.port_x.begin(), cfg.port_x.end());
  r.push_back({*mn - 0.03, *mx + 0.03, cfg.surface_y - 0.05, cfg.surface_y, kHub});
  for (const auto& p : s.port_positions) r.push_back({p.x - 0.008, p.x + 0.008, p.y - 0.004, cfg.surface_y, kPort});
  r.push_back({cfg.plug_holder_x - 0.02, cfg.plug_holder_x + 0.02, cfg.surface_y - 0.015, cfg.surface_y, kHolder});
  const double hp = cfg.plug_width / 2;
  r.push_back({s.plug_pos.x - hp, s.plug_pos.x + hp, s.plug_pos.y, s.plug_pos.y + kPlugHeight, kPlug});
  const Vec2 g = s.gripper_pos;
  const double hw = s.gripper_width / 2;
  r.push_back({g.x - hw - 0.004, g.x - hw, g.y - 0.005, g.y + 0.025, kGripper});
  r.push_back({g.x + hw, g.x + hw + 0.004, g.y - 0.005, g.y + 0.025, kGripper});
  r.push_back({g.x - hw - 0.004, g.x + hw + 0.004, g.y + 0.025, g.y + 0.032, kGripper});
  r.push_back({g.x - 0.003, g.x + 0.003, g.y + 0.032, g.y + 0.08, kGripper});
  return r;
}

}  // namespace

Vec2 Camera::pixel_to_world(double col, double row, int size) const {
  const double lx = (col - size / 2.0) / size * span;
  const double ly = -(row - size / 2.0) / size * span;
  const double c = std::cos(angle), s = std::sin(angle);
  return {center.x + c * lx - s * ly, center.y + s * lx + c * ly};
}

Camera camera_for(int index) {
  switch (index) {
    case 0: return {{0.50, 0.40}, 0.60, 0.0};
    case 1: return {{0.64, 0.32}, 0.24, 0.0};
    case 2: return {{0.42, 0.42}, 0.45, 0.30};
    default: {
      const double sign = (index % 2) ? 1.0 : -1.0;
      return {{0.5 + 0.04 * std::sin(index), 0.40 + 0.03 * std::cos(index)},
              0.5 + 0.05 * (index % 3),
              0.15 * (index - 2) * sign};
    }
  }
}

std::vector<Image> render_views(const EnvConfig& cfg, const WorldState& state, int num_cameras) {
  require(num_cameras >= 1, ErrorCode::kInvalidArgument, "num_cameras must be >= 1");
  const int n = cfg.image_size;
  const auto rects = scene(cfg, state);
  constexpr int ss = kSupersample;
  constexpr float inv = 1.0f / (ss * ss);
  std::vector<Image> out;
  out.reserve(static_cast<size_t>(num_cameras));
  for (int c = 0; c < num_cameras; ++c) {
    const Camera cam = camera_for(c);
    Image img{n, n, 3, std::vector<float>(static_cast<size_t>(n) * n * 3)};
    for (int row = 0; row < n; ++row)
      for (int col = 0; col < n; ++col) {
        Color acc{0.f, 0.f, 0.f};
        for (int sy = 0; sy < ss; ++sy)
          for (int sx = 0; sx < ss; ++sx) {
            const Vec2 p = cam.pixel_to_world(col + (sx + 0.5) / ss, row + (sy + 0.5) / ss, n);
            Color color = kBackground;
            for (auto it = rects.rbegin(); it != rects.rend(); ++it)
              if (it->contains(p)) {
                color = it->color;
                break;
              }
            for (int ch = 0; ch < 3; ++ch) acc[ch] += color[ch];
          }
        float* px = &img.pixels[(static_cast<size_t>(row) * n + col) * 3];
        for (int ch = 0; ch < 3; ++ch) px[ch] = acc[ch] * inv;
      }
    out.push_back(std::move(img));
  }
  return out;
}

std::vector<Vec2> displaced_bead_centers(const EnvConfig& cfg, const WorldState& state, const BeadLayout& layout,
                                         Rng& rng) {
  constexpr double kSoftening = 0.05;
  constexpr double kMaxPush = 0.15;
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<Vec2> out;
  out.reserve(layout.bead_centers.size());
  for (const auto& c : layout.bead_centers) {
    Vec2 p = c;
    const Vec2 d = c - state.contact_point;
    const double r = d.norm();
    if (state.contact_force > 0.0 && r > 1e-12) {
      const double mag = std::min(cfg.push_gain * state.contact_force / (r + kSoftening), kMaxPush);
      p = p + d * (mag / r);
    }
    if (layout.jitter_sigma > 0.0) {
      p.x += layout.jitter_sigma * n(rng);
      p.y += layout.jitter_sigma * n(rng);
    }
    out.push_back(p);
  }
  return out;
}

Image render_tactile(const EnvConfig& cfg, const WorldState& state, const BeadLayout& layout, Rng& rng) {
  constexpr Color kGel{0.06f, 0.05f, 0.08f};
  constexpr Color kBead{0.25f, 0.85f, 0.35f};
  const int n = cfg.tactile_size;
  const auto centers = displaced_bead_centers(cfg, state, layout, rng);
  const double inv2s2 = 1.0 / (2.0 * cfg.bead_radius * cfg.bead_radius);
  Image img{n, n, 3, std::vector<float>(static_cast<size_t>(n) * n * 3)};
  for (int row = 0; row < n; ++row)
    for (int col = 0; col < n; ++col) {
      const Vec2 p{(col + 0.5) / n, (row + 0.5) / n};
      double intensity = 0.0;
      for (const auto& c : centers) {
        const Vec2 d = p - c;
        intensity += std::exp(-(d.x * d.x + d.y * d.y) * inv2s2);
      }
      const float a = static_cast<float>(std::min(intensity, 1.0));
      float* px = &img.pixels[(static_cast<size_t>(row) * n + col) * 3];
      for (int ch = 0; ch < 3; ++ch) px[ch] = kGel[ch] + (kBead[ch] - kGel[ch]) * a;
    }
  return img;
}

}  // namespace vtp::sim
