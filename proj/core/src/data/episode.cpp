#include "vtp/data/episode.hpp"

#include <algorithm>
#include <cmath>

#include "vtp/error.hpp"
#include "vtp/io/container.hpp"
#include "vtp/sim/expert.hpp"

namespace vtp::data {

std::uint8_t quantize(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

sim::Image quantized(const sim::Image& img) {
  sim::Image out = img;
  for (auto& v : out.pixels) v = dequantize(quantize(v));
  return out;
}

Episode::Episode(int num_cameras, int image_size, int tactile_size) {
  meta.num_cameras = num_cameras;
  meta.image_size = image_size;
  meta.tactile_size = tactile_size;
}

void Episode::append(const std::vector<sim::Image>& views, const sim::Image& tactile,
                     const std::array<double, 3>& proprio, const sim::ActionCommand& action) {
  const int s = meta.image_size, st = meta.tactile_size;
  require(static_cast<int>(views.size()) == meta.num_cameras, ErrorCode::kCorrupt,
          "camera count changed mid-episode at t=" + std::to_string(length_));
  for (const auto& v : views)
    require(v.height == s && v.width == s && v.channels == 3, ErrorCode::kCorrupt,
            "camera image shape changed mid-episode at t=" + std::to_string(length_));
  require(tactile.height == st && tactile.width == st && tactile.channels == 3, ErrorCode::kCorrupt,
          "tactile frame shape changed mid-episode at t=" + std::to_string(length_));
  for (const auto& v : views)
    for (float p : v.pixels) cameras_.push_back(quantize(p));
  for (float p : tactile.pixels) tactile_.push_back(quantize(p));
  proprio_.insert(proprio_.end(), proprio.begin(), proprio.end());
  actions_.insert(actions_.end(), {action.target_pos.x, action.target_pos.y, action.gripper_cmd});
  ++length_;
}

namespace {

void check_t(std::int64_t t, std::int64_t length) {
  require(t >= 0 && t < length, ErrorCode::kInvalidArgument,
          "timestep " + std::to_string(t) + " outside episode of length " + std::to_string(length));
}

}  // namespace

sim::Image Episode::camera_image(std::int64_t t, int camera) const {
  check_t(t, length_);
  const size_t n = static_cast<size_t>(meta.image_size) * meta.image_size * 3;
  const size_t off = (static_cast<size_t>(t) * meta.num_cameras + static_cast<size_t>(camera)) * n;
  sim::Image img{meta.image_size, meta.image_size, 3, std::vector<float>(n)};
  for (size_t i = 0; i < n; ++i) img.pixels[i] = dequantize(cameras_[off + i]);
  return img;
}

sim::Image Episode::tactile_frame(std::int64_t t) const {
  check_t(t, length_);
  const size_t n = static_cast<size_t>(meta.tactile_size) * meta.tactile_size * 3;
  sim::Image img{meta.tactile_size, meta.tactile_size, 3, std::vector<float>(n)};
  for (size_t i = 0; i < n; ++i) img.pixels[i] = dequantize(tactile_[static_cast<size_t>(t) * n + i]);
  return img;
}

std::array<double, 3> Episode::proprio(std::int64_t t) const {
  check_t(t, length_);
  const auto* p = &proprio_[static_cast<size_t>(t) * 3];
  return {p[0], p[1], p[2]};
}

std::array<double, 3> Episode::action(std::int64_t t) const {
  check_t(t, length_);
  const auto* a = &actions_[static_cast<size_t>(t) * 3];
  return {a[0], a[1], a[2]};
}

void Episode::camera_chw(std::int64_t t, int camera, double* dst) const {
  check_t(t, length_);
  const size_t plane = static_cast<size_t>(meta.image_size) * meta.image_size;
  const std::uint8_t* src =
      &cameras_[(static_cast<size_t>(t) * meta.num_cameras + static_cast<size_t>(camera)) * plane * 3];
  for (size_t i = 0; i < plane; ++i)
    for (size_t ch = 0; ch < 3; ++ch) dst[ch * plane + i] = dequantize(src[i * 3 + ch]);
}

void Episode::tactile_window_chw(std::int64_t t, int horizon, double* dst) const {
  check_t(t, length_);
  require(horizon >= 1, ErrorCode::kInvalidHorizon, "tactile horizon must be >= 1");
  const size_t plane = static_cast<size_t>(meta.tactile_size) * meta.tactile_size;
  for (int j = 0; j < horizon; ++j) {
    const std::int64_t f = std::max<std::int64_t>(0, t - (horizon - 1) + j);
    const std::uint8_t* src = &tactile_[static_cast<size_t>(f) * plane * 3];
    double* out = dst + static_cast<size_t>(j) * 3 * plane;
    for (size_t i = 0; i < plane; ++i)
      for (size_t ch = 0; ch < 3; ++ch) out[ch * plane + i] = dequantize(src[i * 3 + ch]);
  }
}

bool operator==(const Episode& a, const Episode& b) {
  return a.meta.seed == b.meta.seed && a.meta.drift_episode == b.meta.drift_episode &&
         a.meta.success == b.meta.success && a.meta.num_cameras == b.meta.num_cameras &&
         a.meta.image_size == b.meta.image_size && a.meta.tactile_size == b.meta.tactile_size &&
         a.meta.goal_noise == b.meta.goal_noise && a.length_ == b.length_ && a.cameras_ == b.cameras_ &&
         a.tactile_ == b.tactile_ && a.proprio_ == b.proprio_ && a.actions_ == b.actions_;
}

void write_episode(const std::filesystem::path& path, const Episode& ep) {
  io::Container c;
  c.magic = kEpisodeMagic;
  c.meta = {{"seed", ep.meta.seed},
            {"drift_episode", ep.meta.drift_episode},
            {"success", ep.meta.success},
            {"length", ep.length()},
            {"num_cameras", ep.meta.num_cameras},
            {"image_size", ep.meta.image_size},
            {"tactile_size", ep.meta.tactile_size},
            {"goal_noise", ep.meta.goal_noise}};
  const std::int64_t T = ep.length(), C = ep.num_cameras(), S = ep.image_size(), St = ep.tactile_size();
  c.arrays.push_back(io::make_array("cameras", {T, C, S, S, 3}, ep.camera_bytes()));
  c.arrays.push_back(io::make_array("tactile", {T, St, St, 3}, ep.tactile_bytes()));
  c.arrays.push_back(io::make_array("proprio", {T, 3}, ep.proprio_values()));
  c.arrays.push_back(io::make_array("actions", {T, 3}, ep.action_values()));
  io::write_container(path, c);
}

Episode read_episode(const std::filesystem::path& path) {
  const io::Container c = io::read_container(path, kEpisodeMagic);
  Episode ep;
  try {
    ep.meta.seed = c.meta.at("seed").get<std::uint64_t>();
    ep.meta.drift_episode = c.meta.at("drift_episode").get<std::int64_t>();
    ep.meta.success = c.meta.at("success").get<bool>();
    ep.meta.num_cameras = c.meta.at("num_cameras").get<int>();
    ep.meta.image_size = c.meta.at("image_size").get<int>();
    ep.meta.tactile_size = c.meta.at("tactile_size").get<int>();
    ep.meta.goal_noise = c.meta.at("goal_noise").get<double>();
    ep.length_ = c.meta.at("length").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kCorrupt, "'" + path.string() + "': bad episode header: " + e.what());
  }
  const std::int64_t T = ep.length_, C = ep.meta.num_cameras, S = ep.meta.image_size, St = ep.meta.tactile_size;
  auto expect = [&](const char* name, io::DType dtype, std::vector<std::int64_t> shape) -> const io::Array& {
    if (!c.has(name)) fail(ErrorCode::kCorrupt, "'" + path.string() + "': missing array '" + name + "'");
    const auto& a = c.get(name);
    require(a.dtype == dtype && a.shape == shape, ErrorCode::kCorrupt,
            "'" + path.string() + "': array '" + name + "' has unexpected dtype or shape");
    return a;
  };
  const auto cams = expect("cameras", io::DType::kU8, {T, C, S, S, 3}).as_u8();
  const auto tac = expect("tactile", io::DType::kU8, {T, St, St, 3}).as_u8();
  ep.cameras_.assign(cams.begin(), cams.end());
  ep.tactile_.assign(tac.begin(), tac.end());
  ep.proprio_ = expect("proprio", io::DType::kF64, {T, 3}).as_f64();
  ep.actions_ = expect("actions", io::DType::kF64, {T, 3}).as_f64();
  return ep;
}

Episode record_episode(sim::Environment& env, const Controller& controller, const RecordOptions& opt) {
  const sim::EnvConfig& cfg = env.config();
  const int cap = opt.step_cap > 0 ? opt.step_cap : cfg.step_cap;
  sim::WorldState state = env.reset(opt.seed, opt.drift);
  Rng tactile_rng = make_rng(opt.seed, Stream::kTactile);
  Rng noise_rng = make_rng(opt.seed, Stream::kGoalNoise);

  Episode ep(cfg.num_cameras, cfg.image_size, cfg.tactile_size);
  ep.meta.seed = opt.seed;
  ep.meta.drift_episode = env.layout().drift_steps;
  ep.meta.goal_noise = opt.goal_noise;
  for (int t = 0; t < cap; ++t) {
    const auto views = sim::render_views(cfg, state, cfg.num_cameras);
    const auto tactile = sim::render_tactile(cfg, state, env.layout(), tactile_rng);
    const sim::ActionCommand action = controller(state);
    ep.append(views, tactile, sim::proprio(state), action);
    state = env.step(state, sim::inject_goal_noise(action, opt.goal_noise, noise_rng));
    if (sim::check_success(cfg, state)) break;
  }
  ep.meta.success = sim::check_success(cfg, state);
  return ep;
}

Controller expert_controller(const sim::EnvConfig& cfg, std::uint64_t seed) {
  auto rng = std::make_shared<Rng>(make_rng(seed, Stream::kExpert));
  return [cfg, rng](const sim::WorldState& s) { return sim::scripted_expert(cfg, s, *rng); };
}

}  // namespace vtp::data
