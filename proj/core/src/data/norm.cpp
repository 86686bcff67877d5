#include "vtp/data/norm.hpp"

#include <algorithm>
#include <cmath>

#include "vtp/data/episode.hpp"
#include "vtp/error.hpp"
#include "vtp/log.hpp"

namespace vtp::data {

NormStats NormStats::from_rows(std::span<const double> actions, std::span<const double> proprio, int action_dim,
                               int proprio_dim) {
  const size_t ad = static_cast<size_t>(action_dim), pd = static_cast<size_t>(proprio_dim);
  require(ad > 0 && !actions.empty() && actions.size() % ad == 0, ErrorCode::kInvalidArgument,
          "need at least one action row");
  require(pd > 0 && !proprio.empty() && proprio.size() % pd == 0, ErrorCode::kInvalidArgument,
          "need at least one proprio row");
  NormStats s;
  s.action_min.assign(ad, INFINITY);
  s.action_max.assign(ad, -INFINITY);
  for (size_t i = 0; i < actions.size(); ++i) {
    s.action_min[i % ad] = std::min(s.action_min[i % ad], actions[i]);
    s.action_max[i % ad] = std::max(s.action_max[i % ad], actions[i]);
  }
  for (size_t d = 0; d < ad; ++d)
    if (s.action_max[d] - s.action_min[d] < kFloor)
      log::warn("action dimension " + std::to_string(d) + " is constant; width floored at 1e-6");

  const double rows = static_cast<double>(proprio.size() / pd);
  s.proprio_mean.assign(pd, 0.0);
  s.proprio_std.assign(pd, 0.0);
  for (size_t i = 0; i < proprio.size(); ++i) s.proprio_mean[i % pd] += proprio[i] / rows;
  for (size_t i = 0; i < proprio.size(); ++i) {
    const double d = proprio[i] - s.proprio_mean[i % pd];
    s.proprio_std[i % pd] += d * d / rows;
  }
  for (auto& v : s.proprio_std) v = std::max(std::sqrt(v), kFloor);
  return s;
}

NormStats NormStats::compute(std::span<const Episode> episodes) {
  require(!episodes.empty(), ErrorCode::kInvalidArgument, "norm stats need at least one episode");
  std::vector<double> a, p;
  for (const auto& e : episodes) {
    a.insert(a.end(), e.action_values().begin(), e.action_values().end());
    p.insert(p.end(), e.proprio_values().begin(), e.proprio_values().end());
  }
  return from_rows(a, p, 3, 3);
}

double NormStats::action_width(std::size_t d) const { return std::max(action_max[d] - action_min[d], kFloor); }

void NormStats::normalize_action(std::span<double> a) const {
  require(a.size() == action_min.size(), ErrorCode::kShapeMismatch, "action dim mismatch");
  for (size_t d = 0; d < a.size(); ++d) a[d] = 2.0 * (a[d] - action_min[d]) / action_width(d) - 1.0;
}

void NormStats::denormalize_action(std::span<double> a) const {
  require(a.size() == action_min.size(), ErrorCode::kShapeMismatch, "action dim mismatch");
  for (size_t d = 0; d < a.size(); ++d) a[d] = (a[d] + 1.0) * 0.5 * action_width(d) + action_min[d];
}

void NormStats::normalize_proprio(std::span<double> p) const {
  require(p.size() == proprio_mean.size(), ErrorCode::kShapeMismatch, "proprio dim mismatch");
  for (size_t d = 0; d < p.size(); ++d) p[d] = (p[d] - proprio_mean[d]) / proprio_std[d];
}

void to_json(nlohmann::json& j, const NormStats& s) {
  j = {{"action_min", s.action_min},
       {"action_max", s.action_max},
       {"proprio_mean", s.proprio_mean},
       {"proprio_std", s.proprio_std}};
}

void from_json(const nlohmann::json& j, NormStats& s) {
  j.at("action_min").get_to(s.action_min);
  j.at("action_max").get_to(s.action_max);
  j.at("proprio_mean").get_to(s.proprio_mean);
  j.at("proprio_std").get_to(s.proprio_std);
}

}  // namespace vtp::data
