#pragma once

#include <nlohmann/json.hpp>
#include <span>
#include <vector>

namespace vtp::data {

class Episode;

// Per-dimension min/max scaling to [-1, 1] for actions and mean/std
// standardization for proprio. Widths and stds are floored at 1e-6.
struct NormStats {
  std::vector<double> action_min, action_max;
  std::vector<double> proprio_mean, proprio_std;

  static constexpr double kFloor = 1e-6;

  // Rows of `actions` / `proprio` are dim-sized records.
  static NormStats from_rows(std::span<const double> actions, std::span<const double> proprio, int action_dim,
                             int proprio_dim);
  static NormStats compute(std::span<const Episode> episodes);

  double action_width(std::size_t d) const;

  void normalize_action(std::span<double> a) const;
  void denormalize_action(std::span<double> a) const;
  void normalize_proprio(std::span<double> p) const;

  friend bool operator==(const NormStats&, const NormStats&) = default;
};

void to_json(nlohmann::json& j, const NormStats& s);
void from_json(const nlohmann::json& j, NormStats& s);

}  // namespace vtp::data
