#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "vtp/data/episode.hpp"
#include "vtp/data/norm.hpp"
#include "vtp/data/window.hpp"
#include "vtp/nn/tensor.hpp"

namespace vtp::data {

struct Sample {
  const Episode* episode = nullptr;
  std::int64_t t = 0;
};

// Every (episode, t) pair, episode-major.
std::vector<Sample> all_samples(std::span<const Episode> episodes);

nn::Tensor camera_batch(std::span<const Sample> samples, int camera);        // [N, 3, S, S]
nn::Tensor tactile_batch(std::span<const Sample> samples, int horizon);      // [N, 3h, St, St]
nn::Tensor proprio_batch(std::span<const Sample> samples, const NormStats& norm);  // [N, 3], standardized

// Future actions t .. t+horizon-1, repeating the last action past the end.
// With `relative`, x and y are taken relative to the gripper position at t.
std::vector<double> action_chunk(const Episode& ep, std::int64_t t, int horizon, bool relative);
// [N, horizon, 3], normalized with `norm`.
nn::Tensor chunk_batch(std::span<const Sample> samples, int horizon, bool relative, const NormStats& norm);

// What a policy sees at one control tick.
struct Observation {
  std::vector<sim::Image> views;  // already quantized like stored data
  TactileWindow tactile;
  std::array<double, 3> proprio{};
};

nn::Tensor views_batch(const std::vector<const Observation*>& obs, int camera);
nn::Tensor tactile_window_batch(const std::vector<const Observation*>& obs);
nn::Tensor proprio_obs_batch(const std::vector<const Observation*>& obs, const NormStats& norm);

}  // namespace vtp::data
