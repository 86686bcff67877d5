#include "vtp/data/batch.hpp"

#include <algorithm>

#include "vtp/error.hpp"

namespace vtp::data {

std::vector<Sample> all_samples(std::span<const Episode> episodes) {
  std::vector<Sample> out;
  for (const auto& ep : episodes)
    for (std::int64_t t = 0; t < ep.length(); ++t) out.push_back({&ep, t});
  return out;
}

nn::Tensor camera_batch(std::span<const Sample> samples, int camera) {
  require(!samples.empty(), ErrorCode::kInvalidArgument, "empty batch");
  const int s = samples[0].episode->image_size();
  const size_t per = 3 * static_cast<size_t>(s) * s;
  std::vector<double> v(samples.size() * per);
  for (size_t i = 0; i < samples.size(); ++i) {
    require(samples[i].episode->image_size() == s, ErrorCode::kShapeMismatch, "episodes differ in image size");
    samples[i].episode->camera_chw(samples[i].t, camera, &v[i * per]);
  }
  return nn::Tensor::from({static_cast<int64_t>(samples.size()), 3, s, s}, std::move(v));
}

nn::Tensor tactile_batch(std::span<const Sample> samples, int horizon) {
  require(!samples.empty(), ErrorCode::kInvalidArgument, "empty batch");
  const int s = samples[0].episode->tactile_size();
  const size_t per = 3 * static_cast<size_t>(horizon) * s * s;
  std::vector<double> v(samples.size() * per);
  for (size_t i = 0; i < samples.size(); ++i) {
    require(samples[i].episode->tactile_size() == s, ErrorCode::kShapeMismatch, "episodes differ in tactile size");
    samples[i].episode->tactile_window_chw(samples[i].t, horizon, &v[i * per]);
  }
  return nn::Tensor::from({static_cast<int64_t>(samples.size()), 3 * horizon, s, s}, std::move(v));
}

nn::Tensor proprio_batch(std::span<const Sample> samples, const NormStats& norm) {
  std::vector<double> v;
  v.reserve(samples.size() * 3);
  for (const auto& smp : samples) {
    auto p = smp.episode->proprio(smp.t);
    norm.normalize_proprio(p);
    v.insert(v.end(), p.begin(), p.end());
  }
  return nn::Tensor::from({static_cast<int64_t>(samples.size()), 3}, std::move(v));
}

std::vector<double> action_chunk(const Episode& ep, std::int64_t t, int horizon, bool relative) {
  const auto origin = ep.proprio(t);
  std::vector<double> out;
  out.reserve(static_cast<size_t>(horizon) * 3);
  for (int j = 0; j < horizon; ++j) {
    auto a = ep.action(std::min(t + j, ep.length() - 1));
    if (relative) {
      a[0] -= origin[0];
      a[1] -= origin[1];
    }
    out.insert(out.end(), a.begin(), a.end());
  }
  return out;
}

nn::Tensor chunk_batch(std::span<const Sample> samples, int horizon, bool relative, const NormStats& norm) {
  std::vector<double> v;
  v.reserve(samples.size() * static_cast<size_t>(horizon) * 3);
  for (const auto& smp : samples) {
    auto c = action_chunk(*smp.episode, smp.t, horizon, relative);
    for (int j = 0; j < horizon; ++j) norm.normalize_action(std::span<double>(&c[static_cast<size_t>(j) * 3], 3));
    v.insert(v.end(), c.begin(), c.end());
  }
  return nn::Tensor::from({static_cast<int64_t>(samples.size()), horizon, 3}, std::move(v));
}

nn::Tensor views_batch(const std::vector<const Observation*>& obs, int camera) {
  require(!obs.empty(), ErrorCode::kInvalidArgument, "empty batch");
  const auto& first = obs[0]->views.at(static_cast<size_t>(camera));
  const int s = first.height;
  const size_t plane = static_cast<size_t>(s) * s;
  std::vector<double> v(obs.size() * 3 * plane);
  for (size_t i = 0; i < obs.size(); ++i) {
    const auto& img = obs[i]->views.at(static_cast<size_t>(camera));
    require(img.height == s && img.width == s, ErrorCode::kShapeMismatch, "views differ in size");
    for (size_t p = 0; p < plane; ++p)
      for (size_t ch = 0; ch < 3; ++ch) v[(i * 3 + ch) * plane + p] = img.pixels[p * 3 + ch];
  }
  return nn::Tensor::from({static_cast<int64_t>(obs.size()), 3, s, s}, std::move(v));
}

nn::Tensor tactile_window_batch(const std::vector<const Observation*>& obs) {
  require(!obs.empty(), ErrorCode::kInvalidArgument, "empty batch");
  const int h = obs[0]->tactile.horizon();
  const int s = obs[0]->tactile.frames().front().height;
  std::vector<double> v;
  v.reserve(obs.size() * 3 * static_cast<size_t>(h) * s * s);
  for (const auto* o : obs) {
    require(o->tactile.horizon() == h, ErrorCode::kHorizonMismatch, "windows differ in horizon");
    const auto c = o->tactile.collapsed();
    v.insert(v.end(), c.begin(), c.end());
  }
  return nn::Tensor::from({static_cast<int64_t>(obs.size()), 3 * h, s, s}, std::move(v));
}

nn::Tensor proprio_obs_batch(const std::vector<const Observation*>& obs, const NormStats& norm) {
  std::vector<double> v;
  for (const auto* o : obs) {
    auto p = o->proprio;
    norm.normalize_proprio(p);
    v.insert(v.end(), p.begin(), p.end());
  }
  return nn::Tensor::from({static_cast<int64_t>(obs.size()), 3}, std::move(v));
}

}  // namespace vtp::data
