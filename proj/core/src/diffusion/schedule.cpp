#include "vtp/diffusion/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "vtp/error.hpp"

namespace vtp::diffusion {

std::string to_string(ScheduleKind kind) { return kind == ScheduleKind::kLinear ? "linear" : "squared_cosine"; }

ScheduleKind schedule_kind_from(const std::string& name) {
  if (name == "squared_cosine") return ScheduleKind::kSquaredCosine;
  if (name == "linear") return ScheduleKind::kLinear;
  fail(ErrorCode::kInvalidArgument, "unknown schedule kind '" + name + "'");
}

double NoiseSchedule::beta(int k) const {
  require(k >= 1 && k <= train_steps, ErrorCode::kInvalidArgument, "diffusion step out of range");
  return betas[static_cast<size_t>(k - 1)];
}

double NoiseSchedule::alpha_bar(int k) const {
  require(k >= 0 && k <= train_steps, ErrorCode::kInvalidArgument,
          "diffusion step " + std::to_string(k) + " outside [0, " + std::to_string(train_steps) + "]");
  return alpha_bars[static_cast<size_t>(k)];
}

NoiseSchedule build_schedule(int train_steps, int inference_steps, ScheduleKind kind) {
  require(train_steps >= 1, ErrorCode::kInvalidArgument, "train_steps must be >= 1");
  require(inference_steps >= 1 && inference_steps <= train_steps, ErrorCode::kInvalidArgument,
          "need 1 <= inference_steps <= train_steps");
  NoiseSchedule s;
  s.train_steps = train_steps;
  s.kind = kind;
  const double K = train_steps;
  if (kind == ScheduleKind::kSquaredCosine) {
    constexpr double off = 0.008;
    auto f = [&](double t) {
      const double c = std::cos((t / K + off) / (1.0 + off) * std::numbers::pi / 2.0);
      return c * c;
    };
    for (int k = 1; k <= train_steps; ++k) s.betas.push_back(std::min(1.0 - f(k) / f(k - 1), 0.999));
  } else {
    for (int k = 1; k <= train_steps; ++k)
      s.betas.push_back(train_steps == 1 ? 1e-4 : 1e-4 + (0.02 - 1e-4) * (k - 1) / (K - 1));
  }
  s.alpha_bars.push_back(1.0);
  for (double b : s.betas) s.alpha_bars.push_back(s.alpha_bars.back() * (1.0 - b));
  for (int j = 1; j <= inference_steps; ++j)
    s.inference_steps.push_back(static_cast<int>(std::lround(static_cast<double>(j) * K / inference_steps)));
  return s;
}

void to_json(nlohmann::json& j, const NoiseSchedule& s) {
  j = {{"kind", to_string(s.kind)},
       {"train_steps", s.train_steps},
       {"inference_steps", s.inference_steps.size()},
       {"alpha_bars", s.alpha_bars}};
}

NoiseSchedule schedule_from_json(const nlohmann::json& j) {
  return build_schedule(j.at("train_steps").get<int>(), j.at("inference_steps").get<int>(),
                        schedule_kind_from(j.at("kind").get<std::string>()));
}

std::vector<double> add_noise(const NoiseSchedule& s, std::span<const double> a0, std::span<const double> eps, int k) {
  require(a0.size() == eps.size(), ErrorCode::kShapeMismatch, "noise shape differs from the action chunk");
  require(k >= 1 && k <= s.train_steps, ErrorCode::kInvalidArgument, "diffusion step out of range");
  const double ab = s.alpha_bar(k);
  const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  std::vector<double> out(a0.size());
  for (size_t i = 0; i < a0.size(); ++i) out[i] = a * a0[i] + b * eps[i];
  return out;
}

nn::Tensor add_noise(const NoiseSchedule& s, const nn::Tensor& a0, const nn::Tensor& eps, const std::vector<int>& ks) {
  require(a0.shape() == eps.shape(), ErrorCode::kShapeMismatch, "noise shape differs from the action chunk");
  require(static_cast<int64_t>(ks.size()) == a0.dim(0), ErrorCode::kShapeMismatch, "one step index per row");
  const size_t row = static_cast<size_t>(a0.numel() / a0.dim(0));
  std::vector<double> out(static_cast<size_t>(a0.numel()));
  for (size_t n = 0; n < ks.size(); ++n) {
    const auto r = add_noise(s, a0.data().subspan(n * row, row), eps.data().subspan(n * row, row), ks[n]);
    std::copy(r.begin(), r.end(), out.begin() + static_cast<std::ptrdiff_t>(n * row));
  }
  return nn::Tensor::from(a0.shape(), std::move(out));
}

ReverseCoefficients reverse_coefficients(const NoiseSchedule& s, int k, int k_prev) {
  require(k >= 1 && k <= s.train_steps && k_prev >= 0 && k_prev < k, ErrorCode::kInvalidArgument,
          "reverse step needs 0 <= k_prev < k <= K");
  const double ab = s.alpha_bar(k), ab_prev = s.alpha_bar(k_prev);
  const double alpha_eff = ab / ab_prev;
  const double beta_eff = 1.0 - alpha_eff;
  ReverseCoefficients c;
  c.alpha = 1.0 / std::sqrt(alpha_eff);
  c.gamma = beta_eff / std::sqrt(1.0 - ab);
  if (k_prev > 0) {
    const double var = beta_eff * (1.0 - ab_prev) / (1.0 - ab);
    c.sigma = std::sqrt(var) / c.alpha;
  }
  return c;
}

void reverse_step(const NoiseSchedule& s, std::span<double> x, std::span<const double> eps_hat, int k, int k_prev,
                  Rng& rng, bool clip_x0) {
  require(x.size() == eps_hat.size(), ErrorCode::kShapeMismatch, "noise prediction shape differs from the sample");
  const ReverseCoefficients c = reverse_coefficients(s, k, k_prev);
  std::normal_distribution<double> normal(0.0, 1.0);
  if (!clip_x0) {
    for (size_t i = 0; i < x.size(); ++i) {
      const double z = c.sigma > 0.0 ? c.sigma * normal(rng) : 0.0;
      x[i] = c.alpha * (x[i] - c.gamma * eps_hat[i] + z);
    }
    return;
  }
  const double ab = s.alpha_bar(k), ab_prev = s.alpha_bar(k_prev);
  const double alpha_eff = ab / ab_prev, beta_eff = 1.0 - alpha_eff;
  const double coef_x0 = std::sqrt(ab_prev) * beta_eff / (1.0 - ab);
  const double coef_xt = std::sqrt(alpha_eff) * (1.0 - ab_prev) / (1.0 - ab);
  const double std_dev = c.alpha * c.sigma;
  for (size_t i = 0; i < x.size(); ++i) {
    const double x0 = std::clamp((x[i] - std::sqrt(1.0 - ab) * eps_hat[i]) / std::sqrt(ab), -1.0, 1.0);
    const double z = std_dev > 0.0 ? std_dev * normal(rng) : 0.0;
    x[i] = coef_x0 * x0 + coef_xt * x[i] + z;
  }
}

}  // namespace vtp::diffusion
