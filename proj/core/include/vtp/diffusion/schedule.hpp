#pragma once

#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "vtp/nn/tensor.hpp"
#include "vtp/rng.hpp"

namespace vtp::diffusion {

enum class ScheduleKind { kSquaredCosine, kLinear };

std::string to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from(const std::string& name);

// DDPM coefficients for steps k = 1..K. alpha_bar(0) = 1 by convention.
struct NoiseSchedule {
  int train_steps = 0;
  ScheduleKind kind = ScheduleKind::kSquaredCosine;
  std::vector<double> betas;        // betas[k - 1]
  std::vector<double> alpha_bars;   // alpha_bars[k], size K + 1
  std::vector<int> inference_steps;  // ascending, last == K

  double beta(int k) const;
  double alpha(int k) const { return 1.0 - beta(k); }
  double alpha_bar(int k) const;
};

// Squared-cosine: alpha_bar(t) ~ cos^2(((t/K) + s) / (1 + s) * pi/2), s = 0.008,
// beta_k = min(1 - f(k)/f(k-1), 0.999). Linear: beta from 1e-4 to 0.02.
// The inference subset is {round(j * K / S) : j = 1..S}.
NoiseSchedule build_schedule(int train_steps, int inference_steps, ScheduleKind kind = ScheduleKind::kSquaredCosine);

void to_json(nlohmann::json& j, const NoiseSchedule& s);
NoiseSchedule schedule_from_json(const nlohmann::json& j);

// sqrt(alpha_bar_k) * a0 + sqrt(1 - alpha_bar_k) * eps, 1 <= k <= K.
std::vector<double> add_noise(const NoiseSchedule& s, std::span<const double> a0, std::span<const double> eps, int k);
// Batched: a0/eps [N, ...], one k per row.
nn::Tensor add_noise(const NoiseSchedule& s, const nn::Tensor& a0, const nn::Tensor& eps, const std::vector<int>& ks);

// Coefficients of x_prev = alpha * (x - gamma * eps_hat + N(0, sigma^2)) for a
// jump k -> k_prev (k_prev = 0 is the terminal step, sigma = 0). Values are the
// DDPM posterior for the effective alpha = alpha_bar_k / alpha_bar_prev.
struct ReverseCoefficients {
  double alpha = 1.0;
  double gamma = 0.0;
  double sigma = 0.0;
};
ReverseCoefficients reverse_coefficients(const NoiseSchedule& s, int k, int k_prev);

// One reverse step in place. With clip_x0 the x0 estimate is clamped to
// [-1, 1] before forming the posterior mean (same mean otherwise).
void reverse_step(const NoiseSchedule& s, std::span<double> x, std::span<const double> eps_hat, int k, int k_prev,
                  Rng& rng, bool clip_x0);

}  // namespace vtp::diffusion
