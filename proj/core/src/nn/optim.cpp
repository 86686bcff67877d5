#include "vtp/nn/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace vtp::nn {

Optimizer::Optimizer(const std::vector<Tensor>& params) {
  for (const auto& p : params)
    if (p.requires_grad()) params_.push_back(p);
}

void Optimizer::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

Sgd::Sgd(const std::vector<Tensor>& params, double lr, double momentum, double weight_decay)
    : Optimizer(params), momentum_(momentum), weight_decay_(weight_decay) {
  lr_ = lr;
  for (auto& p : params_) velocity_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
}

void Sgd::step() {
  for (size_t k = 0; k < params_.size(); ++k) {
    auto g = params_[k].grad();
    if (g.empty()) continue;
    auto w = params_[k].mutable_data();
    auto& vel = velocity_[k];
    for (size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] + weight_decay_ * w[i];
      vel[i] = momentum_ * vel[i] + gi;
      w[i] -= lr_ * vel[i];
    }
  }
}

AdamW::AdamW(const std::vector<Tensor>& params, double lr, double weight_decay, double beta1, double beta2,
             double eps)
    : Optimizer(params), weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {
  lr_ = lr;
  for (auto& p : params_) {
    m_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
    v_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
  }
}

void AdamW::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t k = 0; k < params_.size(); ++k) {
    auto g = params_[k].grad();
    if (g.empty()) continue;
    auto w = params_[k].mutable_data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= lr_ * (mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * w[i]);
    }
  }
}

double clip_grad_norm(const std::vector<Tensor>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    for (double g : p.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto p : params)
      if (!p.grad().empty())
        for (double& g : p.mutable_grad()) g *= s;
  }
  return norm;
}

double warmup_cosine_lr(double base, int update, int warmup, int total) {
  const double warm = warmup > 0 ? std::min(1.0, (update + 1.0) / warmup) : 1.0;
  return base * warm * 0.5 * (1.0 + std::cos(std::numbers::pi * update / std::max(1, total)));
}

}  // namespace vtp::nn
