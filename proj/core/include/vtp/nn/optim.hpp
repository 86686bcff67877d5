#pragma once

#include <vector>

#include "vtp/nn/tensor.hpp"

namespace vtp::nn {

// Parameters whose requires_grad flag is off at construction are dropped, so a
// frozen tensor is never written by step().
class Optimizer {
 public:
  explicit Optimizer(const std::vector<Tensor>& params);
  virtual ~Optimizer() = default;

  virtual void step() = 0;
  void zero_grad();

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  const std::vector<Tensor>& params() const { return params_; }

 protected:
  std::vector<Tensor> params_;
  double lr_ = 1e-3;
};

class Sgd : public Optimizer {
 public:
  Sgd(const std::vector<Tensor>& params, double lr, double momentum = 0.9, double weight_decay = 0.0);
  void step() override;

 private:
  double momentum_;
  double weight_decay_;
  std::vector<std::vector<double>> velocity_;
};

// Adam with decoupled weight decay.
class AdamW : public Optimizer {
 public:
  AdamW(const std::vector<Tensor>& params, double lr, double weight_decay = 1e-6, double beta1 = 0.9,
        double beta2 = 0.999, double eps = 1e-8);
  void step() override;

 private:
  double weight_decay_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Rescales gradients in place so their global L2 norm is at most `max_norm`;
// returns the norm before clipping.
double clip_grad_norm(const std::vector<Tensor>& params, double max_norm);

// Linear warmup over `warmup` updates, then cosine decay to 0 at `total`.
double warmup_cosine_lr(double base, int update, int warmup, int total);

}  // namespace vtp::nn
