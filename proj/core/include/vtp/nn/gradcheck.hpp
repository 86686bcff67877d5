#pragma once

#include <functional>
#include <vector>

#include "vtp/nn/tensor.hpp"

namespace vtp::nn {

struct GradCheckResult {
  double max_relative_error = 0.0;  // worst tensor, norm-wise
  double max_abs_error = 0.0;
};

// Compares the analytic gradient of `loss` with central differences for every
// entry of every tensor in `inputs`. Per tensor the error is
// ||analytic - numeric|| / max(||analytic||, ||numeric||); tensors where both
// norms are below `floor` (e.g. a key bias under softmax) only count toward
// max_abs_error.
GradCheckResult check_gradients(const std::function<Tensor()>& loss, const std::vector<Tensor>& inputs,
                                double step = 1e-6, double floor = 1e-7);

}  // namespace vtp::nn
