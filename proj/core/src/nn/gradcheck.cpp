#include "vtp/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace vtp::nn {

GradCheckResult check_gradients(const std::function<Tensor()>& loss, const std::vector<Tensor>& inputs, double step,
                                double floor) {
  std::vector<Tensor> xs = inputs;
  for (auto& x : xs) {
    x.set_requires_grad(true);
    x.zero_grad();
  }
  loss().backward();

  GradCheckResult result;
  for (auto& x : xs) {
    std::vector<double> analytic(static_cast<size_t>(x.numel()), 0.0);
    const auto g = x.grad();
    std::copy(g.begin(), g.end(), analytic.begin());

    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    auto values = x.mutable_data();
    for (size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      double plus, minus;
      {
        NoGradGuard guard;
        values[i] = saved + step;
        plus = loss().item();
        values[i] = saved - step;
        minus = loss().item();
      }
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      const double d = analytic[i] - numeric;
      diff2 += d * d;
      a2 += analytic[i] * analytic[i];
      n2 += numeric * numeric;
      result.max_abs_error = std::max(result.max_abs_error, std::abs(d));
    }
    const double scale = std::max(std::sqrt(a2), std::sqrt(n2));
    if (scale >= floor) result.max_relative_error = std::max(result.max_relative_error, std::sqrt(diff2) / scale);
  }
  return result;
}

}  // namespace vtp::nn
