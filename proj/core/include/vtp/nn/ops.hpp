#pragma once

#include <span>
#include <vector>

#include "vtp/nn/tensor.hpp"

// Differentiable tensor operations. All ops take and return row-major dense
// tensors; shapes are checked eagerly and violations raise kShapeMismatch.
namespace vtp::nn {

// Elementwise, same shape.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

Tensor relu(const Tensor& x);
Tensor mish(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor square(const Tensor& x);
Tensor abs(const Tensor& x);

// Reductions to a scalar.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Layout.
Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<int>& axes);
Tensor transpose2d(const Tensor& x);
Tensor concat(std::span<const Tensor> parts, int axis);
Tensor slice(const Tensor& x, int axis, int64_t start, int64_t length);

// Broadcasts.
// x [N, C, ...] + b [C] along axis 1.
Tensor add_channel_bias(const Tensor& x, const Tensor& b);
// x [B, S, D] + p [S, D].
Tensor add_broadcast_batch(const Tensor& x, const Tensor& p);
// x [S, D] -> [B, S, D].
Tensor repeat_batch(const Tensor& x, int64_t batch);

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);  // [N, K] x [K, M]
Tensor bmm(const Tensor& a, const Tensor& b);     // [B, N, K] x [B, K, M]
// x [..., in] * W[out, in]^T + b[out]; `b` may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

struct Conv2dGeometry {
  int stride_h = 1, stride_w = 1;
  int pad_h = 0, pad_w = 0;
};

// x [N, C, H, W], w [O, C, KH, KW], b [O] or undefined.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, Conv2dGeometry geom);
// x [N, C, T], w [O, C, K], b [O] or undefined.
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
// Nearest-neighbour upsampling along the last axis of [N, C, T].
Tensor upsample_nearest1d(const Tensor& x, int factor);
// [N, C, H, W] -> [N, C].
Tensor global_avg_pool2d(const Tensor& x);

// Normalization. `gamma` and `beta` have one entry per channel / feature.
Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// Row-wise over the last axis.
Tensor softmax(const Tensor& x);
Tensor log_softmax(const Tensor& x);
Tensor l2_normalize(const Tensor& x, double eps = 1e-12);

// Per-channel affine modulation: x [N, C, T], scale/shift [N, C].
Tensor film(const Tensor& x, const Tensor& scale, const Tensor& shift);

Tensor mse_loss(const Tensor& pred, const Tensor& target);
Tensor l1_loss(const Tensor& pred, const Tensor& target);

}  // namespace vtp::nn
