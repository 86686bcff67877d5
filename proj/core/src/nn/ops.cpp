#include "vtp/nn/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "vtp/error.hpp"

namespace vtp::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;

using detail::make_result;
using detail::wants_grad;

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    fail(ErrorCode::kShapeMismatch,
         std::string(op) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

void check_ndim(const Tensor& x, int n, const char* op) {
  if (x.ndim() != n)
    fail(ErrorCode::kShapeMismatch,
         std::string(op) + ": expected rank " + std::to_string(n) + ", got " + shape_str(x.shape()));
}

Buffer& grad_of(const Tensor& t) { return t.node()->ensure_grad(); }

template <typename F, typename DF>
Tensor unary(const Tensor& x, F f, DF df) {
  const auto xv = x.data();
  Buffer y(xv.size());
  for (size_t i = 0; i < y.size(); ++i) y[i] = f(xv[i]);
  return make_result(x.shape(), std::move(y), {x}, [x, df](Node& self) {
    auto& gx = grad_of(x);
    const auto xv2 = x.data();
    for (size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * df(xv2[i], self.value[i]);
  });
}

double softplus(double x) { return x > 20.0 ? x : std::log1p(std::exp(x)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Buffer y(a.data().begin(), a.data().end());
  const auto bv = b.data();
  for (size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  return make_result(a.shape(), std::move(y), {a, b}, [a, b](Node& self) {
    if (wants_grad(a)) {
      auto& g = grad_of(a);
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants_grad(b)) {
      auto& g = grad_of(b);
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Buffer y(a.data().begin(), a.data().end());
  const auto bv = b.data();
  for (size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  return make_result(a.shape(), std::move(y), {a, b}, [a, b](Node& self) {
    if (wants_grad(a)) {
      auto& g = grad_of(a);
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants_grad(b)) {
      auto& g = grad_of(b);
      for (size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Buffer y(a.data().begin(), a.data().end());
  const auto bv = b.data();
  for (size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  return make_result(a.shape(), std::move(y), {a, b}, [a, b](Node& self) {
    const auto av = a.data();
    const auto bv2 = b.data();
    if (wants_grad(a)) {
      auto& g = grad_of(a);
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv2[i];
    }
    if (wants_grad(b)) {
      auto& g = grad_of(b);
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  Buffer y(a.data().begin(), a.data().end());
  for (auto& v : y) v *= s;
  return make_result(a.shape(), std::move(y), {a}, [a, s](Node& self) {
    auto& g = grad_of(a);
    for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s;
  });
}

Tensor add_scalar(const Tensor& a, double s) {
  Buffer y(a.data().begin(), a.data().end());
  for (auto& v : y) v += s;
  return make_result(a.shape(), std::move(y), {a}, [a](Node& self) {
    auto& g = grad_of(a);
    for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor mish(const Tensor& x) {
  return unary(
      x, [](double v) { return v * std::tanh(softplus(v)); },
      [](double v, double) {
        const double t = std::tanh(softplus(v));
        return t + v * (1.0 - t * t) * sigmoid(v);
      });
}

Tensor gelu(const Tensor& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [](double v, double) {
        return 0.5 * (1.0 + std::erf(v * kInvSqrt2)) + v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
      });
}

Tensor exp(const Tensor& x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor square(const Tensor& x) {
  return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor abs(const Tensor& x) {
  return unary(
      x, [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor sum(const Tensor& x) {
  const auto xv = x.data();
  const double s = std::accumulate(xv.begin(), xv.end(), 0.0);
  return make_result({}, {s}, {x}, [x](Node& self) {
    auto& g = grad_of(x);
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  const auto n = static_cast<double>(x.numel());
  return scale(sum(x), 1.0 / n);
}

Tensor reshape(const Tensor& x, Shape shape) {
  // One inferred axis (-1) is allowed.
  int64_t known = 1;
  int infer = -1;
  for (size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      require(infer < 0, ErrorCode::kShapeMismatch, "reshape: more than one inferred axis");
      infer = static_cast<int>(i);
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0) shape[static_cast<size_t>(infer)] = known ? x.numel() / known : 0;
  require(numel(shape) == x.numel(), ErrorCode::kShapeMismatch,
          "reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  Buffer y(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(y), {x}, [x](Node& self) {
    auto& g = grad_of(x);
    for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor permute(const Tensor& x, const std::vector<int>& axes) {
  const int n = x.ndim();
  require(static_cast<int>(axes.size()) == n, ErrorCode::kShapeMismatch, "permute: axis count");
  Shape out_shape(static_cast<size_t>(n));
  std::vector<int64_t> in_strides(static_cast<size_t>(n), 1);
  for (int i = n - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * x.shape()[i + 1];
  std::vector<int64_t> src_stride(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    out_shape[i] = x.shape()[axes[i]];
    src_stride[i] = in_strides[axes[i]];
  }
  // Gather map: output linear index -> input linear index.
  const int64_t total = x.numel();
  std::vector<int64_t> gather(static_cast<size_t>(total));
  std::vector<int64_t> idx(static_cast<size_t>(n), 0);
  int64_t src = 0;
  for (int64_t o = 0; o < total; ++o) {
    gather[o] = src;
    for (int d = n - 1; d >= 0; --d) {
      if (++idx[d] < out_shape[d]) {
        src += src_stride[d];
        break;
      }
      src -= src_stride[d] * (out_shape[d] - 1);
      idx[d] = 0;
    }
  }
  const auto xv = x.data();
  Buffer y(static_cast<size_t>(total));
  for (int64_t o = 0; o < total; ++o) y[o] = xv[gather[o]];
  return make_result(std::move(out_shape), std::move(y), {x}, [x, gather = std::move(gather)](Node& self) {
    auto& g = grad_of(x);
    for (size_t o = 0; o < gather.size(); ++o) g[gather[o]] += self.grad[o];
  });
}

Tensor transpose2d(const Tensor& x) {
  check_ndim(x, 2, "transpose2d");
  return permute(x, {1, 0});
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  require(!parts.empty(), ErrorCode::kInvalidArgument, "concat: no inputs");
  const int n = parts[0].ndim();
  if (axis < 0) axis += n;
  Shape out_shape = parts[0].shape();
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    require(p.ndim() == n, ErrorCode::kShapeMismatch, "concat: rank mismatch");
    for (int d = 0; d < n; ++d)
      if (d != axis && p.shape()[d] != parts[0].shape()[d])
        fail(ErrorCode::kShapeMismatch,
             "concat: " + shape_str(p.shape()) + " vs " + shape_str(parts[0].shape()));
    out_shape[axis] += p.shape()[axis];
  }
  int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= out_shape[d];
  for (int d = axis + 1; d < n; ++d) inner *= out_shape[d];
  const int64_t out_row = out_shape[axis] * inner;
  Buffer y(static_cast<size_t>(numel(out_shape)));
  std::vector<int64_t> offsets;
  int64_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const int64_t row = p.shape()[axis] * inner;
    const auto pv = p.data();
    for (int64_t o = 0; o < outer; ++o)
      std::copy_n(pv.begin() + o * row, row, y.begin() + o * out_row + off);
    off += row;
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_result(std::move(out_shape), std::move(y), inputs,
                     [inputs, offsets, outer, inner, axis, out_row](Node& self) {
                       for (size_t k = 0; k < inputs.size(); ++k) {
                         if (!wants_grad(inputs[k])) continue;
                         auto& g = grad_of(inputs[k]);
                         const int64_t row = inputs[k].shape()[axis] * inner;
                         for (int64_t o = 0; o < outer; ++o)
                           for (int64_t i = 0; i < row; ++i) g[o * row + i] += self.grad[o * out_row + offsets[k] + i];
                       }
                     });
}

Tensor slice(const Tensor& x, int axis, int64_t start, int64_t length) {
  const int n = x.ndim();
  if (axis < 0) axis += n;
  require(start >= 0 && length >= 0 && start + length <= x.shape()[axis], ErrorCode::kShapeMismatch,
          "slice out of range on " + shape_str(x.shape()));
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= out_shape[d];
  for (int d = axis + 1; d < n; ++d) inner *= out_shape[d];
  const int64_t in_row = x.shape()[axis] * inner;
  const int64_t row = length * inner;
  const int64_t off = start * inner;
  const auto xv = x.data();
  Buffer y(static_cast<size_t>(outer * row));
  for (int64_t o = 0; o < outer; ++o) std::copy_n(xv.begin() + o * in_row + off, row, y.begin() + o * row);
  return make_result(std::move(out_shape), std::move(y), {x}, [x, outer, row, in_row, off](Node& self) {
    auto& g = grad_of(x);
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t i = 0; i < row; ++i) g[o * in_row + off + i] += self.grad[o * row + i];
  });
}

Tensor add_channel_bias(const Tensor& x, const Tensor& b) {
  require(x.ndim() >= 2 && b.ndim() == 1 && b.shape()[0] == x.shape()[1], ErrorCode::kShapeMismatch,
          "add_channel_bias: " + shape_str(x.shape()) + " + " + shape_str(b.shape()));
  const int64_t N = x.shape()[0], C = x.shape()[1], S = x.numel() / (N * C);
  Buffer y(x.data().begin(), x.data().end());
  const auto bv = b.data();
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t s = 0; s < S; ++s) y[(n * C + c) * S + s] += bv[c];
  return make_result(x.shape(), std::move(y), {x, b}, [x, b, N, C, S](Node& self) {
    if (wants_grad(x)) {
      auto& g = grad_of(x);
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants_grad(b)) {
      auto& g = grad_of(b);
      for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c)
          for (int64_t s = 0; s < S; ++s) g[c] += self.grad[(n * C + c) * S + s];
    }
  });
}

Tensor add_broadcast_batch(const Tensor& x, const Tensor& p) {
  check_ndim(x, 3, "add_broadcast_batch");
  require(p.ndim() == 2 && p.shape()[0] == x.shape()[1] && p.shape()[1] == x.shape()[2],
          ErrorCode::kShapeMismatch, "add_broadcast_batch: " + shape_str(x.shape()) + " + " + shape_str(p.shape()));
  const int64_t B = x.shape()[0], SD = p.numel();
  Buffer y(x.data().begin(), x.data().end());
  const auto pv = p.data();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t i = 0; i < SD; ++i) y[b * SD + i] += pv[i];
  return make_result(x.shape(), std::move(y), {x, p}, [x, p, B, SD](Node& self) {
    if (wants_grad(x)) {
      auto& g = grad_of(x);
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants_grad(p)) {
      auto& g = grad_of(p);
      for (int64_t b = 0; b < B; ++b)
        for (int64_t i = 0; i < SD; ++i) g[i] += self.grad[b * SD + i];
    }
  });
}

Tensor repeat_batch(const Tensor& x, int64_t batch) {
  check_ndim(x, 2, "repeat_batch");
  const int64_t SD = x.numel();
  Buffer y(static_cast<size_t>(batch * SD));
  const auto xv = x.data();
  for (int64_t b = 0; b < batch; ++b) std::copy(xv.begin(), xv.end(), y.begin() + b * SD);
  return make_result({batch, x.shape()[0], x.shape()[1]}, std::move(y), {x}, [x, batch, SD](Node& self) {
    auto& g = grad_of(x);
    for (int64_t b = 0; b < batch; ++b)
      for (int64_t i = 0; i < SD; ++i) g[i] += self.grad[b * SD + i];
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_ndim(a, 2, "matmul");
  check_ndim(b, 2, "matmul");
  const int64_t N = a.shape()[0], K = a.shape()[1], M = b.shape()[1];
  require(b.shape()[0] == K, ErrorCode::kShapeMismatch,
          "matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Buffer y(static_cast<size_t>(N * M));
  MMap(y.data(), N, M).noalias() = CMap(a.data().data(), N, K) * CMap(b.data().data(), K, M);
  return make_result({N, M}, std::move(y), {a, b}, [a, b, N, K, M](Node& self) {
    CMap G(self.grad.data(), N, M);
    if (wants_grad(a)) MMap(grad_of(a).data(), N, K).noalias() += G * CMap(b.data().data(), K, M).transpose();
    if (wants_grad(b)) MMap(grad_of(b).data(), K, M).noalias() += CMap(a.data().data(), N, K).transpose() * G;
  });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  check_ndim(a, 3, "bmm");
  check_ndim(b, 3, "bmm");
  const int64_t B = a.shape()[0], N = a.shape()[1], K = a.shape()[2], M = b.shape()[2];
  require(b.shape()[0] == B && b.shape()[1] == K, ErrorCode::kShapeMismatch,
          "bmm: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Buffer y(static_cast<size_t>(B * N * M));
  const double* ap = a.data().data();
  const double* bp = b.data().data();
  for (int64_t i = 0; i < B; ++i)
    MMap(y.data() + i * N * M, N, M).noalias() = CMap(ap + i * N * K, N, K) * CMap(bp + i * K * M, K, M);
  return make_result({B, N, M}, std::move(y), {a, b}, [a, b, B, N, K, M](Node& self) {
    const double* ap2 = a.data().data();
    const double* bp2 = b.data().data();
    for (int64_t i = 0; i < B; ++i) {
      CMap G(self.grad.data() + i * N * M, N, M);
      if (wants_grad(a))
        MMap(grad_of(a).data() + i * N * K, N, K).noalias() += G * CMap(bp2 + i * K * M, K, M).transpose();
      if (wants_grad(b))
        MMap(grad_of(b).data() + i * K * M, K, M).noalias() += CMap(ap2 + i * N * K, N, K).transpose() * G;
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  check_ndim(w, 2, "linear");
  const int64_t out_f = w.shape()[0], in_f = w.shape()[1];
  require(x.ndim() >= 1 && x.shape().back() == in_f, ErrorCode::kShapeMismatch,
          "linear: input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
  if (b.defined())
    require(b.ndim() == 1 && b.shape()[0] == out_f, ErrorCode::kShapeMismatch, "linear: bias shape");
  const int64_t R = x.numel() / in_f;
  Shape out_shape = x.shape();
  out_shape.back() = out_f;
  Buffer y(static_cast<size_t>(R * out_f));
  MMap Y(y.data(), R, out_f);
  Y.noalias() = CMap(x.data().data(), R, in_f) * CMap(w.data().data(), out_f, in_f).transpose();
  if (b.defined()) Y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.data().data(), out_f);
  return make_result(std::move(out_shape), std::move(y), {x, w, b}, [x, w, b, R, in_f, out_f](Node& self) {
    CMap G(self.grad.data(), R, out_f);
    if (wants_grad(x)) MMap(grad_of(x).data(), R, in_f).noalias() += G * CMap(w.data().data(), out_f, in_f);
    if (wants_grad(w)) MMap(grad_of(w).data(), out_f, in_f).noalias() += G.transpose() * CMap(x.data().data(), R, in_f);
    if (wants_grad(b)) Eigen::Map<Eigen::RowVectorXd>(grad_of(b).data(), out_f) += G.colwise().sum();
  });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, Conv2dGeometry geom) {
  check_ndim(x, 4, "conv2d");
  check_ndim(w, 4, "conv2d");
  const int64_t N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  const int64_t O = w.shape()[0], KH = w.shape()[2], KW = w.shape()[3];
  require(w.shape()[1] == C, ErrorCode::kShapeMismatch,
          "conv2d: input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
  if (b.defined()) require(b.ndim() == 1 && b.shape()[0] == O, ErrorCode::kShapeMismatch, "conv2d: bias shape");
  const int sh = geom.stride_h, sw = geom.stride_w, ph = geom.pad_h, pw = geom.pad_w;
  const int64_t Ho = (H + 2 * ph - KH) / sh + 1;
  const int64_t Wo = (W + 2 * pw - KW) / sw + 1;
  require(Ho > 0 && Wo > 0, ErrorCode::kShapeMismatch, "conv2d: kernel larger than padded input");
  const int64_t P = Ho * Wo;
  const int64_t rows = C * KH * KW;
  const int64_t cols_n = N * P;

  Buffer cols(static_cast<size_t>(rows * cols_n), 0.0);
  const double* xp = x.data().data();
  for (int64_t c = 0; c < C; ++c)
    for (int64_t kh = 0; kh < KH; ++kh)
      for (int64_t kw = 0; kw < KW; ++kw) {
        double* dst = cols.data() + ((c * KH + kh) * KW + kw) * cols_n;
        for (int64_t n = 0; n < N; ++n) {
          const double* src = xp + (n * C + c) * H * W;
          for (int64_t oh = 0; oh < Ho; ++oh) {
            const int64_t ih = oh * sh - ph + kh;
            if (ih < 0 || ih >= H) continue;
            for (int64_t ow = 0; ow < Wo; ++ow) {
              const int64_t iw = ow * sw - pw + kw;
              if (iw >= 0 && iw < W) dst[n * P + oh * Wo + ow] = src[ih * W + iw];
            }
          }
        }
      }

  RowMat Y = CMap(w.data().data(), O, rows) * CMap(cols.data(), rows, cols_n);
  Buffer y(static_cast<size_t>(N * O * P));
  const double* bp = b.defined() ? b.data().data() : nullptr;
  for (int64_t n = 0; n < N; ++n)
    for (int64_t o = 0; o < O; ++o) {
      const double bias = bp ? bp[o] : 0.0;
      const double* src = Y.data() + o * cols_n + n * P;
      double* dst = y.data() + (n * O + o) * P;
      for (int64_t p = 0; p < P; ++p) dst[p] = src[p] + bias;
    }

  return make_result({N, O, Ho, Wo}, std::move(y), {x, w, b},
                     [x, w, b, cols = std::move(cols), N, C, H, W, O, KH, KW, Ho, Wo, P, rows, cols_n, sh, sw, ph,
                      pw](Node& self) {
                       RowMat G(O, cols_n);
                       for (int64_t n = 0; n < N; ++n)
                         for (int64_t o = 0; o < O; ++o)
                           std::copy_n(self.grad.data() + (n * O + o) * P, P, G.data() + o * cols_n + n * P);
                       if (wants_grad(b)) {
                         auto& gb = grad_of(b);
                         for (int64_t o = 0; o < O; ++o) gb[o] += G.row(o).sum();
                       }
                       if (wants_grad(w))
                         MMap(grad_of(w).data(), O, rows).noalias() += G * CMap(cols.data(), rows, cols_n).transpose();
                       if (wants_grad(x)) {
                         RowMat dcols = CMap(w.data().data(), O, rows).transpose() * G;
                         auto& gx = grad_of(x);
                         for (int64_t c = 0; c < C; ++c)
                           for (int64_t kh = 0; kh < KH; ++kh)
                             for (int64_t kw = 0; kw < KW; ++kw) {
                               const double* src = dcols.data() + ((c * KH + kh) * KW + kw) * cols_n;
                               for (int64_t n = 0; n < N; ++n) {
                                 double* dst = gx.data() + (n * C + c) * H * W;
                                 for (int64_t oh = 0; oh < Ho; ++oh) {
                                   const int64_t ih = oh * sh - ph + kh;
                                   if (ih < 0 || ih >= H) continue;
                                   for (int64_t ow = 0; ow < Wo; ++ow) {
                                     const int64_t iw = ow * sw - pw + kw;
                                     if (iw >= 0 && iw < W) dst[ih * W + iw] += src[n * P + oh * Wo + ow];
                                   }
                                 }
                               }
                             }
                       }
                     });
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  check_ndim(x, 3, "conv1d");
  check_ndim(w, 3, "conv1d");
  const int64_t N = x.shape()[0], C = x.shape()[1], T = x.shape()[2];
  const int64_t O = w.shape()[0], K = w.shape()[2];
  Tensor y = conv2d(reshape(x, {N, C, 1, T}), reshape(w, {O, w.shape()[1], 1, K}), b,
                    Conv2dGeometry{1, stride, 0, pad});
  return reshape(y, {N, O, y.shape()[3]});
}

Tensor upsample_nearest1d(const Tensor& x, int factor) {
  check_ndim(x, 3, "upsample_nearest1d");
  const int64_t NC = x.shape()[0] * x.shape()[1], T = x.shape()[2], To = T * factor;
  Buffer y(static_cast<size_t>(NC * To));
  const auto xv = x.data();
  for (int64_t r = 0; r < NC; ++r)
    for (int64_t t = 0; t < To; ++t) y[r * To + t] = xv[r * T + t / factor];
  return make_result({x.shape()[0], x.shape()[1], To}, std::move(y), {x}, [x, NC, T, To, factor](Node& self) {
    auto& g = grad_of(x);
    for (int64_t r = 0; r < NC; ++r)
      for (int64_t t = 0; t < To; ++t) g[r * T + t / factor] += self.grad[r * To + t];
  });
}

Tensor global_avg_pool2d(const Tensor& x) {
  check_ndim(x, 4, "global_avg_pool2d");
  const int64_t N = x.shape()[0], C = x.shape()[1], S = x.shape()[2] * x.shape()[3];
  Buffer y(static_cast<size_t>(N * C));
  const auto xv = x.data();
  for (int64_t r = 0; r < N * C; ++r) {
    double s = 0.0;
    for (int64_t i = 0; i < S; ++i) s += xv[r * S + i];
    y[r] = s / static_cast<double>(S);
  }
  return make_result({N, C}, std::move(y), {x}, [x, N, C, S](Node& self) {
    auto& g = grad_of(x);
    const double inv = 1.0 / static_cast<double>(S);
    for (int64_t r = 0; r < N * C; ++r)
      for (int64_t i = 0; i < S; ++i) g[r * S + i] += self.grad[r] * inv;
  });
}

Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta, double eps) {
  require(x.ndim() >= 2, ErrorCode::kShapeMismatch, "group_norm: rank");
  const int64_t N = x.shape()[0], C = x.shape()[1], S = x.numel() / (N * C);
  require(groups > 0 && C % groups == 0, ErrorCode::kShapeMismatch, "group_norm: channels not divisible by groups");
  require(gamma.numel() == C && beta.numel() == C, ErrorCode::kShapeMismatch, "group_norm: affine shape");
  const int64_t cpg = C / groups, M = cpg * S;
  const auto xv = x.data();
  const auto gv = gamma.data();
  const auto bv = beta.data();
  Buffer xhat(xv.size()), inv_std(static_cast<size_t>(N * groups)), y(xv.size());
  for (int64_t n = 0; n < N; ++n)
    for (int64_t g = 0; g < groups; ++g) {
      const int64_t base = (n * C + g * cpg) * S;
      double mu = 0.0;
      for (int64_t i = 0; i < M; ++i) mu += xv[base + i];
      mu /= static_cast<double>(M);
      double var = 0.0;
      for (int64_t i = 0; i < M; ++i) var += (xv[base + i] - mu) * (xv[base + i] - mu);
      var /= static_cast<double>(M);
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std[n * groups + g] = is;
      for (int64_t i = 0; i < M; ++i) {
        const int64_t c = g * cpg + i / S;
        xhat[base + i] = (xv[base + i] - mu) * is;
        y[base + i] = xhat[base + i] * gv[c] + bv[c];
      }
    }
  return make_result(x.shape(), std::move(y), {x, gamma, beta},
                     [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), N, C, S, groups, cpg,
                      M](Node& self) {
                       const auto gv2 = gamma.data();
                       if (wants_grad(gamma) || wants_grad(beta)) {
                         Buffer dg(static_cast<size_t>(C), 0.0), db(static_cast<size_t>(C), 0.0);
                         for (int64_t n = 0; n < N; ++n)
                           for (int64_t c = 0; c < C; ++c)
                             for (int64_t s = 0; s < S; ++s) {
                               const int64_t i = (n * C + c) * S + s;
                               dg[c] += self.grad[i] * xhat[i];
                               db[c] += self.grad[i];
                             }
                         if (wants_grad(gamma)) {
                           auto& g = grad_of(gamma);
                           for (int64_t c = 0; c < C; ++c) g[c] += dg[c];
                         }
                         if (wants_grad(beta)) {
                           auto& g = grad_of(beta);
                           for (int64_t c = 0; c < C; ++c) g[c] += db[c];
                         }
                       }
                       if (wants_grad(x)) {
                         auto& gx = grad_of(x);
                         Buffer dxhat(static_cast<size_t>(M));
                         for (int64_t n = 0; n < N; ++n)
                           for (int64_t g = 0; g < groups; ++g) {
                             const int64_t base = (n * C + g * cpg) * S;
                             double s1 = 0.0, s2 = 0.0;
                             for (int64_t i = 0; i < M; ++i) {
                               const int64_t c = g * cpg + i / S;
                               dxhat[i] = self.grad[base + i] * gv2[c];
                               s1 += dxhat[i];
                               s2 += dxhat[i] * xhat[base + i];
                             }
                             const double is = inv_std[n * groups + g];
                             const double inv_m = 1.0 / static_cast<double>(M);
                             for (int64_t i = 0; i < M; ++i)
                               gx[base + i] += is * (dxhat[i] - inv_m * s1 - xhat[base + i] * inv_m * s2);
                           }
                       }
                     });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const int64_t D = x.shape().back();
  require(gamma.numel() == D && beta.numel() == D, ErrorCode::kShapeMismatch, "layer_norm: affine shape");
  const int64_t R = x.numel() / D;
  const auto xv = x.data();
  const auto gv = gamma.data();
  const auto bv = beta.data();
  Buffer xhat(xv.size()), inv_std(static_cast<size_t>(R)), y(xv.size());
  for (int64_t r = 0; r < R; ++r) {
    const double* row = xv.data() + r * D;
    double mu = 0.0;
    for (int64_t i = 0; i < D; ++i) mu += row[i];
    mu /= static_cast<double>(D);
    double var = 0.0;
    for (int64_t i = 0; i < D; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= static_cast<double>(D);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (int64_t i = 0; i < D; ++i) {
      xhat[r * D + i] = (row[i] - mu) * is;
      y[r * D + i] = xhat[r * D + i] * gv[i] + bv[i];
    }
  }
  return make_result(x.shape(), std::move(y), {x, gamma, beta},
                     [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), R, D](Node& self) {
                       const auto gv2 = gamma.data();
                       if (wants_grad(gamma)) {
                         auto& g = grad_of(gamma);
                         for (int64_t r = 0; r < R; ++r)
                           for (int64_t i = 0; i < D; ++i) g[i] += self.grad[r * D + i] * xhat[r * D + i];
                       }
                       if (wants_grad(beta)) {
                         auto& g = grad_of(beta);
                         for (int64_t r = 0; r < R; ++r)
                           for (int64_t i = 0; i < D; ++i) g[i] += self.grad[r * D + i];
                       }
                       if (wants_grad(x)) {
                         auto& gx = grad_of(x);
                         const double inv_d = 1.0 / static_cast<double>(D);
                         for (int64_t r = 0; r < R; ++r) {
                           double s1 = 0.0, s2 = 0.0;
                           for (int64_t i = 0; i < D; ++i) {
                             const double dxh = self.grad[r * D + i] * gv2[i];
                             s1 += dxh;
                             s2 += dxh * xhat[r * D + i];
                           }
                           for (int64_t i = 0; i < D; ++i) {
                             const double dxh = self.grad[r * D + i] * gv2[i];
                             gx[r * D + i] += inv_std[r] * (dxh - inv_d * s1 - xhat[r * D + i] * inv_d * s2);
                           }
                         }
                       }
                     });
}

Tensor softmax(const Tensor& x) {
  const int64_t D = x.shape().back(), R = x.numel() / D;
  const auto xv = x.data();
  Buffer y(xv.size());
  for (int64_t r = 0; r < R; ++r) {
    const double* row = xv.data() + r * D;
    const double m = *std::max_element(row, row + D);
    double s = 0.0;
    for (int64_t i = 0; i < D; ++i) s += (y[r * D + i] = std::exp(row[i] - m));
    for (int64_t i = 0; i < D; ++i) y[r * D + i] /= s;
  }
  return make_result(x.shape(), std::move(y), {x}, [x, R, D](Node& self) {
    auto& g = grad_of(x);
    for (int64_t r = 0; r < R; ++r) {
      double dot = 0.0;
      for (int64_t i = 0; i < D; ++i) dot += self.grad[r * D + i] * self.value[r * D + i];
      for (int64_t i = 0; i < D; ++i) g[r * D + i] += self.value[r * D + i] * (self.grad[r * D + i] - dot);
    }
  });
}

Tensor log_softmax(const Tensor& x) {
  const int64_t D = x.shape().back(), R = x.numel() / D;
  const auto xv = x.data();
  Buffer y(xv.size());
  for (int64_t r = 0; r < R; ++r) {
    const double* row = xv.data() + r * D;
    const double m = *std::max_element(row, row + D);
    double s = 0.0;
    for (int64_t i = 0; i < D; ++i) s += std::exp(row[i] - m);
    const double lse = m + std::log(s);
    for (int64_t i = 0; i < D; ++i) y[r * D + i] = row[i] - lse;
  }
  return make_result(x.shape(), std::move(y), {x}, [x, R, D](Node& self) {
    auto& g = grad_of(x);
    for (int64_t r = 0; r < R; ++r) {
      double gs = 0.0;
      for (int64_t i = 0; i < D; ++i) gs += self.grad[r * D + i];
      for (int64_t i = 0; i < D; ++i) g[r * D + i] += self.grad[r * D + i] - std::exp(self.value[r * D + i]) * gs;
    }
  });
}

Tensor l2_normalize(const Tensor& x, double eps) {
  const int64_t D = x.shape().back(), R = x.numel() / D;
  const auto xv = x.data();
  Buffer y(xv.size()), norms(static_cast<size_t>(R));
  for (int64_t r = 0; r < R; ++r) {
    double s = 0.0;
    for (int64_t i = 0; i < D; ++i) s += xv[r * D + i] * xv[r * D + i];
    norms[r] = std::max(std::sqrt(s), eps);
    for (int64_t i = 0; i < D; ++i) y[r * D + i] = xv[r * D + i] / norms[r];
  }
  return make_result(x.shape(), std::move(y), {x}, [x, norms = std::move(norms), R, D](Node& self) {
    auto& g = grad_of(x);
    for (int64_t r = 0; r < R; ++r) {
      double dot = 0.0;
      for (int64_t i = 0; i < D; ++i) dot += self.grad[r * D + i] * self.value[r * D + i];
      for (int64_t i = 0; i < D; ++i)
        g[r * D + i] += (self.grad[r * D + i] - self.value[r * D + i] * dot) / norms[r];
    }
  });
}

Tensor film(const Tensor& x, const Tensor& scale_t, const Tensor& shift) {
  check_ndim(x, 3, "film");
  const int64_t N = x.shape()[0], C = x.shape()[1], T = x.shape()[2];
  const Shape nc{N, C};
  require(scale_t.shape() == nc && shift.shape() == nc, ErrorCode::kShapeMismatch,
          "film: features " + shape_str(x.shape()) + " vs modulation " + shape_str(scale_t.shape()));
  const auto xv = x.data();
  const auto sv = scale_t.data();
  const auto bv = shift.data();
  Buffer y(xv.size());
  for (int64_t r = 0; r < N * C; ++r)
    for (int64_t t = 0; t < T; ++t) y[r * T + t] = sv[r] * xv[r * T + t] + bv[r];
  return make_result(x.shape(), std::move(y), {x, scale_t, shift}, [x, scale_t, shift, N, C, T](Node& self) {
    const auto xv2 = x.data();
    const auto sv2 = scale_t.data();
    for (int64_t r = 0; r < N * C; ++r) {
      double ds = 0.0, db = 0.0;
      for (int64_t t = 0; t < T; ++t) {
        ds += self.grad[r * T + t] * xv2[r * T + t];
        db += self.grad[r * T + t];
      }
      if (wants_grad(scale_t)) grad_of(scale_t)[r] += ds;
      if (wants_grad(shift)) grad_of(shift)[r] += db;
      if (wants_grad(x)) {
        auto& gx = grad_of(x);
        for (int64_t t = 0; t < T; ++t) gx[r * T + t] += self.grad[r * T + t] * sv2[r];
      }
    }
  });
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  check_same_shape(pred, target, "mse_loss");
  return mean(square(sub(pred, target)));
}

Tensor l1_loss(const Tensor& pred, const Tensor& target) {
  check_same_shape(pred, target, "l1_loss");
  return mean(abs(sub(pred, target)));
}

}  // namespace vtp::nn
