#include "vtp/nn/layers.hpp"

#include <cmath>
#include <map>

#include "vtp/error.hpp"

namespace vtp::nn {

namespace {

Tensor param(Tensor t) {
  t.set_requires_grad(true);
  return t;
}

void push(std::vector<NamedTensor>& out, const std::string& prefix, const char* name, const Tensor& t) {
  if (t.defined()) out.push_back({prefix + name, t});
}

}  // namespace

std::vector<NamedTensor> Module::named_parameters(const std::string& prefix) const {
  std::vector<NamedTensor> out;
  collect_parameters(prefix, out);
  return out;
}

std::vector<Tensor> Module::parameters() const {
  std::vector<Tensor> out;
  for (auto& p : named_parameters()) out.push_back(p.tensor);
  return out;
}

int64_t Module::parameter_count() const {
  int64_t n = 0;
  for (auto& p : named_parameters()) n += p.tensor.numel();
  return n;
}

void Module::set_trainable(bool trainable) {
  for (auto& p : named_parameters()) p.tensor.set_requires_grad(trainable);
}

void copy_parameters(const Module& src, Module& dst) { load_parameters(dst, src.named_parameters(), ""); }

void load_parameters(Module& dst, const std::vector<NamedTensor>& params, const std::string& prefix) {
  std::map<std::string, const Tensor*> index;
  for (auto& p : params) index[p.name] = &p.tensor;
  for (auto& p : dst.named_parameters()) {
    auto it = index.find(prefix + p.name);
    require(it != index.end(), ErrorCode::kMissingInput, "parameter '" + prefix + p.name + "' not found");
    require(it->second->shape() == p.tensor.shape(), ErrorCode::kShapeMismatch,
            "parameter '" + p.name + "': " + shape_str(it->second->shape()) + " vs " + shape_str(p.tensor.shape()));
    auto src = it->second->data();
    auto dst_data = p.tensor.mutable_data();
    std::copy(src.begin(), src.end(), dst_data.begin());
  }
}

Linear::Linear(int64_t in, int64_t out, std::mt19937_64& rng, bool with_bias) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight = param(Tensor::uniform({out, in}, rng, -bound, bound));
  if (with_bias) bias = param(Tensor::uniform({out}, rng, -bound, bound));
}

void Linear::collect_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const {
  push(out, prefix, "weight", weight);
  push(out, prefix, "bias", bias);
}

Conv2d::Conv2d(int64_t in, int64_t out, int kernel, int stride_, int pad_, std::mt19937_64& rng, bool with_bias)
    : stride(stride_), pad(pad_) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in * kernel * kernel));
  weight = param(Tensor::uniform({out, in, kernel, kernel}, rng, -bound, bound));
  if (with_bias) bias = param(Tensor::uniform({out}, rng, -bound, bound));
}

Tensor Conv2d::forward(const Tensor& x) const {
  return conv2d(x, weight, bias, Conv2dGeometry{stride, stride, pad, pad});
}

void Conv2d::collect_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const {
  push(out, prefix, "weight", weight);
  push(out, prefix, "bias", bias);
}

Conv1d::Conv1d(int64_t in, int64_t out, int kernel, int stride_, int pad_, std::mt19937_64& rng)
    : stride(stride_), pad(pad_) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in * kernel));
  weight = param(Tensor::uniform({out, in, kernel}, rng, -bound, bound));
  bias = param(Tensor::uniform({out}, rng, -bound, bound));
}

void Conv1d::collect_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const {
  push(out, prefix, "weight", weight);
  push(out, prefix, "bias", bias);
}

GroupNorm::GroupNorm(int groups_, int64_t channels)
    : groups(groups_), gamma(param(Tensor::full({channels}, 1.0))), beta(param(Tensor::zeros({channels}))) {}

void GroupNorm::collect_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const {
  push(out, prefix, "gamma", gamma);
  push(out, prefix, "beta", beta);
}

LayerNorm::LayerNorm(int64_t dim) : gamma(param(Tensor::full({dim}, 1.0))), beta(param(Tensor::zeros({dim}))) {}

void LayerNorm::collect_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const {
  push(out, prefix, "gamma", gamma);
  push(out, prefix, "beta", beta);
}

MultiheadAttention::MultiheadAttention(int64_t dim, int heads_, std::mt19937_64& rng)
    : heads(heads_),
      q_proj(dim, dim, rng),
      k_proj(dim, dim, rng),
      v_proj(dim, dim, rng),
      out_proj(dim, dim, rng) {
  require(dim % heads == 0, ErrorCode::kInvalidArgument, "attention width not divisible by head count");
}

Tensor MultiheadAttention::forward(const Tensor& query, const Tensor& key, const Tensor& value) const {
  const int64_t B = query.dim(0), Sq = query.dim(1), D = query.dim(2), Sk = key.dim(1);
  const int64_t dh = D / heads;
  auto split = [&](const Tensor& t, int64_t S) {
    return reshape(permute(reshape(t, {B, S, heads, dh}), {0, 2, 1, 3}), {B * heads, S, dh});
  };
  Tensor q = split(q_proj.forward(query), Sq);
  Tensor k = split(k_proj.forward(key), Sk);
  Tensor v = split(v_proj.forward(value), Sk);
  Tensor scores = scale(bmm(q, permute(k, {0, 2, 1})), 1.0 / std::sqrt(static_cast<double>(dh)));
  Tensor ctx = bmm(softmax(scores), v);
  ctx = reshape(permute(reshape(ctx, {B, heads, Sq, dh}), {0, 2, 1, 3}), {B, Sq, D});
  return out_proj.forward(ctx);
}

void MultiheadAttention::collect_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const {
  q_proj.collect_parameters(prefix + "q_proj.", out);
  k_proj.collect_parameters(prefix + "k_proj.", out);
  v_proj.collect_parameters(prefix + "v_proj.", out);
  out_proj.collect_parameters(prefix + "out_proj.", out);
}

namespace {
Tensor with_pos(const Tensor& x, const Tensor& pos) { return pos.defined() ? add(x, pos) : x; }
}  // namespace

TransformerEncoderLayer::TransformerEncoderLayer(int64_t dim, int heads, int64_t ffn_dim, std::mt19937_64& rng)
    : self_attn(dim, heads, rng), ffn1(dim, ffn_dim, rng), ffn2(ffn_dim, dim, rng), norm1(dim), norm2(dim) {}

Tensor TransformerEncoderLayer::forward(const Tensor& x, const Tensor& pos) const {
  Tensor qk = with_pos(x, pos);
  Tensor h = norm1.forward(add(x, self_attn.forward(qk, qk, x)));
  return norm2.forward(add(h, ffn2.forward(relu(ffn1.forward(h)))));
}

void TransformerEncoderLayer::collect_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const {
  self_attn.collect_parameters(prefix + "self_attn.", out);
  ffn1.collect_parameters(prefix + "ffn1.", out);
  ffn2.collect_parameters(prefix + "ffn2.", out);
  norm1.collect_parameters(prefix + "norm1.", out);
  norm2.collect_parameters(prefix + "norm2.", out);
}

TransformerDecoderLayer::TransformerDecoderLayer(int64_t dim, int heads, int64_t ffn_dim, std::mt19937_64& rng)
    : self_attn(dim, heads, rng),
      cross_attn(dim, heads, rng),
      ffn1(dim, ffn_dim, rng),
      ffn2(ffn_dim, dim, rng),
      norm1(dim),
      norm2(dim),
      norm3(dim) {}

Tensor TransformerDecoderLayer::forward(const Tensor& tgt, const Tensor& memory, const Tensor& query_pos,
                                        const Tensor& memory_pos) const {
  Tensor q = with_pos(tgt, query_pos);
  Tensor h = norm1.forward(add(tgt, self_attn.forward(q, q, tgt)));
  h = norm2.forward(add(h, cross_attn.forward(with_pos(h, query_pos), with_pos(memory, memory_pos), memory)));
  return norm3.forward(add(h, ffn2.forward(relu(ffn1.forward(h)))));
}

void TransformerDecoderLayer::collect_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const {
  self_attn.collect_parameters(prefix + "self_attn.", out);
  cross_attn.collect_parameters(prefix + "cross_attn.", out);
  ffn1.collect_parameters(prefix + "ffn1.", out);
  ffn2.collect_parameters(prefix + "ffn2.", out);
  norm1.collect_parameters(prefix + "norm1.", out);
  norm2.collect_parameters(prefix + "norm2.", out);
  norm3.collect_parameters(prefix + "norm3.", out);
}

}  // namespace vtp::nn
