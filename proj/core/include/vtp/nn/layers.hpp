#pragma once

#include <random>
#include <string>
#include <vector>

#include "vtp/nn/ops.hpp"
#include "vtp/nn/tensor.hpp"

namespace vtp::nn {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Base for anything holding parameters. Parameter names are dotted paths
// ("trunk.conv0.weight") and are stable across runs; checkpoints key on them.
class Module {
 public:
  virtual ~Module() = default;

  virtual void collect_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const = 0;

  std::vector<NamedTensor> named_parameters(const std::string& prefix = "") const;
  std::vector<Tensor> parameters() const;
  int64_t parameter_count() const;
  void set_trainable(bool trainable);
};

// Copies values (not handles) from `src` into `dst`, matching by name.
void copy_parameters(const Module& src, Module& dst);
// Loads values for every parameter of `dst` from `params`, where the entry
// for parameter "x" is looked up as prefix + "x". Missing names throw.
void load_parameters(Module& dst, const std::vector<NamedTensor>& params, const std::string& prefix);

class Linear : public Module {
 public:
  Linear() = default;
  Linear(int64_t in, int64_t out, std::mt19937_64& rng, bool bias = true);

  Tensor forward(const Tensor& x) const { return linear(x, weight, bias); }
  void collect_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const override;

  Tensor weight;
  Tensor bias;
};

class Conv2d : public Module {
 public:
  Conv2d() = default;
  Conv2d(int64_t in, int64_t out, int kernel, int stride, int pad, std::mt19937_64& rng, bool bias = true);

  Tensor forward(const Tensor& x) const;
  void collect_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const override;

  Tensor weight;
  Tensor bias;
  int stride = 1;
  int pad = 0;
};

class Conv1d : public Module {
 public:
  Conv1d() = default;
  Conv1d(int64_t in, int64_t out, int kernel, int stride, int pad, std::mt19937_64& rng);

  Tensor forward(const Tensor& x) const { return conv1d(x, weight, bias, stride, pad); }
  void collect_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const override;

  Tensor weight;
  Tensor bias;
  int stride = 1;
  int pad = 0;
};

class GroupNorm : public Module {
 public:
  GroupNorm() = default;
  GroupNorm(int groups, int64_t channels);

  Tensor forward(const Tensor& x) const { return group_norm(x, groups, gamma, beta); }
  void collect_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const override;

  int groups = 1;
  Tensor gamma;
  Tensor beta;
};

class LayerNorm : public Module {
 public:
  LayerNorm() = default;
  explicit LayerNorm(int64_t dim);

  Tensor forward(const Tensor& x) const { return layer_norm(x, gamma, beta); }
  void collect_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const override;

  Tensor gamma;
  Tensor beta;
};

class MultiheadAttention : public Module {
 public:
  MultiheadAttention() = default;
  MultiheadAttention(int64_t dim, int heads, std::mt19937_64& rng);

  // query [B, Sq, D]; key/value [B, Sk, D].
  Tensor forward(const Tensor& query, const Tensor& key, const Tensor& value) const;
  void collect_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const override;

  int heads = 1;
  Linear q_proj, k_proj, v_proj, out_proj;
};

// Post-norm encoder layer; `pos` (same shape as x, or undefined) is added to
// queries and keys only.
class TransformerEncoderLayer : public Module {
 public:
  TransformerEncoderLayer() = default;
  TransformerEncoderLayer(int64_t dim, int heads, int64_t ffn_dim, std::mt19937_64& rng);

  Tensor forward(const Tensor& x, const Tensor& pos) const;
  void collect_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const override;

  MultiheadAttention self_attn;
  Linear ffn1, ffn2;
  LayerNorm norm1, norm2;
};

class TransformerDecoderLayer : public Module {
 public:
  TransformerDecoderLayer() = default;
  TransformerDecoderLayer(int64_t dim, int heads, int64_t ffn_dim, std::mt19937_64& rng);

  Tensor forward(const Tensor& tgt, const Tensor& memory, const Tensor& query_pos, const Tensor& memory_pos) const;
  void collect_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const override;

  MultiheadAttention self_attn, cross_attn;
  Linear ffn1, ffn2;
  LayerNorm norm1, norm2, norm3;
};

}  // namespace vtp::nn
