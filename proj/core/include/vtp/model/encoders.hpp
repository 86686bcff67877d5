#pragma once

#include <nlohmann/json.hpp>
#include <vector>

#include "vtp/nn/layers.hpp"
#include "vtp/rng.hpp"

namespace vtp::model {

// Strided conv stack. Every block but the last is conv -> GroupNorm -> ReLU;
// the last is conv -> ReLU. channels.back() is the embedding dim D.
struct TrunkConfig {
  std::vector<int> channels{16, 32, 64, 64};
  std::vector<int> kernels{4, 3, 3, 3};
  std::vector<int> strides{4, 2, 2, 1};
  std::vector<int> pads{0, 1, 1, 1};
  int groups = 4;

  int embed_dim() const { return channels.back(); }
  // Spatial side of the feature map for a square input of side `input`.
  int output_size(int input) const;
  void validate() const;
};

void to_json(nlohmann::json& j, const TrunkConfig& c);
void from_json(const nlohmann::json& j, TrunkConfig& c);

class ConvTrunk : public nn::Module {
 public:
  ConvTrunk() = default;
  ConvTrunk(int in_channels, const TrunkConfig& cfg, Rng& rng);

  nn::Tensor forward(const nn::Tensor& x) const;
  void collect_parameters(const std::string& prefix, std::vector<nn::NamedTensor>& out) const override;

  std::vector<nn::Conv2d> convs;
  std::vector<nn::GroupNorm> norms;
};

struct Encoded {
  nn::Tensor embedding;    // [N, D], spatial mean of feature_map
  nn::Tensor feature_map;  // [N, D, Hf, Wf]
};

class VisionEncoder : public nn::Module {
 public:
  VisionEncoder() = default;
  VisionEncoder(int image_size, const TrunkConfig& cfg, Rng& rng);

  // images [N, 3, S, S].
  Encoded encode(const nn::Tensor& images) const;
  void collect_parameters(const std::string& prefix, std::vector<nn::NamedTensor>& out) const override;

  int image_size() const { return image_size_; }
  int embed_dim() const { return cfg_.embed_dim(); }
  int feature_size() const { return cfg_.output_size(image_size_); }

  ConvTrunk trunk;

 private:
  int image_size_ = 0;
  TrunkConfig cfg_;
};

// A 1x1 adapter conv folds the 3h collapsed channels to 3, then the same
// trunk as the vision encoder. The adapter is the only h-dependent layer.
class TactileEncoder : public nn::Module {
 public:
  TactileEncoder() = default;
  TactileEncoder(int horizon, int image_size, const TrunkConfig& cfg, Rng& rng);

  // windows [N, 3h, St, St]; a channel count other than 3h raises kHorizonMismatch.
  Encoded encode(const nn::Tensor& windows) const;
  void collect_parameters(const std::string& prefix, std::vector<nn::NamedTensor>& out) const override;

  int horizon() const { return horizon_; }
  int image_size() const { return image_size_; }
  int embed_dim() const { return cfg_.embed_dim(); }
  int feature_size() const { return cfg_.output_size(image_size_); }

  nn::Conv2d adapter;
  ConvTrunk trunk;

 private:
  int horizon_ = 0;
  int image_size_ = 0;
  TrunkConfig cfg_;
};

// Linear -> ReLU -> Linear -> l2 normalize. With proprio_dim > 0 the input is
// [embedding | proprio] and proprio is mandatory; with 0 it is forbidden.
class ProjectionHead : public nn::Module {
 public:
  ProjectionHead() = default;
  ProjectionHead(int embed_dim, int proprio_dim, int hidden, int latent, Rng& rng, bool bias = true);

  nn::Tensor project(const nn::Tensor& embedding, const nn::Tensor* proprio = nullptr) const;
  void collect_parameters(const std::string& prefix, std::vector<nn::NamedTensor>& out) const override;

  int latent_dim() const { return static_cast<int>(fc2.weight.dim(0)); }

  nn::Linear fc1, fc2;
  int embed_dim = 0;
  int proprio_dim = 0;
};

// Raises kInvalidArgument if any entry is NaN or infinite.
void require_finite(const nn::Tensor& x, const char* what);

}  // namespace vtp::model
