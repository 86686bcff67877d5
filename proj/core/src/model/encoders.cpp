#include "vtp/model/encoders.hpp"

#include <cmath>

#include "vtp/error.hpp"

namespace vtp::model {

int TrunkConfig::output_size(int input) const {
  int s = input;
  for (size_t i = 0; i < channels.size(); ++i) s = (s + 2 * pads[i] - kernels[i]) / strides[i] + 1;
  return s;
}

void TrunkConfig::validate() const {
  const size_t n = channels.size();
  require(n >= 1 && kernels.size() == n && strides.size() == n && pads.size() == n, ErrorCode::kInvalidArgument,
          "trunk channels/kernels/strides/pads must have equal non-zero length");
  require(groups >= 1, ErrorCode::kInvalidArgument, "trunk groups must be >= 1");
  for (size_t i = 0; i + 1 < n; ++i)
    require(channels[i] % groups == 0, ErrorCode::kInvalidArgument, "trunk channels must divide into groups");
}

void to_json(nlohmann::json& j, const TrunkConfig& c) {
  j = {{"channels", c.channels}, {"kernels", c.kernels}, {"strides", c.strides}, {"pads", c.pads}, {"groups", c.groups}};
}

void from_json(const nlohmann::json& j, TrunkConfig& c) {
  j.at("channels").get_to(c.channels);
  j.at("kernels").get_to(c.kernels);
  j.at("strides").get_to(c.strides);
  j.at("pads").get_to(c.pads);
  j.at("groups").get_to(c.groups);
  c.validate();
}

ConvTrunk::ConvTrunk(int in_channels, const TrunkConfig& cfg, Rng& rng) {
  cfg.validate();
  int in = in_channels;
  for (size_t i = 0; i < cfg.channels.size(); ++i) {
    convs.emplace_back(in, cfg.channels[i], cfg.kernels[i], cfg.strides[i], cfg.pads[i], rng);
    if (i + 1 < cfg.channels.size()) norms.emplace_back(cfg.groups, cfg.channels[i]);
    in = cfg.channels[i];
  }
}

nn::Tensor ConvTrunk::forward(const nn::Tensor& x) const {
  nn::Tensor h = x;
  for (size_t i = 0; i < convs.size(); ++i) {
    h = convs[i].forward(h);
    if (i < norms.size()) h = norms[i].forward(h);
    h = nn::relu(h);
  }
  return h;
}

void ConvTrunk::collect_parameters(const std::string& prefix, std::vector<nn::NamedTensor>& out) const {
  for (size_t i = 0; i < convs.size(); ++i) {
    convs[i].collect_parameters(prefix + "conv" + std::to_string(i) + ".", out);
    if (i < norms.size()) norms[i].collect_parameters(prefix + "norm" + std::to_string(i) + ".", out);
  }
}

void require_finite(const nn::Tensor& x, const char* what) {
  for (double v : x.data())
    if (!std::isfinite(v)) fail(ErrorCode::kInvalidArgument, std::string(what) + " contains non-finite values");
}

namespace {

void check_image_batch(const nn::Tensor& x, int channels, int size, const char* what) {
  require(x.ndim() == 4 && x.dim(2) == size && x.dim(3) == size, ErrorCode::kShapeMismatch,
          std::string(what) + ": expected [N, C, " + std::to_string(size) + ", " + std::to_string(size) + "], got " +
              nn::shape_str(x.shape()));
  require(x.dim(1) == channels, ErrorCode::kShapeMismatch,
          std::string(what) + ": expected " + std::to_string(channels) + " channels");
  require_finite(x, what);
}

}  // namespace

VisionEncoder::VisionEncoder(int image_size, const TrunkConfig& cfg, Rng& rng)
    : trunk(3, cfg, rng), image_size_(image_size), cfg_(cfg) {
  require(cfg.output_size(image_size) >= 1, ErrorCode::kInvalidArgument, "image too small for the trunk");
}

Encoded VisionEncoder::encode(const nn::Tensor& images) const {
  check_image_batch(images, 3, image_size_, "vision encoder input");
  nn::Tensor fmap = trunk.forward(images);
  return {nn::global_avg_pool2d(fmap), fmap};
}

void VisionEncoder::collect_parameters(const std::string& prefix, std::vector<nn::NamedTensor>& out) const {
  trunk.collect_parameters(prefix + "trunk.", out);
}

TactileEncoder::TactileEncoder(int horizon, int image_size, const TrunkConfig& cfg, Rng& rng)
    : horizon_(horizon), image_size_(image_size), cfg_(cfg) {
  require(horizon >= 1, ErrorCode::kInvalidHorizon, "tactile horizon must be >= 1");
  require(cfg.output_size(image_size) >= 1, ErrorCode::kInvalidArgument, "tactile image too small for the trunk");
  adapter = nn::Conv2d(3 * horizon, 3, 1, 1, 0, rng);
  trunk = ConvTrunk(3, cfg, rng);
}

Encoded TactileEncoder::encode(const nn::Tensor& windows) const {
  require(windows.ndim() == 4, ErrorCode::kShapeMismatch, "tactile encoder input must be [N, 3h, St, St]");
  require(windows.dim(1) == 3 * horizon_, ErrorCode::kHorizonMismatch,
          "tactile encoder built for h=" + std::to_string(horizon_) + " expects " + std::to_string(3 * horizon_) +
              " channels, got " + std::to_string(windows.dim(1)));
  check_image_batch(windows, 3 * horizon_, image_size_, "tactile encoder input");
  nn::Tensor fmap = trunk.forward(adapter.forward(windows));
  return {nn::global_avg_pool2d(fmap), fmap};
}

void TactileEncoder::collect_parameters(const std::string& prefix, std::vector<nn::NamedTensor>& out) const {
  adapter.collect_parameters(prefix + "adapter.", out);
  trunk.collect_parameters(prefix + "trunk.", out);
}

ProjectionHead::ProjectionHead(int embed_dim_in, int proprio_dim_in, int hidden, int latent, Rng& rng, bool bias)
    : fc1(embed_dim_in + proprio_dim_in, hidden, rng, bias),
      fc2(hidden, latent, rng, bias),
      embed_dim(embed_dim_in),
      proprio_dim(proprio_dim_in) {}

nn::Tensor ProjectionHead::project(const nn::Tensor& embedding, const nn::Tensor* proprio) const {
  require(embedding.ndim() == 2 && embedding.dim(1) == embed_dim, ErrorCode::kShapeMismatch,
          "projection head expects [N, " + std::to_string(embed_dim) + "] embeddings");
  nn::Tensor in = embedding;
  if (proprio_dim > 0) {
    require(proprio != nullptr, ErrorCode::kContract, "this projection head requires proprio input");
    require(proprio->ndim() == 2 && proprio->dim(0) == embedding.dim(0) && proprio->dim(1) == proprio_dim,
            ErrorCode::kShapeMismatch, "proprio must be [N, " + std::to_string(proprio_dim) + "]");
    const nn::Tensor parts[] = {embedding, *proprio};
    in = nn::concat(parts, 1);
  } else {
    require(proprio == nullptr, ErrorCode::kContract, "this projection head takes no proprio input");
  }
  return nn::l2_normalize(fc2.forward(nn::relu(fc1.forward(in))));
}

void ProjectionHead::collect_parameters(const std::string& prefix, std::vector<nn::NamedTensor>& out) const {
  fc1.collect_parameters(prefix + "fc1.", out);
  fc2.collect_parameters(prefix + "fc2.", out);
}

}  // namespace vtp::model
