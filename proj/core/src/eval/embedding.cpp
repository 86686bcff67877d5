#include "vtp/eval/embedding.hpp"

#include <algorithm>

#include "vtp/error.hpp"
#include "vtp/nn/tensor.hpp"

namespace vtp::eval {

Matrix Matrix::slice(std::int64_t begin, std::int64_t end) const {
  require(0 <= begin && begin <= end && end <= rows, ErrorCode::kInvalidArgument, "row slice out of range");
  Matrix m(end - begin, cols);
  std::copy(values.begin() + begin * cols, values.begin() + end * cols, m.values.begin());
  return m;
}

Matrix Matrix::vstack(const Matrix& a, const Matrix& b) {
  require(a.cols == b.cols, ErrorCode::kShapeMismatch, "vstack: column counts differ");
  Matrix m(a.rows + b.rows, a.cols);
  std::copy(a.values.begin(), a.values.end(), m.values.begin());
  std::copy(b.values.begin(), b.values.end(), m.values.begin() + a.rows * a.cols);
  return m;
}

model::TactileEncoder tactile_encoder_from(const model::Checkpoint& ckpt) {
  require(ckpt.has_component("tactile_encoder"), ErrorCode::kMissingInput,
          "checkpoint of kind '" + ckpt.kind + "' has no tactile encoder");
  int horizon = 0;
  model::TrunkConfig trunk;
  if (ckpt.kind == "pretrain") {
    const auto& c = ckpt.config.at("pretrain");
    horizon = c.at("horizon").get<int>();
    trunk = c.at("trunk").get<model::TrunkConfig>();
  } else if (ckpt.kind == "diffusion" || ckpt.kind == "act") {
    const auto& c = ckpt.config.at(ckpt.kind);
    horizon = c.at("tactile_horizon").get<int>();
    trunk = c.at("trunk").get<model::TrunkConfig>();
  } else {
    fail(ErrorCode::kInvalidArgument, "unsupported checkpoint kind '" + ckpt.kind + "'");
  }
  Rng rng(0);
  model::TactileEncoder enc(horizon, ckpt.config.at("tactile_size").get<int>(), trunk, rng);
  nn::load_parameters(enc, ckpt.params, "tactile_encoder.");
  return enc;
}

Matrix embed_dataset(const model::Checkpoint& ckpt, std::span<const data::Episode> episodes,
                     const EmbedOptions& options) {
  require(options.stride >= 1, ErrorCode::kInvalidArgument, "stride must be >= 1");
  const auto enc = tactile_encoder_from(ckpt);
  const int h = enc.horizon(), size = enc.image_size();
  for (const auto& ep : episodes)
    require(ep.tactile_size() == size, ErrorCode::kShapeMismatch,
            "episode tactile frames are " + std::to_string(ep.tactile_size()) + " px, encoder expects " +
                std::to_string(size));

  std::int64_t rows = 0;
  for (const auto& ep : episodes) rows += (ep.length() + options.stride - 1) / options.stride;
  Matrix out(rows, enc.embed_dim());
  const std::int64_t per = static_cast<std::int64_t>(3 * h) * size * size;
  nn::NoGradGuard no_grad;
  std::int64_t r = 0;
  for (const auto& ep : episodes)
    for (std::int64_t t = 0; t < ep.length(); t += options.stride, ++r) {
      nn::Buffer buf(static_cast<std::size_t>(per));
      ep.tactile_window_chw(t, h, buf.data());
      const auto emb = enc.encode(nn::Tensor::from_buffer({1, 3 * h, size, size}, std::move(buf))).embedding;
      std::copy(emb.data().begin(), emb.data().end(), out.values.begin() + r * out.cols);
    }
  return out;
}

double shift_score(const Matrix& a, const Matrix& b) {
  require(a.rows > 0 && b.rows > 0, ErrorCode::kInvalidArgument, "shift_score needs two non-empty sets");
  require(a.cols == b.cols, ErrorCode::kShapeMismatch, "shift_score: dimensions differ");
  // Keeps constant dimensions finite without touching informative ones.
  constexpr double kVarianceFloor = 1e-12;
  const auto d = a.cols;
  auto moments = [d](const Matrix& m, std::vector<double>& mean, std::vector<double>& ss) {
    mean.assign(static_cast<std::size_t>(d), 0.0);
    ss.assign(static_cast<std::size_t>(d), 0.0);
    for (std::int64_t i = 0; i < m.rows; ++i)
      for (std::int64_t k = 0; k < d; ++k) mean[static_cast<std::size_t>(k)] += m.at(i, k);
    for (auto& v : mean) v /= static_cast<double>(m.rows);
    for (std::int64_t i = 0; i < m.rows; ++i)
      for (std::int64_t k = 0; k < d; ++k) {
        const double c = m.at(i, k) - mean[static_cast<std::size_t>(k)];
        ss[static_cast<std::size_t>(k)] += c * c;
      }
  };
  std::vector<double> ma, sa, mb, sb;
  moments(a, ma, sa);
  moments(b, mb, sb);
  const double dof = std::max<double>(1.0, static_cast<double>(a.rows + b.rows - 2));
  double score = 0.0;
  for (std::size_t k = 0; k < static_cast<std::size_t>(d); ++k) {
    const double diff = ma[k] - mb[k];
    score += diff * diff / ((sa[k] + sb[k]) / dof + kVarianceFloor);
  }
  return score / static_cast<double>(d);
}

}  // namespace vtp::eval
