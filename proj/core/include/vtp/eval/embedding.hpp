#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vtp/data/episode.hpp"
#include "vtp/model/checkpoint.hpp"
#include "vtp/model/encoders.hpp"

namespace vtp::eval {

// Dense row-major matrix of doubles.
struct Matrix {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::int64_t r, std::int64_t c) : rows(r), cols(c), values(static_cast<std::size_t>(r * c), 0.0) {}

  double& at(std::int64_t i, std::int64_t j) { return values[static_cast<std::size_t>(i * cols + j)]; }
  double at(std::int64_t i, std::int64_t j) const { return values[static_cast<std::size_t>(i * cols + j)]; }
  std::span<const double> row(std::int64_t i) const {
    return {values.data() + i * cols, static_cast<std::size_t>(cols)};
  }

  // Rows [begin, end).
  Matrix slice(std::int64_t begin, std::int64_t end) const;
  static Matrix vstack(const Matrix& a, const Matrix& b);
};

// The tactile encoder stored in a pretrain, diffusion or ACT checkpoint.
// kMissingInput when the checkpoint has none.
model::TactileEncoder tactile_encoder_from(const model::Checkpoint& ckpt);

struct EmbedOptions {
  int stride = 1;  // every stride-th timestep of each episode
};

// One row per sampled tactile window (episode-major, time ascending), holding
// the tactile encoder's pooled embedding. Windows are encoded one at a time so
// a row never depends on its neighbours.
Matrix embed_dataset(const model::Checkpoint& ckpt, std::span<const data::Episode> episodes,
                     const EmbedOptions& options = {});

// Mean over dimensions of (mean_a - mean_b)^2 / pooled variance. Symmetric in
// its arguments; near 0 when both sets come from one distribution.
double shift_score(const Matrix& a, const Matrix& b);

}  // namespace vtp::eval
