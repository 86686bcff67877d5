#include "vtp/eval/tsne.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "vtp/error.hpp"
#include "vtp/log.hpp"
#include "vtp/rng.hpp"

namespace vtp::eval {

namespace {

Matrix squared_distances(const Matrix& x) {
  const auto n = x.rows;
  Matrix d(n, n);
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::int64_t k = 0; k < x.cols; ++k) {
        const double diff = x.at(i, k) - x.at(j, k);
        s += diff * diff;
      }
      d.at(i, j) = s;
      d.at(j, i) = s;
    }
  return d;
}

// Student-t kernel (1 + |yi - yj|^2)^-1 with a zero diagonal, and its sum.
Matrix student_kernel(const Matrix& y, double& total) {
  const auto n = y.rows;
  Matrix w(n, n);
  total = 0.0;
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = i + 1; j < n; ++j) {
      const double dx = y.at(i, 0) - y.at(j, 0), dy = y.at(i, 1) - y.at(j, 1);
      const double v = 1.0 / (1.0 + dx * dx + dy * dy);
      w.at(i, j) = v;
      w.at(j, i) = v;
      total += 2.0 * v;
    }
  return w;
}

// Gradient of KL(scale * P || Q); scale > 1 during early exaggeration.
Matrix gradient(const Matrix& p, const Matrix& y, double scale) {
  const auto n = y.rows;
  double total = 0.0;
  const Matrix w = student_kernel(y, total);
  Matrix g(n, 2);
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double m = 4.0 * (scale * p.at(i, j) - w.at(i, j) / total) * w.at(i, j);
      g.at(i, 0) += m * (y.at(i, 0) - y.at(j, 0));
      g.at(i, 1) += m * (y.at(i, 1) - y.at(j, 1));
    }
  return g;
}

}  // namespace

void TsneConfig::validate() const {
  require(perplexity > 0.0, ErrorCode::kInvalidArgument, "perplexity must be > 0");
  require(iterations >= 1 && exaggeration_iters >= 0 && polish_iters >= 0 &&
              exaggeration_iters + polish_iters <= iterations,
          ErrorCode::kInvalidArgument, "need exaggeration_iters + polish_iters <= iterations");
  require(learning_rate > 0.0 && exaggeration >= 1.0, ErrorCode::kInvalidArgument,
          "learning_rate must be > 0 and exaggeration >= 1");
  require(initial_momentum >= 0.0 && initial_momentum < 1.0 && final_momentum >= 0.0 && final_momentum < 1.0,
          ErrorCode::kInvalidArgument, "momentum must lie in [0, 1)");
  require(entropy_tolerance > 0.0 && max_bisection >= 1, ErrorCode::kInvalidArgument,
          "entropy_tolerance must be > 0");
}

void to_json(nlohmann::json& j, const TsneConfig& c) {
  j = {{"perplexity", c.perplexity},
       {"iterations", c.iterations},
       {"learning_rate", c.learning_rate},
       {"exaggeration_iters", c.exaggeration_iters},
       {"exaggeration", c.exaggeration},
       {"initial_momentum", c.initial_momentum},
       {"final_momentum", c.final_momentum},
       {"polish_iters", c.polish_iters},
       {"entropy_tolerance", c.entropy_tolerance},
       {"max_bisection", c.max_bisection},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TsneConfig& c) {
  j.at("perplexity").get_to(c.perplexity);
  j.at("iterations").get_to(c.iterations);
  j.at("learning_rate").get_to(c.learning_rate);
  j.at("exaggeration_iters").get_to(c.exaggeration_iters);
  j.at("exaggeration").get_to(c.exaggeration);
  j.at("initial_momentum").get_to(c.initial_momentum);
  j.at("final_momentum").get_to(c.final_momentum);
  j.at("polish_iters").get_to(c.polish_iters);
  j.at("entropy_tolerance").get_to(c.entropy_tolerance);
  j.at("max_bisection").get_to(c.max_bisection);
  j.at("seed").get_to(c.seed);
}

double effective_perplexity(std::int64_t n, double requested) {
  return std::min(requested, static_cast<double>(n - 1) / 3.0);
}

Affinities conditional_affinities(const Matrix& x, double perplexity, double tolerance, int max_iterations) {
  const auto n = x.rows;
  require(n >= 2 && x.cols >= 1, ErrorCode::kInvalidArgument, "tsne needs at least two rows");
  require(perplexity >= 1.0 && perplexity <= static_cast<double>(n - 1), ErrorCode::kInvalidArgument,
          "perplexity must lie in [1, n - 1]");
  for (double v : x.values) require(std::isfinite(v), ErrorCode::kInvalidArgument, "tsne input is not finite");
  const Matrix d = squared_distances(x);
  require(std::any_of(d.values.begin(), d.values.end(), [](double v) { return v > 0.0; }),
          ErrorCode::kDegenerateInput, "all input rows are identical");

  const double target = std::log(perplexity);
  Affinities a{Matrix(n, n), std::vector<double>(static_cast<std::size_t>(n)),
               std::vector<double>(static_cast<std::size_t>(n))};
  std::vector<double> row(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    // Shift by the nearest distance so exp() stays in range; entropy is unchanged.
    double nearest = std::numeric_limits<double>::infinity();
    for (std::int64_t j = 0; j < n; ++j)
      if (j != i) nearest = std::min(nearest, d.at(i, j));

    auto evaluate = [&](double beta, double& entropy) {
      double sum = 0.0, weighted = 0.0;
      for (std::int64_t j = 0; j < n; ++j) {
        const auto jj = static_cast<std::size_t>(j);
        if (j == i) {
          row[jj] = 0.0;
          continue;
        }
        const double shifted = d.at(i, j) - nearest;
        row[jj] = std::exp(-beta * shifted);
        sum += row[jj];
        weighted += shifted * row[jj];
      }
      entropy = std::log(sum) + beta * weighted / sum;
      for (auto& v : row) v /= sum;
    };

    double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity(), entropy = 0.0;
    for (int it = 0; it < max_iterations; ++it) {
      evaluate(beta, entropy);
      const double gap = entropy - target;
      if (std::abs(gap) < tolerance) break;
      if (gap > 0.0) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = 0.5 * (beta + lo);
      }
    }
    evaluate(beta, entropy);
    a.beta[static_cast<std::size_t>(i)] = beta;
    a.entropy[static_cast<std::size_t>(i)] = entropy;
    std::copy(row.begin(), row.end(), a.conditional.values.begin() + i * n);
  }
  return a;
}

Matrix joint_affinities(const Matrix& conditional) {
  const auto n = conditional.rows;
  Matrix p(n, n);
  const double scale = 1.0 / (2.0 * static_cast<double>(n));
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < n; ++j) p.at(i, j) = (conditional.at(i, j) + conditional.at(j, i)) * scale;
  return p;
}

double tsne_kl(const Matrix& p, const Matrix& y) {
  require(p.rows == y.rows && p.cols == y.rows && y.cols == 2, ErrorCode::kShapeMismatch,
          "tsne_kl: need p [n, n] and y [n, 2]");
  double total = 0.0;
  const Matrix w = student_kernel(y, total);
  double kl = 0.0;
  for (std::int64_t i = 0; i < p.rows; ++i)
    for (std::int64_t j = 0; j < p.rows; ++j) {
      const double pij = p.at(i, j);
      if (i == j || pij <= 0.0) continue;
      kl += pij * std::log(pij * total / w.at(i, j));
    }
  return kl;
}

Matrix tsne_gradient(const Matrix& p, const Matrix& y) {
  require(p.rows == y.rows && p.cols == y.rows && y.cols == 2, ErrorCode::kShapeMismatch,
          "tsne_gradient: need p [n, n] and y [n, 2]");
  return gradient(p, y, 1.0);
}

TsneResult tsne(const Matrix& x, const TsneConfig& cfg) {
  cfg.validate();
  require(x.rows >= 4, ErrorCode::kInvalidArgument, "tsne needs at least 4 rows");
  TsneResult r;
  r.perplexity = effective_perplexity(x.rows, cfg.perplexity);
  if (r.perplexity < cfg.perplexity)
    log::debug("tsne: perplexity lowered to " + std::to_string(r.perplexity) + " for " + std::to_string(x.rows) +
               " points");
  r.affinities = conditional_affinities(x, r.perplexity, cfg.entropy_tolerance, cfg.max_bisection);
  const Matrix p = joint_affinities(r.affinities.conditional);

  const auto n = x.rows;
  Rng rng(mix_seed(cfg.seed, 0x75ull));
  std::normal_distribution<double> normal(0.0, 1e-4);
  Matrix y(n, 2), velocity(n, 2), gains(n, 2);
  for (auto& v : y.values) v = normal(rng);
  std::fill(gains.values.begin(), gains.values.end(), 1.0);

  auto recenter = [&] {
    for (int c = 0; c < 2; ++c) {
      double mean = 0.0;
      for (std::int64_t i = 0; i < n; ++i) mean += y.at(i, c);
      mean /= static_cast<double>(n);
      for (std::int64_t i = 0; i < n; ++i) y.at(i, c) -= mean;
    }
  };

  r.kl.reserve(static_cast<std::size_t>(cfg.iterations));
  const int momentum_iters = cfg.iterations - cfg.polish_iters;
  for (int it = 0; it < momentum_iters; ++it) {
    const bool early = it < cfg.exaggeration_iters;
    const double momentum = early ? cfg.initial_momentum : cfg.final_momentum;
    const Matrix g = gradient(p, y, early ? cfg.exaggeration : 1.0);
    for (std::size_t k = 0; k < y.values.size(); ++k) {
      // Grow the gain while the step keeps its direction, shrink it on reversal.
      const bool same_sign = (g.values[k] > 0.0) == (velocity.values[k] > 0.0);
      gains.values[k] = std::max(0.01, same_sign ? gains.values[k] * 0.8 : gains.values[k] + 0.2);
      velocity.values[k] = momentum * velocity.values[k] - cfg.learning_rate * gains.values[k] * g.values[k];
      y.values[k] += velocity.values[k];
    }
    recenter();
    r.kl.push_back(tsne_kl(p, y));
  }

  double kl = momentum_iters > 0 ? r.kl.back() : tsne_kl(p, y);
  double step = cfg.learning_rate;
  for (int it = 0; it < cfg.polish_iters; ++it) {
    const Matrix g = gradient(p, y, 1.0);
    Matrix trial = y;
    for (int halvings = 0; halvings < 40; ++halvings, step *= 0.5) {
      for (std::size_t k = 0; k < y.values.size(); ++k) trial.values[k] = y.values[k] - step * g.values[k];
      const double candidate = tsne_kl(p, trial);
      if (candidate <= kl) {
        y = std::move(trial);
        kl = candidate;
        step *= 1.5;
        break;
      }
    }
    r.kl.push_back(kl);
  }
  r.layout = std::move(y);
  return r;
}

}  // namespace vtp::eval
