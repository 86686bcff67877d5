#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <vector>

#include "vtp/eval/embedding.hpp"

namespace vtp::eval {

struct TsneConfig {
  double perplexity = 30.0;  // lowered to (n - 1) / 3 for small inputs
  int iterations = 1000;
  double learning_rate = 200.0;
  int exaggeration_iters = 250;
  double exaggeration = 12.0;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  int polish_iters = 50;  // closing plain-gradient steps with backtracking
  double entropy_tolerance = 1e-5;
  int max_bisection = 200;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const TsneConfig& c);
void from_json(const nlohmann::json& j, TsneConfig& c);

double effective_perplexity(std::int64_t n, double requested);

// Row-stochastic conditional affinities p(j|i) with a Gaussian bandwidth per
// row found by bisection so the row entropy (nats) matches log(perplexity).
struct Affinities {
  Matrix conditional;            // n x n, zero diagonal
  std::vector<double> beta;      // 1 / (2 sigma^2)
  std::vector<double> entropy;
};

// Raises kDegenerateInput when all rows coincide.
Affinities conditional_affinities(const Matrix& x, double perplexity, double tolerance = 1e-5,
                                  int max_iterations = 200);

// (P + P^T) / 2n.
Matrix joint_affinities(const Matrix& conditional);

// KL(P || Q) for the Student-t Q of layout y (n x 2).
double tsne_kl(const Matrix& p, const Matrix& y);
// d KL / d y.
Matrix tsne_gradient(const Matrix& p, const Matrix& y);

struct TsneResult {
  Matrix layout;           // n x 2
  std::vector<double> kl;  // true-P objective after each iteration
  double perplexity = 0.0;
  Affinities affinities;
};

// Gradient descent with momentum, per-coordinate gains and early exaggeration,
// then polish_iters backtracking steps that never raise the objective.
TsneResult tsne(const Matrix& x, const TsneConfig& cfg);

}  // namespace vtp::eval
