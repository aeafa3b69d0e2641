#pragma once

// Uncertainty adaptation: an input-dependent 2x2 noise channel that maps the
// BFS posterior over estimated hypotheses to a posterior over true ones.

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "calav/rng.hpp"

namespace calav {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct UalParams {
  Mat weight;        // D_u x D_lev
  Vec bias;          // D_u
  Mat conf_weight;   // 4 x D_u, row 2*j + i scores p(H_j | estimated H_i)
  Vec conf_bias;     // 4
  double beta = 0.1;

  std::size_t dim() const { return static_cast<std::size_t>(bias.size()); }
};

inline constexpr int conf_index(int j, int i) { return 2 * j + i; }

/// Identity-leaning start: w = 0, b_00 = b_11 = 2, b_01 = b_10 = 0.
UalParams init_ual(std::size_t lev_dim, std::size_t dim, double beta, Rng& rng);

struct UalOutput {
  Vec y_ual;
  Eigen::Matrix2d confusion;  // (j, i) = p(H_j | estimated H_i); columns sum to 1
  Eigen::Vector2d p_ual;      // (p(H_0), p(H_1))
};

/// tanh(W (y1 - y2)^2 + b)
Vec pair_representation(const Vec& y1, const Vec& y2, const UalParams& params);

/// Softmax over j of w_ji . y + b_ji, for each i.
Eigen::Matrix2d confusion_matrix(const Vec& y_ual, const UalParams& params);

/// C (1 - p, p)
Eigen::Vector2d adapt_posterior(const Eigen::Matrix2d& c, double p_bfs);

UalOutput ual_forward(const Vec& y1, const Vec& y2, double p_bfs, const UalParams& params);

inline constexpr double kUalFloor = 1e-12;

/// -log p_ual(H_a) + beta * sum C log C
double ual_loss(const Eigen::Vector2d& p_ual, const Eigen::Matrix2d& c, int a, double beta);

/// Mean column entropy of C in nats.
double confusion_entropy(const Eigen::Matrix2d& c);

struct UalBatchResult {
  double loss = 0.0;
  std::vector<double> probabilities;  // p_ual(H_1)
  double mean_entropy = 0.0;
};

/// Mean loss over a batch. LEVs and BFS posteriors are constants; gradients
/// reach only `grads` when given.
UalBatchResult ual_batch(std::span<const Vec> lev1, std::span<const Vec> lev2, std::span<const double> p_bfs,
                         std::span<const int> labels, const UalParams& params, UalParams* grads);

}  // namespace calav
