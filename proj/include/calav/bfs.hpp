#pragma once

// Bayes factor scoring under a two-covariance Gaussian model.
//
// A projected LEV is modelled as y = s + n with s ~ N(mu, B^-1) (author
// style) and n ~ N(0, W^-1) (within-author noise). Precisions are stored as
// Cholesky factors L with a log-parameterised diagonal, so W = L_W L_W^T and
// B = L_B L_B^T stay positive definite under any update.

#include <cmath>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "calav/rng.hpp"

namespace calav {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class Activation { Swish, Tanh };

std::string_view activation_name(Activation a);
Activation parse_activation(std::string_view name);

enum class Hypothesis { Different = 0, Same = 1 };

struct BfsParams {
  Mat weight;  // D_b x D_lev
  Vec bias;    // D_b
  Activation activation = Activation::Swish;
  Vec mean;               // mu
  Mat within_lower;       // strictly lower part of L_W (diagonal and upper unused)
  Vec within_log_diag;    // log of diag(L_W)
  Mat between_lower;      // strictly lower part of L_B
  Vec between_log_diag;   // log of diag(L_B)
  double prior_log_odds = 0.0;  // log p(H1)/p(H0)

  std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
  Mat within_factor() const;
  Mat between_factor() const;
  Mat within_precision() const;
  Mat between_precision() const;
};

/// mu = 0, L_W = L_B = I, Glorot projection.
BfsParams init_bfs(std::size_t lev_dim, std::size_t dim, Activation activation, Rng& rng);

/// Builds lower/log-diag storage from an explicit Cholesky factor.
void set_within_factor(BfsParams& p, const Mat& lower);
void set_between_factor(BfsParams& p, const Mat& lower);

double swish(double z);

/// f(W y + b) with the configured activation.
Vec project_bfs(const Vec& y, const BfsParams& params);

/// Covariances and their factorisations for one parameter state. Built once
/// and shared by every pair scored against it.
class TwoCovarianceModel {
 public:
  explicit TwoCovarianceModel(const BfsParams& params);

  std::size_t dim() const { return static_cast<std::size_t>(mean_.size()); }
  const Mat& between_cov() const { return between_cov_; }
  const Mat& within_cov() const { return within_cov_; }
  /// Precision of the stacked pair under H1 and of a single vector under H0.
  const Mat& joint_precision() const { return joint_precision_; }
  const Mat& marginal_precision() const { return marginal_precision_; }

  /// log p(y1, y2 | H).
  double log_likelihood(const Vec& y1, const Vec& y2, Hypothesis h) const;
  /// log p(y1, y2 | H1) - log p(y1, y2 | H0).
  double score(const Vec& y1, const Vec& y2) const;

 private:
  Vec mean_;
  Mat between_cov_, within_cov_, total_cov_;
  Mat joint_precision_;     // inverse of [[T, S_b], [S_b, T]]
  Mat marginal_precision_;  // inverse of T = S_b + S_w
  double joint_logdet_ = 0.0;
  double marginal_logdet_ = 0.0;
};

/// log density of the projected pair under `h`.
double log_likelihood_pair(const Vec& y1, const Vec& y2, const BfsParams& params, Hypothesis h);

struct BfsPosterior {
  double score = 0.0;
  double probability = 0.5;
};

inline double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

/// Scores already-projected vectors.
BfsPosterior bfs_posterior(const Vec& y1_bfs, const Vec& y2_bfs, const BfsParams& params);
/// Projects both LEVs, then scores.
BfsPosterior bfs_posterior_from_levs(const Vec& lev1, const Vec& lev2, const BfsParams& params);

inline constexpr double kProbabilityFloor = 1e-12;

/// Binary cross-entropy, -[a log p + (1-a) log(1-p)], with p clamped to
/// [floor, 1 - floor].
double bfs_loss(double p, int a);

struct GaussianEntropies {
  double within = 0.0;
  double between = 0.0;
};

/// Differential entropies of N(., W^-1) and N(., B^-1).
GaussianEntropies gaussian_entropies(const BfsParams& params);

/// Mean BCE over a batch of LEV pairs with gradients for every BFS parameter.
/// LEVs are inputs only; nothing flows back to them.
struct BfsBatchResult {
  double loss = 0.0;
  std::vector<double> scores;
  std::vector<double> probabilities;
};

BfsBatchResult bfs_batch(std::span<const Vec> lev1, std::span<const Vec> lev2, std::span<const int> labels,
                         const BfsParams& params, BfsParams* grads);

}  // namespace calav
