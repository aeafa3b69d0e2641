#pragma once

// Siamese metric-learning head: LEV projection, squared Euclidean distance,
// the exp(-gamma d^alpha) kernel posterior and the probabilistic contrastive
// loss.

#include <Eigen/Dense>

#include "calav/rng.hpp"

namespace calav {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct DmlParams {
  Mat weight;  // D_lev x D_x
  Vec bias;    // D_lev
  double log_gamma = 0.0;
  double log_alpha = 0.0;

  double gamma() const;
  double alpha() const;
};

/// Lower clamp applied to d inside d^alpha.
inline constexpr double kDistanceFloor = 1e-12;

struct ContrastiveMargins {
  double same = 0.91;  // tau_s: same-author pairs should reach p >= same
  double diff = 0.09;  // tau_d: different-author pairs should reach p <= diff
};

/// Distance margins of the classic contrastive loss on raw distances.
struct LegacyMargins {
  double same = 1.0;
  double diff = 3.0;
};

enum class DmlLoss { Probabilistic, Legacy };

struct KernelOutput {
  double distance = 0.0;
  double probability = 1.0;
};

/// y = tanh(W x + b)
Vec project_lev(const Vec& x, const DmlParams& params);

double squared_distance(const Vec& y1, const Vec& y2);

/// d = ||y1 - y2||^2, p = exp(-gamma * max(d, floor)^alpha)
KernelOutput kernel_posterior(const Vec& y1, const Vec& y2, const DmlParams& params);

/// a * max(tau_s - p, 0)^2 + (1 - a) * max(p - tau_d, 0)^2
double contrastive_loss(double p, int a, const ContrastiveMargins& m = {});

/// a * max(d - tau_s, 0)^2 + (1 - a) * max(tau_d - d, 0)^2
double legacy_contrastive_loss(double d, int a, const LegacyMargins& m = {});

/// Target curve the kernel is initialised to: (1 + cos(pi d / 4)) / 2.
double cosine_target(double d);

struct KernelFit {
  double log_gamma = 0.0;
  double log_alpha = 0.0;
  double sse = 0.0;  // summed squared error over the fitting grid
};

/// Least-squares fit of exp(-gamma d^alpha) to cosine_target on 41 evenly
/// spaced points of [0, 4], by coordinate descent in (log gamma, log alpha)
/// until one sweep moves the pair by less than `tolerance`.
KernelFit init_kernel_params(double tolerance = 1e-10);

DmlParams init_dml(std::size_t input_dim, std::size_t lev_dim, Rng& rng);

/// Forward values of one pair kept for the backward pass.
struct DmlPairForward {
  Vec y1, y2;
  KernelOutput kernel;
};

DmlPairForward dml_forward(const Vec& x1, const Vec& x2, const DmlParams& params);

/// Loss of a forward pair under the selected variant.
double dml_pair_loss(const DmlPairForward& fwd, int a, DmlLoss kind, const ContrastiveMargins& m = {},
                     const LegacyMargins& legacy = {});

struct DmlInputGrads {
  Vec dx1, dx2;
};

/// Back-propagates `scale` * loss of one pair. Accumulates into `grads`
/// (log_gamma/log_alpha only when `learn_kernel`) and returns dL/dx for both
/// inputs.
DmlInputGrads dml_backward(const DmlPairForward& fwd, const Vec& x1, const Vec& x2, int a,
                           const DmlParams& params, DmlParams& grads, double scale = 1.0,
                           DmlLoss kind = DmlLoss::Probabilistic, const ContrastiveMargins& m = {},
                           const LegacyMargins& legacy = {}, bool learn_kernel = true);

}  // namespace calav
