#include "calav/bfs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <string>
#include <tuple>

#include "calav/error.hpp"

namespace calav {

std::string_view activation_name(Activation a) { return a == Activation::Swish ? "swish" : "tanh"; }

Activation parse_activation(std::string_view name) {
  if (name == "swish") return Activation::Swish;
  if (name == "tanh") return Activation::Tanh;
  throw ValidationError("unknown activation '" + std::string(name) + "' (expected swish or tanh)");
}

namespace {

Mat assemble_factor(const Mat& lower, const Vec& log_diag) {
  Mat l = lower.triangularView<Eigen::StrictlyLower>();
  l.diagonal() = log_diag.array().exp().matrix();
  return l;
}

void store_factor(const Mat& factor, Mat& lower, Vec& log_diag) {
  if ((factor.diagonal().array() <= 0.0).any()) throw ValidationError("Cholesky factor needs a positive diagonal");
  lower = factor.triangularView<Eigen::StrictlyLower>();
  log_diag = factor.diagonal().array().log().matrix();
}

// Covariance = (L L^T)^-1 = L^-T L^-1.
Mat covariance_from_factor(const Mat& l) {
  const Mat inv = l.triangularView<Eigen::Lower>().solve(Mat::Identity(l.rows(), l.cols()));
  return inv.transpose() * inv;
}

std::string spd_diagnostics(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> eig(m, Eigen::EigenvaluesOnly);
  std::ostringstream ss;
  ss << "dim " << m.rows() << ", eigenvalue range [" << eig.eigenvalues().minCoeff() << ", "
     << eig.eigenvalues().maxCoeff() << "]";
  return ss.str();
}

// Returns the inverse and log-determinant of an SPD matrix.
std::pair<Mat, double> spd_inverse(const Mat& m, const char* what) {
  Eigen::LLT<Mat> llt(m);
  if (llt.info() != Eigen::Success) throw NumericError(std::string(what) + " is not positive definite: " + spd_diagnostics(m));
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  if (!std::isfinite(logdet)) throw NumericError(std::string(what) + " has a non-finite log-determinant: " + spd_diagnostics(m));
  return {llt.solve(Mat::Identity(m.rows(), m.cols())), logdet};
}

}  // namespace

Mat BfsParams::within_factor() const { return assemble_factor(within_lower, within_log_diag); }
Mat BfsParams::between_factor() const { return assemble_factor(between_lower, between_log_diag); }
Mat BfsParams::within_precision() const {
  const Mat l = within_factor();
  return l * l.transpose();
}
Mat BfsParams::between_precision() const {
  const Mat l = between_factor();
  return l * l.transpose();
}

void set_within_factor(BfsParams& p, const Mat& lower) { store_factor(lower, p.within_lower, p.within_log_diag); }
void set_between_factor(BfsParams& p, const Mat& lower) { store_factor(lower, p.between_lower, p.between_log_diag); }

BfsParams init_bfs(std::size_t lev_dim, std::size_t dim, Activation activation, Rng& rng) {
  BfsParams p;
  const auto D = static_cast<Eigen::Index>(dim);
  const double limit = std::sqrt(6.0 / static_cast<double>(lev_dim + dim));
  p.weight.resize(D, static_cast<Eigen::Index>(lev_dim));
  for (Eigen::Index c = 0; c < p.weight.cols(); ++c)
    for (Eigen::Index r = 0; r < D; ++r) p.weight(r, c) = rng.uniform(-limit, limit);
  p.bias = Vec::Zero(D);
  p.activation = activation;
  p.mean = Vec::Zero(D);
  p.within_lower = Mat::Zero(D, D);
  p.within_log_diag = Vec::Zero(D);
  p.between_lower = Mat::Zero(D, D);
  p.between_log_diag = Vec::Zero(D);
  return p;
}

double swish(double z) { return z * sigmoid(z); }

Vec project_bfs(const Vec& y, const BfsParams& params) {
  Vec z = params.weight * y + params.bias;
  if (params.activation == Activation::Tanh) return z.array().tanh().matrix();
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = swish(z[i]);
  return z;
}

TwoCovarianceModel::TwoCovarianceModel(const BfsParams& params) : mean_(params.mean) {
  const auto D = static_cast<Eigen::Index>(params.dim());
  within_cov_ = covariance_from_factor(params.within_factor());
  between_cov_ = covariance_from_factor(params.between_factor());
  total_cov_ = between_cov_ + within_cov_;
  Mat joint(2 * D, 2 * D);
  joint << total_cov_, between_cov_, between_cov_, total_cov_;
  std::tie(joint_precision_, joint_logdet_) = spd_inverse(joint, "same-author pair covariance");
  std::tie(marginal_precision_, marginal_logdet_) = spd_inverse(total_cov_, "marginal covariance");
}

double TwoCovarianceModel::log_likelihood(const Vec& y1, const Vec& y2, Hypothesis h) const {
  const auto D = static_cast<double>(dim());
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  const Vec u = y1 - mean_, v = y2 - mean_;
  if (h == Hypothesis::Same) {
    Vec z(2 * u.size());
    z << u, v;
    return -0.5 * z.dot(joint_precision_ * z) - 0.5 * joint_logdet_ - D * log_2pi;
  }
  return -0.5 * (u.dot(marginal_precision_ * u) + v.dot(marginal_precision_ * v)) - marginal_logdet_ - D * log_2pi;
}

double TwoCovarianceModel::score(const Vec& y1, const Vec& y2) const {
  return log_likelihood(y1, y2, Hypothesis::Same) - log_likelihood(y1, y2, Hypothesis::Different);
}

double log_likelihood_pair(const Vec& y1, const Vec& y2, const BfsParams& params, Hypothesis h) {
  return TwoCovarianceModel(params).log_likelihood(y1, y2, h);
}

BfsPosterior bfs_posterior(const Vec& y1_bfs, const Vec& y2_bfs, const BfsParams& params) {
  BfsPosterior out;
  out.score = TwoCovarianceModel(params).score(y1_bfs, y2_bfs);
  out.probability = sigmoid(out.score + params.prior_log_odds);
  return out;
}

BfsPosterior bfs_posterior_from_levs(const Vec& lev1, const Vec& lev2, const BfsParams& params) {
  return bfs_posterior(project_bfs(lev1, params), project_bfs(lev2, params), params);
}

double bfs_loss(double p, int a) {
  const double q = std::clamp(p, kProbabilityFloor, 1.0 - kProbabilityFloor);
  return a ? -std::log(q) : -std::log(1.0 - q);
}

GaussianEntropies gaussian_entropies(const BfsParams& params) {
  const auto D = static_cast<double>(params.dim());
  const double base = 0.5 * D * std::log(2.0 * std::numbers::pi * std::numbers::e);
  // log det(P^-1) = -2 sum log diag(L)
  return {base - params.within_log_diag.sum(), base - params.between_log_diag.sum()};
}

namespace {

// d(objective)/d(covariance) -> d/d(factor storage), for covariance = (L L^T)^-1.
void factor_backward(const Mat& grad_cov, const Mat& cov, const Mat& factor, Mat& grad_lower, Vec& grad_log_diag) {
  const Mat sym = 0.5 * (grad_cov + grad_cov.transpose());
  const Mat grad_precision = -cov * sym * cov;
  const Mat grad_factor = 2.0 * grad_precision * factor;
  grad_lower += Mat(grad_factor.triangularView<Eigen::StrictlyLower>());
  grad_log_diag += grad_factor.diagonal().cwiseProduct(factor.diagonal());
}

Vec activation_backward(const Vec& pre, const Vec& grad_out, Activation act) {
  Vec g(pre.size());
  for (Eigen::Index i = 0; i < pre.size(); ++i) {
    if (act == Activation::Tanh) {
      const double t = std::tanh(pre[i]);
      g[i] = grad_out[i] * (1.0 - t * t);
    } else {
      const double s = sigmoid(pre[i]);
      g[i] = grad_out[i] * (s + pre[i] * s * (1.0 - s));
    }
  }
  return g;
}

}  // namespace

BfsBatchResult bfs_batch(std::span<const Vec> lev1, std::span<const Vec> lev2, std::span<const int> labels,
                         const BfsParams& params, BfsParams* grads) {
  const std::size_t n = labels.size();
  BfsBatchResult out;
  if (n == 0) return out;
  const TwoCovarianceModel model(params);
  const auto D = static_cast<Eigen::Index>(params.dim());

  std::vector<Vec> pre1(n), pre2(n), u(n), v(n);
  std::vector<double> g(n, 0.0);
  out.scores.resize(n);
  out.probabilities.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    pre1[k] = params.weight * lev1[k] + params.bias;
    pre2[k] = params.weight * lev2[k] + params.bias;
    Vec y1 = project_bfs(lev1[k], params), y2 = project_bfs(lev2[k], params);
    out.scores[k] = model.score(y1, y2);
    const double p = sigmoid(out.scores[k] + params.prior_log_odds);
    out.probabilities[k] = p;
    out.loss += bfs_loss(p, labels[k]) / static_cast<double>(n);
    const bool clamped = p < kProbabilityFloor || p > 1.0 - kProbabilityFloor;
    g[k] = clamped ? 0.0 : (p - labels[k]) / static_cast<double>(n);
    u[k] = y1 - params.mean;
    v[k] = y2 - params.mean;
  }
  if (!grads) return out;

  const Mat& P1 = model.joint_precision();
  const Mat& P0 = model.marginal_precision();
  Mat S1 = Mat::Zero(2 * D, 2 * D), S0 = Mat::Zero(D, D);
  double g_sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (g[k] == 0.0) continue;
    Vec z(2 * D);
    z << u[k], v[k];
    S1.noalias() += g[k] * z * z.transpose();
    S0.noalias() += g[k] * (u[k] * u[k].transpose() + v[k] * v[k].transpose());
    g_sum += g[k];

    const Vec p1z = P1 * z;
    const Vec du = g[k] * (-p1z.head(D) + P0 * u[k]);
    const Vec dv = g[k] * (-p1z.tail(D) + P0 * v[k]);
    grads->mean -= du + dv;
    const Vec dz1 = activation_backward(pre1[k], du, params.activation);
    const Vec dz2 = activation_backward(pre2[k], dv, params.activation);
    grads->weight.noalias() += dz1 * lev1[k].transpose() + dz2 * lev2[k].transpose();
    grads->bias += dz1 + dz2;
  }

  // Gradients with respect to the joint (H1) and marginal (H0) covariances.
  const Mat G1 = 0.5 * (P1 * S1 * P1 - g_sum * P1);
  const Mat G0 = 0.5 * (P0 * S0 * P0 - 2.0 * g_sum * P0);
  const Mat grad_total = G1.topLeftCorner(D, D) + G1.bottomRightCorner(D, D) - G0;
  const Mat grad_between = G1.topRightCorner(D, D) + G1.bottomLeftCorner(D, D) + grad_total;
  factor_backward(grad_total, model.within_cov(), params.within_factor(), grads->within_lower, grads->within_log_diag);
  factor_backward(grad_between, model.between_cov(), params.between_factor(), grads->between_lower,
                  grads->between_log_diag);
  return out;
}

}  // namespace calav
