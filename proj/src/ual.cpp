#include "calav/ual.hpp"

#include <algorithm>
#include <cmath>

namespace calav {

UalParams init_ual(std::size_t lev_dim, std::size_t dim, double beta, Rng& rng) {
  UalParams p;
  const auto D = static_cast<Eigen::Index>(dim);
  const double limit = std::sqrt(6.0 / static_cast<double>(lev_dim + dim));
  p.weight.resize(D, static_cast<Eigen::Index>(lev_dim));
  for (Eigen::Index c = 0; c < p.weight.cols(); ++c)
    for (Eigen::Index r = 0; r < D; ++r) p.weight(r, c) = rng.uniform(-limit, limit);
  p.bias = Vec::Zero(D);
  p.conf_weight = Mat::Zero(4, D);
  p.conf_bias = Vec::Zero(4);
  p.conf_bias[conf_index(0, 0)] = 2.0;
  p.conf_bias[conf_index(1, 1)] = 2.0;
  p.beta = beta;
  return p;
}

Vec pair_representation(const Vec& y1, const Vec& y2, const UalParams& params) {
  const Vec sq = (y1 - y2).array().square().matrix();
  return (params.weight * sq + params.bias).array().tanh().matrix();
}

Eigen::Matrix2d confusion_matrix(const Vec& y_ual, const UalParams& params) {
  Eigen::Matrix2d c;
  for (int i = 0; i < 2; ++i) {
    const double z0 = params.conf_weight.row(conf_index(0, i)).dot(y_ual) + params.conf_bias[conf_index(0, i)];
    const double z1 = params.conf_weight.row(conf_index(1, i)).dot(y_ual) + params.conf_bias[conf_index(1, i)];
    const double m = std::max(z0, z1);
    const double e0 = std::exp(z0 - m), e1 = std::exp(z1 - m);
    c(0, i) = e0 / (e0 + e1);
    c(1, i) = e1 / (e0 + e1);
  }
  return c;
}

Eigen::Vector2d adapt_posterior(const Eigen::Matrix2d& c, double p_bfs) {
  return c * Eigen::Vector2d(1.0 - p_bfs, p_bfs);
}

UalOutput ual_forward(const Vec& y1, const Vec& y2, double p_bfs, const UalParams& params) {
  UalOutput out;
  out.y_ual = pair_representation(y1, y2, params);
  out.confusion = confusion_matrix(out.y_ual, params);
  out.p_ual = adapt_posterior(out.confusion, p_bfs);
  return out;
}

namespace {

double xlogx(double c) { return c * std::log(std::max(c, kUalFloor)); }

}  // namespace

double ual_loss(const Eigen::Vector2d& p_ual, const Eigen::Matrix2d& c, int a, double beta) {
  double reg = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) reg += xlogx(c(j, i));
  return -std::log(std::max(p_ual[a], kUalFloor)) + beta * reg;
}

double confusion_entropy(const Eigen::Matrix2d& c) {
  double h = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) h -= xlogx(c(j, i));
  return h / 2.0;
}

UalBatchResult ual_batch(std::span<const Vec> lev1, std::span<const Vec> lev2, std::span<const double> p_bfs,
                         std::span<const int> labels, const UalParams& params, UalParams* grads) {
  UalBatchResult out;
  const std::size_t n = labels.size();
  if (n == 0) return out;
  const double scale = 1.0 / static_cast<double>(n);
  out.probabilities.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const Vec sq = (lev1[k] - lev2[k]).array().square().matrix();
    const Vec y = (params.weight * sq + params.bias).array().tanh().matrix();
    const Eigen::Matrix2d c = confusion_matrix(y, params);
    const Eigen::Vector2d q = adapt_posterior(c, p_bfs[k]);
    const int a = labels[k];
    out.probabilities[k] = q[1];
    out.loss += scale * ual_loss(q, c, a, params.beta);
    out.mean_entropy += scale * confusion_entropy(c);
    if (!grads) continue;

    // dL/dC
    const Eigen::Vector2d pbar(1.0 - p_bfs[k], p_bfs[k]);
    Eigen::Matrix2d dc = Eigen::Matrix2d::Zero();
    if (q[a] > kUalFloor) dc.row(a) = -pbar.transpose() / q[a];
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        dc(j, i) += params.beta * (c(j, i) > kUalFloor ? std::log(c(j, i)) + 1.0 : std::log(kUalFloor));
    dc *= scale;

    Vec dy = Vec::Zero(y.size());
    for (int i = 0; i < 2; ++i) {
      const double inner = c(0, i) * dc(0, i) + c(1, i) * dc(1, i);
      for (int j = 0; j < 2; ++j) {
        const double dz = c(j, i) * (dc(j, i) - inner);
        const int r = conf_index(j, i);
        grads->conf_weight.row(r) += dz * y.transpose();
        grads->conf_bias[r] += dz;
        dy += dz * params.conf_weight.row(r).transpose();
      }
    }
    const Vec dpre = dy.array() * (1.0 - y.array().square());
    grads->weight.noalias() += dpre * sq.transpose();
    grads->bias += dpre;
  }
  return out;
}

}  // namespace calav
