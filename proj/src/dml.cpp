#include "calav/dml.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace calav {

double DmlParams::gamma() const { return std::exp(log_gamma); }
double DmlParams::alpha() const { return std::exp(log_alpha); }

Vec project_lev(const Vec& x, const DmlParams& params) {
  return (params.weight * x + params.bias).array().tanh().matrix();
}

double squared_distance(const Vec& y1, const Vec& y2) { return (y1 - y2).squaredNorm(); }

KernelOutput kernel_posterior(const Vec& y1, const Vec& y2, const DmlParams& params) {
  KernelOutput out;
  out.distance = squared_distance(y1, y2);
  const double d = std::max(out.distance, kDistanceFloor);
  out.probability = std::exp(-params.gamma() * std::pow(d, params.alpha()));
  return out;
}

double contrastive_loss(double p, int a, const ContrastiveMargins& m) {
  const double pos = std::max(m.same - p, 0.0);
  const double neg = std::max(p - m.diff, 0.0);
  return a ? pos * pos : neg * neg;
}

double legacy_contrastive_loss(double d, int a, const LegacyMargins& m) {
  const double pos = std::max(d - m.same, 0.0);
  const double neg = std::max(m.diff - d, 0.0);
  return a ? pos * pos : neg * neg;
}

double cosine_target(double d) { return 0.5 * (1.0 + std::cos(std::numbers::pi * d / 4.0)); }

namespace {

double fit_error(double log_gamma, double log_alpha) {
  const double g = std::exp(log_gamma), al = std::exp(log_alpha);
  double sse = 0.0;
  for (int k = 0; k <= 40; ++k) {
    const double d = 0.1 * k;
    const double model = std::exp(-g * std::pow(std::max(d, kDistanceFloor), al));
    const double r = model - cosine_target(d);
    sse += r * r;
  }
  return sse;
}

// Partial derivative of fit_error in log gamma (axis 0) or log alpha (axis 1).
double fit_slope(double log_gamma, double log_alpha, int axis) {
  const double g = std::exp(log_gamma), al = std::exp(log_alpha);
  double slope = 0.0;
  for (int k = 0; k <= 40; ++k) {
    const double d = std::max(0.1 * k, kDistanceFloor);
    const double dp = std::pow(d, al);
    const double model = std::exp(-g * dp);
    const double dmodel = axis == 0 ? -g * dp * model : -g * dp * std::log(d) * al * model;
    slope += 2.0 * (model - cosine_target(0.1 * k)) * dmodel;
  }
  return slope;
}

// Golden-section search for a minimum of f on [lo, hi].
template <class F>
double golden_min(F f, double lo, double hi, double tol) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

// Line minimum along one axis: golden section to locate it, then bisection
// on the sign of the slope, which resolves far below where values go flat.
double line_min(double lg, double la, int axis) {
  const auto value = [&](double v) { return axis == 0 ? fit_error(v, la) : fit_error(lg, v); };
  const auto slope = [&](double v) { return axis == 0 ? fit_slope(v, la, 0) : fit_slope(lg, v, 1); };
  const double start = axis == 0 ? lg : la;
  const double guess = golden_min(value, start - 2.0, start + 2.0, 1e-7);
  double lo = guess - 1e-6, hi = guess + 1e-6;
  if (slope(lo) > 0.0 || slope(hi) < 0.0) return guess;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(guess)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (slope(mid) > 0.0 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

KernelFit init_kernel_params(double tolerance) {
  double lg = 0.0, la = 0.0;
  for (int sweep = 0; sweep < 10000; ++sweep) {
    const double lg_next = line_min(lg, la, 0);
    const double la_next = line_min(lg_next, la, 1);
    const double step = std::abs(lg_next - lg) + std::abs(la_next - la);
    lg = lg_next;
    la = la_next;
    if (step < tolerance) break;
  }
  return {lg, la, fit_error(lg, la)};
}

namespace {

const KernelFit& default_kernel_fit() {
  static const KernelFit fit = init_kernel_params();
  return fit;
}

}  // namespace

DmlParams init_dml(std::size_t input_dim, std::size_t lev_dim, Rng& rng) {
  DmlParams p;
  const double limit = std::sqrt(6.0 / static_cast<double>(input_dim + lev_dim));
  p.weight.resize(static_cast<Eigen::Index>(lev_dim), static_cast<Eigen::Index>(input_dim));
  for (Eigen::Index c = 0; c < p.weight.cols(); ++c)
    for (Eigen::Index r = 0; r < p.weight.rows(); ++r) p.weight(r, c) = rng.uniform(-limit, limit);
  p.bias = Vec::Zero(static_cast<Eigen::Index>(lev_dim));
  const KernelFit& fit = default_kernel_fit();
  p.log_gamma = fit.log_gamma;
  p.log_alpha = fit.log_alpha;
  return p;
}

DmlPairForward dml_forward(const Vec& x1, const Vec& x2, const DmlParams& params) {
  DmlPairForward f;
  f.y1 = project_lev(x1, params);
  f.y2 = project_lev(x2, params);
  f.kernel = kernel_posterior(f.y1, f.y2, params);
  return f;
}

double dml_pair_loss(const DmlPairForward& fwd, int a, DmlLoss kind, const ContrastiveMargins& m,
                     const LegacyMargins& legacy) {
  return kind == DmlLoss::Probabilistic ? contrastive_loss(fwd.kernel.probability, a, m)
                                        : legacy_contrastive_loss(fwd.kernel.distance, a, legacy);
}

DmlInputGrads dml_backward(const DmlPairForward& fwd, const Vec& x1, const Vec& x2, int a,
                           const DmlParams& params, DmlParams& grads, double scale, DmlLoss kind,
                           const ContrastiveMargins& m, const LegacyMargins& legacy, bool learn_kernel) {
  const double p = fwd.kernel.probability;
  const double d_raw = fwd.kernel.distance;
  double grad_d = 0.0;
  if (kind == DmlLoss::Probabilistic) {
    const double grad_p = a ? -2.0 * std::max(m.same - p, 0.0) : 2.0 * std::max(p - m.diff, 0.0);
    const double g = params.gamma(), al = params.alpha();
    const double d = std::max(d_raw, kDistanceFloor);
    const double d_pow = std::pow(d, al);
    // p = exp(-g d^al)
    if (d_raw > kDistanceFloor) grad_d = scale * grad_p * (-g * al * d_pow / d * p);
    if (learn_kernel) {
      grads.log_gamma += scale * grad_p * (-g * d_pow * p);
      grads.log_alpha += scale * grad_p * (-g * d_pow * std::log(d) * al * p);
    }
  } else {
    grad_d = scale * (a ? 2.0 * std::max(d_raw - legacy.same, 0.0) : -2.0 * std::max(legacy.diff - d_raw, 0.0));
  }

  const Vec diff = fwd.y1 - fwd.y2;
  const Vec dz1 = (2.0 * grad_d * diff).array() * (1.0 - fwd.y1.array().square());
  const Vec dz2 = (-2.0 * grad_d * diff).array() * (1.0 - fwd.y2.array().square());
  grads.weight.noalias() += dz1 * x1.transpose() + dz2 * x2.transpose();
  grads.bias += dz1 + dz2;
  return {params.weight.transpose() * dz1, params.weight.transpose() * dz2};
}

}  // namespace calav
