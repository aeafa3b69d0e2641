#include <doctest.h>

#include <cmath>
#include <numbers>

#include "calav/bfs.hpp"
#include "support.hpp"

using namespace calav;
using namespace calav::test;

namespace {

BfsParams unit_model(std::size_t dim) {
  Rng rng(1);
  return init_bfs(dim, dim, Activation::Swish, rng);
}

Mat random_factor(std::size_t dim, Rng& rng, double scale) {
  Mat l = Mat::Zero(dim, dim);
  for (std::size_t r = 0; r < dim; ++r) {
    for (std::size_t c = 0; c < r; ++c) l(r, c) = 0.5 * rng.uniform(-1, 1);
    l(r, r) = scale * std::exp(rng.uniform(-0.5, 0.5));
  }
  return l;
}

Vec random_vec(std::size_t dim, Rng& rng, double spread) {
  Vec v(dim);
  for (std::size_t k = 0; k < dim; ++k) v[k] = spread * rng.uniform(-1, 1);
  return v;
}

}  // namespace

TEST_SUITE("bfs") {
  TEST_CASE("activations") {
    CHECK(swish(0.0) == 0.0);
    CHECK(swish(40.0) == doctest::Approx(40.0).epsilon(1e-15));
    CHECK(swish(-40.0) == doctest::Approx(0.0));
    BfsParams p = unit_model(2);
    p.weight.setZero();
    CHECK(project_bfs(Vec::Ones(2), p).isZero(0.0));
    p.activation = Activation::Tanh;
    CHECK(project_bfs(Vec::Ones(2), p).isZero(0.0));
    CHECK(parse_activation("tanh") == Activation::Tanh);
    CHECK_THROWS(parse_activation("relu"));
  }

  TEST_CASE("unit model at the mean matches quadrature") {
    const BfsParams p = unit_model(1);
    const Vec zero = Vec::Zero(1);
    const Mat one = Mat::Identity(1, 1);
    CHECK(log_likelihood_pair(zero, zero, p, Hypothesis::Same) ==
          doctest::Approx(quadrature_same_log_likelihood(zero, zero, zero, one, one)).epsilon(1e-9));
    CHECK(log_likelihood_pair(zero, zero, p, Hypothesis::Different) ==
          doctest::Approx(quadrature_diff_log_likelihood(zero, zero, zero, one, one)).epsilon(1e-9));
    // closed form of this instance: N([0,0]; 0, [[2,1],[1,2]]) has log density -log(2 pi) - log(3)/2
    CHECK(log_likelihood_pair(zero, zero, p, Hypothesis::Same) ==
          doctest::Approx(-std::log(2.0 * std::numbers::pi) - 0.5 * std::log(3.0)).epsilon(1e-14));
  }

  // identical vectors far from the mean are rarer under the different-author
  // hypothesis, so the score of an identical pair is smallest at the mean
  TEST_CASE("an identical pair scores lowest at the mean") {
    BfsParams p = unit_model(1);
    p.mean[0] = 0.3;
    const double at_mode = TwoCovarianceModel(p).score(p.mean, p.mean);
    for (double shift = -3.0; shift <= 3.0; shift += 0.01) {
      const Vec y = Vec::Constant(1, 0.3 + shift);
      if (std::abs(shift) > 1e-9) CHECK(TwoCovarianceModel(p).score(y, y) > at_mode);
    }
  }

  TEST_CASE("symmetry and posterior") {
    Rng rng(3);
    BfsParams p = unit_model(3);
    set_within_factor(p, random_factor(3, rng, 1.0));
    set_between_factor(p, random_factor(3, rng, 1.0));
    for (int k = 0; k < 20; ++k) {
      const Vec a = random_vec(3, rng, 2.0), b = random_vec(3, rng, 2.0);
      const TwoCovarianceModel m(p);
      CHECK(m.score(a, b) == doctest::Approx(m.score(b, a)).epsilon(1e-13));
      for (auto h : {Hypothesis::Same, Hypothesis::Different})
        CHECK(m.log_likelihood(a, b, h) == doctest::Approx(m.log_likelihood(b, a, h)).epsilon(1e-13));
      const auto post = bfs_posterior(a, b, p);
      CHECK(post.probability == doctest::Approx(sigmoid(post.score)).epsilon(1e-15));
    }
    CHECK(sigmoid(0.0) == 0.5);
    CHECK(sigmoid(-800.0) >= 0.0);
    CHECK(sigmoid(800.0) == 1.0);
  }

  TEST_CASE("random one-dimensional instances agree with quadrature posteriors") {
    Rng rng(4);
    for (int k = 0; k < 10; ++k) {
      BfsParams p = unit_model(1);
      set_within_factor(p, random_factor(1, rng, 1.5));
      set_between_factor(p, random_factor(1, rng, 0.8));
      p.mean = random_vec(1, rng, 0.5);
      const Vec a = random_vec(1, rng, 1.5), b = random_vec(1, rng, 1.5);
      const TwoCovarianceModel m(p);
      const double same = quadrature_same_log_likelihood(a, b, p.mean, m.between_cov(), m.within_cov());
      const double diff = quadrature_diff_log_likelihood(a, b, p.mean, m.between_cov(), m.within_cov());
      CHECK(bfs_posterior(a, b, p).probability == doctest::Approx(sigmoid(same - diff)).epsilon(1e-9));
    }
  }

  TEST_CASE("well separated vectors under a tight within-author spread favour different authors") {
    BfsParams p = unit_model(1);
    set_within_factor(p, Mat::Constant(1, 1, 10.0));  // within variance 0.01
    const Vec a = Vec::Constant(1, -0.5), b = Vec::Constant(1, 0.5);
    const TwoCovarianceModel m(p);
    const double same = quadrature_same_log_likelihood(a, b, p.mean, m.between_cov(), m.within_cov());
    const double diff = quadrature_diff_log_likelihood(a, b, p.mean, m.between_cov(), m.within_cov());
    CHECK(sigmoid(same - diff) < 0.5);
    CHECK(bfs_posterior(a, b, p).probability < 0.5);
  }

  TEST_CASE("binary cross-entropy") {
    CHECK(bfs_loss(1.0 - 1e-12, 1) == doctest::Approx(0.0));
    CHECK(bfs_loss(0.5, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(bfs_loss(0.5, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(std::isfinite(bfs_loss(0.0, 1)));
    CHECK(std::isfinite(bfs_loss(1.0, 0)));
    // d loss / d score = p - a, by central differences
    for (double s : {-2.0, 0.3, 1.7})
      for (int a : {0, 1}) {
        const double h = 1e-6;
        const double numeric = (bfs_loss(sigmoid(s + h), a) - bfs_loss(sigmoid(s - h), a)) / (2 * h);
        CHECK(numeric == doctest::Approx(sigmoid(s) - a).epsilon(1e-8));
      }
  }

  TEST_CASE("gaussian entropies") {
    BfsParams p = unit_model(1);
    CHECK(gaussian_entropies(p).within == doctest::Approx(0.5 * std::log(2 * std::numbers::pi * std::numbers::e)).epsilon(1e-15));
    CHECK(gaussian_entropies(p).within == doctest::Approx(1.4189385332).epsilon(1e-10));
    const double before = gaussian_entropies(p).within;
    set_within_factor(p, Mat::Constant(1, 1, 0.5));  // covariance 4
    CHECK(gaussian_entropies(p).within - before == doctest::Approx(0.5 * std::log(4.0)).epsilon(1e-14));

    Rng rng(5);
    BfsParams q = unit_model(2);
    set_within_factor(q, random_factor(2, rng, 1.0));
    set_between_factor(q, random_factor(2, rng, 1.0));
    for (bool within : {true, false}) {
      const Mat cov = (within ? q.within_precision() : q.between_precision()).inverse();
      const double brute = 0.5 * std::log(std::pow(2 * std::numbers::pi * std::numbers::e, 2) * cov.determinant());
      const auto h = gaussian_entropies(q);
      CHECK((within ? h.within : h.between) == doctest::Approx(brute).epsilon(1e-10));
    }
  }

  TEST_CASE("covariances stay positive definite for arbitrary factor entries") {
    Rng rng(6);
    BfsParams p = unit_model(3);
    for (int k = 0; k < 50; ++k) {
      for (Eigen::Index i = 0; i < 9; ++i) {
        p.within_lower.data()[i] = 3.0 * rng.normal();
        p.between_lower.data()[i] = 3.0 * rng.normal();
      }
      for (Eigen::Index i = 0; i < 3; ++i) {
        p.within_log_diag[i] = rng.normal();
        p.between_log_diag[i] = rng.normal();
      }
      Eigen::SelfAdjointEigenSolver<Mat> w(p.within_precision()), b(p.between_precision());
      CHECK(w.eigenvalues().minCoeff() > 0.0);
      CHECK(b.eigenvalues().minCoeff() > 0.0);
    }
  }

  TEST_CASE("batch gradients on a two-dimensional model") {
    Rng rng(7);
    BfsParams p = init_bfs(4, 2, Activation::Swish, rng);
    set_within_factor(p, random_factor(2, rng, 1.2));
    set_between_factor(p, random_factor(2, rng, 0.9));
    p.mean = random_vec(2, rng, 0.3);
    p.bias = random_vec(2, rng, 0.3);
    std::vector<Vec> l1, l2;
    std::vector<int> labels;
    for (int k = 0; k < 6; ++k) {
      l1.push_back(random_vec(4, rng, 1.0));
      l2.push_back(k % 2 ? random_vec(4, rng, 1.0) : Vec(l1.back() + random_vec(4, rng, 0.2)));
      labels.push_back(k % 2 ? 0 : 1);
    }
    BfsParams g = p;
    const auto zero = [](BfsParams& x) {
      x.weight.setZero();
      x.bias.setZero();
      x.mean.setZero();
      x.within_lower.setZero();
      x.within_log_diag.setZero();
      x.between_lower.setZero();
      x.between_log_diag.setZero();
    };
    zero(g);
    bfs_batch(l1, l2, labels, p, &g);
    const auto loss = [&](const BfsParams& q) { return bfs_batch(l1, l2, labels, q, nullptr).loss; };
    const auto check_block = [&](auto member) {
      BfsParams q = p;
      auto& block = q.*member;
      const auto& grad = g.*member;
      for (Eigen::Index i = 0; i < block.size(); ++i) {
        const double saved = block.data()[i];
        block.data()[i] = saved + 1e-5;
        const double up = loss(q);
        block.data()[i] = saved - 1e-5;
        const double down = loss(q);
        block.data()[i] = saved;
        const double numeric = (up - down) / 2e-5;
        const double a = grad.data()[i];
        CHECK(std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6}) < 1e-4);
      }
    };
    check_block(&BfsParams::weight);
    check_block(&BfsParams::bias);
    check_block(&BfsParams::mean);
    check_block(&BfsParams::within_log_diag);
    check_block(&BfsParams::between_log_diag);
    // only the strictly lower part is a parameter
    for (auto member : {&BfsParams::within_lower, &BfsParams::between_lower}) {
      BfsParams q = p;
      const double saved = (q.*member)(1, 0);
      (q.*member)(1, 0) = saved + 1e-5;
      const double up = loss(q);
      (q.*member)(1, 0) = saved - 1e-5;
      const double down = loss(q);
      CHECK((g.*member)(1, 0) == doctest::Approx((up - down) / 2e-5).epsilon(1e-4));
      CHECK((g.*member)(0, 1) == 0.0);
    }
  }

  TEST_CASE("a confident correct batch has almost no gradient") {
    Rng rng(8);
    BfsParams p = init_bfs(2, 2, Activation::Tanh, rng);
    p.weight = 3.0 * Mat::Identity(2, 2);
    // precision factors: tight within-author spread, very broad author spread
    set_within_factor(p, Mat::Identity(2, 2) * 30.0);
    set_between_factor(p, Mat::Identity(2, 2) * 0.01);
    const std::vector<Vec> l1{Vec::Constant(2, 0.4), Vec::Constant(2, 0.4)};
    const std::vector<Vec> l2{Vec::Constant(2, 0.4), Vec::Constant(2, -0.4)};
    const std::vector<int> labels{1, 0};
    BfsParams g = p;
    g.weight.setZero();
    g.bias.setZero();
    g.mean.setZero();
    g.within_lower.setZero();
    g.within_log_diag.setZero();
    g.between_lower.setZero();
    g.between_log_diag.setZero();
    const auto r = bfs_batch(l1, l2, labels, p, &g);
    CHECK(r.loss < 1e-6);
    CHECK(g.weight.cwiseAbs().maxCoeff() < 1e-5);
    CHECK(g.within_log_diag.cwiseAbs().maxCoeff() < 1e-5);
  }
}
