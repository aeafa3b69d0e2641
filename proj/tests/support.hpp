#pragma once

// Shared fixtures and independent oracles for unit and acceptance tests.

#include <functional>
#include <string>
#include <vector>

#include "calav/data.hpp"
#include "calav/metrics.hpp"
#include "calav/model.hpp"
#include "calav/synthetic.hpp"
#include "calav/trainer.hpp"

namespace calav::test {

/// Small encoded corpus plus training pairs drawn from it.
struct Fixture {
  PreparedCorpus corpus;
  std::vector<DocumentPair> pairs;
  std::vector<const EncodedDocument*> first, second;
  std::vector<int> labels;
};

Fixture small_fixture(std::uint64_t seed, std::size_t authors = 6, std::size_t doc_tokens = 40,
                      std::size_t max_pairs = 6);

/// Random model with every block perturbed away from its structured start.
Model random_model(const ModelConfig& cfg, const Vocabulary& vocab, std::uint64_t seed, double noise = 0.3);

/// Compact model dimensions for fast checks.
ModelConfig small_model_config();

struct GradCheck {
  double max_rel = 0.0;
  double max_abs = 0.0;  // largest analytic entry checked; guards against vacuous passes
  std::string worst;
  std::size_t checked = 0;
};

/// Central differences of `loss` against `analytic` on up to `per_block`
/// random entries of every block in `group`. Relative error is
/// |a - n| / max(|a|, |n|, floor).
GradCheck check_gradients(Model& model, const Model& analytic, ParamGroup group,
                          const std::function<double(const Model&)>& loss, std::uint64_t seed,
                          std::size_t per_block = 6, double step = 1e-5, double floor = 1e-6);

struct GroupChecks {
  GradCheck encoder_dml, bfs, ual;
};

/// Gradient checks of all three losses on a random model and small fixture.
GroupChecks check_all_groups(std::uint64_t seed, const TrainConfig& cfg);

// --- metric oracles: direct definitions, no shared code with the library

double oracle_auc(const std::vector<TrialResult>& r);
double oracle_accuracy(const std::vector<TrialResult>& r);
std::pair<double, double> oracle_f1_f05u(const std::vector<TrialResult>& r);
double oracle_brier(const std::vector<TrialResult>& r);
/// Returns (ece, mce, per-bin counts) by scanning explicit bin intervals.
struct OracleCalibration {
  double ece = 0.0, mce = 0.0;
  std::vector<std::size_t> counts;
  std::vector<double> conf, acc;
};
OracleCalibration oracle_calibration(const std::vector<TrialResult>& r, std::size_t n_bins);

/// Random trials with a posterior grid coarse enough to produce ties.
std::vector<TrialResult> random_trials(std::uint64_t seed, std::size_t n, bool coarse);

// --- two-covariance oracle by numerical integration over the latent style

/// log p(y1, y2 | same author) for diagonal-free 1- or 2-dimensional models,
/// integrating the shared latent s on a tensor grid.
double quadrature_same_log_likelihood(const Vec& y1, const Vec& y2, const Vec& mean, const Mat& between_cov,
                                      const Mat& within_cov);
/// log p(y1, y2 | different authors) with independent latents.
double quadrature_diff_log_likelihood(const Vec& y1, const Vec& y2, const Vec& mean, const Mat& between_cov,
                                      const Mat& within_cov);

}  // namespace calav::test
