#pragma once

// PAN verification metrics, calibration errors and plot-ready exports.

#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "calav/sampler.hpp"
#include "calav/trainer.hpp"

namespace calav {

struct TrialResult {
  std::string pair_id;
  Subset subset = Subset::SA_SF;
  double s = 0.5;          // p(H_1 | pair)
  int a_true = 0;
  int a_hat = 0;
  double confidence = 0.5;  // max(s, 1 - s)
  bool tie = false;         // s == 0.5 exactly; a_hat defaults to 0
  bool responded = true;    // false marks a non-response
};

TrialResult make_trial(std::string pair_id, Subset subset, double s, int a_true);

enum class Stage { Dml, Bfs, Ual };
std::string_view stage_name(Stage s);
Stage parse_stage(std::string_view name);
std::vector<Stage> parse_stages(std::string_view list);

/// Trials of one stage, restricted to the subsets in `keep`.
std::vector<TrialResult> stage_trials(std::span<const PairPrediction> preds, Stage stage,
                                      const SubsetFilter& keep = SubsetFilter::all());

/// Probability that a random positive outscores a random negative; ties
/// count one half. Throws ValidationError when a class is missing.
double auc(std::span<const TrialResult> r);

/// (n_correct + n_nonresp * n_correct / n) / n
double c_at_1(std::span<const TrialResult> r);

struct FScores {
  double f1 = 0.0;
  double f_05_u = 0.0;
  bool degenerate = false;  // some denominator was zero and its score set to 0
};
FScores f1_and_f05u(std::span<const TrialResult> r);

/// 1 - mean((s - a)^2)
double brier_complement(std::span<const TrialResult> r);

struct CalibrationBin {
  double lo = 0.0, hi = 0.0;
  std::size_t count = 0;
  double confidence = 0.0;  // mean confidence, 0 when empty
  double accuracy = 0.0;    // fraction with a_hat == a_true, 0 when empty
};

struct Calibration {
  std::vector<CalibrationBin> bins;
  double ece = 0.0;
  double mce = 0.0;
};

/// Equal-width bins over [0.5, 1]; [lo, hi) except the last, which is closed.
Calibration calibration(std::span<const TrialResult> r, std::size_t n_bins = 10);

/// Index of the bin holding `confidence`.
std::size_t calibration_bin(double confidence, std::size_t n_bins);

struct MetricsReport {
  double auc = 0.0;  // NaN when a class is missing
  double c_at_1 = 0.0;
  double f_05_u = 0.0;
  double f1 = 0.0;
  double brier = 0.0;
  double overall = 0.0;
  double conf_mean = 0.0;
  double ece = 0.0;
  double mce = 0.0;
  std::size_t n = 0;

  nlohmann::json to_json() const;
};

MetricsReport compute_report(std::span<const TrialResult> r, std::size_t n_bins = 10);

/// Mean and sample standard deviation of every field across reports.
nlohmann::json average_reports(std::span<const MetricsReport> reports);

/// bin_center,confidence,accuracy,count with blanks for empty bins.
void export_reliability(std::ostream& out, const Calibration& cal);

/// Confidence histogram per subset in `keep`, each row annotated with the
/// subset's accuracy and mean confidence.
void export_histograms(std::ostream& out, std::span<const TrialResult> r, const SubsetFilter& keep,
                       std::size_t n_bins = 10);

}  // namespace calav
