#include "calav/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "calav/error.hpp"

namespace calav {

TrialResult make_trial(std::string pair_id, Subset subset, double s, int a_true) {
  if (!(s >= 0.0 && s <= 1.0)) throw ValidationError("posterior outside [0, 1] for " + pair_id);
  TrialResult t;
  t.pair_id = std::move(pair_id);
  t.subset = subset;
  t.s = s;
  t.a_true = a_true;
  t.a_hat = s > 0.5 ? 1 : 0;
  t.tie = s == 0.5;
  t.confidence = std::max(s, 1.0 - s);
  return t;
}

std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::Dml: return "dml";
    case Stage::Bfs: return "bfs";
    case Stage::Ual: return "ual";
  }
  return "?";
}

Stage parse_stage(std::string_view name) {
  if (name == "dml") return Stage::Dml;
  if (name == "bfs") return Stage::Bfs;
  if (name == "ual") return Stage::Ual;
  throw ValidationError("unknown stage '" + std::string(name) + "' (expected dml, bfs or ual)");
}

std::vector<Stage> parse_stages(std::string_view list) {
  std::vector<Stage> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    const auto end = std::min(list.find(',', start), list.size());
    const auto item = list.substr(start, end - start);
    if (!item.empty()) out.push_back(parse_stage(item));
    start = end + 1;
  }
  if (out.empty()) throw ValidationError("no stages given");
  return out;
}

std::vector<TrialResult> stage_trials(std::span<const PairPrediction> preds, Stage stage, const SubsetFilter& keep) {
  std::vector<TrialResult> out;
  for (const auto& p : preds) {
    if (!keep.contains(p.pair.subset())) continue;
    const double s = stage == Stage::Dml ? p.p_dml : stage == Stage::Bfs ? p.p_bfs : p.p_ual;
    out.push_back(make_trial(p.pair.doc_1 + "|" + p.pair.doc_2, p.pair.subset(), s, p.pair.a));
  }
  return out;
}

double auc(std::span<const TrialResult> r) {
  std::vector<std::pair<double, int>> v;
  std::size_t pos = 0;
  for (const auto& t : r) {
    v.emplace_back(t.s, t.a_true);
    pos += t.a_true == 1;
  }
  const std::size_t neg = r.size() - pos;
  if (pos == 0 || neg == 0) throw ValidationError("AUC is undefined without both classes");
  std::sort(v.begin(), v.end());
  // Mann-Whitney: sum of positive ranks with average ranks for ties.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i;
    while (j < v.size() && v[j].first == v[i].first) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (v[k].second == 1) rank_sum += avg_rank;
    i = j;
  }
  const double p = static_cast<double>(pos), q = static_cast<double>(neg);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

double c_at_1(std::span<const TrialResult> r) {
  if (r.empty()) return 0.0;
  double correct = 0.0, unanswered = 0.0;
  for (const auto& t : r) {
    if (!t.responded)
      unanswered += 1.0;
    else if (t.a_hat == t.a_true)
      correct += 1.0;
  }
  const double n = static_cast<double>(r.size());
  return (correct + unanswered * correct / n) / n;
}

FScores f1_and_f05u(std::span<const TrialResult> r) {
  double tp = 0, fp = 0, fn = 0, u = 0;
  for (const auto& t : r) {
    if (!t.responded) {
      u += 1;
      continue;
    }
    if (t.a_hat == 1 && t.a_true == 1) tp += 1;
    if (t.a_hat == 1 && t.a_true == 0) fp += 1;
    if (t.a_hat == 0 && t.a_true == 1) fn += 1;
  }
  FScores f;
  const double d1 = 2 * tp + fp + fn;
  const double d05 = 1.25 * tp + 0.25 * (fn + u) + fp;
  if (d1 > 0)
    f.f1 = 2 * tp / d1;
  else
    f.degenerate = true;
  if (d05 > 0)
    f.f_05_u = 1.25 * tp / d05;
  else
    f.degenerate = true;
  return f;
}

double brier_complement(std::span<const TrialResult> r) {
  if (r.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& t : r) sum += (t.s - t.a_true) * (t.s - t.a_true);
  return 1.0 - sum / static_cast<double>(r.size());
}

std::size_t calibration_bin(double confidence, std::size_t n_bins) {
  std::size_t b = 0;
  for (std::size_t k = 1; k < n_bins; ++k)
    if (confidence >= 0.5 + 0.5 * static_cast<double>(k) / static_cast<double>(n_bins)) b = k;
  return b;
}

Calibration calibration(std::span<const TrialResult> r, std::size_t n_bins) {
  if (n_bins == 0) throw ValidationError("calibration needs at least one bin");
  Calibration cal;
  cal.bins.resize(n_bins);
  std::vector<double> conf_sum(n_bins, 0.0), correct(n_bins, 0.0);
  for (std::size_t b = 0; b < n_bins; ++b) {
    cal.bins[b].lo = 0.5 + 0.5 * static_cast<double>(b) / static_cast<double>(n_bins);
    cal.bins[b].hi = 0.5 + 0.5 * static_cast<double>(b + 1) / static_cast<double>(n_bins);
  }
  for (const auto& t : r) {
    const std::size_t b = calibration_bin(t.confidence, n_bins);
    cal.bins[b].count += 1;
    conf_sum[b] += t.confidence;
    correct[b] += t.a_hat == t.a_true ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(r.size());
  for (std::size_t b = 0; b < n_bins; ++b) {
    auto& bin = cal.bins[b];
    if (bin.count == 0) continue;
    const double c = static_cast<double>(bin.count);
    bin.confidence = conf_sum[b] / c;
    bin.accuracy = correct[b] / c;
    const double gap = std::abs(bin.accuracy - bin.confidence);
    cal.ece += c / n * gap;
    cal.mce = std::max(cal.mce, gap);
  }
  return cal;
}

nlohmann::json MetricsReport::to_json() const {
  const auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  return {{"auc", num(auc)},     {"c_at_1", num(c_at_1)},       {"f_05_u", num(f_05_u)}, {"f1", num(f1)},
          {"brier", num(brier)}, {"overall", num(overall)},     {"conf_mean", num(conf_mean)},
          {"ece", num(ece)},     {"mce", num(mce)},             {"n", n}};
}

MetricsReport compute_report(std::span<const TrialResult> r, std::size_t n_bins) {
  MetricsReport m;
  m.n = r.size();
  try {
    m.auc = auc(r);
  } catch (const ValidationError&) {
    m.auc = std::numeric_limits<double>::quiet_NaN();
  }
  m.c_at_1 = c_at_1(r);
  const auto f = f1_and_f05u(r);
  m.f1 = f.f1;
  m.f_05_u = f.f_05_u;
  m.brier = brier_complement(r);
  m.overall = (m.auc + m.c_at_1 + m.f_05_u + m.f1 + m.brier) / 5.0;
  double conf = 0.0;
  for (const auto& t : r) conf += t.confidence;
  m.conf_mean = r.empty() ? 0.0 : conf / static_cast<double>(r.size());
  const auto cal = calibration(r, n_bins);
  m.ece = cal.ece;
  m.mce = cal.mce;
  return m;
}

nlohmann::json average_reports(std::span<const MetricsReport> reports) {
  nlohmann::json out = nlohmann::json::object();
  const std::vector<std::pair<const char*, double MetricsReport::*>> fields = {
      {"auc", &MetricsReport::auc},     {"c_at_1", &MetricsReport::c_at_1},       {"f_05_u", &MetricsReport::f_05_u},
      {"f1", &MetricsReport::f1},       {"brier", &MetricsReport::brier},         {"overall", &MetricsReport::overall},
      {"conf_mean", &MetricsReport::conf_mean}, {"ece", &MetricsReport::ece}, {"mce", &MetricsReport::mce}};
  const double k = static_cast<double>(reports.size());
  for (const auto& [name, field] : fields) {
    double mean = 0.0;
    for (const auto& r : reports) mean += r.*field / k;
    double var = 0.0;
    for (const auto& r : reports) var += (r.*field - mean) * (r.*field - mean);
    const double sd = reports.size() > 1 ? std::sqrt(var / (k - 1.0)) : 0.0;
    const auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    out[name] = {{"mean", num(mean)}, {"std", num(sd)}};
  }
  out["runs"] = reports.size();
  return out;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void export_reliability(std::ostream& out, const Calibration& cal) {
  out << "bin_center,confidence,accuracy,count\n";
  for (const auto& b : cal.bins) {
    out << fmt(0.5 * (b.lo + b.hi)) << ',';
    if (b.count)
      out << fmt(b.confidence) << ',' << fmt(b.accuracy);
    else
      out << ',';
    out << ',' << b.count << '\n';
  }
}

void export_histograms(std::ostream& out, std::span<const TrialResult> r, const SubsetFilter& keep,
                       std::size_t n_bins) {
  out << "subset,bin_center,count,subset_accuracy,subset_confidence\n";
  for (int s = 0; s < 4; ++s) {
    const auto subset = static_cast<Subset>(s);
    if (!keep.contains(subset)) continue;
    std::vector<TrialResult> sel;
    for (const auto& t : r)
      if (t.subset == subset) sel.push_back(t);
    const auto cal = calibration(sel, n_bins);
    double acc = 0.0, conf = 0.0;
    for (const auto& t : sel) {
      acc += t.a_hat == t.a_true ? 1.0 : 0.0;
      conf += t.confidence;
    }
    const std::string acc_s = sel.empty() ? "" : fmt(acc / static_cast<double>(sel.size()));
    const std::string conf_s = sel.empty() ? "" : fmt(conf / static_cast<double>(sel.size()));
    for (const auto& b : cal.bins)
      out << subset_name(subset) << ',' << fmt(0.5 * (b.lo + b.hi)) << ',' << b.count << ',' << acc_s << ','
          << conf_s << '\n';
  }
}

}  // namespace calav
