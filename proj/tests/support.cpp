#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_map>

#include "calav/rng.hpp"

namespace calav::test {

Fixture small_fixture(std::uint64_t seed, std::size_t authors, std::size_t doc_tokens, std::size_t max_pairs) {
  StyleCorpusConfig sc;
  sc.authors = authors;
  sc.doc_tokens = doc_tokens;
  sc.style_vocab = 40;
  sc.style_tokens_per_author = 5;
  sc.topic_vocab = 10;
  sc.background_vocab = 10;
  sc.seed = seed;
  const auto docs = synthetic_style_corpus(sc);
  Fixture f;
  CorpusSplit split;
  split.train = docs;
  f.corpus = prepare_split(split, 5000, 300, {30, 26, 210, 12});
  std::vector<DocumentMeta> metas;
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t k = 0; k < f.corpus.train.size(); ++k) {
    metas.push_back(f.corpus.train[k].meta);
    index[f.corpus.train[k].meta.doc_id] = k;
  }
  // alternate labels so every loss branch carries gradient
  std::vector<DocumentPair> pool[2];
  for (std::uint64_t round = 0; round < 8; ++round)
    for (auto& p : resample_epoch(metas, {0.7, 0.6, 0.6, derive_seed(seed, round)})) pool[p.a].push_back(p);
  for (std::size_t k = 0; f.pairs.size() < max_pairs && (k < pool[0].size() || k < pool[1].size()); ++k)
    for (int a : {1, 0})
      if (k < pool[a].size() && f.pairs.size() < max_pairs) f.pairs.push_back(pool[a][k]);
  for (const auto& p : f.pairs) {
    f.first.push_back(&f.corpus.train[index.at(p.doc_1)].grid);
    f.second.push_back(&f.corpus.train[index.at(p.doc_2)].grid);
    f.labels.push_back(p.a);
  }
  return f;
}

ModelConfig small_model_config() {
  ModelConfig c;
  c.encoder = {6, 4, 5, 7};
  c.lev_dim = 5;
  c.bfs_dim = 3;
  c.ual_dim = 4;
  return c;
}

Model random_model(const ModelConfig& cfg, const Vocabulary& vocab, std::uint64_t seed, double noise) {
  Model m = init_model(cfg, vocab.token_count(), vocab.char_count(), seed);
  Rng rng(derive_seed(seed, 77));
  for (auto& p : parameters(m))
    for (Eigen::Index k = 0; k < p.size(); ++k) p.data[k] += noise * rng.normal();
  m.tables.word.row(Vocabulary::kPad).setZero();
  m.tables.chr.row(Vocabulary::kPad).setZero();
  return m;
}

GradCheck check_gradients(Model& model, const Model& analytic, ParamGroup group,
                          const std::function<double(const Model&)>& loss, std::uint64_t seed, std::size_t per_block,
                          double step, double floor) {
  GradCheck out;
  Rng rng(seed);
  Model grads = analytic;
  auto views = parameters(model);
  auto gviews = parameters(grads);
  for (std::size_t b = 0; b < views.size(); ++b) {
    if (views[b].group != group) continue;
    const auto n = static_cast<std::size_t>(views[b].size());
    std::vector<std::size_t> idx(n);
    for (std::size_t k = 0; k < n; ++k) idx[k] = k;
    rng.shuffle(std::span(idx));
    idx.resize(std::min(n, per_block));
    for (std::size_t k : idx) {
      double* x = views[b].data + k;
      const double saved = *x;
      *x = saved + step;
      const double up = loss(model);
      *x = saved - step;
      const double down = loss(model);
      *x = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = gviews[b].data[k];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++out.checked;
      out.max_abs = std::max(out.max_abs, std::abs(a));
      if (rel > out.max_rel) {
        out.max_rel = rel;
        out.worst = views[b].name + "[" + std::to_string(k) + "] analytic " + std::to_string(a) + " numeric " +
                    std::to_string(numeric);
      }
    }
  }
  return out;
}

GroupChecks check_all_groups(std::uint64_t seed, const TrainConfig& cfg) {
  const Fixture f = small_fixture(seed);
  Model model = random_model(cfg.model, f.corpus.vocab, seed);
  Model grads = zeros_like(model);
  batch_objective(model, f.first, f.second, f.labels, cfg, &grads);
  const auto loss_of = [&](double BatchLosses::*field) {
    return [&, field](const Model& m) { return batch_objective(m, f.first, f.second, f.labels, cfg, nullptr).*field; };
  };
  return {check_gradients(model, grads, ParamGroup::EncoderDml, loss_of(&BatchLosses::dml), seed, 6),
          check_gradients(model, grads, ParamGroup::Bfs, loss_of(&BatchLosses::bfs), seed, 8),
          check_gradients(model, grads, ParamGroup::Ual, loss_of(&BatchLosses::ual), seed, 8)};
}

double oracle_auc(const std::vector<TrialResult>& r) {
  double wins = 0.0, total = 0.0;
  for (const auto& p : r) {
    if (p.a_true != 1) continue;
    for (const auto& q : r) {
      if (q.a_true != 0) continue;
      total += 1.0;
      if (p.s > q.s)
        wins += 1.0;
      else if (p.s == q.s)
        wins += 0.5;
    }
  }
  return wins / total;
}

double oracle_accuracy(const std::vector<TrialResult>& r) {
  double ok = 0.0;
  for (const auto& t : r) ok += ((t.s > 0.5 ? 1 : 0) == t.a_true) ? 1.0 : 0.0;
  return ok / static_cast<double>(r.size());
}

std::pair<double, double> oracle_f1_f05u(const std::vector<TrialResult>& r) {
  int tp = 0, fp = 0, fn = 0;
  for (const auto& t : r) {
    const int pred = t.s > 0.5 ? 1 : 0;
    tp += pred == 1 && t.a_true == 1;
    fp += pred == 1 && t.a_true == 0;
    fn += pred == 0 && t.a_true == 1;
  }
  const double precision = tp + fp ? static_cast<double>(tp) / (tp + fp) : 0.0;
  const double recall = tp + fn ? static_cast<double>(tp) / (tp + fn) : 0.0;
  const double f1 = precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
  // F-beta with beta = 0.5 from precision and recall
  const double b2 = 0.25;
  const double f05 = precision + recall > 0 ? (1 + b2) * precision * recall / (b2 * precision + recall) : 0.0;
  return {f1, f05};
}

double oracle_brier(const std::vector<TrialResult>& r) {
  double s = 0.0;
  for (const auto& t : r) s += std::pow(t.s - t.a_true, 2);
  return 1.0 - s / static_cast<double>(r.size());
}

OracleCalibration oracle_calibration(const std::vector<TrialResult>& r, std::size_t n_bins) {
  OracleCalibration o;
  o.counts.assign(n_bins, 0);
  o.conf.assign(n_bins, 0.0);
  o.acc.assign(n_bins, 0.0);
  for (std::size_t b = 0; b < n_bins; ++b) {
    const double lo = 0.5 + 0.5 * static_cast<double>(b) / static_cast<double>(n_bins);
    const double hi = 0.5 + 0.5 * static_cast<double>(b + 1) / static_cast<double>(n_bins);
    const bool last = b + 1 == n_bins;
    double conf = 0.0, ok = 0.0;
    std::size_t n = 0;
    for (const auto& t : r) {
      const double c = t.s >= 0.5 ? t.s : 1.0 - t.s;
      if (c >= lo && (c < hi || last)) {
        ++n;
        conf += c;
        ok += ((t.s > 0.5 ? 1 : 0) == t.a_true) ? 1.0 : 0.0;
      }
    }
    o.counts[b] = n;
    if (n == 0) continue;
    o.conf[b] = conf / static_cast<double>(n);
    o.acc[b] = ok / static_cast<double>(n);
    const double gap = std::abs(o.acc[b] - o.conf[b]);
    o.ece += static_cast<double>(n) / static_cast<double>(r.size()) * gap;
    o.mce = std::max(o.mce, gap);
  }
  return o;
}

std::vector<TrialResult> random_trials(std::uint64_t seed, std::size_t n, bool coarse) {
  Rng rng(seed);
  std::vector<TrialResult> out;
  for (std::size_t k = 0; k < n; ++k) {
    const double s = coarse ? static_cast<double>(rng.below(11)) / 10.0 : rng.uniform();
    const auto a = static_cast<int>(rng.below(2));
    out.push_back(make_trial("t" + std::to_string(k), static_cast<Subset>(rng.below(4)), s, a));
  }
  return out;
}

namespace {

// Gaussian log density with the inverse and normaliser computed once.
struct LogGauss {
  Mat precision;
  double norm;
  LogGauss(const Mat& cov)
      : precision(cov.inverse()),
        norm(-0.5 * std::log(cov.determinant()) - 0.5 * static_cast<double>(cov.rows()) * std::log(2.0 * std::numbers::pi)) {}
  double operator()(const Vec& x, const Vec& mean) const {
    const Vec r = x - mean;
    return norm - 0.5 * r.dot(precision * r);
  }
};

double log_sum(const std::vector<double>& v) {
  const double m = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

// log of the integral of exp(f(s)) over R^D, D in {1, 2}, by the trapezoid
// rule on a box around `centre` with half-width `radius` per axis.
double integrate(const std::function<double(const Vec&)>& f, const Vec& centre, double radius, double h) {
  const auto D = centre.size();
  const int n = static_cast<int>(std::ceil(radius / h));
  std::vector<double> terms;
  Vec s(D);
  if (D == 1) {
    for (int i = -n; i <= n; ++i) {
      s[0] = centre[0] + i * h;
      terms.push_back(f(s));
    }
  } else {
    for (int i = -n; i <= n; ++i)
      for (int j = -n; j <= n; ++j) {
        s[0] = centre[0] + i * h;
        s[1] = centre[1] + j * h;
        terms.push_back(f(s));
      }
  }
  return log_sum(terms) + static_cast<double>(D) * std::log(h);
}

struct Grid {
  double radius, h;
};

Grid grid_for(const Vec& y1, const Vec& y2, const Vec& mean, const Mat& between_cov, const Mat& within_cov,
              const Vec& centre) {
  Eigen::SelfAdjointEigenSolver<Mat> eb(between_cov), ew(within_cov);
  const double smax = std::sqrt(std::max(eb.eigenvalues().maxCoeff(), ew.eigenvalues().maxCoeff()));
  const double smin = std::sqrt(std::min(eb.eigenvalues().minCoeff(), ew.eigenvalues().minCoeff()));
  double spread = 0.0;
  for (const Vec* v : {&y1, &y2, &mean}) spread = std::max(spread, (*v - centre).cwiseAbs().maxCoeff());
  return {spread + 12.0 * smax, smin / 10.0};
}

}  // namespace

double quadrature_same_log_likelihood(const Vec& y1, const Vec& y2, const Vec& mean, const Mat& between_cov,
                                      const Mat& within_cov) {
  const Vec centre = (y1 + y2 + mean) / 3.0;
  const auto g = grid_for(y1, y2, mean, between_cov, within_cov, centre);
  const LogGauss prior(between_cov), noise(within_cov);
  return integrate([&](const Vec& s) { return prior(s, mean) + noise(y1, s) + noise(y2, s); }, centre, g.radius, g.h);
}

double quadrature_diff_log_likelihood(const Vec& y1, const Vec& y2, const Vec& mean, const Mat& between_cov,
                                      const Mat& within_cov) {
  const LogGauss prior(between_cov), noise(within_cov);
  double total = 0.0;
  for (const Vec* y : {&y1, &y2}) {
    const Vec centre = (*y + mean) / 2.0;
    const auto g = grid_for(*y, *y, mean, between_cov, within_cov, centre);
    total += integrate([&](const Vec& s) { return prior(s, mean) + noise(*y, s); },
                       centre, g.radius, g.h);
  }
  return total;
}

}  // namespace calav::test
