#include <doctest.h>

#include <cmath>
#include <sstream>

#include "calav/error.hpp"
#include "calav/metrics.hpp"
#include "support.hpp"

using namespace calav;
using namespace calav::test;

namespace {

std::vector<TrialResult> trials(std::initializer_list<std::pair<double, int>> rows, Subset subset = Subset::SA_SF) {
  std::vector<TrialResult> out;
  for (const auto& [s, a] : rows) out.push_back(make_trial("t" + std::to_string(out.size()), subset, s, a));
  return out;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("trial construction and the tie rule") {
    const auto t = make_trial("x", Subset::DA_DF, 0.8, 1);
    CHECK(t.a_hat == 1);
    CHECK(t.confidence == 0.8);
    CHECK(!t.tie);
    const auto low = make_trial("y", Subset::DA_DF, 0.3, 0);
    CHECK(low.a_hat == 0);
    CHECK(low.confidence == 0.7);
    const auto tie = make_trial("z", Subset::SA_SF, 0.5, 1);
    CHECK(tie.tie);
    CHECK(tie.a_hat == 0);
    CHECK(tie.confidence == 0.5);
  }

  TEST_CASE("AUC examples") {
    // positives 0.9 and 0.7 against negatives 0.8 and 0.1 win 3 of 4 pairs
    CHECK(auc(trials({{0.9, 1}, {0.8, 0}, {0.7, 1}, {0.1, 0}})) == 0.75);
    CHECK(auc(trials({{0.9, 1}, {0.8, 0}, {0.8, 1}, {0.1, 0}})) == 0.875);
    CHECK(auc(trials({{0.9, 1}, {0.8, 1}, {0.2, 0}})) == 1.0);
    CHECK(auc(trials({{0.4, 1}, {0.4, 0}, {0.4, 1}, {0.4, 0}})) == 0.5);
    CHECK_THROWS_AS(auc(trials({{0.4, 1}, {0.9, 1}})), ValidationError);
  }

  TEST_CASE("c@1 examples") {
    CHECK(c_at_1(trials({{0.9, 1}, {0.1, 0}})) == 1.0);
    std::vector<TrialResult> ten;
    for (int k = 0; k < 10; ++k) ten.push_back(make_trial("t", Subset::SA_SF, 0.9, k < 7 ? 1 : 0));
    CHECK(c_at_1(ten) == doctest::Approx(0.7).epsilon(1e-15));
    // four answered of which two correct, one unanswered: (2 + 1 * 2/5) / 5
    auto with_gap = trials({{0.9, 1}, {0.9, 1}, {0.9, 0}, {0.9, 0}, {0.9, 1}});
    with_gap[4].responded = false;
    CHECK(c_at_1(with_gap) == doctest::Approx((2.0 + 2.0 / 5.0) / 5.0).epsilon(1e-15));
  }

  TEST_CASE("F1 and F0.5u examples") {
    const auto perfect = f1_and_f05u(trials({{0.9, 1}, {0.1, 0}}));
    CHECK(perfect.f1 == 1.0);
    CHECK(perfect.f_05_u == 1.0);
    // TP 2, FP 1, FN 1
    const auto mixed = f1_and_f05u(trials({{0.9, 1}, {0.8, 1}, {0.7, 0}, {0.2, 1}, {0.1, 0}}));
    CHECK(mixed.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(mixed.f_05_u == doctest::Approx(2.5 / 3.75).epsilon(1e-15));
    const auto negative = f1_and_f05u(trials({{0.2, 1}, {0.1, 0}}));
    CHECK(negative.f1 == 0.0);
    const auto empty = f1_and_f05u(trials({{0.1, 0}}));
    CHECK(empty.degenerate);
    CHECK(empty.f1 == 0.0);
  }

  TEST_CASE("Brier complement examples") {
    CHECK(brier_complement(trials({{1.0, 1}, {0.0, 0}})) == 1.0);
    CHECK(brier_complement(trials({{0.5, 1}, {0.5, 0}})) == 0.75);
    CHECK(brier_complement(trials({{0.0, 1}, {1.0, 0}})) == 0.0);
  }

  TEST_CASE("calibration examples and bin edges") {
    // ten trials at confidence 0.8, nine correct
    std::vector<TrialResult> r;
    for (int k = 0; k < 10; ++k) r.push_back(make_trial("t", Subset::SA_SF, 0.8, k < 9 ? 1 : 0));
    const auto one = calibration(r, 1);
    CHECK(one.ece == doctest::Approx(0.1).epsilon(1e-14));
    CHECK(one.mce == doctest::Approx(0.1).epsilon(1e-14));

    const auto exact = calibration(trials({{1.0, 1}, {0.0, 0}, {0.5, 0}, {0.5, 1}}), 2);
    CHECK(exact.ece == 0.0);
    CHECK(exact.mce == 0.0);

    CHECK(calibration_bin(0.5, 10) == 0);
    CHECK(calibration_bin(0.55, 10) == 1);
    CHECK(calibration_bin(0.999, 10) == 9);
    CHECK(calibration_bin(1.0, 10) == 9);
    const auto c = calibration({}, 10);
    REQUIRE(c.bins.size() == 10);
    for (std::size_t b = 1; b < c.bins.size(); ++b) CHECK(c.bins[b].lo > c.bins[b - 1].lo);
    CHECK(c.bins.front().lo == 0.5);
    CHECK(c.bins.back().hi == 1.0);
  }

  TEST_CASE("metrics match independent oracles on random instances") {
    for (std::uint64_t seed = 1; seed <= 60; ++seed) {
      const bool coarse = seed % 2 == 0;
      auto r = random_trials(seed, 5 + seed % 46, coarse);
      r.push_back(make_trial("p", Subset::SA_SF, 0.7, 1));
      r.push_back(make_trial("n", Subset::DA_SF, 0.3, 0));
      CHECK(auc(r) == oracle_auc(r));
      CHECK(c_at_1(r) == doctest::Approx(oracle_accuracy(r)).epsilon(1e-15));
      const auto [f1, f05] = oracle_f1_f05u(r);
      const auto f = f1_and_f05u(r);
      CHECK(std::abs(f.f1 - f1) < 1e-12);
      CHECK(std::abs(f.f_05_u - f05) < 1e-12);
      CHECK(std::abs(brier_complement(r) - oracle_brier(r)) < 1e-12);
      for (std::size_t bins : {1u, 4u, 10u}) {
        const auto cal = calibration(r, bins);
        const auto o = oracle_calibration(r, bins);
        std::size_t total = 0;
        for (std::size_t b = 0; b < bins; ++b) {
          CHECK(cal.bins[b].count == o.counts[b]);
          total += cal.bins[b].count;
        }
        CHECK(total == r.size());
        CHECK(std::abs(cal.ece - o.ece) < 1e-12);
        CHECK(std::abs(cal.mce - o.mce) < 1e-12);
        CHECK(cal.ece <= cal.mce + 1e-15);
        CHECK(cal.mce <= 1.0);
      }
      const auto single = calibration(r, 1);
      double conf = 0.0;
      for (const auto& t : r) conf += t.confidence;
      CHECK(std::abs(single.ece - std::abs(oracle_accuracy(r) - conf / static_cast<double>(r.size()))) < 1e-12);
    }
  }

  TEST_CASE("report fields and averaging") {
    const auto r = random_trials(99, 40, false);
    const auto rep = compute_report(r);
    CHECK(rep.overall == doctest::Approx((rep.auc + rep.c_at_1 + rep.f_05_u + rep.f1 + rep.brier) / 5.0).epsilon(1e-15));
    CHECK(rep.n == 40);
    for (double v : {rep.auc, rep.c_at_1, rep.f_05_u, rep.f1, rep.brier, rep.overall, rep.conf_mean, rep.ece, rep.mce}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    const auto j = rep.to_json();
    for (const char* key : {"auc", "c_at_1", "f_05_u", "f1", "brier", "overall", "conf_mean", "ece", "mce"})
      CHECK(j.contains(key));

    MetricsReport a, b;
    a.auc = 0.8;
    b.auc = 0.9;
    const std::vector<MetricsReport> both{a, b};
    const auto avg = average_reports(both);
    CHECK(avg["auc"]["mean"].get<double>() == doctest::Approx(0.85).epsilon(1e-15));
    CHECK(avg["auc"]["std"].get<double>() == doctest::Approx(std::sqrt(0.005)).epsilon(1e-12));
  }

  TEST_CASE("reliability export") {
    const auto cal = calibration(trials({{0.95, 1}, {0.9, 0}, {0.65, 1}}), 5);
    std::ostringstream out;
    export_reliability(out, cal);
    const auto rows = lines(out.str());
    REQUIRE(rows.size() == 6);
    CHECK(rows[0] == "bin_center,confidence,accuracy,count");
    // bin [0.7, 0.8) is empty
    CHECK(rows[3].find(",,,0") != std::string::npos);
    CHECK(rows[5].substr(rows[5].size() - 2) == ",2");
  }

  TEST_CASE("histogram export annotations equal recomputed subset metrics") {
    auto r = random_trials(5, 50, false);
    std::ostringstream out;
    export_histograms(out, r, SubsetFilter::parse("SA_DF"), 4);
    const auto rows = lines(out.str());
    REQUIRE(rows.size() == 5);
    std::vector<TrialResult> sel;
    for (const auto& t : r)
      if (t.subset == Subset::SA_DF) sel.push_back(t);
    double conf = 0.0;
    for (const auto& t : sel) conf += t.confidence;
    std::size_t counted = 0;
    for (std::size_t k = 1; k < rows.size(); ++k) {
      CHECK(rows[k].rfind("SA_DF,", 0) == 0);
      std::istringstream fields(rows[k]);
      std::string subset, centre, count, acc, mean_conf;
      std::getline(fields, subset, ',');
      std::getline(fields, centre, ',');
      std::getline(fields, count, ',');
      std::getline(fields, acc, ',');
      std::getline(fields, mean_conf, ',');
      counted += std::stoul(count);
      CHECK(std::stod(acc) == doctest::Approx(oracle_accuracy(sel)).epsilon(1e-12));
      CHECK(std::stod(mean_conf) == doctest::Approx(conf / static_cast<double>(sel.size())).epsilon(1e-12));
    }
    CHECK(counted == sel.size());
  }

  TEST_CASE("stage trials") {
    PairPrediction p;
    p.pair = {"a", "b", 1, 0};
    p.p_dml = 0.2;
    p.p_bfs = 0.6;
    p.p_ual = 0.9;
    PairPrediction q = p;
    q.pair.a = 0;
    const std::vector<PairPrediction> preds{p, q};
    const auto ual = stage_trials(preds, Stage::Ual);
    REQUIRE(ual.size() == 2);
    CHECK(ual[0].s == 0.9);
    CHECK(stage_trials(preds, Stage::Dml)[0].s == 0.2);
    CHECK(stage_trials(preds, Stage::Bfs, SubsetFilter::parse("SA_DF")).size() == 1);
    CHECK(parse_stages("dml,ual") == std::vector<Stage>{Stage::Dml, Stage::Ual});
    CHECK_THROWS(parse_stage("lda"));
  }
}
