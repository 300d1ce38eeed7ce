#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "generators.hpp"
#include "oracles.hpp"
#include "vdrisk/cohort.hpp"
#include "vdrisk/discrimination.hpp"
#include "vdrisk/errors.hpp"
#include "vdrisk/rng.hpp"

using namespace vdrisk;
using doctest::Approx;

TEST_CASE("roc hand case with tied scores") {
  const std::vector<double> scores = {0.9, 0.8, 0.8, 0.3};
  const std::vector<bool> labels = {true, true, false, false};
  const auto curve = discrimination::roc(scores, labels);

  REQUIRE(curve.points.size() == 4);  // +inf anchor plus three thresholds
  CHECK(curve.points.front().fpr == 0.0);
  CHECK(curve.points.front().tpr == 0.0);
  CHECK(std::isinf(curve.points.front().threshold));

  CHECK(curve.points[1].threshold == 0.9);
  CHECK(curve.points[1].fpr == 0.0);
  CHECK(curve.points[1].tpr == 0.5);

  // Both 0.8 scores fall at one threshold: diagonal segment through the tie.
  CHECK(curve.points[2].threshold == 0.8);
  CHECK(curve.points[2].fpr == 0.5);
  CHECK(curve.points[2].tpr == 1.0);

  CHECK(curve.points.back().fpr == 1.0);
  CHECK(curve.points.back().tpr == 1.0);

  CHECK(curve.auc == 0.875);  // 3.5 wins out of 4 pairs, exactly
}

TEST_CASE("trapezoid auc equals the Mann-Whitney statistic exactly") {
  rng::SplitMix64 g(60601);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 2 + g.uniform_int(40);
    const auto scores = gen::risks(g, n);
    const auto labels = gen::labels_both_classes(g, n);
    const auto curve = discrimination::roc(scores, labels);
    CHECK(curve.auc == oracles::auc_mann_whitney(scores, labels));
  }
}

TEST_CASE("roc input validation") {
  CHECK_THROWS_AS(discrimination::roc({}, {}), InvalidInputError);
  CHECK_THROWS_AS(discrimination::roc({1.0, 2.0}, {true, true}), InvalidInputError);
  CHECK_THROWS_AS(discrimination::roc({1.0}, {true, false}), InvalidInputError);
  CHECK_THROWS_AS(
      discrimination::roc({1.0, std::numeric_limits<double>::quiet_NaN()},
                          {true, false}),
      InvalidInputError);
}

TEST_CASE("roc csv export") {
  const auto curve = discrimination::roc({0.9, 0.1}, {true, false});
  const std::string csv = discrimination::roc_to_csv(curve);
  CHECK(csv.find("threshold,fpr,tpr") == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}

TEST_CASE("logistic fit satisfies the score equations") {
  rng::SplitMix64 g(17);
  int tested = 0;
  for (int rep = 0; rep < 15; ++rep) {
    const std::size_t n = 40;
    std::vector<double> x;
    std::vector<bool> y;
    for (std::size_t i = 0; i < n; ++i) {
      x.push_back(g.uniform(-2, 2));
      // Noisy dependence keeps the classes overlapping (finite MLE).
      y.push_back(g.uniform01() < discrimination::logistic(0.3 + 0.8 * x.back()));
    }
    if (std::count(y.begin(), y.end(), true) == 0 ||
        std::count(y.begin(), y.end(), false) == 0)
      continue;
    const auto fit = discrimination::fit_hazard_classifier(x, y);
    // Near-separated draws can stall on the gradient tolerance once the
    // likelihood improvements drop below double resolution; the score
    // equations are a property of the converged optimum only.
    if (fit.separation || !fit.converged) continue;
    ++tested;
    double sum_r = 0.0, sum_xr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r =
          (y[i] ? 1.0 : 0.0) - discrimination::predict_probability(fit, x[i]);
      sum_r += r;
      sum_xr += x[i] * r;
    }
    CHECK(std::abs(sum_r) < 1e-8);
    CHECK(std::abs(sum_xr) < 1e-8);
    CHECK(fit.se_slope > 0.0);
  }
  CHECK(tested >= 10);
}

TEST_CASE("logistic fit agrees with a derivative-free maximizer") {
  const std::vector<double> x = {-1.5, -1.0, -0.2, 0.1, 0.4, 0.9, 1.3, 1.8};
  const std::vector<bool> y = {false, false, true, false, true, false, true, true};
  const auto fit = discrimination::fit_hazard_classifier(x, y);
  REQUIRE(fit.converged);
  REQUIRE(!fit.separation);
  auto loglik = [&](const Eigen::VectorXd& ab) {
    double ll = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double eta = ab(0) + ab(1) * x[i];
      const double lse =
          eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
      ll += (y[i] ? eta : 0.0) - lse;
    }
    return ll;
  };
  const Eigen::VectorXd argmax = oracles::grid_max(loglik, 2);
  CHECK(std::abs(fit.intercept - argmax(0)) < 1e-4);
  CHECK(std::abs(fit.slope - argmax(1)) < 1e-4);
}

TEST_CASE("complete separation is flagged and capped") {
  // A razor-thin margin keeps the gradient large while the slope blows up,
  // so the cap trips before the gradient tolerance can declare convergence.
  const std::vector<double> x = {-0.03, -0.02, -0.01, 0.01, 0.02, 0.03};
  const std::vector<bool> y = {false, false, false, true, true, true};
  const auto fit = discrimination::fit_hazard_classifier(x, y);
  CHECK(fit.separation);
  CHECK(std::abs(fit.slope) <= 30.0 + 1e-12);
  CHECK(fit.slope > 0.0);  // still points the right way
}

TEST_CASE("logistic helpers") {
  CHECK(discrimination::logistic(0.0) == 0.5);
  CHECK(discrimination::logistic(40.0) == Approx(1.0).epsilon(1e-12));
  CHECK(discrimination::logistic(-40.0) == Approx(0.0).scale(1.0).epsilon(1e-12));
  discrimination::LogisticFit f;
  f.intercept = 1.0;
  f.slope = 2.0;
  CHECK(discrimination::predict_probability(f, 0.5) ==
        Approx(discrimination::logistic(2.0)).epsilon(1e-15));
  CHECK_THROWS_AS(discrimination::fit_hazard_classifier({1, 2}, {true, true}),
                  InvalidInputError);
  CHECK_THROWS_AS(discrimination::fit_hazard_classifier({1}, {true}),
                  InvalidInputError);
}

TEST_CASE("reclassification extremes and identities") {
  // Every event reclassified up, every non-event down: both components 1.
  const std::vector<double> p_old = {0.2, 0.2, 0.8, 0.8};
  const std::vector<double> p_new = {0.8, 0.8, 0.2, 0.2};
  const std::vector<bool> labels = {true, true, false, false};
  const auto r = discrimination::nri_idi(p_old, p_new, labels);
  CHECK(r.nri_events == 1.0);
  CHECK(r.nri_nonevents == 1.0);
  CHECK(r.nri == 2.0);
  CHECK(r.idi == Approx(1.2).epsilon(1e-15));  // (0.8-0.2) - (0.2-0.8)

  // Identical probabilities: everything is exactly zero.
  const auto id = discrimination::nri_idi(p_old, p_old, labels);
  CHECK(id.nri == 0.0);
  CHECK(id.idi == 0.0);

  // Swapping old and new negates both metrics.
  const auto rev = discrimination::nri_idi(p_new, p_old, labels);
  CHECK(rev.nri == Approx(-r.nri).epsilon(1e-15));
  CHECK(rev.idi == Approx(-r.idi).epsilon(1e-15));
}

TEST_CASE("reclassification matches the counting oracle on random input") {
  rng::SplitMix64 g(909);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 4 + g.uniform_int(60);
    const auto p_old = gen::probabilities(g, n);
    const auto p_new = gen::probabilities(g, n);
    const auto labels = gen::labels_both_classes(g, n);
    const auto r = discrimination::nri_idi(p_old, p_new, labels);
    const auto expected = oracles::nri_idi_oracle(p_old, p_new, labels);
    CHECK(r.nri == Approx(expected.nri).epsilon(1e-14));
    CHECK(r.nri_events == Approx(expected.nri_events).epsilon(1e-14));
    CHECK(r.nri_nonevents == Approx(expected.nri_nonevents).epsilon(1e-14));
    CHECK(r.idi == Approx(expected.idi).epsilon(1e-12).scale(1.0));
  }
}

TEST_CASE("reclassification input validation") {
  CHECK_THROWS_AS(discrimination::nri_idi({}, {}, {}), InvalidInputError);
  CHECK_THROWS_AS(discrimination::nri_idi({0.5}, {0.5, 0.5}, {true}),
                  InvalidInputError);
  CHECK_THROWS_AS(
      discrimination::nri_idi({1.2, 0.5}, {0.5, 0.5}, {true, false}),
      InvalidInputError);
  CHECK_THROWS_AS(
      discrimination::nri_idi({0.5, 0.5}, {0.5, 0.5}, {true, true}),
      InvalidInputError);
}

TEST_CASE("quantiles interpolate between order statistics") {
  CHECK(discrimination::quantile({1, 2, 3, 4}, 0.5) == 2.5);
  CHECK(discrimination::quantile({3, 1, 2}, 0.5) == 2.0);  // sorting is internal
  CHECK(discrimination::quantile({5}, 0.25) == 5.0);
  CHECK(discrimination::quantile({1, 2, 3, 4}, 0.0) == 1.0);
  CHECK(discrimination::quantile({1, 2, 3, 4}, 1.0) == 4.0);
  CHECK(discrimination::quantile({0, 10}, 0.25) == 2.5);
  CHECK_THROWS_AS(discrimination::quantile({}, 0.5), InvalidInputError);
  CHECK_THROWS_AS(discrimination::quantile({1.0}, 1.5), InvalidInputError);

  rng::SplitMix64 g(555);
  for (int rep = 0; rep < 30; ++rep) {
    const auto values = gen::risks(g, 1 + g.uniform_int(50));
    for (const double q : {0.0, 0.25, 0.31, 0.5, 0.75, 0.9, 1.0}) {
      CHECK(discrimination::quantile(values, q) ==
            Approx(oracles::quantile_oracle(values, q)).epsilon(1e-12).scale(1.0));
    }
  }
}

namespace {

cohort::AssessmentRecord make_rec(double vd, bool hyp, int age, bool smoker) {
  cohort::AssessmentRecord r;
  r.participant_id = "G";
  r.age = age;
  r.sbp = 130;
  r.dbp = 85;
  r.total_chol = 5.5;
  r.hdl_chol = 1.4;
  r.vd_confidence = vd;
  r.hypertension_label = hyp;
  r.smoker = smoker;
  return r;
}

}  // namespace

TEST_CASE("group comparison partitions, summarizes, and compares") {
  std::vector<cohort::AssessmentRecord> records;
  // vd_high & hypertensive: ages 50, 60, 70; 2 smokers.
  records.push_back(make_rec(0.9, true, 50, true));
  records.push_back(make_rec(0.8, true, 60, true));
  records.push_back(make_rec(0.7, true, 70, false));  // 0.7 ties the threshold
  // vd_high & normotensive: one member, 1 smoker.
  records.push_back(make_rec(0.75, false, 55, true));
  // vd_low & hypertensive: two members, 0 smokers.
  records.push_back(make_rec(0.1, true, 45, false));
  records.push_back(make_rec(0.2, true, 65, false));
  // vd_low & normotensive: empty.

  const auto cmp = discrimination::group_compare(records, 0.7);
  REQUIRE(cmp.groups.size() == 4);
  CHECK(cmp.groups[0].key.name() == "vd_high_hypertensive");
  CHECK(cmp.groups[1].key.name() == "vd_high_normotensive");
  CHECK(cmp.groups[2].key.name() == "vd_low_hypertensive");
  CHECK(cmp.groups[3].key.name() == "vd_low_normotensive");

  CHECK(cmp.groups[0].n == 3);  // >= threshold counts as high
  CHECK(cmp.groups[1].n == 1);
  CHECK(cmp.groups[2].n == 2);
  CHECK(cmp.groups[3].n == 0);
  CHECK(cmp.groups[3].empty);

  // Age quartiles of {50, 60, 70}.
  const auto& age_q = cmp.groups[0].continuous[0];
  CHECK(age_q.first == "age");
  CHECK(age_q.second.q25 == 55.0);
  CHECK(age_q.second.median == 60.0);
  CHECK(age_q.second.q75 == 65.0);
  CHECK(age_q.second.n_used == 3);

  // Smoker prevalence 2/3 vs 0/2.
  const auto& smoker0 = cmp.groups[0].binary[0];
  CHECK(smoker0.first == "smoker");
  CHECK(smoker0.second.count == 2);
  CHECK(smoker0.second.prevalence == Approx(2.0 / 3.0));

  // 4 binary parameters x 6 ordered pairs.
  CHECK(cmp.ratios.size() == 24);
  for (const auto& r : cmp.ratios) {
    const bool involves_empty = (r.numerator == cmp.groups[3].key) ||
                                (r.denominator == cmp.groups[3].key);
    CHECK(r.defined == !involves_empty);
  }

  // Katz ratio with a zero cell: smoker 2/3 vs 0/2 gets the 0.5 correction.
  for (const auto& r : cmp.ratios) {
    if (r.parameter == "smoker" && r.numerator.name() == "vd_high_hypertensive" &&
        r.denominator.name() == "vd_low_hypertensive") {
      const double a = 2.5, n1 = 4.0, b = 0.5, n2 = 3.0;
      const double expect = (a / n1) / (b / n2);
      CHECK(r.ratio == Approx(expect).epsilon(1e-12));
      const double se = std::sqrt(1 / a - 1 / n1 + 1 / b - 1 / n2);
      CHECK(r.ci_low ==
            Approx(expect * std::exp(-1.959963984540054 * se)).epsilon(1e-12));
      CHECK(r.ci_high ==
            Approx(expect * std::exp(1.959963984540054 * se)).epsilon(1e-12));
      CHECK(r.ci_low < r.ratio);
      CHECK(r.ci_high > r.ratio);
    }
  }
}

TEST_CASE("katz interval without zero cells uses raw counts") {
  std::vector<cohort::AssessmentRecord> records;
  for (int i = 0; i < 10; ++i)
    records.push_back(make_rec(0.9, true, 50, i < 3));  // 3/10 smokers
  for (int i = 0; i < 8; ++i)
    records.push_back(make_rec(0.1, true, 50, i < 1));  // 1/8 smokers
  const auto cmp = discrimination::group_compare(records, 0.5);
  for (const auto& r : cmp.ratios) {
    if (r.parameter == "smoker" && r.numerator.name() == "vd_high_hypertensive" &&
        r.denominator.name() == "vd_low_hypertensive") {
      CHECK(r.defined);
      CHECK(r.ratio == Approx((3.0 / 10.0) / (1.0 / 8.0)).epsilon(1e-12));
      const double se = std::sqrt(1.0 / 3 - 1.0 / 10 + 1.0 / 1 - 1.0 / 8);
      CHECK(r.ci_high / r.ratio == Approx(std::exp(1.959963984540054 * se)).epsilon(1e-12));
    }
  }
}

TEST_CASE("group comparison csv exports") {
  std::vector<cohort::AssessmentRecord> records = {make_rec(0.9, true, 50, true),
                                                   make_rec(0.1, false, 60, false)};
  const auto cmp = discrimination::group_compare(records, 0.5);
  const auto table = discrimination::group_table_csv(cmp);
  CHECK(table.find("group,n,parameter,kind,q25,median,q75,n_used,count,prevalence") == 0);
  // 4 groups x (6 continuous + 4 binary) rows + header.
  CHECK(std::count(table.begin(), table.end(), '\n') == 1 + 4 * 10);

  const auto ratios = discrimination::ratio_table_csv(cmp);
  CHECK(ratios.find("parameter,numerator,denominator,ratio,ci_low,ci_high,defined") == 0);
  CHECK(std::count(ratios.begin(), ratios.end(), '\n') == 1 + 24);

  CHECK_THROWS_AS(discrimination::group_compare({}, 0.5), InvalidInputError);
  CHECK_THROWS_AS(discrimination::group_compare(records, 1.5), InvalidInputError);
}
