#include "vdrisk/discrimination.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "vdrisk/errors.hpp"
#include "vdrisk/textio.hpp"

namespace vdrisk::discrimination {

namespace {

constexpr double kZ95 = 1.959963984540054;  // two-sided 95% normal quantile

void require_both_classes(const std::vector<bool>& labels) {
  bool pos = false, neg = false;
  for (bool l : labels) (l ? pos : neg) = true;
  if (!pos || !neg)
    throw InvalidInputError("both classes must be present (labels are single-class)");
}

}  // namespace

// --- ROC ---------------------------------------------------------------------

RocCurve roc(const std::vector<double>& scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size())
    throw InvalidInputError("score and label vectors differ in length");
  if (scores.empty()) throw InvalidInputError("empty score vector");
  for (double s : scores)
    if (!std::isfinite(s)) throw InvalidInputError("scores must be finite");
  require_both_classes(labels);

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  long n_pos = 0, n_neg = 0;
  for (bool l : labels) (l ? n_pos : n_neg) += 1;

  RocCurve curve;
  curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});

  long tp = 0, fp = 0;
  long long auc2 = 0;  // 2 * sum of trapezoid areas in count units
  std::size_t i = 0;
  while (i < order.size()) {
    double s = scores[order[i]];
    long tp_prev = tp, fp_prev = fp;
    while (i < order.size() && scores[order[i]] == s) {
      (labels[order[i]] ? tp : fp) += 1;
      ++i;
    }
    auc2 += static_cast<long long>(tp_prev + tp) * static_cast<long long>(fp - fp_prev);
    curve.points.push_back({s, static_cast<double>(fp) / static_cast<double>(n_neg),
                            static_cast<double>(tp) / static_cast<double>(n_pos)});
  }
  curve.auc = static_cast<double>(auc2) /
              (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
  return curve;
}

std::string roc_to_csv(const RocCurve& curve) {
  textio::CsvBuilder csv({"threshold", "fpr", "tpr"});
  for (const auto& p : curve.points)
    csv.add_row({textio::fmt(p.threshold), textio::fmt(p.fpr), textio::fmt(p.tpr)});
  return csv.str();
}

// --- Hazard classifier ----------------------------------------------------------

double logistic(double eta) { return 1.0 / (1.0 + std::exp(-eta)); }

double predict_probability(const LogisticFit& fit, double hazard) {
  return logistic(fit.intercept + fit.slope * hazard);
}

namespace {

// log(1 + e^eta) without overflow for large |eta|
double log1pexp(double eta) {
  return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

double logistic_loglik(double a, double b, const std::vector<double>& x,
                       const std::vector<bool>& y) {
  double ll = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double eta = a + b * x[i];
    ll += (y[i] ? eta : 0.0) - log1pexp(eta);
  }
  return ll;
}

}  // namespace

LogisticFit fit_hazard_classifier(const std::vector<double>& hazards,
                                  const std::vector<bool>& labels) {
  if (hazards.size() != labels.size())
    throw InvalidInputError("hazard and label vectors differ in length");
  if (hazards.size() < 2) throw InvalidInputError("need at least 2 observations");
  for (double h : hazards)
    if (!std::isfinite(h)) throw InvalidInputError("hazards must be finite");
  require_both_classes(labels);

  constexpr double kTol = 1e-10;
  constexpr int kMaxIter = 100;
  constexpr double kCap = 30.0;  // |coefficient| beyond this flags separation
  constexpr int kMaxHalvings = 30;

  LogisticFit fit;
  double a = 0.0, b = 0.0;
  double ll = logistic_loglik(a, b, hazards, labels);

  double haa = 0.0, hab = 0.0, hbb = 0.0;  // observed information at the last point
  int iter = 0;
  for (; iter < kMaxIter; ++iter) {
    double ga = 0.0, gb = 0.0;
    haa = hab = hbb = 0.0;
    for (std::size_t i = 0; i < hazards.size(); ++i) {
      double p = logistic(a + b * hazards[i]);
      double r = (labels[i] ? 1.0 : 0.0) - p;
      double w = p * (1.0 - p);
      ga += r;
      gb += r * hazards[i];
      haa += w;
      hab += w * hazards[i];
      hbb += w * hazards[i] * hazards[i];
    }
    if (std::max(std::abs(ga), std::abs(gb)) <= kTol) {
      fit.converged = true;
      break;
    }
    double det = haa * hbb - hab * hab;
    if (!(det > 0.0) || !std::isfinite(det)) {
      fit.separation = true;  // information matrix collapsed under divergence
      break;
    }
    double da = (hbb * ga - hab * gb) / det;
    double db = (haa * gb - hab * ga) / det;

    double step = 1.0;
    bool improved = false;
    for (int h = 0; h <= kMaxHalvings; ++h, step *= 0.5) {
      double na = a + step * da, nb = b + step * db;
      double nll = logistic_loglik(na, nb, hazards, labels);
      if (std::isfinite(nll) && nll >= ll) {
        a = na;
        b = nb;
        ll = nll;
        improved = true;
        break;
      }
    }
    if (!improved) break;
    if (std::abs(a) > kCap || std::abs(b) > kCap) {
      fit.separation = true;  // complete separation: likelihood is monotone
      a = std::clamp(a, -kCap, kCap);
      b = std::clamp(b, -kCap, kCap);
      break;
    }
  }

  fit.intercept = a;
  fit.slope = b;
  fit.iterations = iter;
  double det = haa * hbb - hab * hab;
  if (det > 0.0 && std::isfinite(det)) {
    fit.se_intercept = std::sqrt(hbb / det);
    fit.se_slope = std::sqrt(haa / det);
  } else {
    fit.se_intercept = fit.se_slope = std::numeric_limits<double>::quiet_NaN();
  }
  return fit;
}

// --- Reclassification ------------------------------------------------------------

ReclassResult nri_idi(const std::vector<double>& p_old, const std::vector<double>& p_new,
                      const std::vector<bool>& labels) {
  const std::size_t n = labels.size();
  if (p_old.size() != n || p_new.size() != n)
    throw InvalidInputError("probability vectors and labels differ in length");
  if (n == 0) throw InvalidInputError("empty input");
  for (std::size_t i = 0; i < n; ++i) {
    if (!(p_old[i] >= 0.0 && p_old[i] <= 1.0) || !(p_new[i] >= 0.0 && p_new[i] <= 1.0))
      throw InvalidInputError("probabilities must lie in [0,1] (index " + std::to_string(i) + ")");
  }
  require_both_classes(labels);

  long n_events = 0, n_nonevents = 0;
  long up_events = 0, down_events = 0, up_nonevents = 0, down_nonevents = 0;
  double sum_new_e = 0.0, sum_old_e = 0.0, sum_new_ne = 0.0, sum_old_ne = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double d = p_new[i] - p_old[i];
    if (labels[i]) {
      ++n_events;
      sum_new_e += p_new[i];
      sum_old_e += p_old[i];
      if (d > 0.0) ++up_events; else if (d < 0.0) ++down_events;
    } else {
      ++n_nonevents;
      sum_new_ne += p_new[i];
      sum_old_ne += p_old[i];
      if (d > 0.0) ++up_nonevents; else if (d < 0.0) ++down_nonevents;
    }
  }

  ReclassResult r;
  r.nri_events = static_cast<double>(up_events - down_events) / static_cast<double>(n_events);
  r.nri_nonevents =
      static_cast<double>(down_nonevents - up_nonevents) / static_cast<double>(n_nonevents);
  r.nri = r.nri_events + r.nri_nonevents;
  r.mean_new_events = sum_new_e / static_cast<double>(n_events);
  r.mean_old_events = sum_old_e / static_cast<double>(n_events);
  r.mean_new_nonevents = sum_new_ne / static_cast<double>(n_nonevents);
  r.mean_old_nonevents = sum_old_ne / static_cast<double>(n_nonevents);
  r.idi = (r.mean_new_events - r.mean_old_events) -
          (r.mean_new_nonevents - r.mean_old_nonevents);
  return r;
}

// --- Group comparison --------------------------------------------------------------

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidInputError("quantile of empty set");
  if (!(q >= 0.0 && q <= 1.0)) throw InvalidInputError("quantile level must lie in [0,1]");
  std::sort(values.begin(), values.end());
  double h = q * static_cast<double>(values.size() - 1);
  std::size_t lo = static_cast<std::size_t>(h);
  double frac = h - static_cast<double>(lo);
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

std::string GroupKey::name() const {
  return std::string(vd_high ? "vd_high" : "vd_low") +
         (hypertensive ? "_hypertensive" : "_normotensive");
}

namespace {

PrevalenceRatio katz_ratio(const std::string& parameter, const GroupSummary& num,
                           const GroupSummary& den) {
  PrevalenceRatio r;
  r.parameter = parameter;
  r.numerator = num.key;
  r.denominator = den.key;
  if (num.empty || den.empty) return r;  // defined stays false

  auto find = [&](const GroupSummary& g) {
    for (const auto& [name, stat] : g.binary)
      if (name == parameter) return stat;
    throw InvalidInputError("unknown binary parameter \"" + parameter + "\"");
  };
  BinaryStat s1 = find(num), s2 = find(den);
  double a = static_cast<double>(s1.count), n1 = static_cast<double>(s1.n);
  double b = static_cast<double>(s2.count), n2 = static_cast<double>(s2.n);
  if (s1.count == 0 || s2.count == 0) {  // 0.5 continuity correction on zero cells
    a += 0.5;
    b += 0.5;
    n1 += 1.0;
    n2 += 1.0;
  }
  r.ratio = (a / n1) / (b / n2);
  double se = std::sqrt(1.0 / a - 1.0 / n1 + 1.0 / b - 1.0 / n2);
  r.ci_low = r.ratio * std::exp(-kZ95 * se);
  r.ci_high = r.ratio * std::exp(kZ95 * se);
  r.defined = true;
  return r;
}

}  // namespace

GroupComparison group_compare(const std::vector<cohort::AssessmentRecord>& records,
                              double vd_threshold) {
  if (records.empty()) throw InvalidInputError("empty cohort");
  if (!(vd_threshold >= 0.0 && vd_threshold <= 1.0))
    throw InvalidInputError("vd threshold must lie in [0,1]");

  const GroupKey keys[4] = {{true, true}, {true, false}, {false, true}, {false, false}};

  GroupComparison cmp;
  for (const GroupKey& key : keys) {
    std::vector<const cohort::AssessmentRecord*> members;
    for (const auto& rec : records) {
      bool vd_high = rec.vd_confidence >= vd_threshold;
      if (vd_high == key.vd_high && rec.hypertension_label == key.hypertensive)
        members.push_back(&rec);
    }

    GroupSummary g;
    g.key = key;
    g.n = static_cast<long>(members.size());
    g.empty = members.empty();

    const std::vector<std::pair<std::string, std::function<double(const cohort::AssessmentRecord&)>>>
        cont = {
            {"age", [](const auto& r) { return static_cast<double>(r.age); }},
            {"sbp", [](const auto& r) { return r.sbp; }},
            {"dbp", [](const auto& r) { return r.dbp; }},
            {"total_chol", [](const auto& r) { return r.total_chol; }},
            {"hdl_chol", [](const auto& r) { return r.hdl_chol; }},
            {"vd_confidence", [](const auto& r) { return r.vd_confidence; }},
        };
    for (const auto& [name, get] : cont) {
      std::vector<double> vals;
      for (const auto* m : members) {
        double v = get(*m);
        if (!std::isnan(v)) vals.push_back(v);
      }
      Quartiles qs;
      qs.n_used = static_cast<long>(vals.size());
      if (vals.empty()) {
        qs.q25 = qs.median = qs.q75 = std::numeric_limits<double>::quiet_NaN();
      } else {
        qs.q25 = quantile(vals, 0.25);
        qs.median = quantile(vals, 0.5);
        qs.q75 = quantile(vals, 0.75);
      }
      g.continuous.emplace_back(name, qs);
    }

    const std::vector<std::pair<std::string, bool cohort::AssessmentRecord::*>> bin = {
        {"smoker", &cohort::AssessmentRecord::smoker},
        {"diabetes", &cohort::AssessmentRecord::diabetes},
        {"prior_cvd", &cohort::AssessmentRecord::prior_cvd},
        {"antihypertensive_med", &cohort::AssessmentRecord::antihypertensive_med},
    };
    for (const auto& [name, field] : bin) {
      BinaryStat s;
      s.n = g.n;
      for (const auto* m : members) s.count += (m->*field) ? 1 : 0;
      s.prevalence = g.empty ? 0.0 : static_cast<double>(s.count) / static_cast<double>(s.n);
      g.binary.emplace_back(name, s);
    }
    cmp.groups.push_back(std::move(g));
  }

  for (const auto& [param, _] : cmp.groups[0].binary) {
    for (std::size_t i = 0; i < cmp.groups.size(); ++i)
      for (std::size_t j = i + 1; j < cmp.groups.size(); ++j)
        cmp.ratios.push_back(katz_ratio(param, cmp.groups[i], cmp.groups[j]));
  }
  return cmp;
}

std::string group_table_csv(const GroupComparison& cmp) {
  textio::CsvBuilder csv({"group", "n", "parameter", "kind", "q25", "median", "q75", "n_used",
                          "count", "prevalence"});
  for (const auto& g : cmp.groups) {
    for (const auto& [name, qs] : g.continuous)
      csv.add_row({g.key.name(), std::to_string(g.n), name, "continuous", textio::fmt(qs.q25),
                   textio::fmt(qs.median), textio::fmt(qs.q75), std::to_string(qs.n_used), "",
                   ""});
    for (const auto& [name, st] : g.binary)
      csv.add_row({g.key.name(), std::to_string(g.n), name, "binary", "", "", "",
                   std::to_string(st.n), std::to_string(st.count), textio::fmt(st.prevalence)});
  }
  return csv.str();
}

std::string ratio_table_csv(const GroupComparison& cmp) {
  textio::CsvBuilder csv(
      {"parameter", "numerator", "denominator", "ratio", "ci_low", "ci_high", "defined"});
  for (const auto& r : cmp.ratios)
    csv.add_row({r.parameter, r.numerator.name(), r.denominator.name(),
                 r.defined ? textio::fmt(r.ratio) : "", r.defined ? textio::fmt(r.ci_low) : "",
                 r.defined ? textio::fmt(r.ci_high) : "", r.defined ? "1" : "0"});
  return csv.str();
}

}  // namespace vdrisk::discrimination
