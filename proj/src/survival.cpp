#include "vdrisk/survival.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "vdrisk/errors.hpp"
#include "vdrisk/rng.hpp"
#include "vdrisk/textio.hpp"

namespace vdrisk::survival {

namespace {

void check_samples(const std::vector<SurvivalSample>& samples) {
  if (samples.empty()) throw InvalidInputError("empty sample list");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!std::isfinite(samples[i].time) || samples[i].time < 0.0)
      throw InvalidInputError("sample " + std::to_string(i) + " has invalid time " +
                              textio::fmt(samples[i].time));
  }
}

}  // namespace

double KmCurve::survival_at(double t) const {
  // Last step with time <= t; right continuity means the drop at an event
  // time has already happened when we evaluate at that time.
  double s = 1.0;
  for (const auto& step : steps) {
    if (step.time > t) break;
    s = step.survival;
  }
  return s;
}

double km_survival_at(const KmCurve& curve, double t) {
  if (!(t >= 0.0)) throw InvalidInputError("query time must be nonnegative");
  return curve.survival_at(t);
}

KmCurve km_fit(const std::vector<SurvivalSample>& samples) {
  check_samples(samples);
  std::vector<SurvivalSample> sorted = samples;
  std::sort(sorted.begin(), sorted.end(),
            [](const SurvivalSample& a, const SurvivalSample& b) { return a.time < b.time; });

  KmCurve curve;
  curve.n_total = static_cast<long>(sorted.size());

  long at_risk = curve.n_total;
  double survival = 1.0;
  double greenwood_sum = 0.0;
  bool exhausted = false;  // risk set hit zero survivors; variance degenerate

  std::size_t i = 0;
  while (i < sorted.size()) {
    double t = sorted[i].time;
    long d = 0, c = 0;
    while (i < sorted.size() && sorted[i].time == t) {
      if (sorted[i].event) ++d; else ++c;
      ++i;
    }
    if (d > 0) {
      KmStep step;
      step.time = t;
      step.n_at_risk = at_risk;
      step.n_events = d;
      step.n_censored = c;
      survival *= 1.0 - static_cast<double>(d) / static_cast<double>(at_risk);
      if (at_risk == d) {
        survival = 0.0;
        exhausted = true;
      } else {
        greenwood_sum += static_cast<double>(d) /
                         (static_cast<double>(at_risk) * static_cast<double>(at_risk - d));
      }
      step.survival = survival;
      step.greenwood_var = exhausted ? 0.0 : survival * survival * greenwood_sum;
      curve.steps.push_back(step);
    } else if (!curve.steps.empty()) {
      curve.steps.back().n_censored += c;
    }
    at_risk -= d + c;
  }
  return curve;
}

std::string km_to_csv(const KmCurve& curve) {
  textio::CsvBuilder csv({"time", "n_at_risk", "n_events", "n_censored", "survival",
                          "greenwood_var"});
  for (const auto& s : curve.steps)
    csv.add_row({textio::fmt(s.time), std::to_string(s.n_at_risk), std::to_string(s.n_events),
                 std::to_string(s.n_censored), textio::fmt(s.survival),
                 textio::fmt(s.greenwood_var)});
  return csv.str();
}

// --- Normalization -----------------------------------------------------------

NormalizedMatrix NormalizedMatrix::raw(Eigen::MatrixXd values, std::vector<std::string> names) {
  NormalizedMatrix m;
  if (static_cast<Eigen::Index>(names.size()) != values.cols())
    throw InvalidInputError("column name count does not match matrix width");
  m.values = std::move(values);
  m.column_names = std::move(names);
  m.transforms.assign(m.column_names.size(), ColumnTransform{0.0, 1.0, 1.0});
  return m;
}

NormalizedMatrix normalize_covariates(const Eigen::MatrixXd& raw,
                                      const std::vector<std::string>& names) {
  const Eigen::Index n = raw.rows(), p = raw.cols();
  if (static_cast<Eigen::Index>(names.size()) != p)
    throw InvalidInputError("column name count does not match matrix width");
  if (n < 2) throw InvalidInputError("need at least 2 rows to normalize covariates");
  if (!raw.allFinite()) throw ValidationError("covariate matrix contains non-finite values");

  NormalizedMatrix out;
  out.values.resize(n, p);
  out.column_names = names;
  out.transforms.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    double lo = raw.col(j).minCoeff();
    double hi = raw.col(j).maxCoeff();
    if (lo == hi)
      throw ValidationError("degenerate covariate \"" + names[j] + "\": column is constant");
    Eigen::VectorXd scaled = (raw.col(j).array() - lo) / (hi - lo);
    double mean = scaled.mean();
    double sd = std::sqrt((scaled.array() - mean).square().sum() / static_cast<double>(n - 1));
    out.values.col(j) = scaled / sd;
    out.transforms[j] = ColumnTransform{lo, hi, sd};
  }
  return out;
}

// --- Cox partial likelihood --------------------------------------------------

const char* to_string(TiesMethod m) { return m == TiesMethod::efron ? "efron" : "breslow"; }

TiesMethod ties_method_from_string(const std::string& s) {
  if (s == "efron") return TiesMethod::efron;
  if (s == "breslow") return TiesMethod::breslow;
  throw InvalidInputError("unknown ties method \"" + s + "\" (expected efron or breslow)");
}

LoglikResult cox_partial_loglik(const Eigen::VectorXd& beta, const Eigen::MatrixXd& covariates,
                                const std::vector<SurvivalSample>& samples, TiesMethod ties) {
  const Eigen::Index n = covariates.rows(), p = covariates.cols();
  if (beta.size() != p) throw InvalidInputError("beta dimension does not match covariate count");
  if (static_cast<Eigen::Index>(samples.size()) != n)
    throw InvalidInputError("sample count does not match covariate rows");
  check_samples(samples);

  LoglikResult res;
  res.value = 0.0;
  res.gradient = Eigen::VectorXd::Zero(p);
  res.hessian = Eigen::MatrixXd::Zero(p, p);

  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return samples[a].time > samples[b].time;  // descending: risk sets grow as time falls
  });

  const auto overflow = [] {
    return NumericalError(
        "non-finite value in partial likelihood (exp of linear predictor overflowed); "
        "suggest rescaling covariates");
  };

  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);

  std::size_t k = 0;
  while (k < order.size()) {
    double t = samples[order[k]].time;

    // Everyone with this time enters the risk set before its events are
    // scored (censored-at-t subjects are still at risk at t).
    long d = 0;
    double sum_eta_d = 0.0, s0d = 0.0;
    Eigen::VectorXd sum_x_d = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd s1d = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd s2d = Eigen::MatrixXd::Zero(p, p);
    while (k < order.size() && samples[order[k]].time == t) {
      Eigen::Index idx = order[k];
      double eta = covariates.row(idx).dot(beta);
      double r = std::exp(eta);
      if (!std::isfinite(r)) throw overflow();
      s0 += r;
      s1 += r * covariates.row(idx).transpose();
      s2 += r * covariates.row(idx).transpose() * covariates.row(idx);
      if (samples[idx].event) {
        ++d;
        sum_eta_d += eta;
        sum_x_d += covariates.row(idx).transpose();
        s0d += r;
        s1d += r * covariates.row(idx).transpose();
        s2d += r * covariates.row(idx).transpose() * covariates.row(idx);
      }
      ++k;
    }
    if (d == 0) continue;

    if (ties == TiesMethod::breslow) {
      if (s0 <= 0.0 || !std::isfinite(s0)) throw overflow();
      Eigen::VectorXd m = s1 / s0;
      res.value += sum_eta_d - d * std::log(s0);
      res.gradient += sum_x_d - d * m;
      res.hessian -= d * (s2 / s0 - m * m.transpose());
    } else {
      for (long j = 0; j < d; ++j) {
        double frac = static_cast<double>(j) / static_cast<double>(d);
        double denom = s0 - frac * s0d;
        if (denom <= 0.0 || !std::isfinite(denom)) throw overflow();
        Eigen::VectorXd num1 = s1 - frac * s1d;
        Eigen::MatrixXd num2 = s2 - frac * s2d;
        Eigen::VectorXd m = num1 / denom;
        res.value -= std::log(denom);
        res.gradient -= m;
        res.hessian -= num2 / denom - m * m.transpose();
      }
      res.value += sum_eta_d;
      res.gradient += sum_x_d;
    }
  }
  if (!std::isfinite(res.value)) throw overflow();
  return res;
}

CoxModel cox_fit(const NormalizedMatrix& data, const std::vector<SurvivalSample>& samples,
                 const CoxFitOptions& options) {
  const Eigen::Index n = data.values.rows(), p = data.values.cols();
  if (p < 1) throw InvalidInputError("no covariates to fit");
  if (static_cast<Eigen::Index>(samples.size()) != n)
    throw InvalidInputError("sample count does not match covariate rows");
  long n_events = 0;
  for (const auto& s : samples) n_events += s.event ? 1 : 0;
  if (n_events == 0) throw InvalidInputError("no events in sample; cannot fit a hazard model");

  CoxModel model;
  model.covariate_names = data.column_names;
  model.transforms = data.transforms;
  model.ties = options.ties;

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  LoglikResult cur = cox_partial_loglik(beta, data.values, samples, options.ties);
  model.null_log_likelihood = cur.value;

  int iter = 0;
  for (; iter < options.max_iter; ++iter) {
    if (cur.gradient.lpNorm<Eigen::Infinity>() <= options.tol) {
      model.converged = true;
      break;
    }
    Eigen::MatrixXd neg_h = -cur.hessian;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(neg_h);
    if (!lu.isInvertible()) {
      if (iter == 0)
        throw NumericalError(
            "rank-deficient information matrix: covariates are linearly dependent");
      model.diagnosis = "singular information matrix after " + std::to_string(iter) +
                        " iterations; coefficients unstable";
      break;
    }
    Eigen::VectorXd delta = lu.solve(cur.gradient);

    // Machine-resolution stop: when the quadratic model predicts a gain
    // smaller than the representable resolution of the log likelihood, the
    // line search below cannot distinguish progress from rounding noise, so
    // the optimum is already resolved. The small-step guard separates this
    // interior case from a monotone likelihood, whose Newton steps stay
    // O(1) while the predicted gain also decays.
    const double predicted_gain = 0.5 * cur.gradient.dot(delta);
    if (delta.lpNorm<Eigen::Infinity>() <= 0.1 &&
        predicted_gain <= 32.0 * std::numeric_limits<double>::epsilon() *
                              std::max(1.0, std::abs(cur.value))) {
      model.converged = true;
      break;
    }

    double step = 1.0;
    bool improved = false;
    Eigen::VectorXd next_beta;
    LoglikResult next;
    for (int h = 0; h <= options.max_step_halvings; ++h, step *= 0.5) {
      next_beta = beta + step * delta;
      try {
        next = cox_partial_loglik(next_beta, data.values, samples, options.ties);
      } catch (const NumericalError&) {
        continue;  // overflow at full step: halve and retry
      }
      if (next.value >= cur.value) {
        improved = true;
        break;
      }
    }
    if (!improved) {
      model.diagnosis = "step halving failed to improve the partial likelihood";
      break;
    }
    beta = next_beta;
    cur = next;

    Eigen::Index worst;
    if (beta.cwiseAbs().maxCoeff(&worst) > options.beta_bound) {
      model.diagnosis = "monotone likelihood detected: coefficient for \"" +
                        data.column_names[static_cast<std::size_t>(worst)] +
                        "\" diverged beyond " + textio::fmt(options.beta_bound) +
                        " (risk ordering is completely separated)";
      break;
    }
  }
  if (!model.converged && model.diagnosis.empty()) {
    // The loop checks convergence before stepping, so a step landing exactly
    // on the optimum at the iteration cap still counts.
    if (cur.gradient.lpNorm<Eigen::Infinity>() <= options.tol)
      model.converged = true;
    else
      model.diagnosis = "did not converge within " + std::to_string(options.max_iter) +
                        " iterations";
  }

  model.coefficients = beta;
  model.hazard_ratios = beta.array().exp();
  model.log_likelihood = cur.value;
  model.iterations = iter;

  Eigen::FullPivLU<Eigen::MatrixXd> lu_final(-cur.hessian);
  if (lu_final.isInvertible()) {
    Eigen::MatrixXd cov = lu_final.inverse();
    model.standard_errors = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  } else {
    model.standard_errors =
        Eigen::VectorXd::Constant(p, std::numeric_limits<double>::quiet_NaN());
  }

  if (options.compute_c_index) {
    std::vector<double> risks(static_cast<std::size_t>(n));
    Eigen::VectorXd lp = data.values * beta;
    for (Eigen::Index i = 0; i < n; ++i) risks[static_cast<std::size_t>(i)] = lp(i);
    ConcordanceCounts counts = concordance_counts(risks, samples);
    if (counts.permissible > 0) model.c_index = counts.c_index();
  }
  return model;
}

double predict_relative_hazard(const CoxModel& model, const Eigen::VectorXd& covariates,
                               bool exponentiate) {
  if (covariates.size() != model.coefficients.size())
    throw InvalidInputError("covariate vector dimension does not match fitted model");
  double lp = model.coefficients.dot(covariates);
  return exponentiate ? std::exp(lp) : lp;
}

std::string cox_to_json(const CoxModel& model) {
  nlohmann::ordered_json j;
  j["covariates"] = model.covariate_names;
  j["coefficients"] = std::vector<double>(model.coefficients.begin(), model.coefficients.end());
  j["standard_errors"] =
      std::vector<double>(model.standard_errors.begin(), model.standard_errors.end());
  j["hazard_ratios"] =
      std::vector<double>(model.hazard_ratios.begin(), model.hazard_ratios.end());
  if (model.c_index)
    j["c_index"] = *model.c_index;
  else
    j["c_index"] = nullptr;
  j["log_likelihood"] = model.log_likelihood;
  j["null_log_likelihood"] = model.null_log_likelihood;
  j["ties"] = to_string(model.ties);
  j["convergence"] = {{"converged", model.converged},
                      {"iterations", model.iterations},
                      {"diagnosis", model.diagnosis}};
  nlohmann::ordered_json transforms = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < model.transforms.size(); ++i)
    transforms.push_back({{"name", model.covariate_names[i]},
                          {"min", model.transforms[i].min},
                          {"max", model.transforms[i].max},
                          {"post_scale_sd", model.transforms[i].post_scale_sd}});
  j["transforms"] = transforms;
  return j.dump(2) + "\n";
}

// --- Concordance --------------------------------------------------------------

namespace {

// Pair classification shared by the C-index and its comparison tests.
// Returns true when the pair is permissible; then *earlier is the index whose
// failure is treated as first (the event side on tied times).
bool permissible_pair(const SurvivalSample& si, const SurvivalSample& sj, bool* i_earlier) {
  if (si.time != sj.time) {
    const bool i_shorter = si.time < sj.time;
    const SurvivalSample& shorter = i_shorter ? si : sj;
    if (!shorter.event) return false;
    *i_earlier = i_shorter;
    return true;
  }
  if (si.event == sj.event) return false;  // tied times need exactly one event
  *i_earlier = si.event;
  return true;
}

// 2x the concordance score of a permissible pair: 2 concordant, 1 tied risks,
// 0 discordant. Integer so that accumulated sums are exact.
int pair_score2(double risk_earlier, double risk_later) {
  if (risk_earlier > risk_later) return 2;
  if (risk_earlier == risk_later) return 1;
  return 0;
}

}  // namespace

double ConcordanceCounts::c_index() const {
  if (permissible == 0)
    throw InvalidInputError("undefined concordance: no permissible pairs");
  return static_cast<double>(2 * concordant + tied_risk) /
         static_cast<double>(2 * permissible);
}

ConcordanceCounts concordance_counts(const std::vector<double>& risks,
                                     const std::vector<SurvivalSample>& samples) {
  if (risks.size() != samples.size())
    throw InvalidInputError("risk vector length does not match sample count");
  check_samples(samples);
  ConcordanceCounts counts;
  const std::size_t n = samples.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      bool i_earlier = false;
      if (!permissible_pair(samples[i], samples[j], &i_earlier)) continue;
      ++counts.permissible;
      int s2 = i_earlier ? pair_score2(risks[i], risks[j]) : pair_score2(risks[j], risks[i]);
      if (s2 == 2) ++counts.concordant;
      else if (s2 == 1) ++counts.tied_risk;
    }
  }
  return counts;
}

double c_index(const std::vector<double>& risks, const std::vector<SurvivalSample>& samples) {
  return concordance_counts(risks, samples).c_index();
}

CIndexComparison c_index_diff_test(const std::vector<double>& risks_a,
                                   const std::vector<double>& risks_b,
                                   const std::vector<SurvivalSample>& samples) {
  const std::size_t n = samples.size();
  if (risks_a.size() != n || risks_b.size() != n)
    throw InvalidInputError("risk vector length does not match sample count");
  check_samples(samples);

  // Per-subject pair sums (each unordered pair contributes to both members).
  std::vector<long long> score2_a(n, 0), score2_b(n, 0), weight(n, 0);
  long long total_score2_a = 0, total_score2_b = 0, total_weight = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      bool i_earlier = false;
      if (!permissible_pair(samples[i], samples[j], &i_earlier)) continue;
      int sa = i_earlier ? pair_score2(risks_a[i], risks_a[j]) : pair_score2(risks_a[j], risks_a[i]);
      int sb = i_earlier ? pair_score2(risks_b[i], risks_b[j]) : pair_score2(risks_b[j], risks_b[i]);
      score2_a[i] += sa; score2_a[j] += sa;
      score2_b[i] += sb; score2_b[j] += sb;
      weight[i] += 1; weight[j] += 1;
      total_score2_a += sa;
      total_score2_b += sb;
      total_weight += 1;
    }
  }
  if (total_weight == 0)
    throw InvalidInputError("undefined concordance: no permissible pairs");

  CIndexComparison cmp;
  cmp.c_a = static_cast<double>(total_score2_a) / static_cast<double>(2 * total_weight);
  cmp.c_b = static_cast<double>(total_score2_b) / static_cast<double>(2 * total_weight);
  cmp.delta = cmp.c_a - cmp.c_b;

  // U-statistic projection: influence of subject i on C is
  //   psi_i = 2 (p_i - C q_i) / q_bar
  // with p_i, q_i the per-subject mean pair score and weight and q_bar the
  // overall mean weight. The psi sums are zero by construction, so the
  // paired-difference variance is a plain mean of squares over n.
  const double nn = static_cast<double>(n);
  const double q_bar = 2.0 * static_cast<double>(total_weight) / (nn * (nn - 1.0));
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double p_a = static_cast<double>(score2_a[i]) / (2.0 * (nn - 1.0));
    double p_b = static_cast<double>(score2_b[i]) / (2.0 * (nn - 1.0));
    double q = static_cast<double>(weight[i]) / (nn - 1.0);
    double psi_a = 2.0 * (p_a - cmp.c_a * q) / q_bar;
    double psi_b = 2.0 * (p_b - cmp.c_b * q) / q_bar;
    sum_sq += (psi_a - psi_b) * (psi_a - psi_b);
  }
  cmp.variance = sum_sq / (nn * nn);

  if (cmp.delta == 0.0 || cmp.variance == 0.0) {
    cmp.z = 0.0;
    cmp.p_value = 1.0;
    return cmp;
  }
  cmp.z = cmp.delta / std::sqrt(cmp.variance);
  cmp.p_value = std::erfc(std::abs(cmp.z) / std::sqrt(2.0));
  return cmp;
}

double c_index_diff_permutation(const std::vector<double>& risks_a,
                                const std::vector<double>& risks_b,
                                const std::vector<SurvivalSample>& samples,
                                int n_permutations, std::uint64_t seed) {
  const std::size_t n = samples.size();
  if (risks_a.size() != n || risks_b.size() != n)
    throw InvalidInputError("risk vector length does not match sample count");
  if (n_permutations < 1) throw InvalidInputError("need at least one permutation");
  check_samples(samples);

  // Cache permissible pairs once; each permutation only re-reads risks.
  struct Pair { std::uint32_t earlier, later; };
  std::vector<Pair> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      bool i_earlier = false;
      if (!permissible_pair(samples[i], samples[j], &i_earlier)) continue;
      pairs.push_back(i_earlier ? Pair{static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j)}
                                : Pair{static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(i)});
    }
  }
  if (pairs.empty())
    throw InvalidInputError("undefined concordance: no permissible pairs");

  const auto delta_for = [&](const std::vector<std::uint8_t>& flip) {
    long long num_a = 0, num_b = 0;
    for (const auto& pr : pairs) {
      const std::vector<double>& ra_e = flip[pr.earlier] ? risks_b : risks_a;
      const std::vector<double>& ra_l = flip[pr.later] ? risks_b : risks_a;
      const std::vector<double>& rb_e = flip[pr.earlier] ? risks_a : risks_b;
      const std::vector<double>& rb_l = flip[pr.later] ? risks_a : risks_b;
      num_a += pair_score2(ra_e[pr.earlier], ra_l[pr.later]);
      num_b += pair_score2(rb_e[pr.earlier], rb_l[pr.later]);
    }
    return static_cast<double>(num_a - num_b) / static_cast<double>(2 * pairs.size());
  };

  std::vector<std::uint8_t> flip(n, 0);
  const double observed = std::abs(delta_for(flip));
  long long at_least = 0;
  for (int rep = 0; rep < n_permutations; ++rep) {
    rng::SplitMix64 g = rng::stream(seed, static_cast<std::uint64_t>(rep), 0);
    for (std::size_t i = 0; i < n; ++i) flip[i] = g.bernoulli(0.5) ? 1 : 0;
    if (std::abs(delta_for(flip)) >= observed) ++at_least;
  }
  return static_cast<double>(1 + at_least) / static_cast<double>(n_permutations + 1);
}

}  // namespace vdrisk::survival
