#pragma once

// Survival statistics: Kaplan-Meier estimation, Cox proportional-hazards
// fitting on normalized covariates, Harrell's concordance index, and paired
// C-index model comparison.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace vdrisk::survival {

struct SurvivalSample {
  double time = 0.0;  // days, >= 0
  bool event = false; // false = right-censored at `time`
};

// One row per distinct event time. `n_censored` counts censorings in
// [time, next event time); censorings strictly before the first event time
// appear only through the drop from `n_total` to the first row's n_at_risk.
// Consequently sum(n_events + n_censored) <= n_total.
struct KmStep {
  double time = 0.0;
  long n_at_risk = 0;
  long n_events = 0;
  long n_censored = 0;
  double survival = 0.0;
  double greenwood_var = 0.0;
};

struct KmCurve {
  long n_total = 0;
  std::vector<KmStep> steps;  // ascending distinct event times

  // Right-continuous step evaluation; 1.0 before the first event time.
  double survival_at(double t) const;
};

// Product-limit estimator with right censoring. Ties between events and
// censorings at the same time follow the standard convention: events happen
// first, so subjects censored at t are still at risk for events at t.
// When a risk set is exhausted by events (n_at_risk == n_events), survival
// reaches exactly 0 and the Greenwood variance is reported as 0 from that
// step on (the estimate is degenerate there).
KmCurve km_fit(const std::vector<SurvivalSample>& samples);

double km_survival_at(const KmCurve& curve, double t);

// CSV export: time,n_at_risk,n_events,n_censored,survival,greenwood_var
std::string km_to_csv(const KmCurve& curve);

// --- Covariate normalization -----------------------------------------------

// Per-column record of the fitting transform:
//   x' = (x - min) / (max - min), then x'' = x' / post_scale_sd
// so a model coefficient b on x'' corresponds to b / ((max-min) * post_scale_sd)
// per raw unit of x.
struct ColumnTransform {
  double min = 0.0;
  double max = 1.0;
  double post_scale_sd = 1.0;

  double apply(double raw) const {
    return (raw - min) / (max - min) / post_scale_sd;
  }
};

struct NormalizedMatrix {
  Eigen::MatrixXd values;  // n x p, transformed
  std::vector<std::string> column_names;
  std::vector<ColumnTransform> transforms;

  // Wrap an already-scaled matrix with identity transforms; coefficients
  // fitted on it are per raw unit. Used by tests and synthetic oracles.
  static NormalizedMatrix raw(Eigen::MatrixXd values, std::vector<std::string> names);
};

// Min-max scale each column to [0,1], then divide by the sample standard
// deviation (n-1 denominator) of the scaled column. Requires >= 2 rows.
// Constant columns cannot be scaled and raise a validation error naming the
// column.
NormalizedMatrix normalize_covariates(const Eigen::MatrixXd& raw,
                                      const std::vector<std::string>& names);

// --- Cox proportional hazards ----------------------------------------------

enum class TiesMethod { efron, breslow };

const char* to_string(TiesMethod m);
TiesMethod ties_method_from_string(const std::string& s);

struct LoglikResult {
  double value = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
};

// Log partial likelihood with analytic gradient and Hessian. Risk sets are
// accumulated in descending time order; subjects censored at an event time
// remain in that time's risk set. With no events the result is exactly
// (0, 0-vector, 0-matrix).
LoglikResult cox_partial_loglik(const Eigen::VectorXd& beta,
                                const Eigen::MatrixXd& covariates,
                                const std::vector<SurvivalSample>& samples,
                                TiesMethod ties);

struct CoxFitOptions {
  TiesMethod ties = TiesMethod::efron;
  // Gradient max-norm convergence threshold. Independently of it, the fit
  // also stops as converged when the next Newton step is an interior
  // refinement whose predicted likelihood gain is below the floating-point
  // resolution of the log likelihood itself: past that point a line search
  // cannot verify progress, so the optimum is resolved as exactly as the
  // double format allows (relevant once |log L| reaches the hundreds).
  double tol = 1e-9;
  int max_iter = 100;
  double beta_bound = 50.0;   // |beta_j| beyond this flags monotone likelihood
  int max_step_halvings = 30;
  bool compute_c_index = true;
};

struct CoxModel {
  std::vector<std::string> covariate_names;
  std::vector<ColumnTransform> transforms;
  Eigen::VectorXd coefficients;
  Eigen::VectorXd standard_errors;  // NaN when the information matrix is singular
  Eigen::VectorXd hazard_ratios;
  double log_likelihood = 0.0;
  double null_log_likelihood = 0.0;
  std::optional<double> c_index;
  int iterations = 0;
  bool converged = false;
  std::string diagnosis;  // empty when clean; e.g. monotone-likelihood report
  TiesMethod ties = TiesMethod::efron;
};

// Newton iteration with step halving from beta = 0. Reports (not throws)
// monotone-likelihood divergence when any |beta_j| exceeds beta_bound.
// Throws invalid-input when there are no events, numerical error when the
// information matrix is singular at the start (linearly dependent columns).
CoxModel cox_fit(const NormalizedMatrix& data,
                 const std::vector<SurvivalSample>& samples,
                 const CoxFitOptions& options = {});

// Linear predictor beta . x over covariates in model (fitting) scale;
// exp() applied on request. Throws on dimension mismatch.
double predict_relative_hazard(const CoxModel& model, const Eigen::VectorXd& covariates,
                               bool exponentiate = false);

// JSON export with coefficients, SEs, hazard ratios, C-index, convergence
// block, and the per-column transforms.
std::string cox_to_json(const CoxModel& model);

// --- Concordance ------------------------------------------------------------

// Integer pair bookkeeping behind the C-index. A pair is permissible iff the
// shorter time is an event and the times differ, or the times tie with
// exactly one event (the event side is treated as the earlier failure).
// Concordant means higher risk on the earlier-failure side; tied risks earn
// half credit.
struct ConcordanceCounts {
  long long concordant = 0;
  long long tied_risk = 0;
  long long permissible = 0;

  double c_index() const;  // (2*concordant + tied_risk) / (2*permissible)
};

ConcordanceCounts concordance_counts(const std::vector<double>& risks,
                                     const std::vector<SurvivalSample>& samples);

// Harrell's C. Throws undefined-concordance (invalid-input) when no pair is
// permissible.
double c_index(const std::vector<double>& risks, const std::vector<SurvivalSample>& samples);

struct CIndexComparison {
  double c_a = 0.0;
  double c_b = 0.0;
  double delta = 0.0;     // c_a - c_b
  double variance = 0.0;  // estimated Var(delta)
  double z = 0.0;
  double p_value = 1.0;   // two-sided
};

// Paired comparison of two risk scores on the same samples. The variance of
// the C difference comes from the U-statistic projection: per-subject
// influence values psi_i = 2 * (mean pair score of i - C * mean pair weight
// of i) / mean pair weight, and Var(delta) = sum((psi_a - psi_b)^2) / n^2.
// Identical risk vectors give delta 0, p 1.
CIndexComparison c_index_diff_test(const std::vector<double>& risks_a,
                                   const std::vector<double>& risks_b,
                                   const std::vector<SurvivalSample>& samples);

// Sign-flip permutation test on the same null (model labels exchangeable per
// subject): p = (1 + #{|delta_perm| >= |delta_obs|}) / (n_permutations + 1).
// Slower than the analytic test; selectable as a cross-check.
double c_index_diff_permutation(const std::vector<double>& risks_a,
                                const std::vector<double>& risks_b,
                                const std::vector<SurvivalSample>& samples,
                                int n_permutations, std::uint64_t seed);

}  // namespace vdrisk::survival
