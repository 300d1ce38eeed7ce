#pragma once

// ROC/AUC, the univariate logistic hazard classifier, continuous NRI/IDI
// reclassification metrics, and the four-group clinical comparison table.

#include <string>
#include <vector>

#include "vdrisk/cohort.hpp"

namespace vdrisk::discrimination {

// --- ROC ---------------------------------------------------------------------

struct RocPoint {
  double threshold = 0.0;  // predict positive iff score >= threshold
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // (0,0) at +inf down to (1,1) at the min score
  double auc = 0.0;
};

// Threshold sweep over distinct scores in descending order; tied scores are
// grouped at one threshold. The trapezoid AUC is accumulated in exact integer
// arithmetic, so it equals the Mann-Whitney statistic with half-credit ties.
// Throws invalid-input when only one class is present.
RocCurve roc(const std::vector<double>& scores, const std::vector<bool>& labels);

// CSV export: threshold,fpr,tpr
std::string roc_to_csv(const RocCurve& curve);

// --- Hazard classifier ---------------------------------------------------------

struct LogisticFit {
  double intercept = 0.0;
  double slope = 0.0;
  double se_intercept = 0.0;
  double se_slope = 0.0;
  int iterations = 0;
  bool converged = false;
  bool separation = false;  // coefficients hit the divergence cap
};

// Univariate logistic regression fit by Newton iteration; predicted
// probability = logistic(intercept + slope * x). Complete separation is
// diagnosed (separation flag) and the coefficients are left capped rather
// than diverging. Throws invalid-input when only one class is present.
LogisticFit fit_hazard_classifier(const std::vector<double>& hazards,
                                  const std::vector<bool>& labels);

double logistic(double eta);
double predict_probability(const LogisticFit& fit, double hazard);

// --- Reclassification ----------------------------------------------------------

struct ReclassResult {
  double nri = 0.0;
  double nri_events = 0.0;
  double nri_nonevents = 0.0;
  double idi = 0.0;
  double mean_new_events = 0.0;
  double mean_old_events = 0.0;
  double mean_new_nonevents = 0.0;
  double mean_old_nonevents = 0.0;
};

// Continuous (category-free) NRI: among events, mean of sign(p_new - p_old);
// among non-events, mean of the reversed sign; nri is their sum. IDI is the
// difference in discrimination slopes, assembled from the four component
// means. Probabilities must lie in [0,1]; both classes must be present.
ReclassResult nri_idi(const std::vector<double>& p_old, const std::vector<double>& p_new,
                      const std::vector<bool>& labels);

// --- Group comparison -----------------------------------------------------------

// Linear-interpolation quantile (inclusive method) on the sorted values.
// Exposed because group quartiles must match an independent oracle exactly.
double quantile(std::vector<double> values, double q);

struct GroupKey {
  bool vd_high = false;
  bool hypertensive = false;

  std::string name() const;  // e.g. "vd_high_hypertensive"
  bool operator==(const GroupKey&) const = default;
};

struct Quartiles {
  double q25 = 0.0;
  double median = 0.0;
  double q75 = 0.0;
  long n_used = 0;  // non-missing values behind the quartiles
};

struct BinaryStat {
  long count = 0;
  long n = 0;
  double prevalence = 0.0;
};

struct GroupSummary {
  GroupKey key;
  long n = 0;
  bool empty = false;
  std::vector<std::pair<std::string, Quartiles>> continuous;
  std::vector<std::pair<std::string, BinaryStat>> binary;
};

struct PrevalenceRatio {
  std::string parameter;
  GroupKey numerator;
  GroupKey denominator;
  double ratio = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  bool defined = false;  // false when either group is empty
};

struct GroupComparison {
  std::vector<GroupSummary> groups;        // fixed order: (vd high, hyp), (vd high, non-hyp), ...
  std::vector<PrevalenceRatio> ratios;     // all ordered group pairs per binary parameter
};

// Partition records into four groups by (vd_confidence >= vd_threshold,
// hypertension_label). Continuous parameters are summarized by quartiles,
// binary ones by prevalence, and binary prevalences are compared pairwise by
// Katz log-normal ratios with 0.5 continuity correction on zero cells.
GroupComparison group_compare(const std::vector<cohort::AssessmentRecord>& records,
                              double vd_threshold);

// CSV exports: one row per (group, parameter); one row per pairwise ratio.
std::string group_table_csv(const GroupComparison& cmp);
std::string ratio_table_csv(const GroupComparison& cmp);

}  // namespace vdrisk::discrimination
