#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace vdrisk::cohort {

enum class Assessment { baseline, y5, y10 };
enum class Sex { male, female };

const char* to_string(Assessment a);
const char* to_string(Sex s);
Assessment assessment_from_string(const std::string& s, long row);
Sex sex_from_string(const std::string& s, long row);

// One participant x time-point row. Missing cholesterol values are NaN.
struct AssessmentRecord {
  std::string participant_id;
  Assessment assessment = Assessment::baseline;
  int age = 0;
  Sex sex = Sex::male;
  double sbp = 0.0;
  double dbp = 0.0;
  bool antihypertensive_med = false;
  bool smoker = false;
  bool diabetes = false;
  bool prior_cvd = false;
  double total_chol = 0.0;
  double hdl_chol = 0.0;
  double vd_confidence = 0.0;
  bool hypertension_label = false;
};

enum class Endpoint { all_cause_death, cardiac_death, mi, stroke };
inline constexpr std::array<Endpoint, 4> kEndpoints = {Endpoint::all_cause_death, Endpoint::cardiac_death,
                                                       Endpoint::mi, Endpoint::stroke};
const char* to_string(Endpoint e);
Endpoint endpoint_from_string(const std::string& s);

struct EndpointOutcome {
  long time_days = 0;
  bool event = false;  // false = right-censored at time_days
};

struct OutcomeRecord {
  std::string participant_id;
  std::array<EndpointOutcome, 4> endpoints{};  // indexed like kEndpoints

  const EndpointOutcome& of(Endpoint e) const { return endpoints[static_cast<std::size_t>(e)]; }
  EndpointOutcome& of(Endpoint e) { return endpoints[static_cast<std::size_t>(e)]; }
};

// Study hypertension rule: SBP >= 140 mmHg, or DBP >= 90 mmHg, or current
// antihypertensive medication.
bool classify_hypertension(double sbp, double dbp, bool med);

// SCORE2 applies to ages 40-69 without prior CVD or diabetes.
bool score2_eligible(int age, bool prior_cvd, bool diabetes);

// Named covariate lookup used by the Cox CLI and the synthetic generator.
// Booleans map to 0/1, sex to sex_male. Throws InvalidInputError for unknown
// names.
double record_covariate(const AssessmentRecord& rec, const std::string& name);
std::vector<std::string> known_covariates();

struct AgeBinWeight {
  int lo = 0;  // inclusive
  int hi = 0;  // exclusive
  double weight = 0.0;
};

struct SyntheticCohortConfig {
  long n = 0;
  double hypertension_target = 0.501;
  double smoker_target = 0.194;
  double diabetes_target = 0.094;
  double prior_cvd_target = 0.119;
  std::vector<AgeBinWeight> age_bins = {{35, 45, 0.218}, {45, 55, 0.263}, {55, 65, 0.266}, {65, 75, 0.253}};
  // Per-endpoint log-hazard coefficients in raw covariate units. The special
  // key "intercept" shifts the endpoint's baseline hazard directly.
  std::map<Endpoint, std::map<std::string, double>> planted_log_hazard;
  double baseline_hazard_per_year = 1e-4;
  long censoring_horizon_days = 5479;  // 15 years
  std::uint64_t seed = 0;
};

// Deterministic per (config, seed): every participant draws from independent
// streams derived from (seed, index), one phase for covariates and one per
// endpoint, so results are identical regardless of evaluation order.
// Event times are exponential with hazard
//   baseline_hazard * exp(sum coeff * covariate), censored at the horizon.
std::pair<std::vector<AssessmentRecord>, std::vector<OutcomeRecord>> generate_synthetic_cohort(
    const SyntheticCohortConfig& config);

struct SplitFold {
  std::vector<long> test;
  std::vector<long> train;
  std::vector<long> val;
};

struct SplitPlan {
  long n = 0;
  int k = 0;
  std::vector<SplitFold> folds;
  std::vector<std::string> warnings;
};

// k pairwise-disjoint test sets of size floor(n/k); the remainder goes one
// element per fold from the front. Per fold the leftover indices are split
// train/val with |val| = round(val_frac * leftover).
SplitPlan make_splits(long n, int k, double val_frac, std::uint64_t seed);

struct CohortValidationIssue {
  long row = 0;  // 1-based data row
  std::string participant_id;
  std::string message;
};

struct LoadedCohort {
  std::vector<AssessmentRecord> records;
  std::vector<OutcomeRecord> outcomes;
  // Rows whose stored hypertension_label disagreed with the recomputed one.
  // The in-memory records carry the recomputed label.
  std::vector<CohortValidationIssue> label_mismatches;
};

// Strict reader for the cohort CSV schema (see cohort_csv_header()). Schema
// violations raise ParseError naming row and column; invariant violations
// raise ValidationError.
LoadedCohort load_cohort(const std::filesystem::path& path);

std::vector<std::string> cohort_csv_header();
std::string cohort_to_csv(const std::vector<AssessmentRecord>& records,
                          const std::vector<OutcomeRecord>& outcomes);

}  // namespace vdrisk::cohort
