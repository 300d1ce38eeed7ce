#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "vdrisk/cohort.hpp"

namespace vdrisk::score2 {

// One linear-predictor term: coefficient * (value - center) / scale. Terms
// with age_interaction set are additionally multiplied by the transformed age
// of the same sex's "age" term.
struct Score2Term {
  std::string variable;
  double center = 0.0;
  double scale = 1.0;
  double coefficient = 0.0;
  bool age_interaction = false;
};

struct Score2Coefficients {
  std::map<cohort::Sex, std::vector<Score2Term>> terms;
  double baseline_survival_10y = 0.0;
  double cal_scale1 = 0.0;
  double cal_scale2 = 1.0;
  std::map<std::string, std::string> units;
  std::string provenance;
};

// Loads the JSON coefficient config and validates invariants: baseline
// survival in (0,1), unique variable names per sex, declared units matching
// the units this engine works in (mmol/L cholesterol, mmHg pressures).
Score2Coefficients load_score2_config(const std::filesystem::path& path);
Score2Coefficients parse_score2_config(const std::string& json_text);

// A deliberately non-clinical coefficient set with the published model's
// structure, for tests and the synthetic replica.
Score2Coefficients demo_coefficients();

enum class RiskStratum { high, low };
const char* to_string(RiskStratum s);

struct RiskEstimate {
  double linear_predictor = 0.0;
  double uncalibrated_risk = 0.0;
  double calibrated_risk = 0.0;
  RiskStratum stratum = RiskStratum::low;
};

// Sum of configured terms for the participant's sex. Requires
// score2_eligible; missing inputs (NaN) raise InvalidInputError naming the
// variable.
double linear_predictor(const cohort::AssessmentRecord& rec, const Score2Coefficients& coeffs);

// uncalibrated = 1 - S0^exp(lp);
// calibrated   = 1 - exp(-exp(scale1 + scale2 * ln(-ln(1 - uncalibrated)))).
RiskEstimate ten_year_risk(double lp, const Score2Coefficients& coeffs, double threshold = 0.08);

inline constexpr double kDefaultThreshold = 0.08;

// High iff risk >= threshold (ties flag as high risk).
RiskStratum stratify_score2(double risk, double threshold = kDefaultThreshold);

}  // namespace vdrisk::score2
