#include "vdrisk/score2.hpp"

#include <cmath>
#include <set>

#include <json.hpp>

#include "vdrisk/errors.hpp"
#include "vdrisk/textio.hpp"

namespace vdrisk::score2 {

namespace {

// Units this engine computes in. A config declaring anything else for these
// variables is rejected at load time.
const std::map<std::string, std::string> kExpectedUnits = {
    {"age", "years"},         {"sbp", "mmHg"},     {"total_chol", "mmol/L"},
    {"hdl_chol", "mmol/L"},   {"smoker", "binary"}, {"diabetes", "binary"},
};

void validate(const Score2Coefficients& c) {
  if (!(c.baseline_survival_10y > 0.0 && c.baseline_survival_10y < 1.0))
    throw InvalidInputError("baseline_survival_10y must lie strictly inside (0,1)");
  if (c.terms.empty()) throw InvalidInputError("coefficient config defines no terms");
  for (const auto& [sex, terms] : c.terms) {
    std::set<std::string> seen;
    bool has_age = false;
    for (const auto& t : terms) {
      std::string key = t.variable + (t.age_interaction ? "*age" : "");
      if (!seen.insert(key).second)
        throw InvalidInputError("duplicate term \"" + key + "\" for sex " +
                                cohort::to_string(sex));
      if (t.scale == 0.0)
        throw InvalidInputError("zero scale for variable \"" + t.variable + "\"");
      if (t.variable == "age" && !t.age_interaction) has_age = true;
    }
    for (const auto& t : terms)
      if (t.age_interaction && !has_age)
        throw InvalidInputError("age-interaction term \"" + t.variable +
                                "\" requires a plain age term for sex " + cohort::to_string(sex));
  }
  for (const auto& [var, unit] : c.units) {
    auto it = kExpectedUnits.find(var);
    if (it != kExpectedUnits.end() && it->second != unit)
      throw InvalidInputError("unit mismatch for \"" + var + "\": config declares \"" + unit +
                              "\", engine works in \"" + it->second + "\"");
  }
}

}  // namespace

Score2Coefficients parse_score2_config(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidInputError(std::string("invalid coefficient JSON: ") + e.what());
  }
  Score2Coefficients c;
  try {
    for (const char* sex_name : {"male", "female"}) {
      if (!j.contains(sex_name)) continue;
      cohort::Sex sex = sex_name == std::string("male") ? cohort::Sex::male : cohort::Sex::female;
      std::vector<Score2Term> terms;
      for (const auto& tj : j.at(sex_name)) {
        Score2Term t;
        t.variable = tj.at("variable").get<std::string>();
        t.center = tj.at("center").get<double>();
        t.scale = tj.at("scale").get<double>();
        t.coefficient = tj.at("coefficient").get<double>();
        t.age_interaction = tj.value("age_interaction", false);
        terms.push_back(std::move(t));
      }
      c.terms[sex] = std::move(terms);
    }
    c.baseline_survival_10y = j.at("baseline_survival_10y").get<double>();
    c.cal_scale1 = j.at("calibration").at("scale1").get<double>();
    c.cal_scale2 = j.at("calibration").at("scale2").get<double>();
    if (j.contains("units"))
      for (const auto& [k, v] : j.at("units").items()) c.units[k] = v.get<std::string>();
    c.provenance = j.value("provenance", "");
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInputError(std::string("malformed coefficient config: ") + e.what());
  }
  validate(c);
  return c;
}

Score2Coefficients load_score2_config(const std::filesystem::path& path) {
  return parse_score2_config(textio::read_file(path));
}

Score2Coefficients demo_coefficients() {
  // Demo set: follows the published model's term structure and magnitudes
  // but is NOT a clinically calibrated parameterization.
  static const char* kDemoJson = R"JSON({
  "male": [
    {"variable": "age",        "center": 60,  "scale": 5,   "coefficient": 0.3742},
    {"variable": "smoker",     "center": 0,   "scale": 1,   "coefficient": 0.6012},
    {"variable": "sbp",        "center": 120, "scale": 20,  "coefficient": 0.2777},
    {"variable": "total_chol", "center": 6,   "scale": 1,   "coefficient": 0.1458},
    {"variable": "hdl_chol",   "center": 1.3, "scale": 0.5, "coefficient": -0.2698},
    {"variable": "smoker",     "center": 0,   "scale": 1,   "coefficient": -0.0755, "age_interaction": true},
    {"variable": "sbp",        "center": 120, "scale": 20,  "coefficient": -0.0255, "age_interaction": true},
    {"variable": "total_chol", "center": 6,   "scale": 1,   "coefficient": -0.0281, "age_interaction": true},
    {"variable": "hdl_chol",   "center": 1.3, "scale": 0.5, "coefficient": 0.0426,  "age_interaction": true}
  ],
  "female": [
    {"variable": "age",        "center": 60,  "scale": 5,   "coefficient": 0.4648},
    {"variable": "smoker",     "center": 0,   "scale": 1,   "coefficient": 0.7744},
    {"variable": "sbp",        "center": 120, "scale": 20,  "coefficient": 0.3131},
    {"variable": "total_chol", "center": 6,   "scale": 1,   "coefficient": 0.1002},
    {"variable": "hdl_chol",   "center": 1.3, "scale": 0.5, "coefficient": -0.2606},
    {"variable": "smoker",     "center": 0,   "scale": 1,   "coefficient": -0.1088, "age_interaction": true},
    {"variable": "sbp",        "center": 120, "scale": 20,  "coefficient": -0.0277, "age_interaction": true},
    {"variable": "total_chol", "center": 6,   "scale": 1,   "coefficient": -0.0226, "age_interaction": true},
    {"variable": "hdl_chol",   "center": 1.3, "scale": 0.5, "coefficient": 0.0613,  "age_interaction": true}
  ],
  "baseline_survival_10y": 0.9605,
  "calibration": {"scale1": -0.5699, "scale2": 0.7476},
  "units": {"age": "years", "sbp": "mmHg", "total_chol": "mmol/L", "hdl_chol": "mmol/L",
            "smoker": "binary", "diabetes": "binary"},
  "provenance": "demo coefficient set for testing; not for clinical use"
})JSON";
  return parse_score2_config(kDemoJson);
}

const char* to_string(RiskStratum s) { return s == RiskStratum::high ? "high" : "low"; }

double linear_predictor(const cohort::AssessmentRecord& rec, const Score2Coefficients& coeffs) {
  if (!cohort::score2_eligible(rec.age, rec.prior_cvd, rec.diabetes))
    throw InvalidInputError("participant " + rec.participant_id + " is not SCORE2-eligible");
  auto it = coeffs.terms.find(rec.sex);
  if (it == coeffs.terms.end())
    throw InvalidInputError(std::string("no coefficients configured for sex ") + cohort::to_string(rec.sex));
  const auto& terms = it->second;

  double age_transformed = 0.0;
  for (const auto& t : terms)
    if (t.variable == "age" && !t.age_interaction)
      age_transformed = (static_cast<double>(rec.age) - t.center) / t.scale;

  double lp = 0.0;
  for (const auto& t : terms) {
    double raw = cohort::record_covariate(rec, t.variable);
    if (std::isnan(raw))
      throw InvalidInputError("incomplete input: variable \"" + t.variable + "\" is missing for participant " +
                              rec.participant_id);
    double value = (raw - t.center) / t.scale;
    if (t.age_interaction) value *= age_transformed;
    lp += t.coefficient * value;
  }
  return lp;
}

RiskEstimate ten_year_risk(double lp, const Score2Coefficients& coeffs, double threshold) {
  if (!std::isfinite(lp)) throw InvalidInputError("linear predictor must be finite");
  RiskEstimate est;
  est.linear_predictor = lp;
  est.uncalibrated_risk = 1.0 - std::pow(coeffs.baseline_survival_10y, std::exp(lp));
  if (est.uncalibrated_risk <= 0.0 || est.uncalibrated_risk >= 1.0)
    throw NumericalError("uncalibrated risk saturated at " + textio::fmt(est.uncalibrated_risk) +
                         " (lp=" + textio::fmt(lp) + ")");
  est.calibrated_risk =
      1.0 - std::exp(-std::exp(coeffs.cal_scale1 +
                               coeffs.cal_scale2 * std::log(-std::log(1.0 - est.uncalibrated_risk))));
  est.stratum = stratify_score2(est.calibrated_risk, threshold);
  return est;
}

RiskStratum stratify_score2(double risk, double threshold) {
  if (!(risk >= 0.0 && risk <= 1.0)) throw InvalidInputError("risk must lie in [0,1]");
  return risk >= threshold ? RiskStratum::high : RiskStratum::low;
}

}  // namespace vdrisk::score2
