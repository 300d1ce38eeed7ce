#include "vdrisk/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vdrisk/errors.hpp"
#include "vdrisk/rng.hpp"
#include "vdrisk/textio.hpp"

namespace vdrisk::cohort {

const char* to_string(Assessment a) {
  switch (a) {
    case Assessment::baseline: return "baseline";
    case Assessment::y5: return "y5";
    case Assessment::y10: return "y10";
  }
  return "?";
}

const char* to_string(Sex s) { return s == Sex::male ? "male" : "female"; }

Assessment assessment_from_string(const std::string& s, long row) {
  if (s == "baseline") return Assessment::baseline;
  if (s == "y5") return Assessment::y5;
  if (s == "y10") return Assessment::y10;
  throw ParseError("unknown assessment \"" + s + "\"", row, "assessment");
}

Sex sex_from_string(const std::string& s, long row) {
  if (s == "male") return Sex::male;
  if (s == "female") return Sex::female;
  throw ParseError("unknown sex \"" + s + "\"", row, "sex");
}

const char* to_string(Endpoint e) {
  switch (e) {
    case Endpoint::all_cause_death: return "all_cause_death";
    case Endpoint::cardiac_death: return "cardiac_death";
    case Endpoint::mi: return "mi";
    case Endpoint::stroke: return "stroke";
  }
  return "?";
}

Endpoint endpoint_from_string(const std::string& s) {
  for (Endpoint e : kEndpoints)
    if (s == to_string(e)) return e;
  throw InvalidInputError("unknown endpoint \"" + s + "\"");
}

bool classify_hypertension(double sbp, double dbp, bool med) {
  if (!std::isfinite(sbp) || !std::isfinite(dbp) || sbp <= 0.0 || dbp <= 0.0)
    throw InvalidInputError("blood pressures must be finite and positive (sbp=" + textio::fmt(sbp) +
                            ", dbp=" + textio::fmt(dbp) + ")");
  return sbp >= 140.0 || dbp >= 90.0 || med;
}

bool score2_eligible(int age, bool prior_cvd, bool diabetes) {
  if (age < 0) throw InvalidInputError("age must be nonnegative");
  return age >= 40 && age <= 69 && !prior_cvd && !diabetes;
}

double record_covariate(const AssessmentRecord& rec, const std::string& name) {
  if (name == "age") return static_cast<double>(rec.age);
  if (name == "sex_male") return rec.sex == Sex::male ? 1.0 : 0.0;
  if (name == "sbp") return rec.sbp;
  if (name == "dbp") return rec.dbp;
  if (name == "antihypertensive_med") return rec.antihypertensive_med ? 1.0 : 0.0;
  if (name == "smoker") return rec.smoker ? 1.0 : 0.0;
  if (name == "diabetes") return rec.diabetes ? 1.0 : 0.0;
  if (name == "prior_cvd") return rec.prior_cvd ? 1.0 : 0.0;
  if (name == "total_chol") return rec.total_chol;
  if (name == "hdl_chol") return rec.hdl_chol;
  if (name == "vd_confidence") return rec.vd_confidence;
  if (name == "hypertension") return rec.hypertension_label ? 1.0 : 0.0;
  throw InvalidInputError("unknown covariate \"" + name + "\"");
}

std::vector<std::string> known_covariates() {
  return {"age",      "sex_male",   "sbp",        "dbp",      "antihypertensive_med", "smoker",
          "diabetes", "prior_cvd",  "total_chol", "hdl_chol", "vd_confidence",        "hypertension"};
}

namespace {

void validate_config(const SyntheticCohortConfig& cfg) {
  if (cfg.n < 0) throw InvalidInputError("cohort size must be nonnegative");
  auto check_prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0))
      throw InvalidInputError(std::string("prevalence target out of [0,1]: ") + name);
  };
  check_prob(cfg.hypertension_target, "hypertension");
  check_prob(cfg.smoker_target, "smoker");
  check_prob(cfg.diabetes_target, "diabetes");
  check_prob(cfg.prior_cvd_target, "prior_cvd");
  if (cfg.age_bins.empty()) throw InvalidInputError("age distribution needs at least one bin");
  double total = 0.0;
  for (const auto& b : cfg.age_bins) {
    if (b.hi <= b.lo) throw InvalidInputError("age bin upper bound must exceed lower bound");
    if (b.weight < 0.0) throw InvalidInputError("age bin weights must be nonnegative");
    total += b.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvalidInputError("age bin weights must sum to 1");
  if (cfg.baseline_hazard_per_year <= 0.0) throw InvalidInputError("baseline hazard must be positive");
  if (cfg.censoring_horizon_days <= 0) throw InvalidInputError("censoring horizon must be positive");
}

int draw_age(rng::SplitMix64& g, const std::vector<AgeBinWeight>& bins) {
  double u = g.uniform01();
  double acc = 0.0;
  const AgeBinWeight* chosen = &bins.back();
  for (const auto& b : bins) {
    acc += b.weight;
    if (u < acc) {
      chosen = &b;
      break;
    }
  }
  return chosen->lo + static_cast<int>(g.uniform_int(static_cast<std::uint64_t>(chosen->hi - chosen->lo)));
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

AssessmentRecord draw_record(std::uint64_t seed, long index, const SyntheticCohortConfig& cfg) {
  auto g = rng::stream(seed, static_cast<std::uint64_t>(index), 0);
  AssessmentRecord rec;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "P%07ld", index + 1);
  rec.participant_id = buf;
  rec.assessment = Assessment::baseline;
  rec.age = draw_age(g, cfg.age_bins);
  rec.sex = g.bernoulli(0.5) ? Sex::male : Sex::female;

  bool hyper = g.bernoulli(cfg.hypertension_target);
  if (hyper) {
    rec.antihypertensive_med = g.bernoulli(0.55);
    if (rec.antihypertensive_med) {
      // Treated: pressures may be controlled or not.
      rec.sbp = g.uniform(112.0, 168.0);
      rec.dbp = g.uniform(66.0, 98.0);
    } else if (g.bernoulli(0.7)) {
      rec.sbp = g.uniform(140.0, 185.0);
      rec.dbp = g.uniform(70.0, 104.0);
    } else {
      rec.sbp = g.uniform(125.0, 170.0);
      rec.dbp = g.uniform(90.0, 105.0);
    }
  } else {
    rec.antihypertensive_med = false;
    rec.sbp = g.uniform(102.0, 138.0);
    rec.dbp = g.uniform(64.0, 88.0);
  }
  rec.hypertension_label = classify_hypertension(rec.sbp, rec.dbp, rec.antihypertensive_med);

  rec.smoker = g.bernoulli(cfg.smoker_target);
  rec.diabetes = g.bernoulli(cfg.diabetes_target);
  rec.prior_cvd = g.bernoulli(cfg.prior_cvd_target);
  rec.total_chol = std::clamp(5.6 + 1.05 * g.normal(), 2.5, 9.5);
  rec.hdl_chol = std::clamp(1.45 + 0.4 * g.normal(), 0.6, 3.0);

  // Noisy proxy: confidence rises with the hypertension label and with age,
  // but the overlap between groups is substantial.
  double z = -1.1 + 1.5 * (rec.hypertension_label ? 1.0 : 0.0) + 0.02 * (rec.age - 55) + 0.8 * g.normal();
  rec.vd_confidence = logistic(z);
  return rec;
}

}  // namespace

std::pair<std::vector<AssessmentRecord>, std::vector<OutcomeRecord>> generate_synthetic_cohort(
    const SyntheticCohortConfig& cfg) {
  validate_config(cfg);
  std::vector<AssessmentRecord> records;
  std::vector<OutcomeRecord> outcomes;
  records.reserve(static_cast<std::size_t>(cfg.n));
  outcomes.reserve(static_cast<std::size_t>(cfg.n));

  const double horizon = static_cast<double>(cfg.censoring_horizon_days);
  for (long i = 0; i < cfg.n; ++i) {
    AssessmentRecord rec = draw_record(cfg.seed, i, cfg);
    OutcomeRecord out;
    out.participant_id = rec.participant_id;
    for (std::size_t ei = 0; ei < kEndpoints.size(); ++ei) {
      Endpoint e = kEndpoints[ei];
      double lp = 0.0;
      if (auto it = cfg.planted_log_hazard.find(e); it != cfg.planted_log_hazard.end())
        for (const auto& [name, coeff] : it->second)
          lp += name == "intercept" ? coeff : coeff * record_covariate(rec, name);
      double rate_per_day = cfg.baseline_hazard_per_year / 365.25 * std::exp(lp);
      if (!std::isfinite(rate_per_day) || rate_per_day <= 0.0)
        throw NumericalError("non-finite event hazard for participant " + rec.participant_id);
      auto ge = rng::stream(cfg.seed, static_cast<std::uint64_t>(i), 1 + ei);
      double t = ge.exponential(rate_per_day);
      EndpointOutcome& eo = out.of(e);
      if (t <= horizon) {
        eo.time_days = static_cast<long>(std::ceil(t));
        eo.event = true;
      } else {
        eo.time_days = cfg.censoring_horizon_days;
        eo.event = false;
      }
    }
    records.push_back(std::move(rec));
    outcomes.push_back(std::move(out));
  }
  return {std::move(records), std::move(outcomes)};
}

SplitPlan make_splits(long n, int k, double val_frac, std::uint64_t seed) {
  if (k < 1) throw InvalidInputError("fold count must be >= 1");
  if (static_cast<long>(k) > n) throw InvalidInputError("fold count exceeds cohort size");
  if (!(val_frac >= 0.0 && val_frac < 1.0)) throw InvalidInputError("val_frac must be in [0,1)");

  std::vector<long> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0L);
  auto g = rng::stream(seed, 0, 0);
  for (long i = n - 1; i > 0; --i) {
    long j = static_cast<long>(g.uniform_int(static_cast<std::uint64_t>(i + 1)));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }

  SplitPlan plan;
  plan.n = n;
  plan.k = k;
  const long base = n / k;
  const long remainder = n % k;
  long cursor = 0;
  for (int f = 0; f < k; ++f) {
    SplitFold fold;
    long size = base + (f < remainder ? 1 : 0);
    fold.test.assign(order.begin() + cursor, order.begin() + cursor + size);
    cursor += size;
    plan.folds.push_back(std::move(fold));
  }

  for (int f = 0; f < k; ++f) {
    SplitFold& fold = plan.folds[static_cast<std::size_t>(f)];
    std::vector<long> rest;
    rest.reserve(static_cast<std::size_t>(n) - fold.test.size());
    std::vector<bool> in_test(static_cast<std::size_t>(n), false);
    for (long idx : fold.test) in_test[static_cast<std::size_t>(idx)] = true;
    for (long idx : order)
      if (!in_test[static_cast<std::size_t>(idx)]) rest.push_back(idx);

    auto gf = rng::stream(seed, static_cast<std::uint64_t>(f) + 1, 1);
    for (long i = static_cast<long>(rest.size()) - 1; i > 0; --i) {
      long j = static_cast<long>(gf.uniform_int(static_cast<std::uint64_t>(i + 1)));
      std::swap(rest[static_cast<std::size_t>(i)], rest[static_cast<std::size_t>(j)]);
    }
    long val_count = std::lround(val_frac * static_cast<double>(rest.size()));
    fold.val.assign(rest.begin(), rest.begin() + val_count);
    fold.train.assign(rest.begin() + val_count, rest.end());
    std::sort(fold.test.begin(), fold.test.end());
    std::sort(fold.val.begin(), fold.val.end());
    std::sort(fold.train.begin(), fold.train.end());
    if (fold.train.empty())
      plan.warnings.push_back("fold " + std::to_string(f) + ": degenerate split, train set is empty");
  }
  return plan;
}

namespace {

constexpr const char* kBaseColumns[] = {"participant_id", "assessment", "age",        "sex",
                                        "sbp",            "dbp",        "antihypertensive_med",
                                        "smoker",         "diabetes",   "prior_cvd", "total_chol",
                                        "hdl_chol",       "vd_confidence", "hypertension_label"};

}  // namespace

std::vector<std::string> cohort_csv_header() {
  std::vector<std::string> h(std::begin(kBaseColumns), std::end(kBaseColumns));
  for (Endpoint e : kEndpoints) {
    h.push_back(std::string(to_string(e)) + "_time_days");
    h.push_back(std::string(to_string(e)) + "_event");
  }
  return h;
}

std::string cohort_to_csv(const std::vector<AssessmentRecord>& records,
                          const std::vector<OutcomeRecord>& outcomes) {
  if (records.size() != outcomes.size())
    throw InvalidInputError("records and outcomes must align one-to-one");
  textio::CsvBuilder csv(cohort_csv_header());
  auto fmt_optional = [](double v) { return std::isnan(v) ? std::string() : textio::fmt(v); };
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const auto& o = outcomes[i];
    if (r.participant_id != o.participant_id)
      throw InvalidInputError("record/outcome participant mismatch at index " + std::to_string(i));
    std::vector<std::string> row = {r.participant_id,
                                    to_string(r.assessment),
                                    textio::fmt(static_cast<long>(r.age)),
                                    to_string(r.sex),
                                    textio::fmt(r.sbp),
                                    textio::fmt(r.dbp),
                                    r.antihypertensive_med ? "1" : "0",
                                    r.smoker ? "1" : "0",
                                    r.diabetes ? "1" : "0",
                                    r.prior_cvd ? "1" : "0",
                                    fmt_optional(r.total_chol),
                                    fmt_optional(r.hdl_chol),
                                    textio::fmt(r.vd_confidence),
                                    r.hypertension_label ? "1" : "0"};
    for (Endpoint e : kEndpoints) {
      row.push_back(textio::fmt(o.of(e).time_days));
      row.push_back(o.of(e).event ? "1" : "0");
    }
    csv.add_row(std::move(row));
  }
  return csv.str();
}

LoadedCohort load_cohort(const std::filesystem::path& path) {
  textio::CsvTable table = textio::read_csv(path);
  const auto expected = cohort_csv_header();
  if (table.header != expected) {
    std::string msg = "cohort CSV header mismatch; expected: ";
    for (std::size_t i = 0; i < expected.size(); ++i) msg += (i ? "," : "") + expected[i];
    throw InvalidInputError(msg);
  }

  LoadedCohort result;
  long row = 0;
  for (const auto& fields : table.rows) {
    ++row;
    auto field = [&](const char* name) -> const std::string& {
      int c = table.column(name);
      return fields[static_cast<std::size_t>(c)];
    };

    AssessmentRecord rec;
    rec.participant_id = field("participant_id");
    if (rec.participant_id.empty()) throw ParseError("empty participant_id", row, "participant_id");
    rec.assessment = assessment_from_string(field("assessment"), row);
    rec.age = static_cast<int>(textio::parse_long(field("age"), row, "age"));
    rec.sex = sex_from_string(field("sex"), row);
    rec.sbp = textio::parse_double(field("sbp"), row, "sbp");
    rec.dbp = textio::parse_double(field("dbp"), row, "dbp");
    rec.antihypertensive_med = textio::parse_bool01(field("antihypertensive_med"), row, "antihypertensive_med");
    rec.smoker = textio::parse_bool01(field("smoker"), row, "smoker");
    rec.diabetes = textio::parse_bool01(field("diabetes"), row, "diabetes");
    rec.prior_cvd = textio::parse_bool01(field("prior_cvd"), row, "prior_cvd");
    // Cholesterol is the only pair allowed to be missing (empty field).
    rec.total_chol = field("total_chol").empty()
                         ? std::nan("")
                         : textio::parse_double(field("total_chol"), row, "total_chol");
    rec.hdl_chol =
        field("hdl_chol").empty() ? std::nan("") : textio::parse_double(field("hdl_chol"), row, "hdl_chol");
    rec.vd_confidence = textio::parse_double(field("vd_confidence"), row, "vd_confidence");
    bool stored_label = textio::parse_bool01(field("hypertension_label"), row, "hypertension_label");

    if (rec.age < 35)
      throw ValidationError("age below 35 at row " + std::to_string(row) + " (participant " +
                            rec.participant_id + ")");
    if (!(rec.vd_confidence >= 0.0 && rec.vd_confidence <= 1.0))
      throw ValidationError("vd_confidence outside [0,1] at row " + std::to_string(row) + " (participant " +
                            rec.participant_id + ")");
    if (!(rec.sbp > rec.dbp && rec.dbp > 0.0))
      throw ValidationError("blood pressures must satisfy sbp > dbp > 0 at row " + std::to_string(row) +
                            " (participant " + rec.participant_id + ")");

    rec.hypertension_label = classify_hypertension(rec.sbp, rec.dbp, rec.antihypertensive_med);
    if (rec.hypertension_label != stored_label)
      result.label_mismatches.push_back(
          {row, rec.participant_id,
           std::string("stored hypertension_label ") + (stored_label ? "1" : "0") + " != recomputed " +
               (rec.hypertension_label ? "1" : "0")});

    OutcomeRecord out;
    out.participant_id = rec.participant_id;
    for (Endpoint e : kEndpoints) {
      std::string tcol = std::string(to_string(e)) + "_time_days";
      std::string ecol = std::string(to_string(e)) + "_event";
      EndpointOutcome& eo = out.of(e);
      eo.time_days = textio::parse_long(field(tcol.c_str()), row, tcol);
      eo.event = textio::parse_bool01(field(ecol.c_str()), row, ecol);
      if (eo.time_days < 0)
        throw ValidationError("negative " + tcol + " at row " + std::to_string(row) + " (participant " +
                              rec.participant_id + ")");
    }

    result.records.push_back(std::move(rec));
    result.outcomes.push_back(std::move(out));
  }
  return result;
}

}  // namespace vdrisk::cohort
