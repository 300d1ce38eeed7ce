#include "vdrisk/cli.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vdrisk/aggregation.hpp"
#include "vdrisk/cohort.hpp"
#include "vdrisk/discrimination.hpp"
#include "vdrisk/errors.hpp"
#include "vdrisk/score2.hpp"
#include "vdrisk/survival.hpp"
#include "vdrisk/svg.hpp"
#include "vdrisk/textio.hpp"
#include "vdrisk/xai.hpp"

namespace vdrisk::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string default_out_dir() {
  const char* env = std::getenv("VDRISK_OUT");
  return (env != nullptr && *env != '\0') ? std::string(env) : std::string(".");
}

// Writes artifacts plus a <name>.meta.json sidecar recording the run
// configuration. On failure the caller discards everything written so far so
// no partial outputs are left behind.
class ArtifactWriter {
 public:
  ArtifactWriter(fs::path dir, ordered_json config)
      : dir_(std::move(dir)), config_(std::move(config)) {}

  void write(const std::string& name, std::string_view content) {
    const fs::path path = dir_ / name;
    textio::write_file(path, content);
    written_.push_back(path);

    ordered_json meta;
    meta["artifact"] = name;
    meta["tool"] = "vdrisk";
    meta["version"] = kVersion;
    meta["config"] = config_;
    const fs::path meta_path = dir_ / (name + ".meta.json");
    textio::write_file(meta_path, meta.dump(2) + "\n");
    written_.push_back(meta_path);
  }

  void discard() noexcept {
    for (const auto& path : written_) {
      std::error_code ec;
      fs::remove(path, ec);
    }
    written_.clear();
  }

  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  ordered_json config_;
  std::vector<fs::path> written_;
};

template <typename Fn>
void with_artifacts(ArtifactWriter& writer, Fn&& fn) {
  try {
    fn();
  } catch (...) {
    writer.discard();
    throw;
  }
}

std::vector<std::string> split_list(const std::string& text, char sep = ',') {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) {
    // Trim surrounding whitespace.
    const auto begin = item.find_first_not_of(" \t");
    const auto end = item.find_last_not_of(" \t");
    if (begin == std::string::npos) continue;
    out.push_back(item.substr(begin, end - begin + 1));
  }
  return out;
}

std::vector<std::string> split_ws(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string token;
  while (in >> token) out.push_back(token);
  return out;
}

void warn_label_mismatches(const cohort::LoadedCohort& loaded) {
  if (loaded.label_mismatches.empty()) return;
  std::cerr << "warning: " << loaded.label_mismatches.size()
            << " stored hypertension labels disagree with the threshold rule"
            << " (first: " << loaded.label_mismatches.front().participant_id
            << ")\n";
}

// ---------------------------------------------------------------------------
// Synthetic planted effects, in raw covariate units. The "intercept" key
// shifts an endpoint's baseline hazard without touching any covariate.
// ---------------------------------------------------------------------------

std::map<cohort::Endpoint, std::map<std::string, double>> default_planted() {
  using cohort::Endpoint;
  std::map<Endpoint, std::map<std::string, double>> planted;
  planted[Endpoint::all_cause_death] = {
      {"intercept", -1.6},   {"age", 0.06},        {"vd_confidence", 2.0},
      {"sbp", 0.012},        {"smoker", 0.35},     {"total_chol", 0.10},
      {"hdl_chol", -0.30},
  };
  planted[Endpoint::cardiac_death] = {
      {"intercept", -1.8},   {"age", 0.05},        {"vd_confidence", 3.5},
      {"sbp", 0.012},        {"smoker", 0.4},      {"diabetes", 0.5},
  };
  planted[Endpoint::mi] = {
      {"intercept", -3.4},   {"age", 0.05},        {"vd_confidence", 1.2},
      {"sbp", 0.015},        {"smoker", 0.6},      {"diabetes", 0.7},
  };
  planted[Endpoint::stroke] = {
      {"intercept", -3.6},   {"age", 0.06},        {"vd_confidence", 1.0},
      {"sbp", 0.02},         {"antihypertensive_med", 0.3},
  };
  return planted;
}

// Deterministic per-clip confidences whose mean-of-video-means equals the
// participant's latent confidence up to rounding: symmetric offsets around the
// latent value, bounded so every clip stays inside [0, 1].
std::vector<aggregation::ParticipantClips> synthesize_predictions(
    const std::vector<cohort::AssessmentRecord>& records, int n_videos,
    int n_clips) {
  if (n_videos < 1 || n_clips < 1) {
    throw InvalidInputError("videos and clips per participant must be >= 1");
  }
  std::vector<aggregation::ParticipantClips> out;
  out.reserve(records.size());
  for (const auto& rec : records) {
    const double v = rec.vd_confidence;
    const double margin = std::min({v, 1.0 - v, 0.2});
    const double video_half = (n_videos - 1) / 2.0;
    const double clip_half = (n_clips - 1) / 2.0;
    const double video_amp = video_half > 0 ? (margin / 2.0) / video_half : 0.0;
    const double clip_amp = clip_half > 0 ? (margin / 2.0) / clip_half : 0.0;

    aggregation::ParticipantClips pc;
    pc.participant_id = rec.participant_id;
    for (int j = 0; j < n_videos; ++j) {
      aggregation::VideoClips vc;
      vc.video_id = rec.participant_id + "_V" + std::to_string(j + 1);
      for (int k = 0; k < n_clips; ++k) {
        double conf = v + video_amp * (j - video_half) + clip_amp * (k - clip_half);
        conf = std::clamp(conf, 0.0, 1.0);
        vc.clip_confidences.push_back(conf);
      }
      pc.videos.push_back(std::move(vc));
    }
    out.push_back(std::move(pc));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shared modeling helpers
// ---------------------------------------------------------------------------

struct ScoreRow {
  bool scored = false;
  std::string reason;  // empty when scored
  score2::RiskEstimate estimate{};
};

ScoreRow score_participant(const cohort::AssessmentRecord& rec,
                           const score2::Score2Coefficients& coeffs,
                           double threshold) {
  ScoreRow row;
  if (!cohort::score2_eligible(rec.age, rec.prior_cvd, rec.diabetes)) {
    row.reason = "ineligible";
    return row;
  }
  for (const auto& term : coeffs.terms.at(rec.sex)) {
    const double value = cohort::record_covariate(rec, term.variable);
    if (std::isnan(value)) {
      row.reason = "missing " + term.variable;
      return row;
    }
  }
  const double lp = score2::linear_predictor(rec, coeffs);
  row.estimate = score2::ten_year_risk(lp, coeffs, threshold);
  row.scored = true;
  return row;
}

std::vector<ScoreRow> score_cohort(
    const std::vector<cohort::AssessmentRecord>& records,
    const score2::Score2Coefficients& coeffs, double threshold) {
  std::vector<ScoreRow> rows;
  rows.reserve(records.size());
  for (const auto& rec : records) {
    rows.push_back(score_participant(rec, coeffs, threshold));
  }
  return rows;
}

std::string score_rows_to_csv(
    const std::vector<cohort::AssessmentRecord>& records,
    const std::vector<ScoreRow>& rows) {
  textio::CsvBuilder csv({"participant_id", "scored", "reason",
                          "linear_predictor", "uncalibrated_risk",
                          "calibrated_risk", "stratum"});
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& row = rows[i];
    if (row.scored) {
      csv.add_row({records[i].participant_id, "1", "",
                   textio::fmt(row.estimate.linear_predictor),
                   textio::fmt(row.estimate.uncalibrated_risk),
                   textio::fmt(row.estimate.calibrated_risk),
                   score2::to_string(row.estimate.stratum)});
    } else {
      csv.add_row({records[i].participant_id, "0", row.reason, "", "", "", ""});
    }
  }
  return csv.str();
}

std::vector<survival::SurvivalSample> samples_for(
    const std::vector<cohort::OutcomeRecord>& outcomes,
    const std::vector<std::size_t>& rows, cohort::Endpoint endpoint) {
  std::vector<survival::SurvivalSample> samples;
  samples.reserve(rows.size());
  for (const std::size_t r : rows) {
    const auto& eo = outcomes[r].of(endpoint);
    samples.push_back({static_cast<double>(eo.time_days), eo.event});
  }
  return samples;
}

bool uses_score2(const std::vector<std::string>& covariates) {
  return std::find(covariates.begin(), covariates.end(), "score2_risk") !=
         covariates.end();
}

void validate_covariate_names(const std::vector<std::string>& names) {
  if (names.empty()) {
    throw InvalidInputError("at least one covariate is required");
  }
  const auto known = cohort::known_covariates();
  for (const auto& name : names) {
    if (name == "score2_risk") continue;
    if (std::find(known.begin(), known.end(), name) == known.end()) {
      throw InvalidInputError("unknown covariate '" + name + "'");
    }
  }
  for (std::size_t i = 0; i < names.size(); ++i) {
    for (std::size_t j = i + 1; j < names.size(); ++j) {
      if (names[i] == names[j]) {
        throw InvalidInputError("duplicate covariate '" + names[i] + "'");
      }
    }
  }
}

// Builds the raw (unnormalized) design matrix for the given rows. score2_risk
// columns are taken from `score_rows` (rows must already be restricted to
// scorable participants when that covariate is requested).
Eigen::MatrixXd covariate_matrix(
    const std::vector<cohort::AssessmentRecord>& records,
    const std::vector<std::size_t>& rows,
    const std::vector<std::string>& names,
    const std::vector<ScoreRow>* score_rows) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(names.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t r = rows[i];
    for (std::size_t j = 0; j < names.size(); ++j) {
      double value;
      if (names[j] == "score2_risk") {
        if (score_rows == nullptr || !(*score_rows)[r].scored) {
          throw ValidationError(
              "score2_risk requested for a participant without a risk score (" +
              records[r].participant_id + ")");
        }
        value = (*score_rows)[r].estimate.calibrated_risk;
      } else {
        value = cohort::record_covariate(records[r], names[j]);
        if (std::isnan(value)) {
          throw ValidationError("missing value for covariate '" + names[j] +
                                "' (participant " +
                                records[r].participant_id + ")");
        }
      }
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = value;
    }
  }
  return m;
}

struct FittedCox {
  survival::CoxModel model;
  std::vector<double> risks;  // normalized-scale linear predictor per row
};

FittedCox fit_cox_model(const std::vector<cohort::AssessmentRecord>& records,
                        const std::vector<cohort::OutcomeRecord>& outcomes,
                        const std::vector<std::size_t>& rows,
                        cohort::Endpoint endpoint,
                        const std::vector<std::string>& covariates,
                        const std::vector<ScoreRow>* score_rows,
                        survival::TiesMethod ties) {
  validate_covariate_names(covariates);
  if (rows.empty()) {
    throw ValidationError("no participants left after row selection");
  }
  const Eigen::MatrixXd raw =
      covariate_matrix(records, rows, covariates, score_rows);
  auto normalized = survival::normalize_covariates(raw, covariates);
  const auto samples = samples_for(outcomes, rows, endpoint);

  survival::CoxFitOptions options;
  options.ties = ties;
  FittedCox fitted;
  fitted.model = survival::cox_fit(normalized, samples, options);

  const Eigen::VectorXd lp = normalized.values * fitted.model.coefficients;
  fitted.risks.assign(lp.data(), lp.data() + lp.size());
  return fitted;
}

// Row-selection helpers -----------------------------------------------------

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  return rows;
}

std::vector<std::size_t> select_rows(
    const std::vector<cohort::AssessmentRecord>& records, bool eligible_only,
    bool need_score, const std::vector<ScoreRow>* score_rows) {
  std::vector<std::size_t> rows;
  rows.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    if (eligible_only &&
        !cohort::score2_eligible(rec.age, rec.prior_cvd, rec.diabetes)) {
      continue;
    }
    if (need_score && (score_rows == nullptr || !(*score_rows)[i].scored)) {
      continue;
    }
    rows.push_back(i);
  }
  return rows;
}

score2::Score2Coefficients load_coefficients(const std::string& path) {
  if (path.empty()) return score2::demo_coefficients();
  return score2::load_score2_config(path);
}

// 5-year style binary labels: event observed within the horizon.
std::vector<bool> labels_within_horizon(
    const std::vector<cohort::OutcomeRecord>& outcomes,
    const std::vector<std::size_t>& rows, cohort::Endpoint endpoint,
    long horizon_days) {
  std::vector<bool> labels;
  labels.reserve(rows.size());
  for (const std::size_t r : rows) {
    const auto& eo = outcomes[r].of(endpoint);
    labels.push_back(eo.event && eo.time_days <= horizon_days);
  }
  return labels;
}

// Fits a survival model on full follow-up, then a univariate logistic
// classifier mapping its linear predictor to the within-horizon label.
struct HorizonClassifier {
  FittedCox cox;
  discrimination::LogisticFit logistic;
  std::vector<double> probabilities;
  std::vector<bool> labels;
};

HorizonClassifier horizon_classifier(
    const std::vector<cohort::AssessmentRecord>& records,
    const std::vector<cohort::OutcomeRecord>& outcomes,
    const std::vector<std::size_t>& rows, cohort::Endpoint endpoint,
    long horizon_days, const std::vector<std::string>& covariates,
    const std::vector<ScoreRow>* score_rows, survival::TiesMethod ties) {
  HorizonClassifier hc;
  hc.cox = fit_cox_model(records, outcomes, rows, endpoint, covariates,
                         score_rows, ties);
  hc.labels = labels_within_horizon(outcomes, rows, endpoint, horizon_days);
  std::size_t n_pos = 0;
  for (const bool b : hc.labels) n_pos += b ? 1 : 0;
  if (n_pos == 0 || n_pos == hc.labels.size()) {
    throw ValidationError(
        "within-horizon labels are single-class; cannot fit a classifier");
  }
  hc.logistic = discrimination::fit_hazard_classifier(hc.cox.risks, hc.labels);
  hc.probabilities.reserve(hc.cox.risks.size());
  for (const double r : hc.cox.risks) {
    hc.probabilities.push_back(
        discrimination::predict_probability(hc.logistic, r));
  }
  return hc;
}

ordered_json logistic_to_json(const discrimination::LogisticFit& fit) {
  ordered_json j;
  j["intercept"] = fit.intercept;
  j["slope"] = fit.slope;
  j["se_intercept"] = fit.se_intercept;
  j["se_slope"] = fit.se_slope;
  j["iterations"] = fit.iterations;
  j["converged"] = fit.converged;
  j["separation"] = fit.separation;
  return j;
}

ordered_json nri_to_json(const discrimination::ReclassResult& r) {
  ordered_json j;
  j["nri"] = r.nri;
  j["nri_events"] = r.nri_events;
  j["nri_nonevents"] = r.nri_nonevents;
  j["idi"] = r.idi;
  j["mean_new_events"] = r.mean_new_events;
  j["mean_old_events"] = r.mean_old_events;
  j["mean_new_nonevents"] = r.mean_new_nonevents;
  j["mean_old_nonevents"] = r.mean_old_nonevents;
  return j;
}

ordered_json comparison_to_json(const survival::CIndexComparison& cmp) {
  ordered_json j;
  j["c_a"] = cmp.c_a;
  j["c_b"] = cmp.c_b;
  j["delta"] = cmp.delta;
  j["variance"] = cmp.variance;
  j["z"] = cmp.z;
  j["p_value"] = cmp.p_value;
  return j;
}

// ---------------------------------------------------------------------------
// Subcommand option structs
// ---------------------------------------------------------------------------

struct SimulateOpts {
  long n = 1000;
  unsigned long long seed = 0;
  long horizon_days = 5479;
  double baseline_hazard = 1e-4;
  int videos = 3;
  int clips = 5;
  std::string out = default_out_dir();
};

struct SplitOpts {
  long n = 0;
  int k = 10;
  double val_frac = 0.2;
  unsigned long long seed = 0;
  std::string out = default_out_dir();
};

struct Score2Opts {
  std::string cohort_path;
  std::string config_path;
  double threshold = 0.08;
  std::string out = default_out_dir();
};

struct KmOpts {
  std::string cohort_path;
  std::string endpoint = "all_cause_death";
  std::string strata = "none";
  double threshold = -1.0;  // resolved per strata mode
  std::string score2_config;
  double score2_threshold = 0.08;
  bool no_svg = false;
  std::string out = default_out_dir();
};

struct CoxOpts {
  std::string cohort_path;
  std::string endpoint = "all_cause_death";
  std::string covariates;
  std::string ties = "efron";
  bool eligible_only = false;
  std::string score2_config;
  std::string out = default_out_dir();
};

struct CompareCOpts {
  std::string cohort_path;
  std::string endpoint = "all_cause_death";
  std::string covariates_a;
  std::string covariates_b;
  std::string ties = "efron";
  bool eligible_only = false;
  std::string score2_config;
  long permutations = 0;
  unsigned long long seed = 0;
  std::string out = default_out_dir();
};

struct RocOpts {
  std::string cohort_path;
  std::string endpoint = "cardiac_death";
  long horizon_days = 1826;
  std::string covariates;
  std::string score2_config;
  bool eligible_only = false;
  std::string name = "model";
  bool no_svg = false;
  std::string out = default_out_dir();
};

struct NriOpts {
  std::string cohort_path;
  std::string endpoint = "cardiac_death";
  long horizon_days = 1826;
  std::string covariates_old;
  std::string covariates_new;
  std::string score2_config;
  bool eligible_only = false;
  std::string out = default_out_dir();
};

struct GroupCompareOpts {
  std::string cohort_path;
  double threshold = 0.67;
  std::string out = default_out_dir();
};

struct AggregateOpts {
  std::string predictions_path;
  double threshold = 0.5;
  std::string cohort_path;
  std::string out = default_out_dir();
};

struct OccludeOpts {
  std::vector<std::string> videos;
  std::string scorer_cmd;
  std::string weights_path;
  double bias = 0.0;
  std::string variant = "masked_sequence";
  int patch_h = 16;
  int patch_w = 16;
  int stride_h = 16;
  int stride_w = 16;
  int window = 2;
  double fill = 0.0;
  int representative = 0;
  long timeout_ms = 10000;
  double top_frac = 0.05;
  std::string out = default_out_dir();
};

struct ReplicaOpts {
  long n = 5000;
  unsigned long long seed = 7;
  long horizon_days = 5479;
  int videos = 3;
  int clips = 5;
  double vd_classify = 0.5;
  double vd_stratify = 0.67;
  double score2_threshold = 0.08;
  std::string out = default_out_dir();
};

// ---------------------------------------------------------------------------
// Subcommand implementations
// ---------------------------------------------------------------------------

void cmd_simulate(const SimulateOpts& o) {
  cohort::SyntheticCohortConfig cfg;
  cfg.n = o.n;
  cfg.seed = o.seed;
  cfg.censoring_horizon_days = o.horizon_days;
  cfg.baseline_hazard_per_year = o.baseline_hazard;
  cfg.planted_log_hazard = default_planted();

  ordered_json config;
  config["command"] = "simulate";
  config["n"] = o.n;
  config["seed"] = o.seed;
  config["horizon_days"] = o.horizon_days;
  config["baseline_hazard_per_year"] = o.baseline_hazard;
  config["videos"] = o.videos;
  config["clips"] = o.clips;

  ArtifactWriter writer(o.out, config);
  with_artifacts(writer, [&] {
    const auto [records, outcomes] = cohort::generate_synthetic_cohort(cfg);
    const auto preds = synthesize_predictions(records, o.videos, o.clips);
    writer.write("cohort.csv", cohort::cohort_to_csv(records, outcomes));
    writer.write("predictions.csv", aggregation::predictions_to_csv(preds));
    std::cerr << "simulated " << records.size() << " participants -> "
              << writer.dir().string() << "\n";
  });
}

void cmd_split(const SplitOpts& o) {
  const auto plan = cohort::make_splits(o.n, o.k, o.val_frac, o.seed);
  for (const auto& w : plan.warnings) std::cerr << "warning: " << w << "\n";

  ordered_json config;
  config["command"] = "split";
  config["n"] = o.n;
  config["k"] = o.k;
  config["val_frac"] = o.val_frac;
  config["seed"] = o.seed;

  ArtifactWriter writer(o.out, config);
  with_artifacts(writer, [&] {
    textio::CsvBuilder csv({"fold", "index", "role"});
    for (std::size_t f = 0; f < plan.folds.size(); ++f) {
      const auto& fold = plan.folds[f];
      const std::string fold_id = textio::fmt(static_cast<long>(f));
      for (const long idx : fold.train) {
        csv.add_row({fold_id, textio::fmt(idx), "train"});
      }
      for (const long idx : fold.val) {
        csv.add_row({fold_id, textio::fmt(idx), "val"});
      }
      for (const long idx : fold.test) {
        csv.add_row({fold_id, textio::fmt(idx), "test"});
      }
    }
    writer.write("splits.csv", csv.str());
  });
}

void cmd_score2(const Score2Opts& o) {
  const auto loaded = cohort::load_cohort(o.cohort_path);
  warn_label_mismatches(loaded);
  const auto coeffs = load_coefficients(o.config_path);
  const auto rows = score_cohort(loaded.records, coeffs, o.threshold);

  ordered_json config;
  config["command"] = "score2";
  config["cohort"] = o.cohort_path;
  config["coefficients"] = o.config_path.empty() ? "builtin-demo" : o.config_path;
  config["threshold"] = o.threshold;

  ArtifactWriter writer(o.out, config);
  with_artifacts(writer, [&] {
    writer.write("score2.csv", score_rows_to_csv(loaded.records, rows));
    std::size_t n_scored = 0;
    for (const auto& r : rows) n_scored += r.scored ? 1 : 0;
    std::cerr << "scored " << n_scored << "/" << rows.size()
              << " participants\n";
  });
}

void cmd_km(const KmOpts& o) {
  const auto loaded = cohort::load_cohort(o.cohort_path);
  warn_label_mismatches(loaded);
  const auto endpoint = cohort::endpoint_from_string(o.endpoint);

  // Named strata -> participant row lists.
  std::vector<std::pair<std::string, std::vector<std::size_t>>> strata;
  std::size_t n_excluded = 0;
  if (o.strata == "none") {
    strata.emplace_back("all", all_rows(loaded.records.size()));
  } else if (o.strata == "vd") {
    const double thr = o.threshold >= 0 ? o.threshold : 0.67;
    std::vector<std::size_t> high, low;
    for (std::size_t i = 0; i < loaded.records.size(); ++i) {
      (loaded.records[i].vd_confidence >= thr ? high : low).push_back(i);
    }
    strata.emplace_back("vd_high", std::move(high));
    strata.emplace_back("vd_low", std::move(low));
  } else if (o.strata == "hypertension") {
    std::vector<std::size_t> yes, no;
    for (std::size_t i = 0; i < loaded.records.size(); ++i) {
      (loaded.records[i].hypertension_label ? yes : no).push_back(i);
    }
    strata.emplace_back("hypertensive", std::move(yes));
    strata.emplace_back("normotensive", std::move(no));
  } else if (o.strata == "score2") {
    const double thr = o.threshold >= 0 ? o.threshold : o.score2_threshold;
    const auto coeffs = load_coefficients(o.score2_config);
    const auto score_rows = score_cohort(loaded.records, coeffs, thr);
    std::vector<std::size_t> high, low;
    for (std::size_t i = 0; i < loaded.records.size(); ++i) {
      if (!score_rows[i].scored) {
        ++n_excluded;
        continue;
      }
      (score_rows[i].estimate.calibrated_risk >= thr ? high : low).push_back(i);
    }
    strata.emplace_back("score2_high", std::move(high));
    strata.emplace_back("score2_low", std::move(low));
  } else {
    throw InvalidInputError(
        "unknown strata '" + o.strata +
        "' (expected none, vd, hypertension, or score2)");
  }

  ordered_json config;
  config["command"] = "km";
  config["cohort"] = o.cohort_path;
  config["endpoint"] = o.endpoint;
  config["strata"] = o.strata;
  if (o.threshold >= 0) config["threshold"] = o.threshold;

  ArtifactWriter writer(o.out, config);
  with_artifacts(writer, [&] {
    std::vector<survival::KmCurve> curves;
    std::vector<std::string> labels;
    std::vector<std::size_t> group_index;  // json entry behind each curve
    double max_days = 1.0;
    ordered_json summary;
    summary["endpoint"] = o.endpoint;
    summary["strata"] = o.strata;
    summary["excluded"] = n_excluded;
    ordered_json groups = ordered_json::array();
    for (const auto& [name, rows] : strata) {
      if (rows.empty()) {
        ordered_json g;
        g["name"] = name;
        g["n"] = 0;
        groups.push_back(g);
        std::cerr << "warning: stratum '" << name << "' is empty; skipped\n";
        continue;
      }
      const auto samples = samples_for(loaded.outcomes, rows, endpoint);
      auto curve = survival::km_fit(samples);
      for (const auto& s : samples) max_days = std::max(max_days, s.time);
      writer.write("km_" + name + ".csv", survival::km_to_csv(curve));
      ordered_json g;
      g["name"] = name;
      g["n"] = rows.size();
      std::size_t n_events = 0;
      for (const auto& s : samples) n_events += s.event ? 1 : 0;
      g["n_events"] = n_events;
      group_index.push_back(groups.size());
      groups.push_back(g);
      labels.push_back(name);
      curves.push_back(std::move(curve));
    }
    // Survival at the common horizon, once every curve is known.
    for (std::size_t i = 0; i < curves.size(); ++i) {
      groups[group_index[i]]["survival_at_max"] = curves[i].survival_at(max_days);
    }
    summary["groups"] = groups;
    writer.write("km_summary.json", summary.dump(2) + "\n");
    if (!o.no_svg && !curves.empty()) {
      std::vector<svg::LabeledKmCurve> plot;
      for (std::size_t i = 0; i < curves.size(); ++i) {
        plot.push_back({labels[i], &curves[i]});
      }
      writer.write("km.svg", svg::km_plot(plot, max_days, "Survival"));
    }
  });
}

void cmd_cox(const CoxOpts& o) {
  const auto loaded = cohort::load_cohort(o.cohort_path);
  warn_label_mismatches(loaded);
  const auto endpoint = cohort::endpoint_from_string(o.endpoint);
  const auto covariates = split_list(o.covariates);
  const auto ties = survival::ties_method_from_string(o.ties);

  std::vector<ScoreRow> score_rows;
  const bool need_score = uses_score2(covariates);
  if (need_score) {
    const auto coeffs = load_coefficients(o.score2_config);
    score_rows = score_cohort(loaded.records, coeffs, 0.08);
  }
  const auto rows = select_rows(loaded.records, o.eligible_only, need_score,
                                need_score ? &score_rows : nullptr);
  if (rows.size() < loaded.records.size()) {
    std::cerr << "note: " << loaded.records.size() - rows.size()
              << " participants excluded by eligibility/scoring filters\n";
  }

  ordered_json config;
  config["command"] = "cox";
  config["cohort"] = o.cohort_path;
  config["endpoint"] = o.endpoint;
  config["covariates"] = covariates;
  config["ties"] = o.ties;
  config["eligible_only"] = o.eligible_only;

  ArtifactWriter writer(o.out, config);
  with_artifacts(writer, [&] {
    const auto fitted =
        fit_cox_model(loaded.records, loaded.outcomes, rows, endpoint,
                      covariates, need_score ? &score_rows : nullptr, ties);
    writer.write("cox.json", survival::cox_to_json(fitted.model));
    if (!fitted.model.converged) {
      std::cerr << "warning: " << fitted.model.diagnosis << "\n";
    }
  });
}

void cmd_compare_c(const CompareCOpts& o) {
  const auto loaded = cohort::load_cohort(o.cohort_path);
  warn_label_mismatches(loaded);
  const auto endpoint = cohort::endpoint_from_string(o.endpoint);
  const auto cov_a = split_list(o.covariates_a);
  const auto cov_b = split_list(o.covariates_b);
  const auto ties = survival::ties_method_from_string(o.ties);

  std::vector<ScoreRow> score_rows;
  const bool need_score = uses_score2(cov_a) || uses_score2(cov_b);
  if (need_score) {
    const auto coeffs = load_coefficients(o.score2_config);
    score_rows = score_cohort(loaded.records, coeffs, 0.08);
  }
  // Both models are fit and compared on the identical participant set.
  const auto rows = select_rows(loaded.records, o.eligible_only, need_score,
                                need_score ? &score_rows : nullptr);

  ordered_json config;
  config["command"] = "compare-c";
  config["cohort"] = o.cohort_path;
  config["endpoint"] = o.endpoint;
  config["covariates_a"] = cov_a;
  config["covariates_b"] = cov_b;
  config["ties"] = o.ties;
  config["eligible_only"] = o.eligible_only;
  config["permutations"] = o.permutations;
  if (o.permutations > 0) config["seed"] = o.seed;

  ArtifactWriter writer(o.out, config);
  with_artifacts(writer, [&] {
    const auto fit_a =
        fit_cox_model(loaded.records, loaded.outcomes, rows, endpoint, cov_a,
                      need_score ? &score_rows : nullptr, ties);
    const auto fit_b =
        fit_cox_model(loaded.records, loaded.outcomes, rows, endpoint, cov_b,
                      need_score ? &score_rows : nullptr, ties);
    const auto samples = samples_for(loaded.outcomes, rows, endpoint);
    const auto cmp =
        survival::c_index_diff_test(fit_a.risks, fit_b.risks, samples);

    ordered_json out;
    out["endpoint"] = o.endpoint;
    out["n"] = rows.size();
    out["covariates_a"] = cov_a;
    out["covariates_b"] = cov_b;
    out["comparison"] = comparison_to_json(cmp);
    if (o.permutations > 0) {
      out["permutation_p"] = survival::c_index_diff_permutation(
          fit_a.risks, fit_b.risks, samples, static_cast<int>(o.permutations),
          o.seed);
      out["permutations"] = o.permutations;
    }
    writer.write("compare_c.json", out.dump(2) + "\n");
  });
}

void cmd_roc(const RocOpts& o) {
  const auto loaded = cohort::load_cohort(o.cohort_path);
  warn_label_mismatches(loaded);
  const auto endpoint = cohort::endpoint_from_string(o.endpoint);
  const auto covariates = split_list(o.covariates);

  std::vector<ScoreRow> score_rows;
  const bool need_score = uses_score2(covariates);
  if (need_score) {
    const auto coeffs = load_coefficients(o.score2_config);
    score_rows = score_cohort(loaded.records, coeffs, 0.08);
  }
  const auto rows = select_rows(loaded.records, o.eligible_only, need_score,
                                need_score ? &score_rows : nullptr);

  ordered_json config;
  config["command"] = "roc";
  config["cohort"] = o.cohort_path;
  config["endpoint"] = o.endpoint;
  config["horizon_days"] = o.horizon_days;
  config["covariates"] = covariates;
  config["name"] = o.name;
  config["eligible_only"] = o.eligible_only;

  ArtifactWriter writer(o.out, config);
  with_artifacts(writer, [&] {
    const auto hc = horizon_classifier(
        loaded.records, loaded.outcomes, rows, endpoint, o.horizon_days,
        covariates, need_score ? &score_rows : nullptr,
        survival::TiesMethod::efron);
    const auto curve = discrimination::roc(hc.probabilities, hc.labels);
    writer.write("roc_" + o.name + ".csv", discrimination::roc_to_csv(curve));

    ordered_json summary;
    summary["name"] = o.name;
    summary["endpoint"] = o.endpoint;
    summary["horizon_days"] = o.horizon_days;
    summary["n"] = rows.size();
    std::size_t n_pos = 0;
    for (const bool b : hc.labels) n_pos += b ? 1 : 0;
    summary["n_events_within_horizon"] = n_pos;
    summary["auc"] = curve.auc;
    summary["classifier"] = logistic_to_json(hc.logistic);
    writer.write("roc_summary.json", summary.dump(2) + "\n");

    if (!o.no_svg) {
      std::vector<svg::LabeledRocCurve> plot{{o.name, &curve}};
      writer.write("roc.svg", svg::roc_plot(plot, "ROC"));
    }
  });
}

void cmd_nri(const NriOpts& o) {
  const auto loaded = cohort::load_cohort(o.cohort_path);
  warn_label_mismatches(loaded);
  const auto endpoint = cohort::endpoint_from_string(o.endpoint);
  const auto cov_old = split_list(o.covariates_old);
  const auto cov_new = split_list(o.covariates_new);

  std::vector<ScoreRow> score_rows;
  const bool need_score = uses_score2(cov_old) || uses_score2(cov_new);
  if (need_score) {
    const auto coeffs = load_coefficients(o.score2_config);
    score_rows = score_cohort(loaded.records, coeffs, 0.08);
  }
  const auto rows = select_rows(loaded.records, o.eligible_only, need_score,
                                need_score ? &score_rows : nullptr);

  ordered_json config;
  config["command"] = "nri";
  config["cohort"] = o.cohort_path;
  config["endpoint"] = o.endpoint;
  config["horizon_days"] = o.horizon_days;
  config["covariates_old"] = cov_old;
  config["covariates_new"] = cov_new;
  config["eligible_only"] = o.eligible_only;

  ArtifactWriter writer(o.out, config);
  with_artifacts(writer, [&] {
    const auto hc_old = horizon_classifier(
        loaded.records, loaded.outcomes, rows, endpoint, o.horizon_days,
        cov_old, need_score ? &score_rows : nullptr,
        survival::TiesMethod::efron);
    const auto hc_new = horizon_classifier(
        loaded.records, loaded.outcomes, rows, endpoint, o.horizon_days,
        cov_new, need_score ? &score_rows : nullptr,
        survival::TiesMethod::efron);
    const auto result = discrimination::nri_idi(
        hc_old.probabilities, hc_new.probabilities, hc_old.labels);
    ordered_json out;
    out["endpoint"] = o.endpoint;
    out["horizon_days"] = o.horizon_days;
    out["n"] = rows.size();
    out["covariates_old"] = cov_old;
    out["covariates_new"] = cov_new;
    out["reclassification"] = nri_to_json(result);
    writer.write("nri.json", out.dump(2) + "\n");
  });
}

void cmd_group_compare(const GroupCompareOpts& o) {
  const auto loaded = cohort::load_cohort(o.cohort_path);
  warn_label_mismatches(loaded);

  ordered_json config;
  config["command"] = "group-compare";
  config["cohort"] = o.cohort_path;
  config["threshold"] = o.threshold;

  ArtifactWriter writer(o.out, config);
  with_artifacts(writer, [&] {
    const auto cmp = discrimination::group_compare(loaded.records, o.threshold);
    writer.write("group_table.csv", discrimination::group_table_csv(cmp));
    writer.write("group_ratios.csv", discrimination::ratio_table_csv(cmp));
  });
}

void cmd_aggregate(const AggregateOpts& o) {
  const auto participants =
      aggregation::load_predictions_csv(o.predictions_path);

  ordered_json config;
  config["command"] = "aggregate";
  config["predictions"] = o.predictions_path;
  config["threshold"] = o.threshold;
  if (!o.cohort_path.empty()) config["cohort"] = o.cohort_path;

  ArtifactWriter writer(o.out, config);
  with_artifacts(writer, [&] {
    std::vector<aggregation::IndividualPrediction> individuals;
    individuals.reserve(participants.size());
    for (const auto& pc : participants) {
      individuals.push_back(
          aggregation::aggregate(pc.participant_id, pc.videos, o.threshold));
    }

    textio::CsvBuilder csv({"participant_id", "confidence", "predicted_high"});
    for (const auto& ind : individuals) {
      csv.add_row({ind.participant_id, textio::fmt(ind.confidence),
                   ind.predicted_high ? "1" : "0"});
    }
    writer.write("aggregated.csv", csv.str());

    if (!o.cohort_path.empty()) {
      const auto loaded = cohort::load_cohort(o.cohort_path);
      warn_label_mismatches(loaded);
      std::map<std::string, std::size_t> by_id;
      for (std::size_t i = 0; i < loaded.records.size(); ++i) {
        by_id[loaded.records[i].participant_id] = i;
      }
      std::vector<double> confidences;
      std::vector<int> ages;
      std::vector<bool> labels;
      std::vector<cohort::Sex> sexes;
      for (const auto& ind : individuals) {
        const auto it = by_id.find(ind.participant_id);
        if (it == by_id.end()) {
          throw ValidationError("prediction participant '" +
                                ind.participant_id + "' not in cohort");
        }
        const auto& rec = loaded.records[it->second];
        confidences.push_back(ind.confidence);
        labels.push_back(rec.hypertension_label);
        ages.push_back(rec.age);
        sexes.push_back(rec.sex);
      }
      const auto report = aggregation::stratified_metrics(
          confidences, labels, ages, sexes, aggregation::default_age_bins(),
          o.threshold);
      writer.write("stratified.csv",
                   aggregation::stratified_report_csv(report));
      writer.write("aggregate_summary.json",
                   aggregation::stratified_report_json(report));
    }
  });
}

void cmd_occlude(const OccludeOpts& o) {
  if (o.videos.empty()) {
    throw InvalidInputError("at least one --video is required");
  }
  const bool use_subprocess = !o.scorer_cmd.empty();
  const bool use_linear = !o.weights_path.empty();
  if (use_subprocess == use_linear) {
    throw InvalidInputError(
        "exactly one of --scorer-cmd or --linear-weights is required");
  }

  xai::MaskSpec spec;
  spec.variant = xai::occlusion_variant_from_string(o.variant);
  spec.patch_h = o.patch_h;
  spec.patch_w = o.patch_w;
  spec.stride_h = o.stride_h;
  spec.stride_w = o.stride_w;
  spec.window = o.window;
  spec.fill = o.fill;

  ordered_json config;
  config["command"] = "occlude";
  config["videos"] = o.videos;
  config["variant"] = o.variant;
  config["patch_h"] = o.patch_h;
  config["patch_w"] = o.patch_w;
  config["stride_h"] = o.stride_h;
  config["stride_w"] = o.stride_w;
  config["window"] = o.window;
  config["fill"] = o.fill;
  config["representative"] = o.representative;
  if (use_subprocess) config["scorer_cmd"] = o.scorer_cmd;
  if (use_linear) {
    config["linear_weights"] = o.weights_path;
    config["bias"] = o.bias;
  }

  ArtifactWriter writer(o.out, config);
  with_artifacts(writer, [&] {
    std::vector<xai::VideoTensor> videos;
    videos.reserve(o.videos.size());
    for (const auto& path : o.videos) videos.push_back(xai::load_vten(path));

    std::vector<std::size_t> chosen;
    if (o.representative > 0 &&
        static_cast<std::size_t>(o.representative) < videos.size()) {
      chosen = xai::select_representative(
          videos, static_cast<std::size_t>(o.representative));
    } else {
      chosen = all_rows(videos.size());
    }

    std::optional<xai::VideoTensor> weights;
    if (use_linear) weights = xai::load_vten(o.weights_path);

    std::vector<xai::AttributionMap> maps;
    for (const std::size_t idx : chosen) {
      const auto& video = videos[idx];
      std::unique_ptr<xai::Scorer> scorer;
      if (use_linear) {
        scorer = std::make_unique<xai::LinearScorer>(video, *weights, o.bias);
      } else {
        scorer = std::make_unique<xai::SubprocessScorer>(
            split_ws(o.scorer_cmd), o.videos[idx], o.timeout_ms);
      }
      auto map = xai::occlude(video, spec, *scorer);
      const std::string stem = fs::path(o.videos[idx]).stem().string();
      writer.write("attribution_" + stem + ".csv", xai::map_to_csv(map));
      maps.push_back(std::move(map));
    }

    if (maps.size() > 1) {
      const auto summary = xai::summarize(maps, o.top_frac);
      writer.write("attribution_summary.csv", xai::summary_to_csv(summary));
    }
  });
}

// The end-to-end desk-scale chain; writes every stage's artifacts plus a
// machine-readable summary of the headline numbers.
void cmd_replica(const ReplicaOpts& o) {
  using cohort::Endpoint;

  ordered_json config;
  config["command"] = "replica";
  config["n"] = o.n;
  config["seed"] = o.seed;
  config["horizon_days"] = o.horizon_days;
  config["videos"] = o.videos;
  config["clips"] = o.clips;
  config["vd_classify_threshold"] = o.vd_classify;
  config["vd_stratify_threshold"] = o.vd_stratify;
  config["score2_threshold"] = o.score2_threshold;

  cohort::SyntheticCohortConfig cfg;
  cfg.n = o.n;
  cfg.seed = o.seed;
  cfg.censoring_horizon_days = o.horizon_days;
  cfg.planted_log_hazard = default_planted();

  // Pass 1: measure the confidence spread so the planted effect can be set to
  // exactly one hazard doubling per standard deviation.
  const auto pass1 = cohort::generate_synthetic_cohort(cfg).first;
  if (pass1.size() < 2) {
    throw InvalidInputError("replica needs at least 2 participants");
  }
  double mean = 0.0;
  for (const auto& rec : pass1) mean += rec.vd_confidence;
  mean /= static_cast<double>(pass1.size());
  double ss = 0.0;
  for (const auto& rec : pass1) {
    const double d = rec.vd_confidence - mean;
    ss += d * d;
  }
  const double sd_vd = std::sqrt(ss / static_cast<double>(pass1.size() - 1));
  const double planted_vd = std::log(2.0) / sd_vd;
  cfg.planted_log_hazard[Endpoint::all_cause_death]["vd_confidence"] =
      planted_vd;

  // Pass 2: the actual cohort. Covariates are identical to pass 1 by
  // construction (outcome draws use a separate random stream).
  auto data = cohort::generate_synthetic_cohort(cfg);
  auto& records = data.first;
  const auto& outcomes = data.second;

  ArtifactWriter writer(o.out, config);
  with_artifacts(writer, [&] {
    writer.write("cohort.csv", cohort::cohort_to_csv(records, outcomes));

    // Clip-level predictions and their aggregation back to one confidence per
    // participant; downstream stages use the aggregated value.
    const auto preds = synthesize_predictions(records, o.videos, o.clips);
    writer.write("predictions.csv", aggregation::predictions_to_csv(preds));

    textio::CsvBuilder agg_csv({"participant_id", "confidence",
                                "predicted_high"});
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const auto ind = aggregation::aggregate(
          preds[i].participant_id, preds[i].videos, o.vd_classify);
      records[i].vd_confidence = ind.confidence;
      agg_csv.add_row({ind.participant_id, textio::fmt(ind.confidence),
                       ind.predicted_high ? "1" : "0"});
    }
    writer.write("aggregated.csv", agg_csv.str());

    // Ten-year risk scores.
    const auto coeffs = score2::demo_coefficients();
    const auto score_rows = score_cohort(records, coeffs, o.score2_threshold);
    writer.write("score2.csv", score_rows_to_csv(records, score_rows));

    // Kaplan-Meier curves for the three stratifications.
    struct StratumDef {
      std::string name;
      std::vector<std::size_t> rows;
    };
    auto build_pair = [&](const std::string& base, auto&& pred) {
      std::vector<std::size_t> yes, no;
      for (std::size_t i = 0; i < records.size(); ++i) {
        (pred(i) ? yes : no).push_back(i);
      }
      return std::vector<StratumDef>{{base + "_high", std::move(yes)},
                                     {base + "_low", std::move(no)}};
    };
    auto vd_strata = build_pair("vd", [&](std::size_t i) {
      return records[i].vd_confidence >= o.vd_stratify;
    });
    std::vector<StratumDef> ht_strata;
    {
      std::vector<std::size_t> yes, no;
      for (std::size_t i = 0; i < records.size(); ++i) {
        (records[i].hypertension_label ? yes : no).push_back(i);
      }
      ht_strata = {{"hypertension_yes", std::move(yes)},
                   {"hypertension_no", std::move(no)}};
    }
    std::vector<StratumDef> s2_strata;
    {
      std::vector<std::size_t> yes, no;
      for (std::size_t i = 0; i < records.size(); ++i) {
        if (!score_rows[i].scored) continue;
        (score_rows[i].estimate.calibrated_risk >= o.score2_threshold ? yes
                                                                      : no)
            .push_back(i);
      }
      s2_strata = {{"score2_high", std::move(yes)},
                   {"score2_low", std::move(no)}};
    }

    const double max_days = static_cast<double>(o.horizon_days);
    ordered_json km_summary;
    auto emit_km = [&](const std::vector<StratumDef>& strata,
                       const std::string& svg_name, const std::string& title) {
      std::vector<survival::KmCurve> curves;
      std::vector<svg::LabeledKmCurve> plot;
      for (const auto& s : strata) {
        if (s.rows.empty()) {
          throw ValidationError("stratum '" + s.name +
                                "' is empty; cannot build the chain");
        }
        const auto samples = samples_for(outcomes, s.rows, Endpoint::all_cause_death);
        curves.push_back(survival::km_fit(samples));
      }
      for (std::size_t i = 0; i < strata.size(); ++i) {
        writer.write("km_" + strata[i].name + ".csv",
                     survival::km_to_csv(curves[i]));
        ordered_json g;
        g["n"] = strata[i].rows.size();
        g["survival_at_horizon"] = curves[i].survival_at(max_days);
        km_summary[strata[i].name] = g;
        plot.push_back({strata[i].name, &curves[i]});
      }
      writer.write(svg_name, svg::km_plot(plot, max_days, title));
    };
    emit_km(vd_strata, "km_vd.svg", "Survival by VD class");
    emit_km(ht_strata, "km_hypertension.svg", "Survival by hypertension");
    emit_km(s2_strata, "km_score2.svg", "Survival by ten-year risk stratum");

    // Cox models. Full cohort: age alone vs age + vd confidence.
    const auto ties = survival::TiesMethod::efron;
    const auto full = all_rows(records.size());
    const auto fit_age = fit_cox_model(records, outcomes, full,
                                       Endpoint::all_cause_death, {"age"},
                                       nullptr, ties);
    const auto fit_age_vd =
        fit_cox_model(records, outcomes, full, Endpoint::all_cause_death,
                      {"age", "vd_confidence"}, nullptr, ties);
    writer.write("cox_age.json", survival::cox_to_json(fit_age.model));
    writer.write("cox_age_vd.json", survival::cox_to_json(fit_age_vd.model));

    // Scorable subset: singles and the combined model.
    const auto elig = select_rows(records, true, true, &score_rows);
    struct NamedFit {
      std::string name;
      std::vector<std::string> covariates;
      FittedCox fit;
    };
    std::vector<NamedFit> elig_fits;
    const std::vector<std::pair<std::string, std::vector<std::string>>>
        elig_specs = {
            {"age", {"age"}},
            {"vd", {"vd_confidence"}},
            {"score2", {"score2_risk"}},
            {"age_vd", {"age", "vd_confidence"}},
            {"age_vd_score2", {"age", "vd_confidence", "score2_risk"}},
        };
    for (const auto& [name, covs] : elig_specs) {
      auto fit = fit_cox_model(records, outcomes, elig,
                               Endpoint::all_cause_death, covs, &score_rows,
                               ties);
      writer.write("cox_elig_" + name + ".json",
                   survival::cox_to_json(fit.model));
      elig_fits.push_back({name, covs, std::move(fit)});
    }

    // Discrimination gain from adding the confidence to age alone.
    const auto full_samples =
        samples_for(outcomes, full, Endpoint::all_cause_death);
    const auto cmp = survival::c_index_diff_test(fit_age_vd.risks,
                                                 fit_age.risks, full_samples);
    ordered_json cmp_json;
    cmp_json["endpoint"] = "all_cause_death";
    cmp_json["n"] = full.size();
    cmp_json["covariates_a"] = {"age", "vd_confidence"};
    cmp_json["covariates_b"] = {"age"};
    cmp_json["comparison"] = comparison_to_json(cmp);
    writer.write("compare_c.json", cmp_json.dump(2) + "\n");

    // Five-year cardiac-death classifiers on the scorable subset.
    const long five_years = 1826;
    const auto hc_vd = horizon_classifier(records, outcomes, elig,
                                          Endpoint::cardiac_death, five_years,
                                          {"vd_confidence"}, &score_rows, ties);
    const auto hc_s2 = horizon_classifier(records, outcomes, elig,
                                          Endpoint::cardiac_death, five_years,
                                          {"score2_risk"}, &score_rows, ties);
    const auto roc_vd = discrimination::roc(hc_vd.probabilities, hc_vd.labels);
    const auto roc_s2 = discrimination::roc(hc_s2.probabilities, hc_s2.labels);
    writer.write("roc_vd.csv", discrimination::roc_to_csv(roc_vd));
    writer.write("roc_score2.csv", discrimination::roc_to_csv(roc_s2));
    {
      std::vector<svg::LabeledRocCurve> plot{{"vd_confidence", &roc_vd},
                                             {"score2_risk", &roc_s2}};
      writer.write("roc.svg",
                   svg::roc_plot(plot, "Five-year cardiac death"));
    }
    const auto reclass = discrimination::nri_idi(
        hc_s2.probabilities, hc_vd.probabilities, hc_vd.labels);
    ordered_json nri_json;
    nri_json["endpoint"] = "cardiac_death";
    nri_json["horizon_days"] = five_years;
    nri_json["n"] = elig.size();
    nri_json["model_old"] = "score2_risk";
    nri_json["model_new"] = "vd_confidence";
    nri_json["reclassification"] = nri_to_json(reclass);
    writer.write("nri.json", nri_json.dump(2) + "\n");

    // Group comparison table at the stratification threshold.
    const auto groups = discrimination::group_compare(records, o.vd_stratify);
    writer.write("group_table.csv", discrimination::group_table_csv(groups));
    writer.write("group_ratios.csv", discrimination::ratio_table_csv(groups));

    // Headline numbers.
    ordered_json summary;
    summary["n"] = o.n;
    summary["seed"] = o.seed;
    summary["sd_vd_confidence"] = sd_vd;
    summary["planted_vd_log_hazard"] = planted_vd;
    ordered_json cidx;
    cidx["age"] = fit_age.model.c_index.value();
    cidx["age_vd"] = fit_age_vd.model.c_index.value();
    summary["c_index_full"] = cidx;
    ordered_json celig;
    for (const auto& nf : elig_fits) {
      celig[nf.name] = nf.fit.model.c_index.value();
    }
    summary["c_index_eligible"] = celig;
    summary["c_index_comparison"] = comparison_to_json(cmp);
    summary["km_survival_at_horizon"] = km_summary;
    ordered_json aucs;
    aucs["vd_confidence"] = roc_vd.auc;
    aucs["score2_risk"] = roc_s2.auc;
    summary["auc_5y_cardiac"] = aucs;
    std::size_t n_events_5y = 0;
    for (const bool b : hc_vd.labels) n_events_5y += b ? 1 : 0;
    summary["n_events_5y_cardiac"] = n_events_5y;
    summary["reclassification"] = nri_to_json(reclass);
    writer.write("replica_summary.json", summary.dump(2) + "\n");

    std::cerr << "replica chain complete: delta C = "
              << textio::fmt(cmp.delta)
              << ", p = " << textio::fmt(cmp.p_value) << "\n";
  });
}

void report_error(const char* type, const std::exception& e, int code) {
  ordered_json j;
  j["error"]["type"] = type;
  j["error"]["message"] = e.what();
  j["error"]["exit_code"] = code;
  std::cerr << j.dump() << "\n";
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"vdrisk: risk stratification and survival statistics toolkit"};
  app.set_version_flag("--version", std::string("vdrisk ") + kVersion);
  app.require_subcommand(1);

  SimulateOpts sim;
  auto* c_sim = app.add_subcommand("simulate",
                                   "Generate a synthetic cohort with outcomes "
                                   "and clip-level predictions");
  c_sim->add_option("--n", sim.n, "Number of participants")->required();
  c_sim->add_option("--seed", sim.seed, "Random seed");
  c_sim->add_option("--horizon-days", sim.horizon_days,
                    "Administrative censoring horizon in days");
  c_sim->add_option("--baseline-hazard", sim.baseline_hazard,
                    "Baseline hazard, events per person-year");
  c_sim->add_option("--videos", sim.videos, "Videos per participant");
  c_sim->add_option("--clips", sim.clips, "Clips per video");
  c_sim->add_option("--out", sim.out, "Output directory");
  c_sim->callback([&] { cmd_simulate(sim); });

  SplitOpts spl;
  auto* c_spl = app.add_subcommand(
      "split", "Plan cross-validation splits with a held-out validation part");
  c_spl->add_option("--n", spl.n, "Number of participants")->required();
  c_spl->add_option("--k", spl.k, "Number of folds");
  c_spl->add_option("--val-frac", spl.val_frac,
                    "Validation fraction of each fold's non-test part");
  c_spl->add_option("--seed", spl.seed, "Random seed");
  c_spl->add_option("--out", spl.out, "Output directory");
  c_spl->callback([&] { cmd_split(spl); });

  Score2Opts sc2;
  auto* c_sc2 = app.add_subcommand("score2",
                                   "Compute calibrated ten-year risk per "
                                   "participant and stratify it");
  c_sc2->add_option("--cohort", sc2.cohort_path, "Cohort CSV")->required();
  c_sc2->add_option("--config", sc2.config_path,
                    "Coefficient JSON (default: built-in demo set)");
  c_sc2->add_option("--threshold", sc2.threshold, "High-risk threshold");
  c_sc2->add_option("--out", sc2.out, "Output directory");
  c_sc2->callback([&] { cmd_score2(sc2); });

  KmOpts km;
  auto* c_km = app.add_subcommand(
      "km", "Kaplan-Meier survival curves, optionally stratified");
  c_km->add_option("--cohort", km.cohort_path, "Cohort CSV")->required();
  c_km->add_option("--endpoint", km.endpoint,
                   "Endpoint (all_cause_death, cardiac_death, mi, stroke)");
  c_km->add_option("--strata", km.strata,
                   "Stratification: none, vd, hypertension, score2");
  c_km->add_option("--threshold", km.threshold,
                   "Stratification threshold (default 0.67 for vd, 0.08 for "
                   "score2)");
  c_km->add_option("--score2-config", km.score2_config,
                   "Coefficient JSON for score2 strata");
  c_km->add_flag("--no-svg", km.no_svg, "Skip the SVG plot");
  c_km->add_option("--out", km.out, "Output directory");
  c_km->callback([&] { cmd_km(km); });

  CoxOpts cox;
  auto* c_cox = app.add_subcommand(
      "cox", "Fit a proportional-hazards model on normalized covariates");
  c_cox->add_option("--cohort", cox.cohort_path, "Cohort CSV")->required();
  c_cox->add_option("--endpoint", cox.endpoint, "Endpoint");
  c_cox->add_option("--covariates", cox.covariates,
                    "Comma-separated covariates (may include score2_risk)")
      ->required();
  c_cox->add_option("--ties", cox.ties, "Tie handling: efron or breslow");
  c_cox->add_flag("--eligible-only", cox.eligible_only,
                  "Restrict to risk-score-eligible participants");
  c_cox->add_option("--score2-config", cox.score2_config,
                    "Coefficient JSON when score2_risk is used");
  c_cox->add_option("--out", cox.out, "Output directory");
  c_cox->callback([&] { cmd_cox(cox); });

  CompareCOpts cmpc;
  auto* c_cmp = app.add_subcommand(
      "compare-c", "Compare the concordance of two covariate sets");
  c_cmp->add_option("--cohort", cmpc.cohort_path, "Cohort CSV")->required();
  c_cmp->add_option("--endpoint", cmpc.endpoint, "Endpoint");
  c_cmp->add_option("--covariates-a", cmpc.covariates_a, "Model A covariates")
      ->required();
  c_cmp->add_option("--covariates-b", cmpc.covariates_b, "Model B covariates")
      ->required();
  c_cmp->add_option("--ties", cmpc.ties, "Tie handling: efron or breslow");
  c_cmp->add_flag("--eligible-only", cmpc.eligible_only,
                  "Restrict to risk-score-eligible participants");
  c_cmp->add_option("--score2-config", cmpc.score2_config,
                    "Coefficient JSON when score2_risk is used");
  c_cmp->add_option("--permutations", cmpc.permutations,
                    "Also run a sign-flip permutation test with this many "
                    "permutations");
  c_cmp->add_option("--seed", cmpc.seed, "Permutation seed");
  c_cmp->add_option("--out", cmpc.out, "Output directory");
  c_cmp->callback([&] { cmd_compare_c(cmpc); });

  RocOpts roc;
  auto* c_roc = app.add_subcommand(
      "roc", "ROC curve of a hazard-based classifier for a horizon-limited "
             "endpoint");
  c_roc->add_option("--cohort", roc.cohort_path, "Cohort CSV")->required();
  c_roc->add_option("--endpoint", roc.endpoint, "Endpoint");
  c_roc->add_option("--horizon-days", roc.horizon_days,
                    "Label horizon in days");
  c_roc->add_option("--covariates", roc.covariates, "Model covariates")
      ->required();
  c_roc->add_option("--score2-config", roc.score2_config,
                    "Coefficient JSON when score2_risk is used");
  c_roc->add_flag("--eligible-only", roc.eligible_only,
                  "Restrict to risk-score-eligible participants");
  c_roc->add_option("--name", roc.name, "Curve name used in artifact names");
  c_roc->add_flag("--no-svg", roc.no_svg, "Skip the SVG plot");
  c_roc->add_option("--out", roc.out, "Output directory");
  c_roc->callback([&] { cmd_roc(roc); });

  NriOpts nri;
  auto* c_nri = app.add_subcommand(
      "nri", "Continuous net reclassification and discrimination improvement");
  c_nri->add_option("--cohort", nri.cohort_path, "Cohort CSV")->required();
  c_nri->add_option("--endpoint", nri.endpoint, "Endpoint");
  c_nri->add_option("--horizon-days", nri.horizon_days,
                    "Label horizon in days");
  c_nri->add_option("--covariates-old", nri.covariates_old,
                    "Reference model covariates")
      ->required();
  c_nri->add_option("--covariates-new", nri.covariates_new,
                    "New model covariates")
      ->required();
  c_nri->add_option("--score2-config", nri.score2_config,
                    "Coefficient JSON when score2_risk is used");
  c_nri->add_flag("--eligible-only", nri.eligible_only,
                  "Restrict to risk-score-eligible participants");
  c_nri->add_option("--out", nri.out, "Output directory");
  c_nri->callback([&] { cmd_nri(nri); });

  GroupCompareOpts grp;
  auto* c_grp = app.add_subcommand(
      "group-compare",
      "Clinical-parameter quartiles and prevalence ratios across confidence/"
      "hypertension groups");
  c_grp->add_option("--cohort", grp.cohort_path, "Cohort CSV")->required();
  c_grp->add_option("--threshold", grp.threshold,
                    "High-confidence threshold");
  c_grp->add_option("--out", grp.out, "Output directory");
  c_grp->callback([&] { cmd_group_compare(grp); });

  AggregateOpts agg;
  auto* c_agg = app.add_subcommand(
      "aggregate", "Average clip predictions to one confidence per "
                   "participant; optionally stratified metrics");
  c_agg->add_option("--predictions", agg.predictions_path, "Predictions CSV")
      ->required();
  c_agg->add_option("--threshold", agg.threshold,
                    "Classification threshold");
  c_agg->add_option("--cohort", agg.cohort_path,
                    "Cohort CSV for stratified accuracy metrics");
  c_agg->add_option("--out", agg.out, "Output directory");
  c_agg->callback([&] { cmd_aggregate(agg); });

  OccludeOpts occ;
  auto* c_occ = app.add_subcommand(
      "occlude", "Occlusion attribution maps for video tensors");
  c_occ->add_option("--video", occ.videos, "Video tensor file (repeatable)")
      ->required();
  c_occ->add_option("--scorer-cmd", occ.scorer_cmd,
                    "External scorer command line (whitespace-split)");
  c_occ->add_option("--linear-weights", occ.weights_path,
                    "Weight tensor for the built-in linear scorer");
  c_occ->add_option("--bias", occ.bias, "Built-in linear scorer bias");
  c_occ->add_option("--variant", occ.variant,
                    "masked_sequence or spatiotemporal");
  c_occ->add_option("--patch-h", occ.patch_h, "Patch height");
  c_occ->add_option("--patch-w", occ.patch_w, "Patch width");
  c_occ->add_option("--stride-h", occ.stride_h, "Patch row stride");
  c_occ->add_option("--stride-w", occ.stride_w, "Patch column stride");
  c_occ->add_option("--window", occ.window, "Temporal window length");
  c_occ->add_option("--fill", occ.fill, "Mask fill value");
  c_occ->add_option("--representative", occ.representative,
                    "Analyze only the n most representative videos");
  c_occ->add_option("--timeout-ms", occ.timeout_ms,
                    "External scorer response timeout");
  c_occ->add_option("--top-frac", occ.top_frac,
                    "Fraction of cells kept in the top-region summary");
  c_occ->add_option("--out", occ.out, "Output directory");
  c_occ->callback([&] { cmd_occlude(occ); });

  ReplicaOpts rep;
  auto* c_rep = app.add_subcommand(
      "replica", "Run the full desk-scale chain: simulate, aggregate, risk "
                 "scores, survival curves, hazard models, discrimination, "
                 "reclassification, and group comparison");
  c_rep->add_option("--n", rep.n, "Number of participants");
  c_rep->add_option("--seed", rep.seed, "Random seed");
  c_rep->add_option("--horizon-days", rep.horizon_days,
                    "Administrative censoring horizon in days");
  c_rep->add_option("--videos", rep.videos, "Videos per participant");
  c_rep->add_option("--clips", rep.clips, "Clips per video");
  c_rep->add_option("--vd-classify", rep.vd_classify,
                    "Classification threshold");
  c_rep->add_option("--vd-stratify", rep.vd_stratify,
                    "Stratification threshold");
  c_rep->add_option("--score2-threshold", rep.score2_threshold,
                    "High-risk threshold");
  c_rep->add_option("--out", rep.out, "Output directory");
  c_rep->callback([&] { cmd_replica(rep); });

  try {
    app.parse(argc, argv);
    return 0;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const ScorerProtocolError& e) {
    report_error("scorer_protocol", e, 5);
    return 5;
  } catch (const NumericalError& e) {
    report_error("numerical", e, 4);
    return 4;
  } catch (const Error& e) {
    report_error("data_validation", e, 3);
    return 3;
  } catch (const std::exception& e) {
    report_error("internal", e, 1);
    return 1;
  }
}

}  // namespace vdrisk::cli
