#pragma once

// Clip sampling plans, clip -> video -> individual confidence aggregation,
// and classification metrics stratified by age bin and sex.

#include <filesystem>
#include <string>
#include <vector>

#include "vdrisk/cohort.hpp"

namespace vdrisk::aggregation {

// --- Clip planning -------------------------------------------------------------

struct ClipRange {
  long start = 0;  // first frame, inclusive
  long end = 0;    // one past the last frame
};

struct ClipPlan {
  long video_frames = 0;
  long clip_frames = 0;
  std::vector<ClipRange> clips;  // non-overlapping, ascending
};

// n = min(max_clips, floor(T/L)) clips of length L spread uniformly over
// [0, T): starts at floor(i*(T-L)/(n-1)), then any overlap produced by the
// rounding is resolved by shifting clips right. A single clip is centered.
ClipPlan plan_clips(long video_frames, long clip_frames, long max_clips);

// --- Aggregation ---------------------------------------------------------------

struct VideoClips {
  std::string video_id;
  std::vector<double> clip_confidences;  // probabilities in [0,1]
};

struct IndividualPrediction {
  std::string participant_id;
  std::vector<std::pair<std::string, double>> video_means;
  double confidence = 0.0;      // mean of video means
  bool predicted_high = false;  // confidence >= threshold
};

// Two-stage mean: clips average to a video confidence, videos average to the
// individual confidence (videos with more clips do NOT weigh more). Throws
// invalid-input naming the video on an empty clip list.
IndividualPrediction aggregate(const std::string& participant_id,
                               const std::vector<VideoClips>& videos, double threshold);

enum class VdClass { high, low };
const char* to_string(VdClass c);

// high iff confidence >= threshold. Classification default 0.5; survival
// stratification threshold 0.67.
VdClass classify_vd(double confidence, double threshold);

// --- Per-clip prediction files ---------------------------------------------------

struct ParticipantClips {
  std::string participant_id;
  std::vector<VideoClips> videos;
};

// CSV schema: participant_id,video_id,clip_index,confidence
std::string predictions_to_csv(const std::vector<ParticipantClips>& predictions);
std::vector<ParticipantClips> parse_predictions_csv(const std::string& text);
std::vector<ParticipantClips> load_predictions_csv(const std::filesystem::path& path);

// --- Stratified metrics -----------------------------------------------------------

struct AgeBin {
  int lo = 0;  // inclusive
  int hi = 0;  // exclusive, except the last bin which is inclusive
};

// Decade bins 35-45, ..., 75-85 (the last closed at 85).
std::vector<AgeBin> default_age_bins();

struct StratumMetrics {
  AgeBin bin;
  cohort::Sex sex = cohort::Sex::male;
  long tp = 0, fp = 0, tn = 0, fn = 0;
  double tpr = 0.0;  // rates are NaN when their denominator is zero
  double tnr = 0.0;
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;
};

struct StratifiedReport {
  std::vector<StratumMetrics> strata;  // bins outer, sex inner (male, female)
  long tp = 0, fp = 0, tn = 0, fn = 0;
  double balanced_accuracy = 0.0;
  double f1 = 0.0;
  double auc = 0.0;  // from confidences via the ROC sweep; NaN if single-class
};

// Confusion counts per (age bin, sex) for predictions (confidence >=
// threshold) against labels, plus overall balanced accuracy, F1, and AUC.
// Ages must fall inside some bin, otherwise a binning error is raised.
StratifiedReport stratified_metrics(const std::vector<double>& confidences,
                                    const std::vector<bool>& labels,
                                    const std::vector<int>& ages,
                                    const std::vector<cohort::Sex>& sexes,
                                    const std::vector<AgeBin>& age_bins, double threshold);

std::string stratified_report_csv(const StratifiedReport& report);
std::string stratified_report_json(const StratifiedReport& report);

}  // namespace vdrisk::aggregation
