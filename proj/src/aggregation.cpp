#include "vdrisk/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <json.hpp>

#include "vdrisk/discrimination.hpp"
#include "vdrisk/errors.hpp"
#include "vdrisk/textio.hpp"

namespace vdrisk::aggregation {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double checked_confidence(double c, const std::string& what) {
  if (!(c >= 0.0 && c <= 1.0))
    throw ValidationError("confidence outside [0,1] for " + what + ": " + textio::fmt(c));
  return c;
}

}  // namespace

// --- Clip planning ---------------------------------------------------------------

ClipPlan plan_clips(long video_frames, long clip_frames, long max_clips) {
  if (clip_frames < 1) throw InvalidInputError("clip length must be at least 1 frame");
  if (video_frames < clip_frames)
    throw InvalidInputError("video has " + std::to_string(video_frames) +
                            " frames, shorter than the clip length " +
                            std::to_string(clip_frames));
  if (max_clips < 1) throw InvalidInputError("max clips must be at least 1");

  const long n = std::min(max_clips, video_frames / clip_frames);
  ClipPlan plan;
  plan.video_frames = video_frames;
  plan.clip_frames = clip_frames;

  if (n == 1) {
    long start = (video_frames - clip_frames) / 2;
    plan.clips.push_back({start, start + clip_frames});
    return plan;
  }
  for (long i = 0; i < n; ++i) {
    // Uniform real spacing over the admissible start range, floored; the
    // right-shift pass below restores disjointness lost to rounding.
    long start = static_cast<long>(static_cast<double>(i) *
                                   static_cast<double>(video_frames - clip_frames) /
                                   static_cast<double>(n - 1));
    plan.clips.push_back({start, start + clip_frames});
  }
  for (std::size_t i = 1; i < plan.clips.size(); ++i) {
    if (plan.clips[i].start < plan.clips[i - 1].end) {
      plan.clips[i].start = plan.clips[i - 1].end;
      plan.clips[i].end = plan.clips[i].start + clip_frames;
    }
  }
  return plan;
}

// --- Aggregation -------------------------------------------------------------------

IndividualPrediction aggregate(const std::string& participant_id,
                               const std::vector<VideoClips>& videos, double threshold) {
  if (videos.empty())
    throw InvalidInputError("participant " + participant_id + " has no videos to aggregate");
  IndividualPrediction pred;
  pred.participant_id = participant_id;
  double sum_means = 0.0;
  for (const auto& v : videos) {
    if (v.clip_confidences.empty())
      throw InvalidInputError("video " + v.video_id + " has an empty clip list");
    double sum = 0.0;
    for (double c : v.clip_confidences)
      sum += checked_confidence(c, "video " + v.video_id);
    double mean = sum / static_cast<double>(v.clip_confidences.size());
    pred.video_means.emplace_back(v.video_id, mean);
    sum_means += mean;
  }
  pred.confidence = sum_means / static_cast<double>(videos.size());
  pred.predicted_high = classify_vd(pred.confidence, threshold) == VdClass::high;
  return pred;
}

const char* to_string(VdClass c) { return c == VdClass::high ? "high" : "low"; }

VdClass classify_vd(double confidence, double threshold) {
  if (!(confidence >= 0.0 && confidence <= 1.0))
    throw InvalidInputError("confidence must lie in [0,1]");
  if (!(threshold >= 0.0 && threshold <= 1.0))
    throw InvalidInputError("threshold must lie in [0,1]");
  return confidence >= threshold ? VdClass::high : VdClass::low;
}

// --- Per-clip prediction files --------------------------------------------------------

std::string predictions_to_csv(const std::vector<ParticipantClips>& predictions) {
  textio::CsvBuilder csv({"participant_id", "video_id", "clip_index", "confidence"});
  for (const auto& p : predictions)
    for (const auto& v : p.videos)
      for (std::size_t k = 0; k < v.clip_confidences.size(); ++k)
        csv.add_row({p.participant_id, v.video_id, std::to_string(k),
                     textio::fmt(v.clip_confidences[k])});
  return csv.str();
}

std::vector<ParticipantClips> parse_predictions_csv(const std::string& text) {
  textio::CsvTable table = textio::parse_csv(text);
  const std::vector<std::string> expected = {"participant_id", "video_id", "clip_index",
                                             "confidence"};
  if (table.header != expected)
    throw ParseError("prediction CSV header mismatch", 1, "header");
  int c_pid = 0, c_vid = 1, c_idx = 2, c_conf = 3;

  std::vector<ParticipantClips> out;
  std::map<std::string, std::size_t> pid_pos;
  // (participant, video) -> (position in that participant's list, rows seen)
  std::map<std::pair<std::string, std::string>, std::size_t> vid_pos;

  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    long file_row = static_cast<long>(r) + 2;  // header is row 1
    const std::string& pid = row[c_pid];
    const std::string& vid = row[c_vid];
    long idx = textio::parse_long(row[c_idx], file_row, "clip_index");
    double conf = textio::parse_double(row[c_conf], file_row, "confidence");
    if (conf < 0.0 || conf > 1.0 || !std::isfinite(conf))
      throw ValidationError("confidence outside [0,1] at row " + std::to_string(file_row));

    auto [pit, pnew] = pid_pos.try_emplace(pid, out.size());
    if (pnew) out.push_back(ParticipantClips{pid, {}});
    auto& participant = out[pit->second];

    auto [vit, vnew] = vid_pos.try_emplace({pid, vid}, participant.videos.size());
    if (vnew) participant.videos.push_back(VideoClips{vid, {}});
    auto& video = participant.videos[vit->second];

    if (idx != static_cast<long>(video.clip_confidences.size()))
      throw ValidationError("clip_index out of order at row " + std::to_string(file_row) +
                            " (expected " + std::to_string(video.clip_confidences.size()) +
                            ", got " + std::to_string(idx) + ")");
    video.clip_confidences.push_back(conf);
  }
  return out;
}

std::vector<ParticipantClips> load_predictions_csv(const std::filesystem::path& path) {
  return parse_predictions_csv(textio::read_file(path));
}

// --- Stratified metrics -----------------------------------------------------------------

std::vector<AgeBin> default_age_bins() {
  return {{35, 45}, {45, 55}, {55, 65}, {65, 75}, {75, 85}};
}

namespace {

bool in_bin(int age, const AgeBin& bin, bool last) {
  return age >= bin.lo && (last ? age <= bin.hi : age < bin.hi);
}

double rate(long num, long den) {
  return den == 0 ? kNaN : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

StratifiedReport stratified_metrics(const std::vector<double>& confidences,
                                    const std::vector<bool>& labels,
                                    const std::vector<int>& ages,
                                    const std::vector<cohort::Sex>& sexes,
                                    const std::vector<AgeBin>& age_bins, double threshold) {
  const std::size_t n = confidences.size();
  if (labels.size() != n || ages.size() != n || sexes.size() != n)
    throw InvalidInputError("metric input vectors differ in length");
  if (n == 0) throw InvalidInputError("empty input");
  if (age_bins.empty()) throw InvalidInputError("no age bins given");

  StratifiedReport report;
  for (const AgeBin& bin : age_bins) {
    for (cohort::Sex sex : {cohort::Sex::male, cohort::Sex::female}) {
      StratumMetrics m;
      m.bin = bin;
      m.sex = sex;
      report.strata.push_back(m);
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    checked_confidence(confidences[i], "observation " + std::to_string(i));
    std::size_t stratum = report.strata.size();
    for (std::size_t b = 0; b < age_bins.size(); ++b) {
      if (in_bin(ages[i], age_bins[b], b + 1 == age_bins.size())) {
        stratum = 2 * b + (sexes[i] == cohort::Sex::male ? 0 : 1);
        break;
      }
    }
    if (stratum == report.strata.size())
      throw InvalidInputError("age " + std::to_string(ages[i]) +
                              " falls outside every age bin");
    bool predicted = confidences[i] >= threshold;
    StratumMetrics& m = report.strata[stratum];
    if (predicted && labels[i]) ++m.tp;
    else if (predicted && !labels[i]) ++m.fp;
    else if (!predicted && labels[i]) ++m.fn;
    else ++m.tn;
  }

  for (StratumMetrics& m : report.strata) {
    report.tp += m.tp;
    report.fp += m.fp;
    report.tn += m.tn;
    report.fn += m.fn;
    m.tpr = rate(m.tp, m.tp + m.fn);
    m.tnr = rate(m.tn, m.tn + m.fp);
    m.accuracy = rate(m.tp + m.tn, m.tp + m.fp + m.tn + m.fn);
    m.balanced_accuracy = (m.tpr + m.tnr) / 2.0;
  }
  report.balanced_accuracy =
      (rate(report.tp, report.tp + report.fn) + rate(report.tn, report.tn + report.fp)) / 2.0;
  report.f1 = rate(2 * report.tp, 2 * report.tp + report.fp + report.fn);

  bool pos = false, neg = false;
  for (bool l : labels) (l ? pos : neg) = true;
  report.auc = (pos && neg) ? discrimination::roc(confidences, labels).auc : kNaN;
  return report;
}

std::string stratified_report_csv(const StratifiedReport& report) {
  textio::CsvBuilder csv({"age_lo", "age_hi", "sex", "tp", "fp", "tn", "fn", "tpr", "tnr",
                          "accuracy", "balanced_accuracy"});
  for (const auto& m : report.strata)
    csv.add_row({std::to_string(m.bin.lo), std::to_string(m.bin.hi), cohort::to_string(m.sex),
                 std::to_string(m.tp), std::to_string(m.fp), std::to_string(m.tn),
                 std::to_string(m.fn), textio::fmt(m.tpr), textio::fmt(m.tnr),
                 textio::fmt(m.accuracy), textio::fmt(m.balanced_accuracy)});
  return csv.str();
}

std::string stratified_report_json(const StratifiedReport& report) {
  nlohmann::ordered_json j;
  j["counts"] = {{"tp", report.tp}, {"fp", report.fp}, {"tn", report.tn}, {"fn", report.fn}};
  j["balanced_accuracy"] = report.balanced_accuracy;
  j["f1"] = report.f1;
  j["auc"] = report.auc;
  return j.dump(2) + "\n";
}

}  // namespace vdrisk::aggregation
