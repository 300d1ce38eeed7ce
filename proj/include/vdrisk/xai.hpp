#pragma once

// Occlusion attribution for video tensors against a black-box scorer,
// representative-video selection, and attribution summary maps.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace vdrisk::xai {

// --- Video tensors -------------------------------------------------------------

// Grayscale video, row-major per frame. File format: magic "VTEN",
// version u32, T, H, W u32, then T*H*W little-endian float32.
struct VideoTensor {
  std::uint32_t t = 0, h = 0, w = 0;
  std::vector<float> data;

  static VideoTensor zeros(std::uint32_t t, std::uint32_t h, std::uint32_t w);

  std::size_t cells() const { return data.size(); }
  float at(std::uint32_t ti, std::uint32_t ri, std::uint32_t ci) const {
    return data[(static_cast<std::size_t>(ti) * h + ri) * w + ci];
  }
  float& at(std::uint32_t ti, std::uint32_t ri, std::uint32_t ci) {
    return data[(static_cast<std::size_t>(ti) * h + ri) * w + ci];
  }
};

std::string vten_to_bytes(const VideoTensor& v);
VideoTensor vten_from_bytes(const std::string& bytes);
VideoTensor load_vten(const std::filesystem::path& path);
void save_vten(const VideoTensor& v, const std::filesystem::path& path);

// --- Masks and scorers ------------------------------------------------------------

// Half-open box [t0,t1) x [r0,r1) x [c0,c1); masked cells are set to `fill`.
struct MaskRegion {
  long t0 = 0, t1 = 0;
  long r0 = 0, r1 = 0;
  long c0 = 0, c1 = 0;
  double fill = 0.0;
};

// A scorer is bound to one video and returns its confidence in the high-VD
// class, optionally with a mask applied first.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual double score(const std::optional<MaskRegion>& mask) = 0;
};

// In-process reference scorer: bias + sum(weights * video), optionally
// clamped to [0,1] (the subprocess protocol requires clamping; the raw form
// keeps the closed-form attribution identities exact).
class LinearScorer : public Scorer {
 public:
  LinearScorer(VideoTensor video, VideoTensor weights, double bias, bool clamp = false);
  double score(const std::optional<MaskRegion>& mask) override;

 private:
  VideoTensor video_;
  VideoTensor weights_;
  double bias_;
  bool clamp_;
  double unmasked_;
};

// Child-process scorer speaking line-delimited JSON over stdin/stdout:
//   request  {"id": n, "video": path, "mask": {t0,t1,r0,r1,c0,c1,fill} | null}
//   response {"id": n, "confidence": x in [0,1]}
// A mismatched id, malformed response, out-of-range confidence, timeout, or
// child exit raises a scorer protocol error carrying the request id.
class SubprocessScorer : public Scorer {
 public:
  SubprocessScorer(std::vector<std::string> command, std::string video_path,
                   int timeout_ms = 10000);
  ~SubprocessScorer() override;
  SubprocessScorer(const SubprocessScorer&) = delete;
  SubprocessScorer& operator=(const SubprocessScorer&) = delete;

  double score(const std::optional<MaskRegion>& mask) override;

 private:
  std::string read_line();

  std::string video_path_;
  int timeout_ms_;
  long next_id_ = 1;
  int child_pid_ = -1;
  int to_child_ = -1;    // our write end
  int from_child_ = -1;  // our read end
  std::string buffer_;
};

// --- Occlusion -----------------------------------------------------------------------

enum class OcclusionVariant { masked_sequence, spatiotemporal };
const char* to_string(OcclusionVariant v);
OcclusionVariant occlusion_variant_from_string(const std::string& s);

struct MaskSpec {
  OcclusionVariant variant = OcclusionVariant::masked_sequence;
  long patch_h = 16, patch_w = 16;
  long stride_h = 16, stride_w = 16;
  long window = 2;     // frames per temporal window (spatiotemporal only)
  double fill = 0.0;   // baseline intensity written into masked cells
};

// masked_sequence -> 1 x H x W; spatiotemporal -> T x H x W. Positive values
// mean the region is evidence toward high VD (occluding it lowers the score).
struct AttributionMap {
  OcclusionVariant variant = OcclusionVariant::masked_sequence;
  std::uint32_t t = 1, h = 0, w = 0;
  std::vector<double> values;

  double at(std::uint32_t ti, std::uint32_t ri, std::uint32_t ci) const {
    return values[(static_cast<std::size_t>(ti) * h + ri) * w + ci];
  }
};

// Patch grid: positions step by the stride while a full patch fits, plus a
// tail position flush with the edge, so every cell is covered. For each
// position, attribution = score(original) - score(occluded); cells covered by
// several positions average their contributions. The spatiotemporal variant
// walks temporal windows the same way and spreads each window's difference
// evenly over its frames (delta/window per cell), so summing the map over T
// with non-overlapping windows reproduces the masked-sequence map of a
// time-additive scorer.
AttributionMap occlude(const VideoTensor& video, const MaskSpec& spec, Scorer& scorer);

// CSV export: t,row,col,value
std::string map_to_csv(const AttributionMap& map);

// --- Representative selection ----------------------------------------------------------

// Temporally average each video to one frame, build the global mean frame,
// rank by root-sum-square distance to it, and return the indices of the n
// closest (ties keep input order).
std::vector<std::size_t> select_representative(const std::vector<VideoTensor>& videos,
                                               std::size_t n);

// --- Summaries ----------------------------------------------------------------------------

struct SummaryMaps {
  std::uint32_t t = 1, h = 0, w = 0;
  std::vector<double> mean;
  std::vector<double> median;  // cellwise median across maps
  std::vector<std::uint8_t> top_positive;
  std::vector<std::uint8_t> top_negative;
  long n_maps = 0;
  long top_cap = 0;  // ceil(top_frac * cells): indicator size cap
};

// Cellwise mean and median over homogeneous maps. The top indicators mark the
// ceil(top_frac * cells) highest strictly-positive (resp. lowest strictly-
// negative) cells of the mean map; when fewer cells qualify, only those are
// marked. Ranking ties break toward the lower cell index.
SummaryMaps summarize(const std::vector<AttributionMap>& maps, double top_frac = 0.05);

std::string summary_to_csv(const SummaryMaps& s);

}  // namespace vdrisk::xai
