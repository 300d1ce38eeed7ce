#include "vdrisk/xai.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <mutex>
#include <numeric>

#include <json.hpp>

#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include "vdrisk/errors.hpp"
#include "vdrisk/textio.hpp"

namespace vdrisk::xai {

namespace {

constexpr std::uint32_t kVtenVersion = 1;
constexpr std::uint64_t kMaxCells = 1ull << 30;  // 1 GiCell guard against absurd headers

void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

std::uint32_t get_u32(const std::string& bytes, std::size_t off) {
  return static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off])) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + 1])) << 8 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + 2])) << 16 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + 3])) << 24;
}

}  // namespace

VideoTensor VideoTensor::zeros(std::uint32_t t, std::uint32_t h, std::uint32_t w) {
  VideoTensor v;
  v.t = t;
  v.h = h;
  v.w = w;
  v.data.assign(static_cast<std::size_t>(t) * h * w, 0.0f);
  return v;
}

std::string vten_to_bytes(const VideoTensor& v) {
  if (v.t < 1 || v.h < 1 || v.w < 1)
    throw InvalidInputError("video tensor dimensions must all be at least 1");
  const std::uint64_t cells = static_cast<std::uint64_t>(v.t) * v.h * v.w;
  if (v.data.size() != cells)
    throw InvalidInputError("video tensor data size does not match its dimensions");
  std::string out;
  out.reserve(20 + 4 * v.data.size());
  out += "VTEN";
  put_u32(out, kVtenVersion);
  put_u32(out, v.t);
  put_u32(out, v.h);
  put_u32(out, v.w);
  for (float f : v.data) {
    if (!std::isfinite(f)) throw InvalidInputError("video tensor contains non-finite values");
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
  }
  return out;
}

VideoTensor vten_from_bytes(const std::string& bytes) {
  if (bytes.size() < 20 || bytes.compare(0, 4, "VTEN") != 0)
    throw ParseError("not a VTEN container (bad magic or truncated header)", 0, "magic");
  std::uint32_t version = get_u32(bytes, 4);
  if (version != kVtenVersion)
    throw ParseError("unsupported VTEN version " + std::to_string(version), 0, "version");
  VideoTensor v;
  v.t = get_u32(bytes, 8);
  v.h = get_u32(bytes, 12);
  v.w = get_u32(bytes, 16);
  if (v.t < 1 || v.h < 1 || v.w < 1)
    throw ParseError("VTEN dimensions must all be at least 1", 0, "dims");
  const std::uint64_t cells = static_cast<std::uint64_t>(v.t) * v.h * v.w;
  if (cells > kMaxCells) throw ParseError("VTEN header declares an implausible size", 0, "dims");
  if (bytes.size() != 20 + 4 * cells)
    throw ParseError("VTEN payload size does not match the declared dimensions", 0, "payload");
  v.data.resize(cells);
  for (std::uint64_t i = 0; i < cells; ++i) {
    std::uint32_t bits = get_u32(bytes, 20 + 4 * i);
    float f;
    std::memcpy(&f, &bits, 4);
    if (!std::isfinite(f))
      throw ParseError("VTEN payload contains a non-finite value", 0, "payload");
    v.data[i] = f;
  }
  return v;
}

VideoTensor load_vten(const std::filesystem::path& path) {
  return vten_from_bytes(textio::read_file(path));
}

void save_vten(const VideoTensor& v, const std::filesystem::path& path) {
  textio::write_file(path, vten_to_bytes(v));
}

// --- Scorers -----------------------------------------------------------------

namespace {

void check_region(const MaskRegion& m, std::uint32_t t, std::uint32_t h, std::uint32_t w) {
  if (m.t0 < 0 || m.t1 > static_cast<long>(t) || m.t0 >= m.t1 || m.r0 < 0 ||
      m.r1 > static_cast<long>(h) || m.r0 >= m.r1 || m.c0 < 0 ||
      m.c1 > static_cast<long>(w) || m.c0 >= m.c1)
    throw InvalidInputError("mask region does not fit the video dimensions");
  if (!std::isfinite(m.fill)) throw InvalidInputError("mask fill value must be finite");
}

}  // namespace

LinearScorer::LinearScorer(VideoTensor video, VideoTensor weights, double bias, bool clamp)
    : video_(std::move(video)), weights_(std::move(weights)), bias_(bias), clamp_(clamp) {
  if (video_.t != weights_.t || video_.h != weights_.h || video_.w != weights_.w)
    throw InvalidInputError("weight tensor dimensions do not match the video");
  double acc = bias_;
  for (std::size_t i = 0; i < video_.data.size(); ++i)
    acc += static_cast<double>(weights_.data[i]) * static_cast<double>(video_.data[i]);
  unmasked_ = acc;
}

double LinearScorer::score(const std::optional<MaskRegion>& mask) {
  double s = unmasked_;
  if (mask) {
    const MaskRegion& m = *mask;
    check_region(m, video_.t, video_.h, video_.w);
    for (long ti = m.t0; ti < m.t1; ++ti)
      for (long ri = m.r0; ri < m.r1; ++ri)
        for (long ci = m.c0; ci < m.c1; ++ci) {
          double wgt = weights_.at(static_cast<std::uint32_t>(ti), static_cast<std::uint32_t>(ri),
                                   static_cast<std::uint32_t>(ci));
          double val = video_.at(static_cast<std::uint32_t>(ti), static_cast<std::uint32_t>(ri),
                                 static_cast<std::uint32_t>(ci));
          s += wgt * (m.fill - val);
        }
  }
  return clamp_ ? std::clamp(s, 0.0, 1.0) : s;
}

SubprocessScorer::SubprocessScorer(std::vector<std::string> command, std::string video_path,
                                   int timeout_ms)
    : video_path_(std::move(video_path)), timeout_ms_(timeout_ms) {
  if (command.empty()) throw InvalidInputError("scorer command is empty");

  // A dead child must surface as a protocol error on read/write, not SIGPIPE.
  static std::once_flag ignore_sigpipe;
  std::call_once(ignore_sigpipe, [] { ::signal(SIGPIPE, SIG_IGN); });

  int to_child[2] = {-1, -1}, from_child[2] = {-1, -1};
  if (::pipe(to_child) != 0 || ::pipe(from_child) != 0)
    throw ScorerProtocolError("cannot create pipes to the scorer process", 0);

  pid_t pid = ::fork();
  if (pid < 0) throw ScorerProtocolError("cannot fork the scorer process", 0);
  if (pid == 0) {
    ::dup2(to_child[0], STDIN_FILENO);
    ::dup2(from_child[1], STDOUT_FILENO);
    ::close(to_child[0]);
    ::close(to_child[1]);
    ::close(from_child[0]);
    ::close(from_child[1]);
    std::vector<char*> argv;
    argv.reserve(command.size() + 1);
    for (auto& arg : command) argv.push_back(arg.data());
    argv.push_back(nullptr);
    ::execvp(argv[0], argv.data());
    ::_exit(127);
  }
  child_pid_ = pid;
  to_child_ = to_child[1];
  from_child_ = from_child[0];
  ::close(to_child[0]);
  ::close(from_child[1]);
}

SubprocessScorer::~SubprocessScorer() {
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
  if (child_pid_ > 0) {
    // The reference scorer exits on stdin EOF; give a stuck child a bounded
    // grace period before killing it.
    for (int i = 0; i < 200; ++i) {
      if (::waitpid(child_pid_, nullptr, WNOHANG) != 0) return;
      ::usleep(10000);
    }
    ::kill(child_pid_, SIGKILL);
    ::waitpid(child_pid_, nullptr, 0);
  }
}

std::string SubprocessScorer::read_line() {
  for (;;) {
    std::size_t nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    struct pollfd pfd{from_child_, POLLIN, 0};
    int rc = ::poll(&pfd, 1, timeout_ms_);
    if (rc == 0)
      throw ScorerProtocolError("scorer timed out after " + std::to_string(timeout_ms_) + " ms",
                                next_id_ - 1);
    if (rc < 0) throw ScorerProtocolError("poll on scorer pipe failed", next_id_ - 1);
    char chunk[4096];
    ssize_t n = ::read(from_child_, chunk, sizeof chunk);
    if (n <= 0)
      throw ScorerProtocolError("scorer closed its output stream", next_id_ - 1);
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

double SubprocessScorer::score(const std::optional<MaskRegion>& mask) {
  const long id = next_id_++;
  nlohmann::ordered_json req;
  req["id"] = id;
  req["video"] = video_path_;
  if (mask) {
    req["mask"] = {{"t0", mask->t0}, {"t1", mask->t1}, {"r0", mask->r0}, {"r1", mask->r1},
                   {"c0", mask->c0}, {"c1", mask->c1}, {"fill", mask->fill}};
  } else {
    req["mask"] = nullptr;
  }
  std::string line = req.dump() + "\n";
  const char* p = line.data();
  std::size_t left = line.size();
  while (left > 0) {
    ssize_t n = ::write(to_child_, p, left);
    if (n <= 0) throw ScorerProtocolError("cannot write to the scorer process", id);
    p += n;
    left -= static_cast<std::size_t>(n);
  }

  std::string resp_line = read_line();
  nlohmann::json resp;
  try {
    resp = nlohmann::json::parse(resp_line);
  } catch (const nlohmann::json::parse_error&) {
    throw ScorerProtocolError("scorer response is not valid JSON", id);
  }
  if (!resp.is_object() || !resp.contains("id") || !resp.contains("confidence") ||
      !resp["id"].is_number_integer())
    throw ScorerProtocolError("scorer response is missing id or confidence", id);
  if (resp["id"].get<long>() != id)
    throw ScorerProtocolError("scorer answered with unknown id " +
                                  std::to_string(resp["id"].get<long>()),
                              id);
  if (!resp["confidence"].is_number())
    throw ScorerProtocolError("scorer confidence is not a number", id);
  double c = resp["confidence"].get<double>();
  if (!std::isfinite(c) || c < 0.0 || c > 1.0)
    throw ScorerProtocolError("scorer confidence " + textio::fmt(c) + " is outside [0,1]", id);
  return c;
}

// --- Occlusion --------------------------------------------------------------------

const char* to_string(OcclusionVariant v) {
  return v == OcclusionVariant::masked_sequence ? "masked_sequence" : "spatiotemporal";
}

OcclusionVariant occlusion_variant_from_string(const std::string& s) {
  if (s == "masked_sequence") return OcclusionVariant::masked_sequence;
  if (s == "spatiotemporal") return OcclusionVariant::spatiotemporal;
  throw InvalidInputError("unknown occlusion variant \"" + s +
                          "\" (expected masked_sequence or spatiotemporal)");
}

namespace {

// Grid positions: step by stride while a full patch fits, then a tail
// position flush with the far edge so coverage is total.
std::vector<long> grid_positions(long dim, long patch, long stride) {
  std::vector<long> starts;
  for (long s = 0; s + patch <= dim; s += stride) starts.push_back(s);
  if (starts.empty() || starts.back() + patch < dim) starts.push_back(dim - patch);
  return starts;
}

}  // namespace

AttributionMap occlude(const VideoTensor& video, const MaskSpec& spec, Scorer& scorer) {
  const long T = video.t, H = video.h, W = video.w;
  if (spec.patch_h < 1 || spec.patch_h > H || spec.patch_w < 1 || spec.patch_w > W)
    throw InvalidInputError("patch size does not fit the video dimensions");
  if (spec.stride_h < 1 || spec.stride_w < 1) throw InvalidInputError("stride must be >= 1");
  const bool st = spec.variant == OcclusionVariant::spatiotemporal;
  if (st && (spec.window < 1 || spec.window > T))
    throw InvalidInputError("temporal window does not fit the video length");

  const std::vector<long> rows = grid_positions(H, spec.patch_h, spec.stride_h);
  const std::vector<long> cols = grid_positions(W, spec.patch_w, spec.stride_w);
  const std::vector<long> times =
      st ? grid_positions(T, spec.window, spec.window) : std::vector<long>{0};
  const long t_extent = st ? spec.window : T;

  AttributionMap map;
  map.variant = spec.variant;
  map.t = st ? video.t : 1;
  map.h = video.h;
  map.w = video.w;
  const std::size_t cells = static_cast<std::size_t>(map.t) * map.h * map.w;
  std::vector<double> sum(cells, 0.0);
  std::vector<long> count(cells, 0);

  const double base = scorer.score(std::nullopt);
  for (long pt : times) {
    for (long pr : rows) {
      for (long pc : cols) {
        MaskRegion region{pt, pt + t_extent, pr, pr + spec.patch_h, pc, pc + spec.patch_w,
                          spec.fill};
        double delta = base - scorer.score(region);
        // Spatiotemporal cells carry the per-frame share of the window's
        // drop; summing the T axis over a non-overlapping window grid then
        // reproduces the whole-sequence map of a time-additive scorer.
        double cell_value = st ? delta / static_cast<double>(spec.window) : delta;
        long mt0 = st ? pt : 0, mt1 = st ? pt + t_extent : 1;
        for (long ti = mt0; ti < mt1; ++ti)
          for (long ri = pr; ri < pr + spec.patch_h; ++ri)
            for (long ci = pc; ci < pc + spec.patch_w; ++ci) {
              std::size_t idx = (static_cast<std::size_t>(ti) * map.h + ri) * map.w + ci;
              sum[idx] += cell_value;
              count[idx] += 1;
            }
      }
    }
  }

  map.values.resize(cells);
  for (std::size_t i = 0; i < cells; ++i)
    map.values[i] = sum[i] / static_cast<double>(count[i]);
  return map;
}

std::string map_to_csv(const AttributionMap& map) {
  textio::CsvBuilder csv({"t", "row", "col", "value"});
  for (std::uint32_t ti = 0; ti < map.t; ++ti)
    for (std::uint32_t ri = 0; ri < map.h; ++ri)
      for (std::uint32_t ci = 0; ci < map.w; ++ci)
        csv.add_row({std::to_string(ti), std::to_string(ri), std::to_string(ci),
                     textio::fmt(map.at(ti, ri, ci))});
  return csv.str();
}

// --- Representative selection ---------------------------------------------------------

std::vector<std::size_t> select_representative(const std::vector<VideoTensor>& videos,
                                               std::size_t n) {
  if (n > videos.size())
    throw InvalidInputError("cannot select " + std::to_string(n) + " of " +
                            std::to_string(videos.size()) + " videos");
  if (videos.empty()) return {};
  const std::uint32_t h = videos[0].h, w = videos[0].w;
  for (const auto& v : videos)
    if (v.h != h || v.w != w)
      throw InvalidInputError("videos have heterogeneous frame dimensions");

  const std::size_t frame = static_cast<std::size_t>(h) * w;
  std::vector<std::vector<double>> means(videos.size(), std::vector<double>(frame, 0.0));
  for (std::size_t i = 0; i < videos.size(); ++i) {
    const VideoTensor& v = videos[i];
    for (std::uint32_t ti = 0; ti < v.t; ++ti)
      for (std::size_t c = 0; c < frame; ++c)
        means[i][c] += v.data[static_cast<std::size_t>(ti) * frame + c];
    for (std::size_t c = 0; c < frame; ++c) means[i][c] /= static_cast<double>(v.t);
  }
  std::vector<double> global(frame, 0.0);
  for (const auto& m : means)
    for (std::size_t c = 0; c < frame; ++c) global[c] += m[c];
  for (std::size_t c = 0; c < frame; ++c) global[c] /= static_cast<double>(videos.size());

  std::vector<double> dist(videos.size(), 0.0);
  for (std::size_t i = 0; i < videos.size(); ++i) {
    double ss = 0.0;
    for (std::size_t c = 0; c < frame; ++c) {
      double d = means[i][c] - global[c];
      ss += d * d;
    }
    dist[i] = std::sqrt(ss);
  }
  std::vector<std::size_t> order(videos.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
  order.resize(n);
  return order;
}

// --- Summaries --------------------------------------------------------------------------

SummaryMaps summarize(const std::vector<AttributionMap>& maps, double top_frac) {
  if (maps.empty()) throw InvalidInputError("no attribution maps to summarize");
  if (!(top_frac >= 0.0 && top_frac <= 1.0))
    throw InvalidInputError("top fraction must lie in [0,1]");
  const AttributionMap& first = maps[0];
  for (const auto& m : maps)
    if (m.t != first.t || m.h != first.h || m.w != first.w || m.variant != first.variant)
      throw InvalidInputError("attribution maps have heterogeneous shapes");

  const std::size_t cells = first.values.size();
  SummaryMaps s;
  s.t = first.t;
  s.h = first.h;
  s.w = first.w;
  s.n_maps = static_cast<long>(maps.size());
  s.mean.assign(cells, 0.0);
  s.median.assign(cells, 0.0);
  s.top_positive.assign(cells, 0);
  s.top_negative.assign(cells, 0);

  std::vector<double> column(maps.size());
  for (std::size_t c = 0; c < cells; ++c) {
    double sum = 0.0;
    for (std::size_t m = 0; m < maps.size(); ++m) {
      column[m] = maps[m].values[c];
      sum += column[m];
    }
    s.mean[c] = sum / static_cast<double>(maps.size());
    std::sort(column.begin(), column.end());
    const std::size_t mid = column.size() / 2;
    s.median[c] = column.size() % 2 == 1 ? column[mid]
                                         : 0.5 * (column[mid - 1] + column[mid]);
  }

  // ceil(frac*cells) computed with a tiny backoff so that exactly-integer
  // products (e.g. 0.05 * 400) are not pushed up by binary representation
  // error in frac.
  s.top_cap = static_cast<long>(
      std::ceil(top_frac * static_cast<double>(cells) - 1e-9));
  s.top_cap = std::clamp(s.top_cap, 0l, static_cast<long>(cells));

  std::vector<std::size_t> pos, neg;
  for (std::size_t c = 0; c < cells; ++c) {
    if (s.mean[c] > 0.0) pos.push_back(c);
    else if (s.mean[c] < 0.0) neg.push_back(c);
  }
  std::sort(pos.begin(), pos.end(), [&](std::size_t a, std::size_t b) {
    return s.mean[a] != s.mean[b] ? s.mean[a] > s.mean[b] : a < b;
  });
  std::sort(neg.begin(), neg.end(), [&](std::size_t a, std::size_t b) {
    return s.mean[a] != s.mean[b] ? s.mean[a] < s.mean[b] : a < b;
  });
  for (std::size_t i = 0; i < pos.size() && i < static_cast<std::size_t>(s.top_cap); ++i)
    s.top_positive[pos[i]] = 1;
  for (std::size_t i = 0; i < neg.size() && i < static_cast<std::size_t>(s.top_cap); ++i)
    s.top_negative[neg[i]] = 1;
  return s;
}

std::string summary_to_csv(const SummaryMaps& s) {
  textio::CsvBuilder csv({"t", "row", "col", "mean", "median", "top_positive", "top_negative"});
  for (std::uint32_t ti = 0; ti < s.t; ++ti)
    for (std::uint32_t ri = 0; ri < s.h; ++ri)
      for (std::uint32_t ci = 0; ci < s.w; ++ci) {
        std::size_t idx = (static_cast<std::size_t>(ti) * s.h + ri) * s.w + ci;
        csv.add_row({std::to_string(ti), std::to_string(ri), std::to_string(ci),
                     textio::fmt(s.mean[idx]), textio::fmt(s.median[idx]),
                     std::to_string(s.top_positive[idx]), std::to_string(s.top_negative[idx])});
      }
  return csv.str();
}

}  // namespace vdrisk::xai
