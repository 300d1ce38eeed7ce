// Reference external scorer speaking the line-delimited JSON protocol on
// stdin/stdout: one request per line in, one response per line out. The score
// is a clamped linear functional of the (optionally masked) video tensor.
//
// The --misbehave flag deliberately violates the protocol in controlled ways
// so the client's error handling can be exercised in tests.

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <map>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "vdrisk/xai.hpp"

namespace {

using nlohmann::json;

double linear_score(const vdrisk::xai::VideoTensor& video,
                    const vdrisk::xai::VideoTensor& weights, double bias,
                    const json& mask) {
  double sum = bias;
  for (std::size_t i = 0; i < video.data.size(); ++i) {
    sum += static_cast<double>(weights.data[i]) *
           static_cast<double>(video.data[i]);
  }
  if (!mask.is_null()) {
    const long t0 = mask.at("t0").get<long>();
    const long t1 = mask.at("t1").get<long>();
    const long r0 = mask.at("r0").get<long>();
    const long r1 = mask.at("r1").get<long>();
    const long c0 = mask.at("c0").get<long>();
    const long c1 = mask.at("c1").get<long>();
    const double fill = mask.at("fill").get<double>();
    if (t0 < 0 || t1 > video.t || t0 > t1 || r0 < 0 || r1 > video.h ||
        r0 > r1 || c0 < 0 || c1 > video.w || c0 > c1) {
      throw std::runtime_error("mask region out of bounds");
    }
    for (long t = t0; t < t1; ++t) {
      for (long r = r0; r < r1; ++r) {
        for (long c = c0; c < c1; ++c) {
          const double v = video.at(t, r, c);
          const double w = weights.at(t, r, c);
          sum += w * (fill - v);
        }
      }
    }
  }
  return std::clamp(sum, 0.0, 1.0);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vd-scorer: reference linear video scorer"};
  std::string weights_path;
  double bias = 0.0;
  std::string misbehave = "none";
  app.add_option("--weights", weights_path, "Weight tensor file")->required();
  app.add_option("--bias", bias, "Additive bias");
  app.add_option("--misbehave", misbehave,
                 "Testing aid: none, unknown-id, out-of-range, garbage, hang, "
                 "exit");
  CLI11_PARSE(app, argc, argv);

  try {
    const auto weights = vdrisk::xai::load_vten(weights_path);
    std::map<std::string, vdrisk::xai::VideoTensor> cache;

    std::string line;
    while (std::getline(std::cin, line)) {
      if (line.empty()) continue;
      if (misbehave == "exit") return 0;
      if (misbehave == "hang") {
        // Swallow requests without ever answering.
        continue;
      }
      if (misbehave == "garbage") {
        std::cout << "this is not a protocol response\n" << std::flush;
        continue;
      }

      const json request = json::parse(line);
      const long id = request.at("id").get<long>();
      const std::string video_path = request.at("video").get<std::string>();
      auto it = cache.find(video_path);
      if (it == cache.end()) {
        it = cache.emplace(video_path, vdrisk::xai::load_vten(video_path))
                 .first;
      }
      if (it->second.data.size() != weights.data.size()) {
        throw std::runtime_error("video and weight tensor shapes differ");
      }
      const json mask =
          request.contains("mask") ? request.at("mask") : json(nullptr);
      double confidence = linear_score(it->second, weights, bias, mask);

      json response;
      response["id"] = misbehave == "unknown-id" ? id + 1000 : id;
      response["confidence"] = misbehave == "out-of-range" ? 2.0 : confidence;
      std::cout << response.dump() << "\n" << std::flush;
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "vd-scorer: " << e.what() << "\n";
    return 1;
  }
}
