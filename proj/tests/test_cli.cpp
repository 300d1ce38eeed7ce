#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "vdrisk/rng.hpp"
#include "vdrisk/textio.hpp"
#include "vdrisk/xai.hpp"

using nlohmann::json;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("cli_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

// Runs the tool through the shell, returning its exit code; stdout/stderr are
// captured into files when paths are given.
int run_cli(const std::string& args, const fs::path& out_file = {},
            const fs::path& err_file = {}, const std::string& env_prefix = {}) {
  std::string cmd;
  if (!env_prefix.empty()) cmd += env_prefix + " ";
  cmd += std::string(VDRISK_CLI_BIN) + " " + args;
  cmd += out_file.empty() ? " >/dev/null" : (" >" + out_file.string());
  cmd += err_file.empty() ? " 2>/dev/null" : (" 2>" + err_file.string());
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) { return vdrisk::textio::read_file(p); }

long line_count(const std::string& text) {
  return static_cast<long>(std::count(text.begin(), text.end(), '\n'));
}

}  // namespace

TEST_CASE("version and usage errors") {
  TempDir dir;
  const auto out = dir.path / "out.txt";
  CHECK(run_cli("--version", out) == 0);
  CHECK(slurp(out).find("vdrisk 1.0.0") != std::string::npos);

  CHECK(run_cli("frobnicate") == 2);                  // unknown subcommand
  CHECK(run_cli("simulate") == 2);                    // missing required --n
  CHECK(run_cli("cox --cohort x.csv") == 2);          // missing --covariates
}

TEST_CASE("data errors exit 3 with a structured report on stderr") {
  TempDir dir;
  const auto err = dir.path / "err.txt";
  CHECK(run_cli("score2 --cohort " + (dir.path / "missing.csv").string(), {}, err) == 3);
  const auto j = json::parse(slurp(err));
  CHECK(j.contains("error"));
  CHECK(j["error"]["exit_code"] == 3);
  CHECK(j["error"]["type"].is_string());
  CHECK(!j["error"]["message"].get<std::string>().empty());
}

TEST_CASE("simulation is deterministic and writes meta sidecars") {
  TempDir a, b;
  const std::string args = "simulate --n 60 --seed 11 --videos 2 --clips 3 --out ";
  REQUIRE(run_cli(args + a.path.string()) == 0);
  REQUIRE(run_cli(args + b.path.string()) == 0);

  for (const char* name : {"cohort.csv", "predictions.csv", "cohort.csv.meta.json",
                           "predictions.csv.meta.json"}) {
    CAPTURE(name);
    REQUIRE(fs::exists(a.path / name));
    CHECK(slurp(a.path / name) == slurp(b.path / name));
  }

  const auto meta = json::parse(slurp(a.path / "cohort.csv.meta.json"));
  CHECK(meta["artifact"] == "cohort.csv");
  CHECK(meta["tool"] == "vdrisk");
  CHECK(meta["version"] == "1.0.0");
  CHECK(meta["config"]["command"] == "simulate");
  CHECK(meta["config"]["n"] == 60);
  CHECK(meta["config"]["seed"] == 11);

  const std::string cohort = slurp(a.path / "cohort.csv");
  CHECK(line_count(cohort) == 61);  // header + one row per participant
}

TEST_CASE("VDRISK_OUT supplies the default output directory") {
  TempDir dir;
  REQUIRE(run_cli("simulate --n 10 --seed 1", {}, {},
                  "VDRISK_OUT=" + dir.path.string()) == 0);
  CHECK(fs::exists(dir.path / "cohort.csv"));
  CHECK(fs::exists(dir.path / "predictions.csv"));
}

TEST_CASE("scoring, survival, and discrimination commands round-trip") {
  TempDir dir;
  const std::string cohort = (dir.path / "cohort.csv").string();
  REQUIRE(run_cli("simulate --n 300 --seed 5 --out " + dir.path.string()) == 0);

  SUBCASE("score2 writes one decision per participant") {
    REQUIRE(run_cli("score2 --cohort " + cohort + " --out " + dir.path.string()) == 0);
    const std::string csv = slurp(dir.path / "score2.csv");
    CHECK(csv.find("participant_id,scored,reason,linear_predictor,"
                   "uncalibrated_risk,calibrated_risk,stratum") == 0);
    CHECK(line_count(csv) == 301);
  }

  SUBCASE("cox reports a converged model for informative covariates") {
    REQUIRE(run_cli("cox --cohort " + cohort +
                    " --endpoint all_cause_death --covariates age,vd_confidence"
                    " --out " + dir.path.string()) == 0);
    const auto j = json::parse(slurp(dir.path / "cox.json"));
    CHECK(j["covariates"] == json::array({"age", "vd_confidence"}));
    CHECK(j["convergence"]["converged"] == true);
    CHECK(j["hazard_ratios"].size() == 2);
    CHECK(j["c_index"].get<double>() > 0.5);
  }

  SUBCASE("duplicate covariate names are rejected as invalid input, exit 3") {
    CHECK(run_cli("cox --cohort " + cohort +
                  " --endpoint all_cause_death --covariates age,age --out " +
                  dir.path.string()) == 3);
  }

  SUBCASE("linearly dependent covariates are a numerical failure, exit 4") {
    // Rewrite dbp as exactly half of sbp: halving is exact in binary floating
    // point, so the two columns normalize to bitwise-identical vectors and
    // the information matrix is singular at the first iteration.
    auto table = vdrisk::textio::read_csv(dir.path / "cohort.csv");
    const int sbp = table.column("sbp");
    const int dbp = table.column("dbp");
    REQUIRE(sbp >= 0);
    REQUIRE(dbp >= 0);
    vdrisk::textio::CsvBuilder rebuilt(table.header);
    for (auto& row : table.rows) {
      const double s = std::stod(row[static_cast<std::size_t>(sbp)]);
      row[static_cast<std::size_t>(dbp)] = vdrisk::textio::fmt(s / 2.0);
      rebuilt.add_row(row);
    }
    const auto collinear = dir.path / "collinear.csv";
    vdrisk::textio::write_file(collinear, rebuilt.str());
    CHECK(run_cli("cox --cohort " + collinear.string() +
                  " --endpoint all_cause_death --covariates sbp,dbp --out " +
                  dir.path.string()) == 4);
  }

  SUBCASE("km stratified by vd confidence") {
    REQUIRE(run_cli("km --cohort " + cohort +
                    " --endpoint all_cause_death --strata vd --threshold 0.67"
                    " --out " + dir.path.string()) == 0);
    CHECK(fs::exists(dir.path / "km_vd_high.csv"));
    CHECK(fs::exists(dir.path / "km_vd_low.csv"));
    CHECK(fs::exists(dir.path / "km.svg"));
    const auto j = json::parse(slurp(dir.path / "km_summary.json"));
    CHECK(j["strata"] == "vd");
    CHECK(j["groups"][0]["name"] == "vd_high");
    CHECK(j["groups"][0]["n"].get<long>() +
              j["groups"][1]["n"].get<long>() == 300);
  }

  SUBCASE("group comparison tables") {
    REQUIRE(run_cli("group-compare --cohort " + cohort + " --threshold 0.67 --out " +
                    dir.path.string()) == 0);
    const std::string table = slurp(dir.path / "group_table.csv");
    CHECK(table.find("group,n,parameter,kind") == 0);
    CHECK(line_count(table) == 1 + 4 * 10);
    CHECK(line_count(slurp(dir.path / "group_ratios.csv")) == 1 + 24);
  }

  SUBCASE("aggregation from per-clip predictions") {
    REQUIRE(run_cli("aggregate --predictions " + (dir.path / "predictions.csv").string() +
                    " --cohort " + cohort + " --out " + dir.path.string()) == 0);
    const std::string agg = slurp(dir.path / "aggregated.csv");
    CHECK(line_count(agg) == 301);
    CHECK(fs::exists(dir.path / "stratified.csv"));
    const auto j = json::parse(slurp(dir.path / "aggregate_summary.json"));
    CHECK(j.contains("balanced_accuracy"));
    CHECK(j.contains("auc"));
  }
}

TEST_CASE("occlusion command with both scorer styles") {
  TempDir dir;
  vdrisk::rng::SplitMix64 g(3141);
  auto video = vdrisk::xai::VideoTensor::zeros(2, 6, 6);
  auto video2 = vdrisk::xai::VideoTensor::zeros(2, 6, 6);
  auto weights = vdrisk::xai::VideoTensor::zeros(2, 6, 6);
  for (auto& f : video.data) f = static_cast<float>(g.uniform01());
  for (auto& f : video2.data) f = static_cast<float>(g.uniform01());
  // Small weights keep every masked score strictly inside (0, 1), so the
  // external scorer's clamp never bites and both paths agree bit-for-bit.
  for (auto& f : weights.data) f = static_cast<float>(g.uniform(-0.004, 0.004));
  const auto vp = dir.path / "probe.vten";
  const auto vp2 = dir.path / "probe2.vten";
  const auto wp = dir.path / "weights.vten";
  vdrisk::xai::save_vten(video, vp);
  vdrisk::xai::save_vten(video2, vp2);
  vdrisk::xai::save_vten(weights, wp);

  const std::string geometry = " --patch-h 2 --patch-w 2 --stride-h 2 --stride-w 2";

  SUBCASE("in-process linear scorer") {
    REQUIRE(run_cli("occlude --video " + vp.string() + " --video " + vp2.string() +
                    " --linear-weights " + wp.string() + " --bias 0.5" + geometry +
                    " --out " + dir.path.string()) == 0);
    CHECK(fs::exists(dir.path / "attribution_probe.csv"));
    CHECK(fs::exists(dir.path / "attribution_probe2.csv"));
    CHECK(fs::exists(dir.path / "attribution_summary.csv"));
    const std::string csv = slurp(dir.path / "attribution_probe.csv");
    CHECK(csv.find("t,row,col,value") == 0);
    CHECK(line_count(csv) == 1 + 36);  // masked_sequence: one frame of cells
    const std::string summary = slurp(dir.path / "attribution_summary.csv");
    CHECK(summary.find("t,row,col,mean,median,top_positive,top_negative") == 0);
  }

  SUBCASE("subprocess scorer parity with the linear scorer") {
    TempDir sub;
    REQUIRE(run_cli("occlude --video " + vp.string() + " --linear-weights " +
                    wp.string() + " --bias 0.5" + geometry + " --out " +
                    dir.path.string()) == 0);
    REQUIRE(run_cli("occlude --video " + vp.string() + " --scorer-cmd '" +
                    std::string(VDSCORER_BIN) + " --weights " + wp.string() +
                    " --bias 0.5'" + geometry + " --out " + sub.path.string()) == 0);
    // Confidences travel as shortest round-trip decimal text, which parses
    // back to the identical double, so the artifacts must agree bit-for-bit.
    CHECK(slurp(dir.path / "attribution_probe.csv") ==
          slurp(sub.path / "attribution_probe.csv"));
  }

  SUBCASE("protocol violations exit 5") {
    CHECK(run_cli("occlude --video " + vp.string() + " --scorer-cmd '" +
                  std::string(VDSCORER_BIN) + " --weights " + wp.string() +
                  " --misbehave garbage'" + geometry + " --out " +
                  dir.path.string()) == 5);
  }

  SUBCASE("corrupt tensor input exits 3") {
    const auto bad = dir.path / "bad.vten";
    vdrisk::textio::write_file(bad, "VTENgarbage");
    CHECK(run_cli("occlude --video " + bad.string() + " --linear-weights " +
                  wp.string() + " --out " + dir.path.string()) == 3);
  }
}

TEST_CASE("replica pipeline smoke run is deterministic") {
  TempDir a, b;
  const std::string args = "replica --n 400 --seed 2 --out ";
  REQUIRE(run_cli(args + a.path.string()) == 0);
  REQUIRE(run_cli(args + b.path.string()) == 0);

  const auto j = json::parse(slurp(a.path / "replica_summary.json"));
  CHECK(j["n"] == 400);
  CHECK(j.contains("c_index_full"));
  CHECK(j.contains("c_index_comparison"));
  CHECK(j.contains("km_survival_at_horizon"));
  CHECK(j.contains("reclassification"));

  // Every artifact, metadata included, must be byte-identical across runs.
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(a.path))
    names.push_back(entry.path().filename().string());
  CHECK(names.size() > 10);
  for (const auto& name : names) {
    CAPTURE(name);
    REQUIRE(fs::exists(b.path / name));
    CHECK(slurp(a.path / name) == slurp(b.path / name));
  }
}
