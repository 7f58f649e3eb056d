#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "edgelam/scenario.hpp"

using namespace edgelam;
namespace fs = std::filesystem;

namespace {

const fs::path kScenarios = EDGELAM_SCENARIO_DIR;

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("edgelam_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

const char* kMinimalFedft = R"({
  "kind": "fedft",
  "seed": 1,
  "devices": [{"id": "a", "compute_rate": 1e9, "channel_gain": 1e-3}],
  "fedft": {"rounds": 2}
})";

std::string config_error(std::string_view text) {
  try {
    parse_scenario(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("minimal fedft scenario writes a CSV") {
  const fs::path out = fresh_dir("minimal");
  std::ostringstream log;
  CHECK(run_scenario(parse_scenario(kMinimalFedft), out, log) == kExitOk);
  const std::string csv = slurp(out / "fedft_rounds.csv");
  CHECK(csv.rfind("round,global_loss,round_latency_s,selected_devices,bandwidth_hz\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  CHECK(fs::exists(out / "fedft_summary.json"));
}

TEST_CASE("malformed and invalid files map to the config status") {
  const fs::path dir = fresh_dir("malformed");
  std::ofstream(dir / "bad.json") << "{\n  \"kind\": \"fedft\",\n  \"seed\": 1,\n";
  std::ostringstream log;
  CHECK(run_scenario(dir / "bad.json", dir / "out", std::nullopt, log) == kExitConfig);
  CHECK(log.str().find("line") != std::string::npos);
  CHECK(run_scenario(dir / "missing.json", dir / "out", std::nullopt, log) == kExitConfig);
}

TEST_CASE("diagnostics name the offending line or field") {
  CHECK(config_error("{\n\"kind\": \"fedft\",\n\"seed\": ,\n}").find("line 3") != std::string::npos);
  CHECK(config_error(R"({"kind": "nope", "seed": 1})").find("kind") != std::string::npos);
  CHECK(config_error(R"({"kind": "fedft", "devices": []})").find("seed") != std::string::npos);
  CHECK(config_error(R"({"kind": "fedft", "seed": -4, "devices": []})").find("seed") !=
        std::string::npos);
  const std::string rate = config_error(
      R"({"kind": "fedft", "seed": 1, "devices": [{"id": "a", "compute_rate": -1}]})");
  CHECK(rate.find("devices[0].compute_rate") != std::string::npos);
  const std::string rank = config_error(
      R"({"kind": "fedft", "seed": 1, "devices": [{"id": "a", "compute_rate": 1, "local_rank": 9}]})");
  CHECK(rank.find("devices[0].local_rank") != std::string::npos);
  const std::string rounds = config_error(
      R"({"kind": "fedft", "seed": 1, "devices": [{"id": "a", "compute_rate": 1}], "fedft": {"rounds": 0}})");
  CHECK(rounds.find("fedft.rounds") != std::string::npos);
}

TEST_CASE("infeasible scenarios map to the infeasible status") {
  Scenario sc = parse_scenario(kMinimalFedft);
  sc.params["deadline_s"] = 1e-9;
  std::ostringstream log;
  CHECK(run_scenario(sc, fresh_dir("infeasible"), log) == kExitInfeasible);
}

TEST_CASE("bundled scenarios validate") {
  for (const char* name : {"fedft", "unlearn", "moe", "cot", "casestudy"})
    CHECK_NOTHROW(load_scenario(kScenarios / (std::string(name) + ".json")));
}

TEST_CASE("identical config and seed give byte-identical outputs") {
  const fs::path a = fresh_dir("det_a"), b = fresh_dir("det_b");
  std::ostringstream log;
  const fs::path cfg = kScenarios / "cot.json";
  REQUIRE(run_scenario(cfg, a, std::nullopt, log) == kExitOk);
  REQUIRE(run_scenario(cfg, b, std::nullopt, log) == kExitOk);
  CHECK(slurp(a / "cot_result.json") == slurp(b / "cot_result.json"));

  const fs::path c = fresh_dir("det_c"), d = fresh_dir("det_d");
  REQUIRE(run_scenario(parse_scenario(kMinimalFedft), c, log) == kExitOk);
  Scenario other = parse_scenario(kMinimalFedft);
  other.seed = 2;
  REQUIRE(run_scenario(other, d, log) == kExitOk);
  CHECK(slurp(c / "fedft_rounds.csv") != slurp(d / "fedft_rounds.csv"));
}

TEST_CASE("format_number round-trips") {
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(1e6) == "1e+06");
  CHECK(std::stod(format_number(1.0 / 3.0)) == 1.0 / 3.0);
  CHECK(format_number(1.0 / 0.0) == "inf");
}
