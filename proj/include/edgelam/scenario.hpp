#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "edgelam/error.hpp"
#include "edgelam/netsim.hpp"

namespace edgelam {

/// Malformed or invalid scenario file. what() carries the line or field path.
class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class ScenarioKind { kFedFt, kUnlearn, kMoe, kCot, kCaseStudy };

std::string_view to_string(ScenarioKind kind);

struct ChannelConfig {
  double total_bandwidth = 1e6;  // Hz
  double noise_density = 1e-9;   // W/Hz
  bool fading = false;
};

struct Scenario {
  ScenarioKind kind = ScenarioKind::kFedFt;
  std::uint64_t seed = 0;
  std::vector<DeviceProfile> devices;
  ChannelConfig channel;
  /// Kind-specific block, already checked by parse_scenario.
  nlohmann::json params;
};

/// Parses and validates a scenario document. Throws ConfigError.
Scenario parse_scenario(std::string_view text);
Scenario load_scenario(const std::filesystem::path& path);

enum ExitStatus : int { kExitOk = 0, kExitConfig = 2, kExitInfeasible = 3 };

/// Runs the scenario and writes its CSV/JSON outputs into out_dir.
/// Diagnostics go to `log`. Returns an ExitStatus value.
int run_scenario(const std::filesystem::path& config, const std::filesystem::path& out_dir,
                 std::optional<std::uint64_t> seed_override, std::ostream& log);

/// Same, for an already parsed scenario.
int run_scenario(const Scenario& scenario, const std::filesystem::path& out_dir, std::ostream& log);

/// Shortest round-trip decimal form; "inf"/"-inf"/"nan" for non-finite values.
std::string format_number(double v);

}  // namespace edgelam

#include "edgelam/casestudy.hpp"

namespace edgelam {

void write_casestudy_csv(std::ostream& os, const std::vector<BudgetRow>& rows);
nlohmann::json calibration_json(const CalibrationResult& result);

}  // namespace edgelam
