// edgelam-sim: scenario runner and case-study front end.

#include <CLI11.hpp>

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "edgelam/casestudy.hpp"
#include "edgelam/scenario.hpp"

namespace {

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    const double v = std::stod(item, &used);
    if (used != item.size()) throw std::invalid_argument("bad number '" + item + "'");
    out.push_back(v);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Edge large-model deployment simulator"};
  app.require_subcommand(1);

  std::string config;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  auto* run = app.add_subcommand("run", "Run a scenario and write its CSV/JSON outputs");
  run->add_option("--config", config, "Scenario JSON file")->required();
  run->add_option("--out", out_dir, "Output directory")->required();
  run->add_option("--seed", seed, "Override the scenario seed");

  std::string validate_config;
  auto* validate = app.add_subcommand("validate", "Parse and validate a scenario file");
  validate->add_option("--config", validate_config, "Scenario JSON file")->required();

  std::string budgets = "64,128,256";
  bool calibrate = false;
  std::string targets = "0.708,0.596";
  edgelam::TokenBudgetModel model;
  auto* cs = app.add_subcommand("casestudy", "Token-budget memory/latency trade-off table");
  cs->add_option("--budgets", budgets, "Comma-separated per-device token budgets")
      ->capture_default_str();
  cs->add_flag("--calibrate", calibrate, "Fit N, handoff time and base memory to the targets");
  cs->add_option("--targets", targets, "Memory and latency reductions at T=128")
      ->capture_default_str();
  cs->add_option("--tokens", model.total_tokens, "Chain length N")->capture_default_str();
  cs->add_option("--gamma", model.gamma_handoff, "Seconds per handoff")->capture_default_str();
  cs->add_option("--base-mem", model.base_mem, "Bytes per device")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Help and version requests exit 0; every usage error is a config error.
    const int code = app.exit(e);
    return code == 0 ? edgelam::kExitOk : edgelam::kExitConfig;
  }

  if (*run) {
    return edgelam::run_scenario(config, out_dir, seed, std::cerr);
  }
  if (*validate) {
    try {
      const auto sc = edgelam::load_scenario(validate_config);
      std::cout << "ok: " << edgelam::to_string(sc.kind) << " scenario, " << sc.devices.size()
                << " device(s), seed " << sc.seed << "\n";
      return edgelam::kExitOk;
    } catch (const edgelam::ConfigError& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return edgelam::kExitConfig;
    }
  }
  // casestudy
  try {
    const auto t = parse_list(budgets);
    int status = edgelam::kExitOk;
    if (calibrate) {
      const auto tg = parse_list(targets);
      if (tg.size() != 2) throw std::invalid_argument("--targets needs two values");
      const auto cal = edgelam::calibrate_casestudy(tg[0], tg[1], model);
      std::cerr << edgelam::calibration_json(cal).dump(2) << "\n";
      if (!cal.ok) status = edgelam::kExitInfeasible;
      model = cal.model;
    }
    edgelam::write_casestudy_csv(std::cout, edgelam::casestudy_sweep(model, t));
    return status;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return edgelam::kExitConfig;
  }
}
