#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hwctl/scenario.hpp"

using hwctl::scenario::Config;

namespace {

template <typename T>
void optional_flag(CLI::App* app, const std::string& name, std::optional<T>& target,
                   const std::string& help) {
  app->add_option_function<T>(name, [&target](const T& v) { target = v; }, help);
}

void common_flags(CLI::App* app, Config& c) {
  app->add_option("--network", c.network, "small, a scenario JSON file, or a TNTP net file")
      ->capture_default_str();
  app->add_option("--trips", c.trips, "TNTP trips file");
  app->add_option("--demand", c.demand, "veh/min per O-D pair on the built-in network")
      ->capture_default_str();
  optional_flag(app, "--dt-min", c.dt, "interval length (min)");
  optional_flag(app, "--horizon-min", c.horizon, "planning horizon (min)");
  optional_flag(app, "--demand-horizon-min", c.demand_horizon, "demand loading horizon (min)");
  optional_flag(app, "--veh-length-km", c.vehicle_length, "effective vehicle length (km)");
  optional_flag(app, "--h-min", c.h_min, "minimum headway on every link (s)");
  optional_flag(app, "--h-max", c.h_max, "maximum headway on every link (s)");
  app->add_option("--out", c.out_dir, "output directory");
  app->add_option("--seed", c.seed, "random seed")->capture_default_str();
  app->add_option("--solver-tol", c.solver_tol, "primal feasibility tolerance")
      ->capture_default_str();
  app->add_option("--jobs", c.jobs, "concurrent sweep levels")->capture_default_str();
}

int report(const hwctl::scenario::RunResult& r, const Config& c) {
  if (c.out_dir.empty())
    std::cout << r.report_json << "\n";
  else
    std::cout << "wrote " << c.out_dir << "\n";
  if (r.exit_code != 0) std::cerr << "error: " << r.error << "\n";
  return r.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  namespace sc = hwctl::scenario;
  CLI::App app{"Headway control for system-optimal dynamic traffic assignment"};
  app.require_subcommand(1);

  Config c;
  auto* solve = app.add_subcommand("solve", "solve at minimum headway");
  auto* maximin = app.add_subcommand("maximin", "maximin headway preserving the optimum");
  auto* descend = app.add_subcommand("descend", "sensitivity-based headway descent");
  auto* sweep = app.add_subcommand("sweep", "maximin gap over demand or minimum headway");
  for (auto* s : {solve, maximin, descend, sweep}) common_flags(s, c);

  maximin->add_option("--probe-directions", c.probe_directions,
                      "random objectives for the uniqueness probe, 0 to skip")
      ->capture_default_str();
  descend->add_option("--eta", c.eta, "step size")->capture_default_str();
  descend->add_option("--iterations", c.iterations, "descent iterations")->capture_default_str();
  descend->add_option("--start", c.descent_start, "uniform starting headway (s)")
      ->capture_default_str();
  bool fixed_step = false;
  descend->add_flag("--fixed-step", fixed_step, "disable halving backtracking");

  std::string param = "demand";
  double lo = 30, hi = 70;
  int steps = 9;
  std::vector<double> h_levels{0.5};
  sweep->add_option("--param", param, "demand or headway")
      ->check(CLI::IsMember({"demand", "headway"}))
      ->capture_default_str();
  sweep->add_option("--lo", lo, "range start")->capture_default_str();
  sweep->add_option("--hi", hi, "range end")->capture_default_str();
  sweep->add_option("--steps", steps, "levels")->capture_default_str();
  sweep->add_option("--h-min-levels", h_levels, "h_min settings for a demand sweep (s)")
      ->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : sc::kConfigError;
  }
  c.backtracking = !fixed_step;

  if (*sweep) {
    try {
      auto rows = param == "demand" ? sc::demand_sweep(c, lo, hi, steps, h_levels)
                                    : sc::headway_sweep(c, lo, hi, steps);
      std::string csv = sc::sweep_csv(rows, param == "headway");
      if (c.out_dir.empty()) {
        std::cout << csv;
      } else {
        std::filesystem::create_directories(c.out_dir);
        std::ofstream(std::filesystem::path(c.out_dir) / ("sweep_" + param + ".csv")) << csv;
        std::cout << "wrote " << c.out_dir << "\n";
      }
      for (const auto& r : rows)
        if (r.status != "ok") return sc::kSolverFailure;
      return 0;
    } catch (const sc::ConfigError& e) {
      std::cerr << "error: " << e.what() << "\n";
      return sc::kConfigError;
    }
  }
  c.kind = *maximin ? sc::Kind::kMaximinHw : *descend ? sc::Kind::kSoHw : sc::Kind::kMinHw;
  return report(sc::run_scenario(c), c);
}
