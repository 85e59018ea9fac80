#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hwctl/network.hpp"

// Scenario runs and parameter sweeps driven by a flat configuration.
namespace hwctl::scenario {

enum class Kind { kMinHw, kMaximinHw, kSoHw };
const char* to_string(Kind k);
Kind parse_kind(const std::string& name);  // "min-hw", "maximin-hw", "so-hw"

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum ExitCode { kSuccess = 0, kInfeasible = 2, kSolverFailure = 3, kConfigError = 4 };

struct Config {
  std::string network = "small";  // "small", a JSON scenario, or a TNTP net file
  std::string trips;              // TNTP trips file, required with a TNTP net
  double demand = 50.0;           // veh/min per O-D pair, built-in network only
  std::optional<double> dt;              // min
  std::optional<double> horizon;         // min
  std::optional<double> demand_horizon;  // min
  std::optional<double> vehicle_length;  // km
  std::optional<double> h_min;           // s, applied to every physical link
  std::optional<double> h_max;           // s
  Kind kind = Kind::kMinHw;
  std::string out_dir;  // empty: nothing written
  std::uint64_t seed = 1;
  double solver_tol = 1e-7;
  double eta = 1e-4;
  int iterations = 20;
  bool backtracking = true;
  double descent_start = 1.0;  // s, uniform h0 for so-hw
  int probe_directions = 2;    // alternate-optimum probe for maximin-hw, 0 to skip
  int jobs = 1;
};

// Builds the scenario with every override applied. Throws ConfigError.
Scenario load(const Config& config);

struct RunResult {
  int exit_code = kSuccess;
  std::string error;
  double ttt = 0.0;
  double mean_gap = 0.0;    // maximin-hw only, seconds
  double mean_ratio = 1.0;  // maximin-hw only
  std::string report_json;
  std::string trajectory_csv;
  std::string summary_csv;  // per-link mean headways
  std::string extra_name;   // third CSV: maximin cells or descent trace
  std::string extra_csv;
};

// Never throws; failures land in the report and the exit code. Writes
// config.json, report.json, trajectory.csv, headway_summary.csv and the extra
// CSV into out_dir when it is set.
RunResult run_scenario(const Config& config);

struct SweepRow {
  double demand = 0.0;
  double h_min = 0.0;
  double mean_gap = 0.0;
  double ttt = 0.0;
  std::string status = "ok";
};

std::vector<double> levels(double lo, double hi, int steps);

// Maximin gap per (demand, h_min) level; failed levels keep their status.
std::vector<SweepRow> demand_sweep(const Config& base, double lo, double hi, int steps,
                                   const std::vector<double>& h_min_levels);
std::vector<SweepRow> headway_sweep(const Config& base, double lo, double hi, int steps);

// Columns demand,h_min,mean_gap_seconds,ttt,status, or h_min first.
std::string sweep_csv(const std::vector<SweepRow>& rows, bool headway_first);

std::string config_json(const Config& config);

}  // namespace hwctl::scenario
