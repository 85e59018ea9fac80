#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hwctl/hdq.hpp"
#include "hwctl/headway.hpp"
#include "hwctl/network.hpp"

// Largest headway field that keeps a given optimal traffic state feasible.
namespace hwctl::maximin {

enum class Binding { kFdBreakpoint, kShockwaveUpper, kHMax, kCongestedPinned };
const char* to_string(Binding b);

// Admissible headway interval of one cell, in seconds.
struct CellBounds {
  double lower = 0.0;
  double upper = 0.0;
  Binding binding = Binding::kHMax;
};

struct MaximinOptions {
  double strict_eps = 1e-6;     // same margin as the regime rows of the program
  std::vector<double> weights;  // per headway cell, empty for all ones
  double residual_tol = 1e-6;   // x* must satisfy its program to this tolerance
};

struct MaximinReport {
  HeadwayField h_star;
  std::vector<Binding> binding;  // per headway cell
  double l1_norm = 0.0;
  double weighted_sum = 0.0;
  double mean_gap = 0.0;    // seconds
  double mean_ratio = 1.0;  // h* / base
};

// `base` is the field x* was optimized under; n^w* is read from x*.
CellBounds cell_bounds(const Network& net, const GlobalParams& params, const hdq::TrafficState& x,
                       const HeadwayField& base, int link, int k, double strict_eps = 1e-6);

// Whether h (seconds) satisfies the cell's conditions for x* to stay feasible.
bool cell_admits(const Network& net, const GlobalParams& params, const hdq::TrafficState& x,
                 const HeadwayField& base, int link, int k, double h, double strict_eps = 1e-6);

// Closed form. Throws std::invalid_argument when x* violates its own program.
MaximinReport maximin_headway(const Network& net, const GlobalParams& params,
                              const DemandProfile& demand, const hdq::TrafficState& x,
                              const HeadwayField& base, const MaximinOptions& options = {});

// The same program assembled as an LP in h and solved by the simplex engine.
HeadwayField maximin_lp(const Network& net, const GlobalParams& params,
                        const hdq::TrafficState& x, const HeadwayField& base,
                        const MaximinOptions& options = {});

struct PreservationReport {
  bool preserved = false;
  double ttt_star = 0.0;
  double ttt_resolved = 0.0;
  double replay_residual = 0.0;  // max residual of x* under h*
  std::vector<std::string> violations;  // "family link k" entries above tolerance
};

// Re-solves under h* and replays x* through the program built for h*.
PreservationReport verify_optimality_preserved(const HeadwayField& h_star, const Network& net,
                                               const GlobalParams& params,
                                               const DemandProfile& demand, double ttt_star,
                                               const hdq::TrafficState& x,
                                               double rel_tol = 1e-6, double replay_tol = 1e-6);

// (||h - base||_1 / cells, mean(h / base)).
std::pair<double, double> headway_gap_stats(const HeadwayField& h, const HeadwayField& base);

struct UniquenessProbe {
  bool unique = true;
  double spread = 0.0;  // max |x_a - x_b| over the probed optima
  int probes = 0;
};

// Minimizes and maximizes random objectives over the optimal face
// {P'x <= TTT* + tol}; distinct optima mean x* is not unique.
UniquenessProbe probe_alternate_optimum(const Network& net, const GlobalParams& params,
                                        const DemandProfile& demand, const HeadwayField& h,
                                        double ttt_star, std::uint64_t seed, int directions = 2);

// One row per (link, k).
std::string report_csv(const Network& net, const hdq::TrafficState& x, const HeadwayField& base,
                       const MaximinReport& report);

// One row per physical link with time-mean headways.
std::string summary_csv(const Network& net, const HeadwayField& base, const MaximinReport& report);

std::vector<double> link_means(const HeadwayField& h);

}  // namespace hwctl::maximin
