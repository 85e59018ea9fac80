#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "hwctl/hdq.hpp"
#include "hwctl/headway.hpp"
#include "hwctl/network.hpp"

// Horizon bound from batch-wise single-path loading, and an explicit
// free-flow loading that certifies feasibility for a given horizon.
namespace hwctl::feasibility {

struct OdPlan {
  int origin = 0;       // dummy origin
  int destination = 0;  // dummy destination
  std::vector<int> path;  // physical link ids
  double demand = 0.0;    // veh
  double batch = 0.0;     // B, veh
  int batches = 0;        // n, with n * B = demand
  double rate = 0.0;      // F_B, veh/min
  double release_time = 0.0;   // T_B = B / F_B, min
  std::vector<double> passage;  // T_ij per path link, min
};

struct FeasibilityPlan {
  double t1 = 0.0;  // demand horizon, min
  std::vector<OdPlan> pairs;
};

struct PlanOptions {
  double batch_fraction = 0.9;  // B <= fraction * min queue cap on the path
  double rate_position = 0.5;   // F_B = lo + position * (hi - lo)
};

// Shortest free-flow-time path per O-D pair. Throws std::invalid_argument when
// a pair has no path or the rate interval is empty.
FeasibilityPlan make_plan(const Network& net, const GlobalParams& params,
                          const DemandProfile& demand, const PlanOptions& options = {});

// T_1 + sum over pairs of n * sum over path links of T_ij.
double feasibility_horizon(const Network& net, const DemandProfile& demand,
                           const FeasibilityPlan& plan);

double horizon_bound(const Network& net, const GlobalParams& params, const DemandProfile& demand);

std::string plan_json(const Network& net, const FeasibilityPlan& plan);

class HorizonTooShort : public std::runtime_error {
 public:
  HorizonTooShort(double bound, const std::string& detail)
      : std::runtime_error("horizon too short (" + detail + "); sufficient horizon " +
                           std::to_string(bound) + " min"),
        bound_(bound) {}
  double bound() const { return bound_; }

 private:
  double bound_;
};

struct ConstructionOptions {
  bool max_headway = false;    // load under h_max instead of h_min
  double rate_fraction = 0.9;  // share of the residual bottleneck rate used per pair
};

struct Construction {
  hdq::TrafficState state;
  HeadwayField headway;
  std::vector<std::vector<int>> paths;  // per demand pair
  std::vector<double> rates;            // release rate per demand pair, veh/min
  double ttt = 0.0;
};

// Pairs release their origin queues at a constant rate along one path each,
// concurrently; every link stays in free flow with empty buffer queues.
// Paths are chosen greedily by widest residual bottleneck. Throws
// HorizonTooShort when the network is not empty by the end of the horizon.
Construction construct_feasible_solution(const Network& net, const GlobalParams& params,
                                         const DemandProfile& demand,
                                         const ConstructionOptions& options = {});

// Steady density under u = f = F_B in free flow.
double steady_density(double rate, const LinkParams& link);

}  // namespace hwctl::feasibility
