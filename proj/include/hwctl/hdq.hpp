#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hwctl/headway.hpp"
#include "hwctl/network.hpp"

// Headway-dependent double queue: link state, queues, flow bounds and a
// forward simulator.
namespace hwctl::hdq {

// Per-destination link state for k = 0..N. Rates in veh/min, queues in veh.
struct TrafficState {
  int n_links = 0;
  int n_intervals = 0;
  std::vector<int> destinations;  // dummy destination ids, commodity order
  std::vector<double> rho, qd, qu, u, f, v;
  std::vector<int> delta, nw;  // per link and k

  TrafficState() = default;
  TrafficState(int links, std::vector<int> dests, int n_intervals);

  int n_dests() const { return static_cast<int>(destinations.size()); }
  std::size_t at(int link, int d, int k) const {
    return (static_cast<std::size_t>(link) * n_dests() + d) * (n_intervals + 1) + k;
  }
  std::size_t at(int link, int k) const {
    return static_cast<std::size_t>(link) * (n_intervals + 1) + k;
  }
  double total(const std::vector<double>& field, int link, int k) const;
  int dest_index(int dummy_destination) const;
};

// Cumulative curve C(0) = 0, C(k) = C(k-1) + dt * rate[k]; rate[0] is unused.
std::vector<double> cumulative(const std::vector<double>& rate, double dt);

// q^D(k) = F(k) - V(k) + q^D(0).
double downstream_queue(const std::vector<double>& F, const std::vector<double>& V, int k,
                        double qd0 = 0.0);

// q^U(k) = U(k) - F(k - n^w) + q^U(0), with F(j) = 0 for j <= 0.
double upstream_queue(const std::vector<double>& U, const std::vector<double>& F, int nw, int k,
                      double qu0 = 0.0);

struct QueueSnapshot {
  double qu = 0.0;
  double qd = 0.0;
  double f = 0.0;      // f(k)
  double f_lag = 0.0;  // f(k - n^w)
};

struct FlowBounds {
  double u_max = 0.0;
  double v_max = 0.0;
};

FlowBounds flow_upper_bounds(const QueueSnapshot& s, const LinkParams& link);

// Interval form used on discrete trajectories: the queue state is taken at the
// start of interval k.
FlowBounds interval_flow_bounds(const TrafficState& st, int link, int k, const LinkParams& p,
                                double dt);

double vehicles_on_link(double rho, double qd, const LinkParams& link);

struct Residuals {
  std::map<std::string, double> by_family;
  double max() const;
  void note(const std::string& family, double violation);
};

// Either replay exogenous u/f/v schedules or route by destination split
// fractions. Splits are keyed by (node, dummy destination) and list
// (out link, fraction); missing entries split uniformly over out links that
// reach the destination. Split routing requires an acyclic network.
struct Routing {
  std::optional<TrafficState> schedule;
  std::map<std::pair<int, int>, std::vector<std::pair<int, double>>> splits;
};

struct Simulation {
  TrafficState state;
  Residuals residuals;
};

Simulation simulate(const Network& net, const GlobalParams& params, const DemandProfile& demand,
                    const HeadwayField& h, const Routing& routing);

// Recomputes n^w and the per-destination upstream queues from u, f and h.
void fill_upstream_queues(const Network& net, const GlobalParams& params, const HeadwayField& h,
                          TrafficState& st);

// delta = 1 where the aggregate density is at or above the breakpoint.
void classify_regimes(const Network& net, const GlobalParams& params, const HeadwayField& h,
                      TrafficState& st);

// Every constraint family evaluated on a complete state.
Residuals check_state(const Network& net, const GlobalParams& params,
                      const DemandProfile& demand, const HeadwayField& h,
                      const TrafficState& st);

struct DqDeviation {
  double downstream = 0.0;
  double upstream = 0.0;
};

// Compares the double-queue quantities U(k - tau_f/dt) - V(k) and
// U(k) - V(k - n^w) with their headway-dependent counterparts on every
// physical link. With `strict`, a trajectory violating F(k) = U(k - tau_f/dt)
// is rejected.
DqDeviation dq_reduction_check(const Network& net, const GlobalParams& params,
                               const TrafficState& st, bool strict = true);

std::string trajectory_csv(const Network& net, const TrafficState& st);

}  // namespace hwctl::hdq
