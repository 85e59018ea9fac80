#pragma once

#include <limits>
#include <string>
#include <vector>

namespace hwctl {

// Sentinel for connector capacities.
inline constexpr double kUnbounded = std::numeric_limits<double>::infinity();

inline constexpr double seconds_to_minutes(double seconds) { return seconds / 60.0; }

// Units: km, min, veh. Headway bounds are in seconds.
struct LinkParams {
  double free_flow_speed = 1.0;  // km/min
  double length = 1.0;           // km
  double q_up_cap = kUnbounded;
  double q_down_cap = kUnbounded;
  double inflow_cap = kUnbounded;
  double outflow_cap = kUnbounded;
  double h_min = 0.5;
  double h_max = 2.5;

  double free_flow_time() const { return length / free_flow_speed; }
  bool operator==(const LinkParams&) const = default;
};

struct Link {
  int id = 0;
  int tail = 0;
  int head = 0;
  LinkParams params;
  bool is_connector = false;
  bool operator==(const Link&) const = default;
};

struct Network {
  std::vector<int> nodes;
  std::vector<Link> links;  // links[i].id == i
  std::vector<int> dummy_origins;
  std::vector<int> dummy_destinations;
  std::vector<int> origin_connectors;
  std::vector<int> destination_connectors;

  std::vector<int> physical_links() const;
  std::vector<int> out_links(int node) const;
  std::vector<int> in_links(int node) const;
  int origin_connector_of(int dummy_origin) const;
  int destination_connector_of(int dummy_destination) const;
  bool is_dummy(int node) const;

  // Appends a physical link and returns its id.
  int add_link(int tail, int head, const LinkParams& params);
  // Adds a dummy origin feeding `node` and returns the dummy id.
  int add_origin(int node);
  int add_destination(int node);

  bool operator==(const Network&) const = default;
};

struct GlobalParams {
  double vehicle_length = 0.005;  // km
  double dt = 5.0;                // min
  int n_intervals = 18;
  double demand_horizon = 40.0;   // min
  double end_slack = 1e-6;        // rho(N) <= (1 - end_slack) / L_ij

  double horizon() const { return dt * n_intervals; }
  int n_demand_intervals() const;
  bool operator==(const GlobalParams&) const = default;
};

struct OdDemand {
  int origin = 0;       // dummy origin
  int destination = 0;  // dummy destination
  std::vector<double> rate;  // veh/min for k = 1..n1
  bool operator==(const OdDemand&) const = default;
};

struct DemandProfile {
  std::vector<OdDemand> pairs;

  double rate(int pair, int k) const;  // k is 1-based
  double total_vehicles(double dt) const;
  std::vector<int> destinations() const;
  bool operator==(const DemandProfile&) const = default;
};

struct Scenario {
  Network network;
  GlobalParams params;
  DemandProfile demand;
};

// Table-4 benchmark: nodes 1..5, origins at 1 and 2, destination at 5.
Scenario build_small_network(double demand_per_od = 50.0);

// Shrinks the vehicle length to `fallback` when the discretization condition
// holds only with equality. Returns the effective vehicle length.
double settle_vehicle_length(const Network& net, GlobalParams& params, double fallback = 0.004);

std::vector<std::string> validate(const Network& net, const GlobalParams& params);

// One uniform demand block of `rate` veh/min for every (origin, destination).
DemandProfile uniform_demand(const Network& net, const GlobalParams& params, double rate);

std::string to_json(const Scenario& scenario);
Scenario scenario_from_json(const std::string& text);

struct TntpOptions {
  double length_to_km = 1.0;
  double capacity_to_veh_per_min = 1.0 / 60.0;
  double trips_to_veh = 1.0;
  double queue_cap_per_km = 200.0;
  double h_min = 0.5;
  double h_max = 2.5;
};

// Parses TNTP net/trips text. Trips are spread uniformly over n1 intervals.
Scenario load_tntp(const std::string& net_text, const std::string& trips_text,
                   const GlobalParams& params, const TntpOptions& options = {});

std::string read_file(const std::string& path);

}  // namespace hwctl
