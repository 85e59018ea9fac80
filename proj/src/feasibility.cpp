#include "hwctl/feasibility.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <tuple>

#include <json.hpp>

#include "hwctl/hfd.hpp"
#include "hwctl/sodta.hpp"

namespace hwctl::feasibility {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double pair_total(const DemandProfile& demand, int p, double dt) {
  double total = 0.0;
  for (double r : demand.pairs[p].rate) total += r * dt;
  return total;
}

double pair_peak(const DemandProfile& demand, int p) {
  double peak = 0.0;
  for (double r : demand.pairs[p].rate) peak = std::max(peak, r);
  return peak;
}

int entry_node(const Network& net, int dummy_origin) {
  return net.links[net.origin_connector_of(dummy_origin)].head;
}

int exit_node(const Network& net, int dummy_destination) {
  return net.links[net.destination_connector_of(dummy_destination)].tail;
}

std::vector<int> unwind(const Network& net, const std::map<int, int>& via, int from, int to) {
  std::vector<int> path;
  for (int n = to; n != from;) {
    int id = via.at(n);
    path.push_back(id);
    n = net.links[id].tail;
  }
  std::reverse(path.begin(), path.end());
  return path;
}

// Shortest free-flow time over physical links; empty optional when unreachable.
std::optional<std::vector<int>> shortest_path(const Network& net, int from, int to) {
  std::map<int, double> dist{{from, 0.0}};
  std::map<int, int> via;
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
  open.push({0.0, from});
  while (!open.empty()) {
    auto [d, n] = open.top();
    open.pop();
    if (d > dist[n]) continue;
    if (n == to) return unwind(net, via, from, to);
    for (int id : net.out_links(n)) {
      const Link& l = net.links[id];
      if (l.is_connector) continue;
      double nd = d + l.params.free_flow_time();
      auto it = dist.find(l.head);
      if (it == dist.end() || nd < it->second) {
        dist[l.head] = nd;
        via[l.head] = id;
        open.push({nd, l.head});
      }
    }
  }
  return std::nullopt;
}

// Maximizes the smallest residual rate along the path, then minimizes free-flow time.
std::optional<std::vector<int>> widest_path(const Network& net, const std::vector<double>& residual,
                                            int from, int to) {
  using Key = std::pair<double, double>;  // (-width, time)
  std::map<int, Key> best{{from, {-kInf, 0.0}}};
  std::map<int, int> via;
  using Item = std::tuple<double, double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
  open.push({-kInf, 0.0, from});
  while (!open.empty()) {
    auto [w, t, n] = open.top();
    open.pop();
    if (Key{w, t} > best[n]) continue;
    if (n == to) return unwind(net, via, from, to);
    for (int id : net.out_links(n)) {
      const Link& l = net.links[id];
      if (l.is_connector) continue;
      Key next{std::max(w, -residual[id]), t + l.params.free_flow_time()};
      auto it = best.find(l.head);
      if (it == best.end() || next < it->second) {
        best[l.head] = next;
        via[l.head] = id;
        open.push({next.first, next.second, l.head});
      }
    }
  }
  return std::nullopt;
}

}  // namespace

double steady_density(double rate, const LinkParams& link) { return rate / link.free_flow_speed; }

FeasibilityPlan make_plan(const Network& net, const GlobalParams& params,
                          const DemandProfile& demand, const PlanOptions& options) {
  FeasibilityPlan plan;
  plan.t1 = params.demand_horizon;
  const double L = params.vehicle_length;
  for (std::size_t p = 0; p < demand.pairs.size(); ++p) {
    OdPlan od;
    od.origin = demand.pairs[p].origin;
    od.destination = demand.pairs[p].destination;
    od.demand = pair_total(demand, static_cast<int>(p), params.dt);
    auto path = shortest_path(net, entry_node(net, od.origin), exit_node(net, od.destination));
    if (!path) {
      if (od.demand > 0)
        throw std::invalid_argument("no path from origin " + std::to_string(od.origin) +
                                    " to destination " + std::to_string(od.destination));
      plan.pairs.push_back(od);
      continue;
    }
    od.path = *path;
    double queue_cap = kInf, lo = 0.0, hi = kInf;
    for (int id : od.path) {
      const LinkParams& lp = net.links[id].params;
      queue_cap = std::min({queue_cap, lp.q_up_cap, lp.q_down_cap});
      lo = std::max(lo, lp.free_flow_speed / lp.length);
      hi = std::min({hi, lp.inflow_cap, lp.outflow_cap,
                     hfd::max_flow(lp.h_max, lp.free_flow_speed, L)});
    }
    if (!(lo < hi))
      throw std::invalid_argument("empty release-rate interval for origin " +
                                  std::to_string(od.origin));
    od.rate = lo + options.rate_position * (hi - lo);
    if (od.demand > 0) {
      double target = std::isfinite(queue_cap) ? options.batch_fraction * queue_cap : od.demand;
      od.batches = static_cast<int>(std::ceil(od.demand / target - 1e-12));
      od.batch = od.demand / od.batches;
    }
    od.release_time = od.batch / od.rate;
    for (int id : od.path) {
      const LinkParams& lp = net.links[id].params;
      double drain = lp.free_flow_time() * std::log(lp.length * od.rate / lp.free_flow_speed);
      od.passage.push_back(od.release_time + drain);
    }
    plan.pairs.push_back(od);
  }
  return plan;
}

double feasibility_horizon(const Network& net, const DemandProfile& demand,
                           const FeasibilityPlan& plan) {
  if (plan.pairs.size() != demand.pairs.size())
    throw std::invalid_argument("plan does not match the demand profile");
  for (const OdPlan& od : plan.pairs)
    if (od.demand > 0 && od.path.empty())
      throw std::invalid_argument("no path for origin " + std::to_string(od.origin));
  (void)net;
  double bound = plan.t1;
  for (const OdPlan& od : plan.pairs) {
    double per_batch = 0.0;
    for (double t : od.passage) per_batch += t;
    bound += od.batches * per_batch;
  }
  return bound;
}

double horizon_bound(const Network& net, const GlobalParams& params, const DemandProfile& demand) {
  return feasibility_horizon(net, demand, make_plan(net, params, demand));
}

std::string plan_json(const Network& net, const FeasibilityPlan& plan) {
  nlohmann::ordered_json j;
  j["t1_min"] = plan.t1;
  nlohmann::ordered_json pairs = nlohmann::ordered_json::array();
  for (const OdPlan& od : plan.pairs) {
    nlohmann::ordered_json links = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < od.path.size(); ++i) {
      const Link& l = net.links[od.path[i]];
      links.push_back({{"link", l.id}, {"tail", l.tail}, {"head", l.head},
                       {"passage_min", od.passage[i]}});
    }
    pairs.push_back({{"origin", od.origin},
                     {"destination", od.destination},
                     {"demand_veh", od.demand},
                     {"batch_veh", od.batch},
                     {"batches", od.batches},
                     {"rate_veh_per_min", od.rate},
                     {"release_min", od.release_time},
                     {"path", links}});
  }
  j["pairs"] = pairs;
  return j.dump(2);
}

Construction construct_feasible_solution(const Network& net, const GlobalParams& params,
                                         const DemandProfile& demand,
                                         const ConstructionOptions& options) {
  const int N = params.n_intervals;
  const double dt = params.dt;
  const double L = params.vehicle_length;
  auto problems = validate(net, params);
  if (!problems.empty()) throw std::invalid_argument("invalid network: " + problems.front());

  Construction out;
  out.headway = options.max_headway ? HeadwayField::maximum(net, N) : HeadwayField::minimum(net, N);
  hdq::TrafficState& st = out.state;
  st = hdq::TrafficState(static_cast<int>(net.links.size()), demand.destinations(), N);

  auto too_short = [&](const std::string& why) {
    double bound = kInf;
    try {
      bound = horizon_bound(net, params, demand);
    } catch (const std::invalid_argument&) {
    }
    return HorizonTooShort(bound, why);
  };

  // Sustainable free-flow rate per link: below the breakpoint, within the
  // flow caps and with the upstream queue bounded by its cap.
  std::vector<double> residual(net.links.size(), 0.0);
  for (int id : net.physical_links()) {
    const LinkParams& p = net.links[id].params;
    double cap = std::min(p.inflow_cap, p.outflow_cap);
    for (int k = 1; k <= N; ++k) {
      double h = out.headway.at(id, k);
      int nw = hfd::shockwave_steps(h, dt, L, p.length);
      cap = std::min(cap, (1.0 - 1e-3) * hfd::max_flow(h, p.free_flow_speed, L));
      cap = std::min(cap, p.q_up_cap / (p.free_flow_time() + nw * dt));
    }
    residual[id] = cap;
  }

  for (std::size_t p = 0; p < demand.pairs.size(); ++p) {
    const OdDemand& od = demand.pairs[p];
    double rate = 0.0;
    std::vector<int> path;
    if (pair_total(demand, static_cast<int>(p), dt) > 0) {
      auto found = widest_path(net, residual, entry_node(net, od.origin), exit_node(net, od.destination));
      if (!found) throw std::invalid_argument("no path for origin " + std::to_string(od.origin));
      path = *found;
      double width = kInf;
      for (int id : path) width = std::min(width, residual[id]);
      rate = std::min(options.rate_fraction * width, pair_peak(demand, static_cast<int>(p)));
      if (!(rate > 0)) throw too_short("no residual capacity for origin " + std::to_string(od.origin));
      for (int id : path) residual[id] -= rate;
    }
    out.paths.push_back(path);
    out.rates.push_back(rate);
  }

  for (std::size_t p = 0; p < demand.pairs.size(); ++p) {
    const OdDemand& od = demand.pairs[p];
    const int d = st.dest_index(od.destination);
    const int oc = net.origin_connector_of(od.origin);
    const int sc = net.destination_connector_of(od.destination);
    const auto& path = out.paths[p];
    std::vector<double> rho(path.size(), 0.0);
    double queue = 0.0;
    for (int k = 1; k <= N; ++k) {
      double arrive = demand.rate(static_cast<int>(p), k);
      double release = std::min(out.rates[p], queue / dt + arrive);
      queue = std::max(0.0, queue + dt * (arrive - release));
      auto o = st.at(oc, d, k);
      st.u[o] += arrive;
      st.f[o] += arrive;
      st.v[o] += release;
      st.qd[o] += queue;
      double in = release;
      for (std::size_t e = 0; e < path.size(); ++e) {
        const LinkParams& lp = net.links[path[e]].params;
        rho[e] = (lp.length * rho[e] + dt * in) / (lp.length + dt * lp.free_flow_speed);
        double f = lp.free_flow_speed * rho[e];
        auto i = st.at(path[e], d, k);
        st.rho[i] += rho[e];
        st.u[i] += in;
        st.f[i] += f;
        st.v[i] += f;
        in = f;
      }
      if (!path.empty() || release > 0) {
        auto s = st.at(sc, d, k);
        st.u[s] += in;
        st.f[s] += in;
        st.v[s] += in;
      }
    }
  }
  hdq::fill_upstream_queues(net, params, out.headway, st);

  for (int id : net.origin_connectors)
    for (int d = 0; d < st.n_dests(); ++d)
      if (st.qd[st.at(id, d, N)] > 1e-9)
        throw too_short("origin queue " + std::to_string(st.qd[st.at(id, d, N)]) +
                        " veh left at the horizon");
  for (int id : net.physical_links()) {
    double left = net.links[id].params.length * st.total(st.rho, id, N);
    if (left > 1.0 - params.end_slack)
      throw too_short(std::to_string(left) + " veh left on link " + std::to_string(id));
  }
  out.ttt = sodta::total_travel_time(st, params, net);
  return out;
}

}  // namespace hwctl::feasibility
