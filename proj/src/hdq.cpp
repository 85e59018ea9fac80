#include "hwctl/hdq.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include "hwctl/hfd.hpp"

namespace hwctl::hdq {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

TrafficState::TrafficState(int links, std::vector<int> dests, int n)
    : n_links(links), n_intervals(n), destinations(std::move(dests)) {
  std::size_t cells = static_cast<std::size_t>(links) * destinations.size() * (n + 1);
  for (auto* field : {&rho, &qd, &qu, &u, &f, &v}) field->assign(cells, 0.0);
  delta.assign(static_cast<std::size_t>(links) * (n + 1), 0);
  nw.assign(static_cast<std::size_t>(links) * (n + 1), 0);
}

double TrafficState::total(const std::vector<double>& field, int link, int k) const {
  double s = 0.0;
  for (int d = 0; d < n_dests(); ++d) s += field[at(link, d, k)];
  return s;
}

int TrafficState::dest_index(int dummy_destination) const {
  auto it = std::find(destinations.begin(), destinations.end(), dummy_destination);
  return it == destinations.end() ? -1 : static_cast<int>(it - destinations.begin());
}

std::vector<double> cumulative(const std::vector<double>& rate, double dt) {
  std::vector<double> c(rate.size(), 0.0);
  for (std::size_t k = 1; k < rate.size(); ++k) c[k] = c[k - 1] + dt * rate[k];
  return c;
}

double downstream_queue(const std::vector<double>& F, const std::vector<double>& V, int k,
                        double qd0) {
  double q = F.at(k) - V.at(k) + qd0;
  if (q < -1e-9 * std::max(1.0, std::abs(F.at(k))))
    throw std::domain_error("outflow exceeds boundary flow: negative downstream queue");
  return std::max(q, 0.0);
}

double upstream_queue(const std::vector<double>& U, const std::vector<double>& F, int nw, int k,
                      double qu0) {
  if (nw < 1) throw std::invalid_argument("shockwave steps must be at least one");
  double lagged = k - nw >= 1 ? F.at(k - nw) : 0.0;
  double q = U.at(k) - lagged + qu0;
  if (q < -1e-9 * std::max(1.0, std::abs(U.at(k))))
    throw std::domain_error("boundary flow exceeds inflow: negative upstream queue");
  return std::max(q, 0.0);
}

FlowBounds flow_upper_bounds(const QueueSnapshot& s, const LinkParams& link) {
  FlowBounds b;
  b.u_max = s.qu < link.q_up_cap ? link.inflow_cap : std::min(s.f_lag, link.inflow_cap);
  b.v_max = s.qd > 0 ? link.outflow_cap : std::min(s.f, link.outflow_cap);
  return b;
}

FlowBounds interval_flow_bounds(const TrafficState& st, int link, int k, const LinkParams& p,
                                double dt) {
  double U_prev = 0.0, F_lag = 0.0;
  int nw = st.nw[st.at(link, k)];
  for (int l = 1; l < k; ++l) U_prev += dt * st.total(st.u, link, l);
  for (int l = 1; l <= k - nw; ++l) F_lag += dt * st.total(st.f, link, l);
  FlowBounds b;
  b.u_max = std::min(p.inflow_cap, (p.q_up_cap + F_lag - U_prev) / dt);
  b.v_max = std::min(p.outflow_cap, st.total(st.f, link, k) + st.total(st.qd, link, k - 1) / dt);
  return b;
}

double vehicles_on_link(double rho, double qd, const LinkParams& link) {
  return link.length * rho + qd;
}

double Residuals::max() const {
  double m = 0.0;
  for (const auto& [name, value] : by_family) m = std::max(m, value);
  return m;
}

void Residuals::note(const std::string& family, double violation) {
  double& slot = by_family[family];
  if (!(violation <= slot)) slot = std::isnan(violation) ? kInf : violation;
}

namespace {

bool is_origin_connector(const Network& net, int id) {
  return std::find(net.origin_connectors.begin(), net.origin_connectors.end(), id) !=
         net.origin_connectors.end();
}

bool is_destination_connector(const Network& net, int id) {
  return std::find(net.destination_connectors.begin(), net.destination_connectors.end(), id) !=
         net.destination_connectors.end();
}

// Demand rate for commodity d entering through origin connector `link`.
double connector_demand(const Network& net, const DemandProfile& demand, const TrafficState& st,
                        int link, int d, int k) {
  double r = 0.0;
  for (std::size_t p = 0; p < demand.pairs.size(); ++p) {
    const OdDemand& od = demand.pairs[p];
    if (net.links[link].tail == od.origin && od.destination == st.destinations[d])
      r += demand.rate(static_cast<int>(p), k);
  }
  return r;
}

std::vector<int> topological_nodes(const Network& net) {
  std::map<int, int> indeg;
  for (int n : net.nodes) indeg[n] = 0;
  for (const Link& l : net.links) ++indeg[l.head];
  std::vector<int> order, ready;
  for (auto [n, d] : indeg)
    if (d == 0) ready.push_back(n);
  while (!ready.empty()) {
    int n = ready.front();
    ready.erase(ready.begin());
    order.push_back(n);
    for (int id : net.out_links(n))
      if (--indeg[net.links[id].head] == 0) ready.push_back(net.links[id].head);
  }
  if (order.size() != net.nodes.size())
    throw std::invalid_argument("split routing needs an acyclic network");
  return order;
}

bool reaches(const Network& net, int from, int target) {
  std::set<int> seen{from};
  std::vector<int> stack{from};
  while (!stack.empty()) {
    int n = stack.back();
    stack.pop_back();
    if (n == target) return true;
    for (int id : net.out_links(n))
      if (seen.insert(net.links[id].head).second) stack.push_back(net.links[id].head);
  }
  return false;
}

std::vector<std::pair<int, double>> node_splits(const Network& net, const Routing& routing,
                                                int node, int dest) {
  std::vector<std::pair<int, double>> out;
  auto it = routing.splits.find({node, dest});
  if (it != routing.splits.end()) {
    out = it->second;
  } else {
    for (int id : net.out_links(node))
      if (reaches(net, net.links[id].head, dest)) out.emplace_back(id, 1.0);
  }
  double sum = 0.0;
  for (auto& [id, w] : out) {
    if (w < 0) throw std::invalid_argument("negative split fraction");
    if (net.links[id].tail != node) throw std::invalid_argument("split names a foreign link");
    sum += w;
  }
  if (!out.empty() && !(sum > 0)) throw std::invalid_argument("split fractions sum to zero");
  for (auto& [id, w] : out) w /= sum;
  return out;
}

void simulate_splits(const Network& net, const GlobalParams& params, const DemandProfile& demand,
                     const HeadwayField& h, const Routing& routing, TrafficState& st) {
  const int N = st.n_intervals;
  const int D = st.n_dests();
  const double dt = params.dt;
  const double L = params.vehicle_length;
  auto order = topological_nodes(net);

  std::map<std::pair<int, int>, std::vector<std::pair<int, double>>> splits;
  for (int node : order)
    for (int d = 0; d < D; ++d) splits[{node, d}] = node_splits(net, routing, node, st.destinations[d]);

  for (int k = 1; k <= N; ++k) {
    for (int node : order) {
      // Activate in-links for interval k; their u(k) is already known.
      auto ins = net.in_links(node);
      std::vector<std::vector<double>> send(ins.size(), std::vector<double>(D, 0.0));
      for (std::size_t a = 0; a < ins.size(); ++a) {
        const Link& link = net.links[ins[a]];
        const LinkParams& p = link.params;
        if (is_destination_connector(net, link.id)) {
          for (int d = 0; d < D; ++d) {
            double in = st.u[st.at(link.id, d, k)];
            st.f[st.at(link.id, d, k)] = st.v[st.at(link.id, d, k)] = in;
          }
          continue;
        }
        if (!link.is_connector) {
          double rho_prev = st.total(st.rho, link.id, k - 1);
          double u = st.total(st.u, link.id, k);
          auto tr = hfd::resolve_regime(rho_prev, u, h.at(link.id, k), p, dt, L);
          double mass = p.length * rho_prev + dt * u;
          for (int d = 0; d < D; ++d) {
            double m = p.length * st.rho[st.at(link.id, d, k - 1)] + dt * st.u[st.at(link.id, d, k)];
            double fd = mass > 0 ? tr.flow * m / mass : 0.0;
            st.f[st.at(link.id, d, k)] = fd;
            st.rho[st.at(link.id, d, k)] = std::max(0.0, (m - dt * fd) / p.length);
          }
        }
        double total = 0.0;
        for (int d = 0; d < D; ++d) {
          send[a][d] = st.f[st.at(link.id, d, k)] + st.qd[st.at(link.id, d, k - 1)] / dt;
          total += send[a][d];
        }
        double cap = link.is_connector ? kInf : p.outflow_cap;
        if (total > cap)
          for (double& s : send[a]) s *= cap / total;
      }

      auto outs = net.out_links(node);
      std::map<int, std::vector<double>> wanted;
      for (int id : outs) wanted[id].assign(D, 0.0);
      for (std::size_t a = 0; a < ins.size(); ++a)
        for (int d = 0; d < D; ++d)
          for (auto [id, w] : splits[{node, d}]) wanted[id][d] += send[a][d] * w;

      double theta = 1.0;
      for (int id : outs) {
        const Link& link = net.links[id];
        double want = 0.0;
        for (double x : wanted[id]) want += x;
        if (want <= 0 || link.is_connector) continue;
        const LinkParams& p = link.params;
        int nw = hfd::shockwave_steps(h.at(id, k), dt, L, p.length);
        double U_prev = 0.0, F_lag = 0.0;
        for (int l = 1; l < k; ++l) U_prev += dt * st.total(st.u, id, l);
        for (int l = 1; l <= k - nw; ++l) F_lag += dt * st.total(st.f, id, l);
        double receive = std::min({p.inflow_cap, (p.q_up_cap + F_lag - U_prev) / dt,
                                   p.length * (1.0 / L - st.total(st.rho, id, k - 1)) / dt * (1 - 1e-9)});
        theta = std::min(theta, std::max(0.0, receive) / want);
      }

      // Sending links whose commodity has no way forward keep their queue.
      std::vector<std::vector<double>> moved(ins.size(), std::vector<double>(D, 0.0));
      for (std::size_t a = 0; a < ins.size(); ++a)
        for (int d = 0; d < D; ++d)
          if (!splits[{node, d}].empty()) moved[a][d] = theta * send[a][d];
      for (int id : outs)
        for (int d = 0; d < D; ++d) st.u[st.at(id, d, k)] = theta * wanted[id][d];
      for (std::size_t a = 0; a < ins.size(); ++a) {
        const Link& link = net.links[ins[a]];
        if (is_destination_connector(net, link.id)) continue;
        for (int d = 0; d < D; ++d) {
          st.v[st.at(link.id, d, k)] = moved[a][d];
          st.qd[st.at(link.id, d, k)] =
              std::max(0.0, st.qd[st.at(link.id, d, k - 1)] +
                                dt * (st.f[st.at(link.id, d, k)] - moved[a][d]));
        }
      }
      // Origin connectors start at a dummy node: load their demand now.
      for (int id : outs)
        if (is_origin_connector(net, id))
          for (int d = 0; d < D; ++d) {
            double r = connector_demand(net, demand, st, id, d, k);
            st.u[st.at(id, d, k)] = st.f[st.at(id, d, k)] = r;
          }
    }
  }
}

}  // namespace

void fill_upstream_queues(const Network& net, const GlobalParams& params, const HeadwayField& h,
                          TrafficState& st) {
  const int N = st.n_intervals;
  const double dt = params.dt;
  for (const Link& link : net.links) {
    if (link.is_connector) continue;
    for (int k = 1; k <= N; ++k)
      st.nw[st.at(link.id, k)] = hfd::shockwave_steps(h.at(link.id, k), dt,
                                                      params.vehicle_length, link.params.length);
    for (int d = 0; d < st.n_dests(); ++d) {
      double U = 0.0;
      std::vector<double> F(N + 1, 0.0);
      for (int k = 1; k <= N; ++k) {
        U += dt * st.u[st.at(link.id, d, k)];
        F[k] = F[k - 1] + dt * st.f[st.at(link.id, d, k)];
        int lag = k - st.nw[st.at(link.id, k)];
        st.qu[st.at(link.id, d, k)] = U - (lag >= 1 ? F[lag] : 0.0);
      }
    }
  }
}

void classify_regimes(const Network& net, const GlobalParams& params, const HeadwayField& h,
                      TrafficState& st) {
  for (const Link& link : net.links) {
    if (link.is_connector) continue;
    for (int k = 1; k <= st.n_intervals; ++k) {
      double rc = hfd::critical_density(h.at(link.id, k), link.params.free_flow_speed,
                                        params.vehicle_length);
      st.delta[st.at(link.id, k)] = st.total(st.rho, link.id, k) >= rc ? 1 : 0;
    }
  }
}

Simulation simulate(const Network& net, const GlobalParams& params, const DemandProfile& demand,
                    const HeadwayField& h, const Routing& routing) {
  const int N = params.n_intervals;
  Simulation sim;
  TrafficState& st = sim.state;
  st = TrafficState(static_cast<int>(net.links.size()), demand.destinations(), N);
  check_headway_bounds(net, h);

  if (routing.schedule) {
    const TrafficState& s = *routing.schedule;
    if (s.n_links != st.n_links || s.n_intervals != N || s.destinations != st.destinations)
      throw std::invalid_argument("schedule does not match the network layout");
    st.u = s.u;
    st.f = s.f;
    st.v = s.v;
    for (const Link& link : net.links)
      for (int d = 0; d < st.n_dests(); ++d)
        for (int k = 1; k <= N; ++k) {
          auto i = st.at(link.id, d, k), prev = st.at(link.id, d, k - 1);
          if (!link.is_connector)
            st.rho[i] = st.rho[prev] + params.dt * (st.u[i] - st.f[i]) / link.params.length;
          if (!is_destination_connector(net, link.id))
            st.qd[i] = st.qd[prev] + params.dt * (st.f[i] - st.v[i]);
        }
  } else {
    simulate_splits(net, params, demand, h, routing, st);
  }
  fill_upstream_queues(net, params, h, st);
  classify_regimes(net, params, h, st);
  sim.residuals = check_state(net, params, demand, h, st);
  return sim;
}

Residuals check_state(const Network& net, const GlobalParams& params, const DemandProfile& demand,
                      const HeadwayField& h, const TrafficState& st) {
  Residuals r;
  const int N = st.n_intervals;
  const int D = st.n_dests();
  const double dt = params.dt;
  const double L = params.vehicle_length;
  for (const char* family :
       {"density", "down_queue", "up_queue", "fd", "regime", "shockwave", "queue_cap", "flow_cap",
        "flow_bounds", "node_conservation", "nonnegativity", "initial", "end", "demand",
        "connector"})
    r.by_family[family] = 0.0;

  for (auto* field : {&st.rho, &st.qd, &st.qu, &st.u, &st.f, &st.v})
    for (double x : *field) r.note("nonnegativity", -x);

  for (const Link& link : net.links) {
    const LinkParams& p = link.params;
    const bool origin = is_origin_connector(net, link.id);
    const bool sink = is_destination_connector(net, link.id);
    for (int d = 0; d < D; ++d) {
      r.note("initial", std::abs(st.rho[st.at(link.id, d, 0)]) + std::abs(st.qd[st.at(link.id, d, 0)]));
      r.note("end", std::abs(st.qd[st.at(link.id, d, N)]));
      double U = 0.0;
      std::vector<double> F(N + 1, 0.0);
      for (int k = 1; k <= N; ++k) {
        auto i = st.at(link.id, d, k), prev = st.at(link.id, d, k - 1);
        U += dt * st.u[i];
        F[k] = F[k - 1] + dt * st.f[i];
        if (sink) {
          r.note("connector", std::abs(st.u[i] - st.f[i]) + std::abs(st.f[i] - st.v[i]) +
                                  std::abs(st.qd[i]));
          continue;
        }
        r.note("down_queue", std::abs(st.qd[i] - st.qd[prev] - dt * (st.f[i] - st.v[i])));
        if (origin) {
          double want = connector_demand(net, demand, st, link.id, d, k);
          r.note("demand", std::abs(st.f[i] - want));
          r.note("connector", std::abs(st.u[i] - st.f[i]) + std::abs(st.rho[i]));
          continue;
        }
        r.note("density", std::abs(st.rho[i] - st.rho[prev] - dt * (st.u[i] - st.f[i]) / p.length));
        int lag = k - st.nw[st.at(link.id, k)];
        r.note("up_queue", std::abs(st.qu[i] - (U - (lag >= 1 ? F[lag] : 0.0))));
      }
    }
    if (link.is_connector) continue;

    for (int k = 1; k <= N; ++k) {
      double hk = h.at(link.id, k);
      int nw = hfd::shockwave_steps(hk, dt, L, p.length);
      r.note("shockwave", nw == st.nw[st.at(link.id, k)] ? 0.0 : 1.0);
      double rho = st.total(st.rho, link.id, k);
      double flow = st.total(st.f, link.id, k);
      if (rho > (1.0 + 1e-9) / L) {
        r.note("fd", rho * L - 1.0);
      } else {
        r.note("fd", std::abs(flow - hfd::flow_fd(std::max(rho, 0.0), hk, p, L)));
      }
      double rc = hfd::critical_density(hk, p.free_flow_speed, L);
      r.note("regime", st.delta[st.at(link.id, k)] ? rc - rho : rho - rc);
      r.note("queue_cap", st.total(st.qd, link.id, k) - p.q_down_cap);
      r.note("queue_cap", st.total(st.qu, link.id, k) - p.q_up_cap);
      r.note("flow_cap", st.total(st.u, link.id, k) - p.inflow_cap);
      r.note("flow_cap", st.total(st.v, link.id, k) - p.outflow_cap);
      FlowBounds b = interval_flow_bounds(st, link.id, k, p, dt);
      r.note("flow_bounds", st.total(st.u, link.id, k) - b.u_max);
      r.note("flow_bounds", st.total(st.v, link.id, k) - b.v_max);
    }
    r.note("end", p.length * st.total(st.rho, link.id, N) - (1.0 - params.end_slack));
  }

  for (int node : net.nodes) {
    if (net.is_dummy(node)) continue;
    auto ins = net.in_links(node);
    auto outs = net.out_links(node);
    for (int d = 0; d < D; ++d)
      for (int k = 1; k <= N; ++k) {
        double bal = 0.0;
        for (int id : ins) bal += st.v[st.at(id, d, k)];
        for (int id : outs) bal -= st.u[st.at(id, d, k)];
        r.note("node_conservation", std::abs(bal));
      }
  }
  return r;
}

DqDeviation dq_reduction_check(const Network& net, const GlobalParams& params,
                               const TrafficState& st, bool strict) {
  DqDeviation dev;
  const int N = st.n_intervals;
  const double dt = params.dt;
  for (const Link& link : net.links) {
    if (link.is_connector || N == 0) continue;
    double lag_f = link.params.free_flow_time() / dt;
    int m = static_cast<int>(std::lround(lag_f));
    if (std::abs(lag_f - m) > 1e-9)
      throw std::invalid_argument("free-flow time is not a whole number of intervals");
    int nw = st.nw[st.at(link.id, 1)];
    for (int k = 2; k <= N; ++k)
      if (st.nw[st.at(link.id, k)] != nw)
        throw std::invalid_argument("headway must be fixed along the trajectory");
    std::vector<double> U(N + 1, 0.0), F(N + 1, 0.0), V(N + 1, 0.0), QD(N + 1, 0.0),
        QU(N + 1, 0.0);
    for (int k = 1; k <= N; ++k) {
      U[k] = U[k - 1] + dt * st.total(st.u, link.id, k);
      F[k] = F[k - 1] + dt * st.total(st.f, link.id, k);
      V[k] = V[k - 1] + dt * st.total(st.v, link.id, k);
      QD[k] = st.total(st.qd, link.id, k);
      QU[k] = st.total(st.qu, link.id, k);
    }
    auto at = [](const std::vector<double>& c, int k) { return k >= 1 ? c[k] : 0.0; };
    for (int k = 1; k <= N; ++k) {
      double gap = F[k] - at(U, k - m);
      if (strict && std::abs(gap) > 1e-9 * std::max(1.0, std::abs(F[k])))
        throw std::invalid_argument("trajectory is not free flowing: F(k) != U(k - tau_f/dt)");
      double qd_dq = at(U, k - m) - V[k];
      double qu_dq = U[k] - at(V, k - nw);
      dev.downstream = std::max(dev.downstream, std::abs(qd_dq - QD[k]));
      dev.upstream = std::max(dev.upstream, std::abs(qu_dq - (QU[k] + at(QD, k - nw))));
    }
  }
  return dev;
}

std::string trajectory_csv(const Network& net, const TrafficState& st) {
  std::ostringstream out;
  out << "link,tail,head,destination,k,rho,q_down,q_up,u,f,v,delta,n_w,vehicles\n";
  char buf[64];
  auto num = [&](double x) {
    std::snprintf(buf, sizeof buf, "%.10g", std::abs(x) < 1e-12 ? 0.0 : x);
    return std::string(buf);
  };
  for (const Link& link : net.links)
    for (int d = 0; d < st.n_dests(); ++d)
      for (int k = 1; k <= st.n_intervals; ++k) {
        auto i = st.at(link.id, d, k);
        out << link.id << ',' << link.tail << ',' << link.head << ',' << st.destinations[d] << ','
            << k << ',' << num(st.rho[i]) << ',' << num(st.qd[i]) << ',' << num(st.qu[i]) << ','
            << num(st.u[i]) << ',' << num(st.f[i]) << ',' << num(st.v[i]) << ','
            << st.delta[st.at(link.id, k)] << ',' << st.nw[st.at(link.id, k)] << ','
            << num(vehicles_on_link(st.rho[i], st.qd[i], link.params)) << '\n';
      }
  return out.str();
}

}  // namespace hwctl::hdq
