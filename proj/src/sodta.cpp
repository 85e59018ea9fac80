#include "hwctl/sodta.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "hwctl/feasibility.hpp"
#include "hwctl/hfd.hpp"

namespace hwctl::sodta {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool contains(const std::vector<int>& v, int x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

std::set<int> nodes_reaching(const Network& net, int target) {
  std::set<int> seen{target};
  std::vector<int> stack{target};
  while (!stack.empty()) {
    int n = stack.back();
    stack.pop_back();
    for (int id : net.in_links(n))
      if (seen.insert(net.links[id].tail).second) stack.push_back(net.links[id].tail);
  }
  return seen;
}

double demand_rate(const Network& net, const DemandProfile& demand, int connector, int dest,
                   int k) {
  double r = 0.0;
  for (std::size_t p = 0; p < demand.pairs.size(); ++p)
    if (demand.pairs[p].origin == net.links[connector].tail && demand.pairs[p].destination == dest)
      r += demand.rate(static_cast<int>(p), k);
  return r;
}

double minutes(double h_seconds) { return seconds_to_minutes(h_seconds); }

class RowBuilder {
 public:
  int add(RowTag tag, double rhs) {
    tags.push_back(std::move(tag));
    rhs_.push_back(rhs);
    return static_cast<int>(rhs_.size()) - 1;
  }
  void coef(int row, int col, double value) {
    if (col >= 0 && value != 0.0) trip_.emplace_back(row, col, value);
  }
  bool has_entries_since(std::size_t mark) const { return trip_.size() > mark; }
  std::size_t mark() const { return trip_.size(); }
  void drop_last() {
    tags.pop_back();
    rhs_.pop_back();
  }
  void finish(int n, lp::SparseMatrix& m, Eigen::VectorXd& rhs) const {
    m.resize(static_cast<int>(rhs_.size()), n);
    m.setFromTriplets(trip_.begin(), trip_.end());
    m.makeCompressed();
    rhs = Eigen::Map<const Eigen::VectorXd>(rhs_.data(), static_cast<Eigen::Index>(rhs_.size()));
  }

  std::vector<RowTag> tags;

 private:
  std::vector<Eigen::Triplet<double>> trip_;
  std::vector<double> rhs_;
};

}  // namespace

VarIndex::VarIndex(const Network& net, const DemandProfile& demand, int n_intervals)
    : n_(n_intervals), destinations_(demand.destinations()) {
  const int D = n_dests();
  const std::size_t cells = net.links.size() * D * (n_ + 1);
  for (auto* m : {&rho_, &qd_, &u_, &f_, &v_}) m->assign(cells, -1);
  delta_.assign(net.links.size() * (n_ + 1), -1);
  carries_.assign(net.links.size() * D, 0);

  std::vector<std::set<int>> reach;
  for (int s : destinations_) reach.push_back(nodes_reaching(net, s));

  int next = 0;
  auto slot = [&](std::vector<int>& m, int link, int d, int k) {
    m[(static_cast<std::size_t>(link) * D + d) * (n_ + 1) + k] = next++;
  };
  for (const Link& link : net.links) {
    const bool origin = contains(net.origin_connectors, link.id);
    const bool sink = contains(net.destination_connectors, link.id);
    for (int d = 0; d < D; ++d) {
      bool carry = sink ? link.head == destinations_[d] : reach[d].count(link.head) > 0;
      carries_[link.id * D + d] = carry;
      if (!carry) continue;
      for (int k = 1; k <= n_; ++k) {
        if (sink) {
          slot(u_, link.id, d, k);
        } else if (origin) {
          slot(qd_, link.id, d, k);
          slot(v_, link.id, d, k);
        } else {
          slot(rho_, link.id, d, k);
          slot(qd_, link.id, d, k);
          slot(u_, link.id, d, k);
          slot(f_, link.id, d, k);
          slot(v_, link.id, d, k);
        }
      }
    }
  }
  for (const Link& link : net.links) {
    if (link.is_connector) continue;
    bool any = false;
    for (int d = 0; d < D; ++d) any = any || carries(link.id, d);
    if (!any) continue;
    for (int k = 1; k <= n_; ++k) {
      delta_[link.id * (n_ + 1) + k] = next;
      binaries_.push_back(next++);
    }
  }
  num_vars_ = next;
}

std::vector<std::string> VarIndex::names(const Network& net) const {
  std::vector<std::string> out(num_vars_);
  auto label = [&](const char* field, int link, int d, int k) {
    std::string s = std::string(field) + "_" + std::to_string(net.links[link].tail) + "_" +
                    std::to_string(net.links[link].head);
    if (d >= 0) s += "_s" + std::to_string(destinations_[d]);
    return s + "_" + std::to_string(k);
  };
  for (const Link& link : net.links)
    for (int k = 1; k <= n_; ++k) {
      if (int j = delta(link.id, k); j >= 0) out[j] = label("delta", link.id, -1, k);
      for (int d = 0; d < n_dests(); ++d) {
        if (int j = rho(link.id, d, k); j >= 0) out[j] = label("rho", link.id, d, k);
        if (int j = qd(link.id, d, k); j >= 0) out[j] = label("qd", link.id, d, k);
        if (int j = u(link.id, d, k); j >= 0) out[j] = label("u", link.id, d, k);
        if (int j = f(link.id, d, k); j >= 0) out[j] = label("f", link.id, d, k);
        if (int j = v(link.id, d, k); j >= 0) out[j] = label("v", link.id, d, k);
      }
    }
  return out;
}

ConstraintSystem build_constraints(const Network& net, const GlobalParams& params,
                                   const DemandProfile& demand, const HeadwayField& h,
                                   const BuildOptions& options) {
  auto problems = validate(net, params);
  if (!problems.empty()) throw std::invalid_argument("invalid network: " + problems.front());
  check_headway_bounds(net, h);
  if (h.n_intervals != params.n_intervals)
    throw std::invalid_argument("headway field does not span the horizon");

  const int N = params.n_intervals;
  const double dt = params.dt;
  const double L = params.vehicle_length;
  const double eps = options.strict_eps;

  ConstraintSystem sys;
  sys.index = VarIndex(net, demand, N);
  sys.headway = h;
  sys.strict_eps = eps;
  const VarIndex& ix = sys.index;
  const int n = ix.num_vars();
  const int D = ix.n_dests();

  lp::LinearProgram& lp = sys.program.base;
  lp.objective = Eigen::VectorXd::Zero(n);
  lp.lower = Eigen::VectorXd::Zero(n);
  lp.upper = Eigen::VectorXd::Constant(n, kInf);
  for (int j : ix.binaries()) lp.upper[j] = 1.0;
  sys.program.binary_idx = ix.binaries();

  sys.shockwave.assign(net.links.size() * (N + 1), 0);
  for (int id : net.physical_links())
    for (int k = 1; k <= N; ++k)
      sys.shockwave[id * (N + 1) + k] =
          hfd::shockwave_steps(h.at(id, k), dt, L, net.links[id].params.length);

  RowBuilder eq, ineq;

  for (const Link& link : net.links) {
    const bool origin = contains(net.origin_connectors, link.id);
    const bool sink = contains(net.destination_connectors, link.id);
    for (int d = 0; d < D; ++d) {
      if (!ix.carries(link.id, d)) continue;
      for (int k = 1; k <= N; ++k) {
        double weight = dt * dt * (N - k + 1);
        if (origin) {
          lp.objective[ix.v(link.id, d, k)] += weight;
          lp.objective[ix.qd(link.id, d, k)] += dt;
        }
        if (sink) lp.objective[ix.u(link.id, d, k)] -= weight;
        if (sink) continue;
        if (!origin) {
          int r = eq.add({"density", link.id, d, k}, 0.0);
          eq.coef(r, ix.rho(link.id, d, k), 1.0);
          if (k > 1) eq.coef(r, ix.rho(link.id, d, k - 1), -1.0);
          eq.coef(r, ix.u(link.id, d, k), -dt / link.params.length);
          eq.coef(r, ix.f(link.id, d, k), dt / link.params.length);
        }
        double inflow = origin ? dt * demand_rate(net, demand, link.id, ix.destinations()[d], k)
                               : 0.0;
        int r = eq.add({"down_queue", link.id, d, k}, inflow);
        eq.coef(r, ix.qd(link.id, d, k), 1.0);
        if (k > 1) eq.coef(r, ix.qd(link.id, d, k - 1), -1.0);
        if (!origin) eq.coef(r, ix.f(link.id, d, k), -dt);
        eq.coef(r, ix.v(link.id, d, k), dt);
      }
      if (!sink) lp.upper[ix.qd(link.id, d, N)] = 0.0;
    }
  }

  for (int node : net.nodes) {
    if (net.is_dummy(node)) continue;
    auto ins = net.in_links(node);
    auto outs = net.out_links(node);
    for (int d = 0; d < D; ++d)
      for (int k = 1; k <= N; ++k) {
        std::size_t mark = eq.mark();
        int r = eq.add({"node_conservation", node, d, k}, 0.0);
        for (int id : ins)
          if (ix.carries(id, d)) eq.coef(r, ix.v(id, d, k), 1.0);
        for (int id : outs)
          if (ix.carries(id, d)) eq.coef(r, ix.u(id, d, k), -1.0);
        if (!eq.has_entries_since(mark)) eq.drop_last();
      }
  }

  auto derivative = [&](bool is_ineq, int row, int col, int param, double value) {
    if (value != 0.0) sys.derivatives.push_back({is_ineq, row, col, param, value});
  };

  for (int id : net.physical_links()) {
    const LinkParams& p = net.links[id].params;
    std::vector<int> ds;
    for (int d = 0; d < D; ++d)
      if (ix.carries(id, d)) ds.push_back(d);
    if (ds.empty()) continue;
    const double vf = p.free_flow_speed;
    for (int k = 1; k <= N; ++k) {
      const double hs = h.at(id, k);
      const double hm = minutes(hs);
      const double rc = hfd::critical_density(hs, vf, L);
      const int cell = h.cell(id, k);
      const int dl = ix.delta(id, k);
      const int nw = sys.shockwave[id * (N + 1) + k];
      auto each = [&](int row, auto col_of, double value) {
        for (int d : ds) ineq.coef(row, col_of(d), value);
      };
      auto rho = [&](int d) { return ix.rho(id, d, k); };
      auto flow = [&](int d) { return ix.f(id, d, k); };

      int a = ineq.add({"fd_free_upper", id, -1, k}, 0.0);
      each(a, flow, 1.0);
      each(a, rho, -vf);

      int b = ineq.add({"fd_cong_upper", id, -1, k}, 1.0 / hm);
      each(b, flow, 1.0);
      each(b, rho, L / hm);
      for (int d : ds) derivative(true, b, rho(d), cell, -L / (hm * hm) / 60.0);
      derivative(true, b, -1, cell, -1.0 / (hm * hm) / 60.0);

      int c = ineq.add({"fd_free_lower", id, -1, k}, 0.0);
      each(c, flow, -1.0);
      each(c, rho, vf);
      ineq.coef(c, dl, -vf / L);

      int e = ineq.add({"fd_cong_lower", id, -1, k}, 0.0);
      each(e, flow, -1.0);
      each(e, rho, -L / hm);
      ineq.coef(e, dl, 1.0 / hm);
      for (int d : ds) derivative(true, e, rho(d), cell, L / (hm * hm) / 60.0);
      derivative(true, e, dl, cell, -1.0 / (hm * hm) / 60.0);

      double drc = -rc * rc * vf / 60.0;
      int g = ineq.add({"regime_free", id, -1, k}, (1.0 - eps) * rc);
      each(g, rho, 1.0);
      ineq.coef(g, dl, -1.0 / L);
      derivative(true, g, -1, cell, (1.0 - eps) * drc);

      int cg = ineq.add({"regime_cong", id, -1, k}, 0.0);
      each(cg, rho, -1.0);
      ineq.coef(cg, dl, rc);
      derivative(true, cg, dl, cell, drc);

      if (std::isfinite(p.q_down_cap)) {
        int r = ineq.add({"down_queue_cap", id, -1, k}, p.q_down_cap);
        each(r, [&](int d) { return ix.qd(id, d, k); }, 1.0);
      }
      if (std::isfinite(p.q_up_cap)) {
        int r = ineq.add({"up_queue_cap", id, -1, k}, p.q_up_cap);
        each(r, rho, p.length);
        for (int l = std::max(1, k - nw + 1); l <= k; ++l)
          each(r, [&](int d) { return ix.f(id, d, l); }, dt);
      }
      if (std::isfinite(p.inflow_cap)) {
        int r = ineq.add({"inflow_cap", id, -1, k}, p.inflow_cap);
        each(r, [&](int d) { return ix.u(id, d, k); }, 1.0);
      }
      if (std::isfinite(p.outflow_cap)) {
        int r = ineq.add({"outflow_cap", id, -1, k}, p.outflow_cap);
        each(r, [&](int d) { return ix.v(id, d, k); }, 1.0);
      }
    }
    int r = ineq.add({"end_density", id, -1, N}, (1.0 - params.end_slack) / p.length);
    for (int d : ds) ineq.coef(r, ix.rho(id, d, N), 1.0);
  }

  eq.finish(n, lp.eq_matrix, lp.eq_rhs);
  ineq.finish(n, lp.ineq_matrix, lp.ineq_rhs);
  sys.eq_tags = std::move(eq.tags);
  sys.ineq_tags = std::move(ineq.tags);
  return sys;
}

Eigen::VectorXd state_to_vector(const ConstraintSystem& sys, const hdq::TrafficState& st) {
  const VarIndex& ix = sys.index;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(ix.num_vars());
  if (st.destinations != ix.destinations() || st.n_intervals != ix.n_intervals())
    throw std::invalid_argument("state layout does not match the constraint system");
  for (int link = 0; link < st.n_links; ++link)
    for (int k = 1; k <= st.n_intervals; ++k) {
      if (int j = ix.delta(link, k); j >= 0) x[j] = st.delta[st.at(link, k)];
      for (int d = 0; d < st.n_dests(); ++d) {
        auto i = st.at(link, d, k);
        if (int j = ix.rho(link, d, k); j >= 0) x[j] = st.rho[i];
        if (int j = ix.qd(link, d, k); j >= 0) x[j] = st.qd[i];
        if (int j = ix.u(link, d, k); j >= 0) x[j] = st.u[i];
        if (int j = ix.f(link, d, k); j >= 0) x[j] = st.f[i];
        if (int j = ix.v(link, d, k); j >= 0) x[j] = st.v[i];
      }
    }
  return x;
}

hdq::TrafficState vector_to_state(const Network& net, const GlobalParams& params,
                                  const DemandProfile& demand, const ConstraintSystem& sys,
                                  const Eigen::VectorXd& x) {
  const VarIndex& ix = sys.index;
  const int N = ix.n_intervals();
  hdq::TrafficState st(static_cast<int>(net.links.size()), ix.destinations(), N);
  auto val = [&](int j) { return j >= 0 ? x[j] : 0.0; };
  for (const Link& link : net.links) {
    const bool origin = contains(net.origin_connectors, link.id);
    const bool sink = contains(net.destination_connectors, link.id);
    for (int k = 1; k <= N; ++k) {
      if (int j = ix.delta(link.id, k); j >= 0)
        st.delta[st.at(link.id, k)] = static_cast<int>(std::lround(x[j]));
      for (int d = 0; d < ix.n_dests(); ++d) {
        auto i = st.at(link.id, d, k);
        st.rho[i] = val(ix.rho(link.id, d, k));
        st.qd[i] = val(ix.qd(link.id, d, k));
        st.u[i] = val(ix.u(link.id, d, k));
        st.f[i] = val(ix.f(link.id, d, k));
        st.v[i] = val(ix.v(link.id, d, k));
        if (origin) st.u[i] = st.f[i] = demand_rate(net, demand, link.id, ix.destinations()[d], k);
        if (sink) st.f[i] = st.v[i] = st.u[i];
      }
    }
  }
  hdq::fill_upstream_queues(net, params, sys.headway, st);
  return st;
}

hdq::Residuals constraint_residuals(const ConstraintSystem& sys, const Eigen::VectorXd& x) {
  const lp::LinearProgram& lp = sys.program.base;
  hdq::Residuals r;
  r.by_family["nonnegativity"] = 0.0;
  r.by_family["integrality"] = 0.0;
  Eigen::VectorXd eq = lp.eq_matrix * x - lp.eq_rhs;
  for (int i = 0; i < eq.size(); ++i) r.note(sys.eq_tags[i].family, std::abs(eq[i]));
  Eigen::VectorXd in = lp.ineq_matrix * x - lp.ineq_rhs;
  for (int i = 0; i < in.size(); ++i) r.note(sys.ineq_tags[i].family, std::max(in[i], 0.0));
  std::vector<char> binary(x.size(), 0);
  for (int j : sys.program.binary_idx) binary[j] = 1;
  for (int j = 0; j < x.size(); ++j) {
    r.note("nonnegativity", lp.lower[j] - x[j]);
    if (binary[j]) {
      r.note("delta_range", x[j] - lp.upper[j]);
      r.note("integrality", std::abs(x[j] - std::round(x[j])));
    } else if (lp.upper[j] == 0.0) {
      r.note("end_queue", std::abs(x[j]));
    }
  }
  return r;
}

double replay_row(const Network& net, const GlobalParams& params, const DemandProfile& demand,
                  const ConstraintSystem& sys, const RowTag& tag, const hdq::TrafficState& st) {
  const double dt = params.dt;
  const double L = params.vehicle_length;
  const int k = tag.k;
  const std::string& fam = tag.family;
  if (fam == "node_conservation") {
    double bal = 0.0;
    for (int id : net.in_links(tag.link)) bal += st.v[st.at(id, tag.dest, k)];
    for (int id : net.out_links(tag.link)) bal -= st.u[st.at(id, tag.dest, k)];
    return bal;
  }
  const Link& link = net.links.at(tag.link);
  const LinkParams& p = link.params;
  auto prev = [&](const std::vector<double>& field) {
    return k > 1 ? field[st.at(link.id, tag.dest, k - 1)] : 0.0;
  };
  if (fam == "density") {
    auto i = st.at(link.id, tag.dest, k);
    return st.rho[i] - prev(st.rho) - dt * (st.u[i] - st.f[i]) / p.length;
  }
  if (fam == "down_queue") {
    auto i = st.at(link.id, tag.dest, k);
    double f = st.f[i];
    if (contains(net.origin_connectors, link.id))
      f = demand_rate(net, demand, link.id, st.destinations[tag.dest], k);
    return st.qd[i] - prev(st.qd) - dt * (f - st.v[i]);
  }
  const double rho = st.total(st.rho, link.id, k);
  const double f = st.total(st.f, link.id, k);
  const double hs = sys.headway.at(link.id, k);
  const double hm = minutes(hs);
  const double vf = p.free_flow_speed;
  const double rc = hfd::critical_density(hs, vf, L);
  const double delta = st.delta[st.at(link.id, k)];
  if (fam == "fd_free_upper") return f - vf * rho;
  if (fam == "fd_cong_upper") return f - (1.0 - rho * L) / hm;
  if (fam == "fd_free_lower") return vf * rho - vf * delta / L - f;
  if (fam == "fd_cong_lower") return (delta - rho * L) / hm - f;
  if (fam == "regime_free") return rho - delta / L - (1.0 - sys.strict_eps) * rc;
  if (fam == "regime_cong") return rc * delta - rho;
  if (fam == "down_queue_cap") return st.total(st.qd, link.id, k) - p.q_down_cap;
  if (fam == "up_queue_cap") return st.total(st.qu, link.id, k) - p.q_up_cap;
  if (fam == "inflow_cap") return st.total(st.u, link.id, k) - p.inflow_cap;
  if (fam == "outflow_cap") return st.total(st.v, link.id, k) - p.outflow_cap;
  if (fam == "end_density") return rho - (1.0 - params.end_slack) / p.length;
  throw std::invalid_argument("unknown row family: " + fam);
}

double total_travel_time(const hdq::TrafficState& st, const GlobalParams& params,
                         const Network& net) {
  const double dt = params.dt;
  double ttt = 0.0;
  for (int d = 0; d < st.n_dests(); ++d) {
    for (int id : net.origin_connectors) {
      double V = 0.0;
      for (int k = 1; k <= st.n_intervals; ++k) {
        V += dt * st.v[st.at(id, d, k)];
        ttt += dt * V + dt * st.qd[st.at(id, d, k)];
      }
    }
    for (int id : net.destination_connectors) {
      double U = 0.0;
      for (int k = 1; k <= st.n_intervals; ++k) {
        U += dt * st.u[st.at(id, d, k)];
        ttt -= dt * U;
      }
    }
  }
  return ttt;
}

SolveResult solve_fixed_headway(const Network& net, const GlobalParams& params,
                                const DemandProfile& demand, const HeadwayField& h,
                                const SolveOptions& options) {
  using Clock = std::chrono::steady_clock;
  SolveResult res;
  auto t0 = Clock::now();
  res.system = build_constraints(net, params, demand, h, options.build);
  auto t1 = Clock::now();
  res.build_seconds = std::chrono::duration<double>(t1 - t0).count();

  const ConstraintSystem& sys = res.system;
  if (sys.index.num_vars() == 0) {
    res.status = lp::Status::kOptimal;
    res.solution.status = lp::Status::kOptimal;
    res.state = vector_to_state(net, params, demand, sys, Eigen::VectorXd());
    return res;
  }
  if (options.relax_binaries)
    res.solution = lp::solve_lp(sys.program.base, options.mip.tol);
  else
    res.solution = lp::solve_mip(sys.program, options.mip);
  res.solve_seconds = std::chrono::duration<double>(Clock::now() - t1).count();
  res.status = res.solution.status;

  if (res.status == lp::Status::kOptimal) {
    res.state = vector_to_state(net, params, demand, sys, res.solution.x);
    res.ttt = res.solution.objective;
    res.residuals = constraint_residuals(sys, res.solution.x);
  } else if (res.status == lp::Status::kInfeasible) {
    try {
      res.horizon_bound = feasibility::horizon_bound(net, params, demand);
    } catch (const std::exception&) {
      res.horizon_bound.reset();
    }
  }
  return res;
}

std::string report_json(const Network& net, const SolveResult& result) {
  nlohmann::ordered_json j;
  j["status"] = lp::to_string(result.status);
  j["ttt"] = result.ttt;
  j["iterations"] = result.solution.iterations;
  j["nodes"] = result.solution.nodes;
  j["variables"] = result.system.index.num_vars();
  j["equalities"] = result.system.program.base.num_eq();
  j["inequalities"] = result.system.program.base.num_ineq();
  j["binaries"] = result.system.program.binary_idx.size();
  j["build_seconds"] = result.build_seconds;
  j["solve_seconds"] = result.solve_seconds;
  if (result.horizon_bound) j["horizon_bound_min"] = *result.horizon_bound;
  nlohmann::ordered_json res = nlohmann::ordered_json::object();
  for (const auto& [family, value] : result.residuals.by_family) res[family] = value;
  j["max_residual"] = res;
  nlohmann::ordered_json regimes = nlohmann::ordered_json::array();
  const hdq::TrafficState& st = result.state;
  if (st.n_links > 0)
    for (int id : net.physical_links()) {
      std::string pattern;
      for (int k = 1; k <= st.n_intervals; ++k)
        pattern += st.delta[st.at(id, k)] ? '1' : '0';
      regimes.push_back({{"link", id},
                         {"tail", net.links[id].tail},
                         {"head", net.links[id].head},
                         {"delta", pattern}});
    }
  j["regimes"] = regimes;
  return j.dump(2);
}

}  // namespace hwctl::sodta
