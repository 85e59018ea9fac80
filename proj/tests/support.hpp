#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hwctl/hdq.hpp"
#include "hwctl/headway.hpp"
#include "hwctl/hfd.hpp"
#include "hwctl/lp.hpp"
#include "hwctl/network.hpp"
#include "hwctl/sensitivity.hpp"

namespace hwctl::fixtures {

// Layered random DAG: nodes 1..n, a chain 1->2->...->n plus random forward
// links, origins at 1 (and 2 when `two_origins`), destination at n.
inline Scenario random_instance(std::mt19937_64& rng, bool two_origins = true) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  auto draw = [&](double lo, double hi) { return lo + (hi - lo) * U(rng); };
  Scenario sc;
  Network& net = sc.network;
  int n = 3 + static_cast<int>(rng() % 3);
  auto add = [&](int tail, int head) {
    LinkParams p;
    p.free_flow_speed = draw(0.9, 1.2);
    p.length = draw(3.2, 4.5);
    p.inflow_cap = p.outflow_cap = draw(40.0, 60.0);
    p.q_up_cap = p.q_down_cap = draw(400.0, 600.0);
    p.h_min = 0.5;
    p.h_max = 2.5;
    net.add_link(tail, head, p);
  };
  for (int i = 1; i < n; ++i) add(i, i + 1);
  for (int i = 1; i <= n; ++i)
    for (int j = i + 2; j <= n; ++j)
      if (U(rng) < 0.5) add(i, j);
  net.add_origin(1);
  if (two_origins && n > 3) net.add_origin(2);
  net.add_destination(n);
  sc.params.dt = 5.0;
  sc.params.n_intervals = 18;
  sc.params.demand_horizon = 20.0;
  sc.params.vehicle_length = 0.004;
  double rate = draw(4.0, 12.0);
  sc.demand = uniform_demand(net, sc.params, rate);
  return sc;
}

// Parameterized LP min P'x s.t. A(h) x = B(h), C(h) x <= D(h), 0 <= x <= 10,
// with every h-dependent entry affine in h.
struct ParametricLp {
  lp::LinearProgram base;  // at h = 0
  std::vector<lp::ParamDerivative> slopes;
  int num_params = 0;

  lp::LinearProgram at(const std::vector<double>& h) const {
    lp::LinearProgram p = base;
    Eigen::MatrixXd A = Eigen::MatrixXd(base.eq_matrix), C = Eigen::MatrixXd(base.ineq_matrix);
    for (const auto& s : slopes) {
      double dv = s.value * h[s.param];
      if (s.col < 0)
        (s.ineq ? p.ineq_rhs : p.eq_rhs)[s.row] += dv;
      else
        (s.ineq ? C : A)(s.row, s.col) += dv;
    }
    p.eq_matrix = A.sparseView();
    p.ineq_matrix = C.sparseView();
    return p;
  }
};

inline ParametricLp random_parametric_lp(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const int n = 3 + static_cast<int>(rng() % 4);
  const int neq = static_cast<int>(rng() % 2);
  const int nin = 3 + static_cast<int>(rng() % 4);
  ParametricLp out;
  out.num_params = 1 + static_cast<int>(rng() % 3);
  lp::LinearProgram& p = out.base;
  p.objective.resize(n);
  for (int j = 0; j < n; ++j) p.objective[j] = U(rng);
  p.lower = Eigen::VectorXd::Zero(n);
  p.upper = Eigen::VectorXd::Constant(n, 10.0);
  Eigen::VectorXd x0(n);
  for (int j = 0; j < n; ++j) x0[j] = 2.0 + 3.0 * (U(rng) + 1.0);
  Eigen::MatrixXd A(neq, n), C(nin, n);
  for (int i = 0; i < neq; ++i)
    for (int j = 0; j < n; ++j) A(i, j) = U(rng);
  for (int i = 0; i < nin; ++i)
    for (int j = 0; j < n; ++j) C(i, j) = U(rng);
  p.eq_matrix = A.sparseView();
  p.eq_rhs = A * x0;
  p.ineq_matrix = C.sparseView();
  p.ineq_rhs = C * x0 + Eigen::VectorXd::Constant(nin, 1.0);
  int k = 2 + static_cast<int>(rng() % 5);
  for (int s = 0; s < k; ++s) {
    lp::ParamDerivative d;
    d.ineq = neq == 0 || rng() % 3 != 0;
    d.row = static_cast<int>(rng() % (d.ineq ? nin : neq));
    d.col = rng() % 2 ? -1 : static_cast<int>(rng() % n);
    d.param = static_cast<int>(rng() % out.num_params);
    d.value = U(rng);
    out.slopes.push_back(d);
  }
  return out;
}

// Active rows and bounds of an LP optimum equal the rows with positive
// multipliers, and together they pin x: the value function is differentiable.
inline bool nondegenerate(const lp::LinearProgram& p, const lp::LpSolution& s) {
  const double tol = 1e-7;
  int active = 0;
  Eigen::VectorXd slack = p.ineq_rhs - p.ineq_matrix * s.x;
  for (int i = 0; i < p.num_ineq(); ++i) {
    bool tight = std::abs(slack[i]) < tol, priced = s.ineq_duals[i] > tol;
    if (tight != priced) return false;
    active += tight;
  }
  for (int j = 0; j < p.num_vars(); ++j) {
    bool tight = std::abs(s.x[j] - p.lower[j]) < tol || std::abs(s.x[j] - p.upper[j]) < tol;
    bool priced = std::abs(s.reduced_costs[j]) > tol;
    if (tight != priced) return false;
    active += tight;
  }
  return active + p.num_eq() == p.num_vars();
}

// Distance of L_ij h / (dt L) from the nearest integer over every cell.
inline double shockwave_margin(const Network& net, const GlobalParams& params,
                               const std::vector<int>& links, const std::vector<double>& values,
                               int n_intervals) {
  double margin = 1.0;
  for (std::size_t c = 0; c < values.size(); ++c) {
    const LinkParams& p = net.links[links[c / n_intervals]].params;
    double r = p.length * seconds_to_minutes(values[c]) / (params.dt * params.vehicle_length);
    margin = std::min(margin, std::abs(r - std::round(r)));
  }
  return margin;
}

inline lp::LinearProgram make(const Eigen::VectorXd& c, const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                       const Eigen::MatrixXd& C, const Eigen::VectorXd& d,
                       const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  lp::LinearProgram p;
  p.objective = c;
  p.eq_matrix = A.sparseView();
  p.eq_rhs = b;
  p.ineq_matrix = C.sparseView();
  p.ineq_rhs = d;
  p.lower = lo;
  p.upper = hi;
  return p;
}

// Brute-force vertex enumeration over every choice of n tight constraints.
inline double vertex_oracle(const lp::LinearProgram& p) {
  const int n = p.num_vars();
  Eigen::MatrixXd rows(0, n);
  Eigen::VectorXd rhs(0);
  auto push = [&](const Eigen::RowVectorXd& a, double b) {
    rows.conservativeResize(rows.rows() + 1, n);
    rows.row(rows.rows() - 1) = a;
    rhs.conservativeResize(rhs.size() + 1);
    rhs[rhs.size() - 1] = b;
  };
  Eigen::MatrixXd C(p.ineq_matrix), A(p.eq_matrix);
  for (int i = 0; i < C.rows(); ++i) push(C.row(i), p.ineq_rhs[i]);
  for (int j = 0; j < n; ++j) {
    Eigen::RowVectorXd e = Eigen::RowVectorXd::Zero(n);
    e[j] = 1;
    push(e, p.upper[j]);
    push(-e, -p.lower[j]);
  }
  const int m = static_cast<int>(rows.rows());
  const int free = n - static_cast<int>(A.rows());
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> pick(free);
  std::function<void(int, int)> rec = [&](int start, int depth) {
    if (depth == free) {
      Eigen::MatrixXd M(n, n);
      Eigen::VectorXd r(n);
      M.topRows(A.rows()) = A;
      r.head(A.rows()) = p.eq_rhs;
      for (int t = 0; t < free; ++t) {
        M.row(A.rows() + t) = rows.row(pick[t]);
        r[A.rows() + t] = rhs[pick[t]];
      }
      Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
      if (lu.rank() < n) return;
      Eigen::VectorXd x = lu.solve(r);
      if (((rows * x - rhs).array() > 1e-7).any()) return;
      if (A.rows() && ((A * x - p.eq_rhs).cwiseAbs().array() > 1e-7).any()) return;
      best = std::min(best, p.objective.dot(x));
      return;
    }
    for (int i = start; i < m; ++i) {
      pick[depth] = i;
      rec(i + 1, depth + 1);
    }
  };
  rec(0, 0);
  return best;
}

inline lp::LinearProgram random_lp(std::mt19937_64& rng, int n, int neq, int nin) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  Eigen::VectorXd c(n), x0(n);
  for (int j = 0; j < n; ++j) {
    c[j] = U(rng);
    x0[j] = 1.0 + U(rng);
  }
  Eigen::MatrixXd A(neq, n), C(nin, n);
  for (int i = 0; i < neq; ++i)
    for (int j = 0; j < n; ++j) A(i, j) = rng() % 3 || j == i ? U(rng) : 0.0;
  for (int i = 0; i < nin; ++i)
    for (int j = 0; j < n; ++j) C(i, j) = rng() % 3 || j == i % n ? U(rng) : 0.0;
  Eigen::VectorXd d = C * x0;
  for (int i = 0; i < nin; ++i) d[i] += rng() % 2 ? 0.0 : 0.5 * (U(rng) + 1.0);
  return make(c, A, A * x0, C, d, Eigen::VectorXd::Zero(n), Eigen::VectorXd::Constant(n, 3.0));
}

inline double enumerate_binaries(const lp::MixedProgram& mip) {
  const int nb = static_cast<int>(mip.binary_idx.size());
  double best = std::numeric_limits<double>::infinity();
  for (int mask = 0; mask < (1 << nb); ++mask) {
    lp::LinearProgram p = mip.base;
    for (int b = 0; b < nb; ++b) p.lower[mip.binary_idx[b]] = p.upper[mip.binary_idx[b]] = (mask >> b) & 1;
    auto s = lp::solve_lp(p);
    if (s.status == lp::Status::kOptimal) best = std::min(best, s.objective);
  }
  return best;
}

// Random LP with up to six of its leading variables made binary; binaries
// enter the rows with their own coefficients.
inline lp::MixedProgram random_mip(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  int n = 3 + static_cast<int>(rng() % 6);
  int nb = 1 + static_cast<int>(rng() % std::min(6, n));
  lp::MixedProgram mip;
  mip.base = random_lp(rng, n, static_cast<int>(rng() % 2), 2 + static_cast<int>(rng() % 4));
  Eigen::MatrixXd C(mip.base.ineq_matrix);
  for (int b = 0; b < nb; ++b) {
    mip.binary_idx.push_back(b);
    mip.base.upper[b] = 1.0;
    for (int i = 0; i < C.rows(); ++i) C(i, b) = 2.0 * U(rng);
  }
  mip.base.ineq_matrix = C.sparseView();
  return mip;
}

// origin -> 1 -> 2 -> destination with one physical link.
inline Scenario single_link(double vf, double length, int n_intervals, double dt) {
  Scenario sc;
  LinkParams p;
  p.free_flow_speed = vf;
  p.length = length;
  p.inflow_cap = p.outflow_cap = 60;
  p.q_up_cap = p.q_down_cap = 800;
  sc.network.add_link(1, 2, p);
  int o = sc.network.add_origin(1);
  int s = sc.network.add_destination(2);
  sc.params.dt = dt;
  sc.params.n_intervals = n_intervals;
  sc.params.demand_horizon = dt;
  sc.params.vehicle_length = 0.004;
  sc.demand.pairs.push_back({o, s, {0.0}});
  return sc;
}

// Pure-delay free-flow schedule on a single link whose free-flow time is a
// whole number of intervals, replayed under a random uniform headway; returns
// the deviation from the classical double-queue expressions.
inline hdq::DqDeviation dq_deviation_on_random_delay_trajectory(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const double dt = 5.0;
  const int m = 1 + static_cast<int>(rng() % 3);
  const double vf = 0.8 + 0.4 * U(rng);
  const int N = 8 + static_cast<int>(rng() % 8);
  auto sc = single_link(vf, vf * dt * m, N, dt);
  auto h = HeadwayField::uniform(sc.network, N, 0.5 + 2.0 * U(rng));
  hdq::TrafficState s(static_cast<int>(sc.network.links.size()), sc.demand.destinations(), N);
  std::vector<double> u(N + 1, 0.0);
  for (int k = 1; k <= N - m; ++k) u[k] = 30.0 * U(rng);
  double qd = 0.0;
  for (int k = 1; k <= N; ++k) {
    auto i = s.at(0, 0, k);
    s.u[i] = u[k];
    s.f[i] = k > m ? u[k - m] : 0.0;
    double v = std::min(s.f[i] + qd / dt, 25.0 * U(rng) + 5.0);
    s.v[i] = v;
    qd += dt * (s.f[i] - v);
  }
  hdq::Routing r;
  r.schedule = s;
  auto sim = hdq::simulate(sc.network, sc.params, sc.demand, h, r);
  return hdq::dq_reduction_check(sc.network, sc.params, sim.state);
}

// Draws a random parameterized program and parameter point. When the optimum
// is nondegenerate and the value is smooth there, returns the relative
// infinity-norm error of the KKT gradient against central differences.
inline std::optional<double> kkt_gradient_error(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(-0.5, 0.5);
  const double step = 1e-6;
  auto solve = [](const lp::LinearProgram& p) { return lp::solve_mip({p, {}}); };
  auto p = random_parametric_lp(rng);
  std::vector<double> h(p.num_params);
  for (double& v : h) v = U(rng);
  auto prog = p.at(h);
  auto sol = solve(prog);
  if (sol.status != lp::Status::kOptimal || !nondegenerate(prog, sol)) return std::nullopt;
  Eigen::VectorXd fd(p.num_params);
  for (int j = 0; j < p.num_params; ++j) {
    auto hp = h, hm = h;
    hp[j] += step;
    hm[j] -= step;
    auto a = solve(p.at(hp)), b = solve(p.at(hm));
    if (a.status != lp::Status::kOptimal || b.status != lp::Status::kOptimal) return std::nullopt;
    fd[j] = (a.objective - b.objective) / (2 * step);
    double fwd = (a.objective - sol.objective) / step;
    if (std::abs(fd[j] - fwd) >= 1e-5 * (1 + std::abs(fd[j]))) return std::nullopt;
  }
  auto kkt = sensitivity::assemble_kkt({prog, {}}, p.slopes, p.num_params, sol);
  Eigen::VectorXd d = sensitivity::gradient_ttt(kkt).dz_dh;
  return (d - fd).cwiseAbs().maxCoeff() / (1 + fd.cwiseAbs().maxCoeff());
}

}  // namespace hwctl::fixtures
