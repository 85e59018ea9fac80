#include "hwctl/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <set>
#include <sstream>
#include <stdexcept>

#include <Eigen/SVD>

namespace hwctl::sensitivity {

namespace {

// Value of the row term a_i x - b_i differentiated by one entry.
double row_term(const lp::ParamDerivative& d, const Eigen::VectorXd& x) {
  return d.col >= 0 ? d.value * x[d.col] : -d.value;
}

}  // namespace

KktSystem assemble_kkt(const lp::MixedProgram& program,
                       const std::vector<lp::ParamDerivative>& derivatives, int num_params,
                       const lp::LpSolution& sol, const KktOptions& options) {
  const lp::LinearProgram& prog = program.base;
  const int n = prog.num_vars();
  const int neq = prog.num_eq();
  const int nin = prog.num_ineq();
  if (sol.status != lp::Status::kOptimal) throw std::invalid_argument("solution is not optimal");
  if (sol.x.size() != n || sol.eq_duals.size() != neq || sol.ineq_duals.size() != nin ||
      sol.reduced_costs.size() != n)
    throw std::invalid_argument("solution carries no duals for this program");
  if (num_params < 0) throw std::invalid_argument("negative parameter count");

  std::set<int> binary(program.binary_idx.begin(), program.binary_idx.end());
  const Eigen::VectorXd& x = sol.x;
  const Eigen::VectorXd& r = sol.reduced_costs;

  // Generalized rows beyond the program's own: frozen binaries and bounds.
  struct BoundRow { int var; double sign; double mu; };
  std::vector<BoundRow> bounds;
  for (int j = 0; j < n; ++j) {
    if (binary.count(j)) continue;
    if (std::isfinite(prog.upper[j])) bounds.push_back({j, 1.0, std::max(-r[j], 0.0)});
    if (std::isfinite(prog.lower[j])) bounds.push_back({j, -1.0, std::max(r[j], 0.0)});
  }
  std::vector<int> frozen(binary.begin(), binary.end());

  KktSystem kkt;
  kkt.n = n;
  kkt.l1 = neq + static_cast<int>(frozen.size());
  kkt.l2 = nin + static_cast<int>(bounds.size());
  kkt.m = num_params;

  Eigen::VectorXd lambda(kkt.l1), mu(kkt.l2);
  lambda.head(neq) = sol.eq_duals;
  for (std::size_t b = 0; b < frozen.size(); ++b) lambda[neq + b] = -r[frozen[b]];
  mu.head(nin) = sol.ineq_duals;
  for (std::size_t b = 0; b < bounds.size(); ++b) mu[nin + b] = bounds[b].mu;

  double cut = options.active_tol * (1.0 + (kkt.l2 ? mu.cwiseAbs().maxCoeff() : 0.0));
  std::vector<int> pos(kkt.l2, -1);
  for (int i = 0; i < kkt.l2; ++i)
    if (mu[i] > cut) {
      pos[i] = static_cast<int>(kkt.active.size());
      kkt.active.push_back(i);
    }
  const int k = static_cast<int>(kkt.active.size());

  const int rows = n + kkt.l1 + k + 1;
  const int cols = n + kkt.l1 + kkt.l2 + 1;
  const int lam0 = n, mu0 = n + kkt.l1, z0 = cols - 1;
  const int eq0 = 1 + n, act0 = 1 + n + kkt.l1;
  kkt.Q = Eigen::MatrixXd::Zero(rows, cols);
  kkt.R = Eigen::MatrixXd::Zero(rows, num_params);
  auto& Q = kkt.Q;

  Q.block(0, 0, 1, n) = prog.objective.transpose();
  Q(0, z0) = -1.0;
  for (int c = 0; c < prog.eq_matrix.outerSize(); ++c)
    for (lp::SparseMatrix::InnerIterator it(prog.eq_matrix, c); it; ++it) {
      Q(1 + it.col(), lam0 + it.row()) = it.value();
      Q(eq0 + it.row(), it.col()) = it.value();
    }
  for (std::size_t b = 0; b < frozen.size(); ++b) {
    Q(1 + frozen[b], lam0 + neq + b) = 1.0;
    Q(eq0 + neq + b, frozen[b]) = 1.0;
  }
  for (int c = 0; c < prog.ineq_matrix.outerSize(); ++c)
    for (lp::SparseMatrix::InnerIterator it(prog.ineq_matrix, c); it; ++it) {
      Q(1 + it.col(), mu0 + it.row()) = it.value();
      if (pos[it.row()] >= 0) Q(act0 + pos[it.row()], it.col()) = it.value();
    }
  for (std::size_t b = 0; b < bounds.size(); ++b) {
    int row = nin + static_cast<int>(b);
    Q(1 + bounds[b].var, mu0 + row) = bounds[b].sign;
    if (pos[row] >= 0) Q(act0 + pos[row], bounds[b].var) = bounds[b].sign;
  }

  kkt.envelope = Eigen::VectorXd::Zero(num_params);
  for (const auto& d : derivatives) {
    if (d.param < 0 || d.param >= num_params || d.row < 0 || d.row >= (d.ineq ? nin : neq) ||
        d.col >= n)
      throw std::invalid_argument("derivative entry out of range");
    double dual = d.ineq ? mu[d.row] : lambda[d.row];
    if (d.col >= 0) kkt.R(1 + d.col, d.param) += dual * d.value;
    double term = row_term(d, x);
    if (!d.ineq)
      kkt.R(eq0 + d.row, d.param) += term;
    else if (pos[d.row] >= 0)
      kkt.R(act0 + pos[d.row], d.param) += term;
    kkt.envelope[d.param] += dual * term;
  }
  return kkt;
}

KktSystem assemble_kkt(const lp::LpSolution& sol, const sodta::ConstraintSystem& sys,
                       const HeadwayField& h, const KktOptions& options) {
  if (!(h == sys.headway)) throw std::invalid_argument("system was built for another headway field");
  return assemble_kkt(sys.program, sys.derivatives, h.size(), sol, options);
}

GradientReport gradient_ttt(const KktSystem& kkt) {
  GradientReport g;
  const int cols = static_cast<int>(kkt.Q.cols());
  Eigen::BDCSVD<Eigen::MatrixXd> svd(kkt.Q, Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(1e-10);
  Eigen::MatrixXd sol = svd.solve(-kkt.R);
  const auto& s = svd.singularValues();
  g.rank = static_cast<int>(svd.rank());
  g.sigma_max = s.size() ? s[0] : 0.0;
  g.sigma_min = g.rank > 0 ? s[g.rank - 1] : 0.0;
  g.condition = g.sigma_min > 0 ? g.sigma_max / g.sigma_min : INFINITY;
  g.dx_dh = sol.topRows(kkt.n);
  g.dlambda_dh = sol.middleRows(kkt.n, kkt.l1);
  g.dmu_dh = sol.middleRows(kkt.n + kkt.l1, kkt.l2);
  g.dz_dh = sol.row(cols - 1).transpose();
  if (kkt.m > 0) {
    g.residual = (kkt.Q * sol + kkt.R).cwiseAbs().maxCoeff();
    g.envelope_gap = (g.dz_dh - kkt.envelope).cwiseAbs().maxCoeff();
  }
  std::ostringstream w;
  if (g.rank < kkt.Q.rows())
    w << "Q has rank " << g.rank << " with " << kkt.Q.rows() << " rows, condition "
      << g.condition << ". ";
  double scale = 1.0 + (kkt.m > 0 ? kkt.R.cwiseAbs().maxCoeff() : 0.0);
  if (g.residual > 1e-8 * scale)
    w << "Least-squares residual " << g.residual << " (degenerate active set).";
  g.warning = w.str();
  return g;
}

Eigen::VectorXd finite_difference_gradient(const Network& net, const GlobalParams& params,
                                           const DemandProfile& demand, const HeadwayField& h,
                                           double step_seconds, int jobs) {
  if (!(step_seconds > 0)) throw std::invalid_argument("step must be positive");
  auto ttt_at = [&](const HeadwayField& field) {
    auto r = sodta::solve_fixed_headway(net, params, demand, field);
    if (r.status != lp::Status::kOptimal)
      throw std::runtime_error(std::string("re-solve is ") + lp::to_string(r.status));
    return r.ttt;
  };
  auto cell_gradient = [&](int c) {
    const LinkParams& p = net.links[h.links[c / h.n_intervals]].params;
    double base = h.values[c];
    double up = std::min(base + step_seconds, p.h_max);
    double down = std::max(base - step_seconds, p.h_min);
    HeadwayField hu = h, hd = h;
    hu.values[c] = up;
    hd.values[c] = down;
    return (ttt_at(hu) - ttt_at(hd)) / (up - down);
  };
  Eigen::VectorXd grad(h.size());
  jobs = std::max(1, jobs);
  for (int start = 0; start < h.size(); start += jobs) {
    std::vector<std::future<double>> batch;
    for (int c = start; c < std::min(h.size(), start + jobs); ++c)
      batch.push_back(std::async(jobs > 1 ? std::launch::async : std::launch::deferred,
                                 cell_gradient, c));
    for (std::size_t i = 0; i < batch.size(); ++i) grad[start + i] = batch[i].get();
  }
  return grad;
}

DescentTrace sensitivity_descent(const Network& net, const GlobalParams& params,
                                 const DemandProfile& demand, const HeadwayField& h0,
                                 const DescentOptions& options) {
  if (!(options.eta > 0)) throw std::invalid_argument("eta must be positive");
  if (options.iterations < 0) throw std::invalid_argument("iterations must be non-negative");
  check_headway_bounds(net, h0);

  DescentTrace trace;
  auto solve = [&](const HeadwayField& h) {
    return sodta::solve_fixed_headway(net, params, demand, h, options.solve);
  };
  auto gradient = [&](const sodta::SolveResult& r, const HeadwayField& h) {
    return gradient_ttt(assemble_kkt(r.solution, r.system, h)).dz_dh;
  };

  sodta::SolveResult cur = solve(h0);
  if (cur.status != lp::Status::kOptimal) {
    trace.status = std::string("initial solve ") + lp::to_string(cur.status);
    return trace;
  }
  HeadwayField h = h0;
  Eigen::VectorXd g = gradient(cur, h);
  trace.h.push_back(h);
  trace.ttt.push_back(cur.ttt);
  trace.grad_norm.push_back(g.size() ? g.cwiseAbs().maxCoeff() : 0.0);
  trace.step.push_back(0.0);

  for (int it = 0; it < options.iterations; ++it) {
    double eta = options.eta;
    bool accepted = false;
    for (int halving = 0; halving <= options.max_halvings; ++halving, eta *= 0.5) {
      HeadwayField next = h;
      for (int c = 0; c < h.size(); ++c) {
        const LinkParams& p = net.links[h.links[c / h.n_intervals]].params;
        next.values[c] = std::clamp(h.values[c] - eta * g[c], p.h_min, p.h_max);
      }
      if (next == h) {
        trace.status = "stationary";
        return trace;
      }
      sodta::SolveResult trial = solve(next);
      bool ok = trial.status == lp::Status::kOptimal;
      if (!options.backtracking) {
        if (!ok) {
          trace.status = std::string("solve ") + lp::to_string(trial.status) + " at iteration " +
                         std::to_string(it + 1);
          return trace;
        }
      } else if (!ok || trial.ttt > cur.ttt + 1e-9 * (1.0 + std::abs(cur.ttt))) {
        trace.backtracking_used = true;
        continue;
      }
      cur = std::move(trial);
      h = next;
      g = gradient(cur, h);
      trace.h.push_back(h);
      trace.ttt.push_back(cur.ttt);
      trace.grad_norm.push_back(g.size() ? g.cwiseAbs().maxCoeff() : 0.0);
      trace.step.push_back(eta);
      accepted = true;
      break;
    }
    if (!accepted) {
      trace.status = "stalled";
      return trace;
    }
  }
  return trace;
}

std::string trace_csv(const DescentTrace& trace) {
  std::ostringstream out;
  out << "iteration,ttt,grad_inf,step\n";
  char buf[128];
  for (std::size_t i = 0; i < trace.ttt.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g,%.10g\n", i, trace.ttt[i], trace.grad_norm[i],
                  trace.step[i]);
    out << buf;
  }
  return out.str();
}

}  // namespace hwctl::sensitivity
