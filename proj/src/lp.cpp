#include "hwctl/lp.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <queue>
#include <sstream>

#include "simplex.hpp"

namespace hwctl::lp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool finite_entries(const SparseMatrix& m) {
  for (int k = 0; k < m.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(m, k); it; ++it)
      if (!std::isfinite(it.value())) return false;
  return true;
}

}  // namespace

const char* to_string(Status s) {
  switch (s) {
    case Status::kOptimal: return "optimal";
    case Status::kInfeasible: return "infeasible";
    case Status::kUnbounded: return "unbounded";
  }
  return "unknown";
}

void LinearProgram::validate() const {
  const int n = num_vars();
  if (lower.size() != n || upper.size() != n)
    throw std::invalid_argument("bound vectors must match the objective length");
  if (eq_matrix.rows() != eq_rhs.size() || (eq_matrix.rows() > 0 && eq_matrix.cols() != n))
    throw std::invalid_argument("equality system has inconsistent dimensions");
  if (ineq_matrix.rows() != ineq_rhs.size() || (ineq_matrix.rows() > 0 && ineq_matrix.cols() != n))
    throw std::invalid_argument("inequality system has inconsistent dimensions");
  if (!objective.allFinite() || !eq_rhs.allFinite() || !ineq_rhs.allFinite() ||
      !finite_entries(eq_matrix) || !finite_entries(ineq_matrix))
    throw std::invalid_argument("program data must be finite");
  for (int j = 0; j < n; ++j)
    if (std::isnan(lower[j]) || std::isnan(upper[j]) || lower[j] > upper[j] ||
        lower[j] == kInf || upper[j] == -kInf)
      throw std::invalid_argument("bad bounds on variable " + std::to_string(j));
}

namespace {

// Zero-row programs trip Eigen's column checks; give them an explicit width.
LinearProgram normalized(const LinearProgram& lp) {
  LinearProgram out = lp;
  if (out.eq_matrix.rows() == 0) out.eq_matrix.resize(0, lp.num_vars());
  if (out.ineq_matrix.rows() == 0) out.ineq_matrix.resize(0, lp.num_vars());
  return out;
}

}  // namespace

LpSolution solve_lp(const LinearProgram& lp, const Tolerances& tol, const Basis* warm_start) {
  lp.validate();
  detail::Simplex simplex(normalized(lp), tol);
  if (warm_start && !warm_start->empty()) simplex.load_basis(*warm_start);
  Status s = simplex.solve();
  LpSolution sol = simplex.solution();
  sol.status = s;
  return sol;
}

namespace {

struct Node {
  double bound;
  int depth;
  long id;
  std::vector<std::pair<int, double>> fix;
  Basis basis;
};

struct NodeOrder {
  bool operator()(const Node& a, const Node& b) const {
    if (a.bound != b.bound) return a.bound > b.bound;
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.id > b.id;
  }
};

}  // namespace

LpSolution solve_mip(const MixedProgram& mip, const MipOptions& options) {
  const LinearProgram& base = mip.base;
  base.validate();
  for (int j : mip.binary_idx) {
    if (j < 0 || j >= base.num_vars())
      throw std::invalid_argument("binary index out of range");
    if (base.lower[j] < 0.0 || base.upper[j] > 1.0)
      throw std::invalid_argument("binary variable bounds must lie in [0,1]");
  }
  if (mip.binary_idx.empty()) return solve_lp(base, options.tol);

  const Tolerances& tol = options.tol;
  detail::Simplex simplex(normalized(base), tol);
  Status root = simplex.solve();
  if (root != Status::kOptimal) {
    LpSolution sol = simplex.solution();
    sol.status = root;
    return sol;
  }

  std::priority_queue<Node, std::vector<Node>, NodeOrder> open;
  double incumbent = kInf;
  std::vector<std::pair<int, double>> incumbent_fix;
  Basis incumbent_basis;
  bool have_incumbent = false;
  long next_id = 0;
  int nodes = 0;

  auto evaluate = [&](const Node& node) {
    double z = simplex.objective_value();
    if (z >= incumbent - 1e-10 * (1.0 + std::abs(incumbent))) return;
    Eigen::VectorXd x = simplex.structural_values();
    int branch = -1;
    double most = tol.integrality;
    for (int j : mip.binary_idx) {
      double frac = std::abs(x[j] - std::round(x[j]));
      if (frac > most + 1e-15) {
        most = frac;
        branch = j;
      }
    }
    if (branch < 0) {
      incumbent = z;
      have_incumbent = true;
      incumbent_fix.clear();
      for (int j : mip.binary_idx) incumbent_fix.emplace_back(j, std::round(x[j]));
      incumbent_basis = simplex.basis();
      return;
    }
    Basis b = simplex.basis();
    for (double v : {0.0, 1.0}) {
      Node child{z, node.depth + 1, next_id++, node.fix, b};
      child.fix.emplace_back(branch, v);
      open.push(std::move(child));
    }
  };

  auto finalize = [&]() {
    simplex.restore_bounds();
    for (auto [j, v] : incumbent_fix) simplex.set_structural_bounds(j, v, v);
    simplex.load_basis(incumbent_basis);
    Status s = simplex.solve();
    LpSolution sol = simplex.solution();
    sol.status = s;
    sol.nodes = nodes;
    return sol;
  };

  evaluate(Node{simplex.objective_value(), 0, next_id++, {}, {}});
  while (!open.empty()) {
    Node node = open.top();
    open.pop();
    if (node.bound >= incumbent - 1e-10 * (1.0 + std::abs(incumbent))) continue;
    if (++nodes > options.node_limit) {
      LpSolution best;
      if (have_incumbent) best = finalize();
      throw NodeLimitError(nodes, best, have_incumbent);
    }
    simplex.restore_bounds();
    for (auto [j, v] : node.fix) simplex.set_structural_bounds(j, v, v);
    simplex.load_basis(node.basis);
    if (simplex.solve() != Status::kOptimal) continue;
    evaluate(node);
  }

  if (!have_incumbent) {
    LpSolution sol;
    sol.status = Status::kInfeasible;
    sol.nodes = nodes;
    return sol;
  }
  return finalize();
}

KktResiduals kkt_residuals(const LinearProgram& lp, const LpSolution& sol) {
  KktResiduals r;
  const int n = lp.num_vars();
  const Eigen::VectorXd& x = sol.x;
  Eigen::VectorXd eq = lp.eq_rhs.size() ? Eigen::VectorXd(lp.eq_matrix * x - lp.eq_rhs)
                                        : Eigen::VectorXd();
  Eigen::VectorXd in = lp.ineq_rhs.size() ? Eigen::VectorXd(lp.ineq_matrix * x - lp.ineq_rhs)
                                          : Eigen::VectorXd();
  for (int i = 0; i < eq.size(); ++i) r.primal = std::max(r.primal, std::abs(eq[i]));
  for (int i = 0; i < in.size(); ++i) r.primal = std::max(r.primal, in[i]);
  for (int j = 0; j < n; ++j) {
    r.primal = std::max(r.primal, lp.lower[j] - x[j]);
    r.primal = std::max(r.primal, x[j] - lp.upper[j]);
  }

  Eigen::VectorXd g = lp.objective;
  if (eq.size()) g += lp.eq_matrix.transpose() * sol.eq_duals;
  if (in.size()) g += lp.ineq_matrix.transpose() * sol.ineq_duals;

  double dual_obj = 0.0;
  if (eq.size()) dual_obj -= sol.eq_duals.dot(lp.eq_rhs);
  if (in.size()) dual_obj -= sol.ineq_duals.dot(lp.ineq_rhs);
  for (int i = 0; i < in.size(); ++i) {
    r.dual_sign = std::max(r.dual_sign, -sol.ineq_duals[i]);
    r.complementarity = std::max(r.complementarity, std::abs(sol.ineq_duals[i] * in[i]));
  }
  for (int j = 0; j < n; ++j) {
    double nu_lo = std::max(g[j], 0.0);
    double nu_hi = std::max(-g[j], 0.0);
    if (nu_lo > 0) {
      if (!std::isfinite(lp.lower[j])) {
        r.stationarity = std::max(r.stationarity, nu_lo);
      } else {
        r.complementarity = std::max(r.complementarity, nu_lo * std::abs(x[j] - lp.lower[j]));
        dual_obj += nu_lo * lp.lower[j];
      }
    }
    if (nu_hi > 0) {
      if (!std::isfinite(lp.upper[j])) {
        r.stationarity = std::max(r.stationarity, nu_hi);
      } else {
        r.complementarity = std::max(r.complementarity, nu_hi * std::abs(lp.upper[j] - x[j]));
        dual_obj -= nu_hi * lp.upper[j];
      }
    }
  }
  r.duality_gap = std::abs(lp.objective.dot(x) - dual_obj);
  return r;
}

std::shared_ptr<Solver> default_solver() { return std::make_shared<BuiltinSolver>(); }

std::string to_lp_format(const MixedProgram& mip, const std::vector<std::string>& var_names) {
  const LinearProgram& lp = mip.base;
  const int n = lp.num_vars();
  auto name = [&](int j) {
    return j < static_cast<int>(var_names.size()) ? var_names[j] : "x" + std::to_string(j);
  };
  std::ostringstream out;
  out << std::setprecision(17);
  auto term = [&](double c, int j, bool first) {
    if (c < 0)
      out << (first ? "-" : " - ") << -c << " " << name(j);
    else
      out << (first ? "" : " + ") << c << " " << name(j);
  };
  auto rows = [&](const SparseMatrix& m, const Eigen::VectorXd& rhs, const char* prefix,
                  const char* sense) {
    SparseMatrix rm = m.transpose();
    for (int i = 0; i < rhs.size(); ++i) {
      out << " " << prefix << i << ": ";
      bool first = true;
      for (SparseMatrix::InnerIterator it(rm, i); it; ++it) {
        term(it.value(), static_cast<int>(it.row()), first);
        first = false;
      }
      if (first) out << "0 " << name(0);
      out << " " << sense << " " << rhs[i] << "\n";
    }
  };
  out << "\\ hwctl program: " << n << " variables\nMinimize\n obj: ";
  bool first = true;
  for (int j = 0; j < n; ++j)
    if (lp.objective[j] != 0.0) {
      term(lp.objective[j], j, first);
      first = false;
    }
  if (first) out << "0 " << name(0);
  out << "\nSubject To\n";
  rows(lp.eq_matrix, lp.eq_rhs, "e", "=");
  rows(lp.ineq_matrix, lp.ineq_rhs, "c", "<=");
  out << "Bounds\n";
  for (int j = 0; j < n; ++j) {
    bool lo_inf = !std::isfinite(lp.lower[j]);
    bool hi_inf = !std::isfinite(lp.upper[j]);
    if (lo_inf && hi_inf) {
      out << " " << name(j) << " free\n";
    } else {
      out << " " << (lo_inf ? std::string("-inf") : (std::ostringstream() << std::setprecision(17)
                                                                             << lp.lower[j]).str())
          << " <= " << name(j) << " <= "
          << (hi_inf ? std::string("+inf")
                     : (std::ostringstream() << std::setprecision(17) << lp.upper[j]).str())
          << "\n";
    }
  }
  if (!mip.binary_idx.empty()) {
    out << "Binaries\n";
    for (int j : mip.binary_idx) out << " " << name(j) << "\n";
  }
  out << "End\n";
  return out.str();
}

}  // namespace hwctl::lp
