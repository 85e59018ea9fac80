#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

// Sparse LP / binary MILP in the form
//   min P'x  s.t.  A x = B,  C x <= D,  lo <= x <= hi.
namespace hwctl::lp {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Eigen::VectorXd;

struct Tolerances {
  double feasibility = 1e-7;
  double integrality = 1e-6;
  double optimality = 1e-8;
};

struct LinearProgram {
  VectorXd objective;
  SparseMatrix eq_matrix;
  VectorXd eq_rhs;
  SparseMatrix ineq_matrix;
  VectorXd ineq_rhs;
  VectorXd lower;
  VectorXd upper;

  int num_vars() const { return static_cast<int>(objective.size()); }
  int num_eq() const { return static_cast<int>(eq_rhs.size()); }
  int num_ineq() const { return static_cast<int>(ineq_rhs.size()); }
  // Throws std::invalid_argument on inconsistent dimensions or non-finite data.
  void validate() const;
};

// d(entry)/d(param) for one matrix entry (col >= 0) or right-hand side (col == -1).
struct ParamDerivative {
  bool ineq = false;
  int row = 0;
  int col = -1;
  int param = 0;
  double value = 0.0;
};

struct MixedProgram {
  LinearProgram base;
  std::vector<int> binary_idx;
};

enum class Status { kOptimal, kInfeasible, kUnbounded };
const char* to_string(Status s);

// Column statuses for structurals followed by one logical per row.
struct Basis {
  std::vector<std::uint8_t> status;
  bool empty() const { return status.empty(); }
};

struct LpSolution {
  Status status = Status::kInfeasible;
  VectorXd x;
  double objective = 0.0;
  VectorXd eq_duals;       // lambda
  VectorXd ineq_duals;     // mu >= 0
  VectorXd reduced_costs;  // P + A'lambda + C'mu
  std::vector<int> active_set;
  int iterations = 0;
  int nodes = 0;
  Basis basis;
};

class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, int iterations)
      : std::runtime_error(what + " after " + std::to_string(iterations) + " iterations"),
        iterations_(iterations) {}
  int iterations() const { return iterations_; }

 private:
  int iterations_;
};

class NodeLimitError : public std::runtime_error {
 public:
  NodeLimitError(int nodes, LpSolution incumbent, bool has_incumbent)
      : std::runtime_error("branch-and-bound node limit reached at " + std::to_string(nodes) +
                           " nodes"),
        incumbent_(std::move(incumbent)),
        has_incumbent_(has_incumbent) {}
  const LpSolution& incumbent() const { return incumbent_; }
  bool has_incumbent() const { return has_incumbent_; }

 private:
  LpSolution incumbent_;
  bool has_incumbent_;
};

LpSolution solve_lp(const LinearProgram& lp, const Tolerances& tol = {},
                    const Basis* warm_start = nullptr);

struct MipOptions {
  Tolerances tol;
  int node_limit = 200000;
};

// Best-bound branch and bound; the returned duals belong to the LP with the
// binaries fixed at their incumbent values.
LpSolution solve_mip(const MixedProgram& mip, const MipOptions& options = {});

struct KktResiduals {
  double primal = 0.0;           // max violation of rows and bounds
  double stationarity = 0.0;     // max |P + A'l + C'mu - (bound multipliers)|
  double dual_sign = 0.0;        // max negative part of mu and bound multipliers
  double complementarity = 0.0;  // max |mu_i (Cx - D)_i| and bound analogues
  double duality_gap = 0.0;      // |P'x - (-l'B - mu'D + bound terms)|
};

KktResiduals kkt_residuals(const LinearProgram& lp, const LpSolution& sol);

// Adapter seam for external engines.
class Solver {
 public:
  virtual ~Solver() = default;
  virtual LpSolution solve_lp(const LinearProgram& lp, const Tolerances& tol,
                              const Basis* warm_start) = 0;
  virtual LpSolution solve_mip(const MixedProgram& mip, const MipOptions& options) = 0;
};

class BuiltinSolver : public Solver {
 public:
  LpSolution solve_lp(const LinearProgram& lp, const Tolerances& tol,
                      const Basis* warm_start) override {
    return lp::solve_lp(lp, tol, warm_start);
  }
  LpSolution solve_mip(const MixedProgram& mip, const MipOptions& options) override {
    return lp::solve_mip(mip, options);
  }
};

std::shared_ptr<Solver> default_solver();

// CPLEX LP text format.
std::string to_lp_format(const MixedProgram& mip, const std::vector<std::string>& var_names = {});

}  // namespace hwctl::lp
