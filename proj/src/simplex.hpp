#pragma once

#include <memory>
#include <vector>

#include <Eigen/SparseLU>

#include "hwctl/lp.hpp"

namespace hwctl::lp::detail {

enum ColStatus : std::uint8_t { kBasic = 0, kAtLower = 1, kAtUpper = 2, kFreeZero = 3 };

// Bounded revised simplex over [A | -I] (x, s) = 0 with one logical s_i per
// row. Equality rows fix s_i = B_i; inequality rows bound s_i <= D_i.
// The basis inverse is a sparse LU of the last refactorization followed by a
// product-form eta file.
class Simplex {
 public:
  Simplex(const LinearProgram& lp, const Tolerances& tol);

  void set_structural_bounds(int j, double lo, double hi);
  void restore_bounds();
  void load_basis(const Basis& basis);
  Basis basis() const;

  Status solve();
  LpSolution solution() const;
  double objective_value() const;
  Eigen::VectorXd structural_values() const { return x_.head(n_); }
  int iterations() const { return iterations_; }

 private:
  struct Eta {
    int row;
    double pivot;
    std::vector<int> idx;
    std::vector<double> val;
  };

  Status primal();
  Status dual();

  void slack_basis();
  void place_nonbasic(int j);
  void refactor();
  void recompute_basics();
  void ftran(Eigen::VectorXd& v) const;
  void btran(Eigen::VectorXd& v) const;
  void column(int j, Eigen::VectorXd& out) const;
  double dot_column(int j, const Eigen::VectorXd& y) const;
  void pivot(int entering, int row, const Eigen::VectorXd& alpha);
  void compute_duals(const Eigen::VectorXd& cost_b, Eigen::VectorXd& y) const;
  double reduced_cost(int j, const Eigen::VectorXd& y, bool phase1) const;
  double max_primal_infeasibility() const;
  bool dual_feasible(const Eigen::VectorXd& y) const;
  bool is_fixed(int j) const { return lo_[j] == hi_[j]; }
  void tick();
  int degenerate_limit() const;

  int n_ = 0;
  int m_ = 0;
  int l1_ = 0;
  Tolerances tol_;
  SparseMatrix a_;  // m x n, column major
  Eigen::VectorXd cost_;
  Eigen::VectorXd lo_, hi_;
  Eigen::VectorXd base_lo_, base_hi_;
  std::vector<std::uint8_t> status_;
  std::vector<int> basic_;
  std::vector<int> pos_;
  Eigen::VectorXd x_;
  std::unique_ptr<Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>>> lu_;
  std::vector<Eta> etas_;
  bool warm_ = false;
  int iterations_ = 0;
  int max_iterations_ = 0;
};

}  // namespace hwctl::lp::detail
