#include "simplex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hwctl::lp::detail {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPivotTol = 1e-9;
constexpr double kRelPivotTol = 1e-7;
constexpr double kDropTol = 1e-14;
constexpr int kRefactorEvery = 100;
constexpr int kDegenerateLimit = 50;  // per 100 rows, at least this many

SparseMatrix stack_rows(const LinearProgram& lp) {
  const int n = lp.num_vars();
  const int l1 = lp.num_eq();
  const int l2 = lp.num_ineq();
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(lp.eq_matrix.nonZeros() + lp.ineq_matrix.nonZeros());
  for (int k = 0; k < lp.eq_matrix.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(lp.eq_matrix, k); it; ++it)
      if (it.value() != 0.0) t.emplace_back(it.row(), it.col(), it.value());
  for (int k = 0; k < lp.ineq_matrix.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(lp.ineq_matrix, k); it; ++it)
      if (it.value() != 0.0) t.emplace_back(l1 + it.row(), it.col(), it.value());
  SparseMatrix a(l1 + l2, n);
  a.setFromTriplets(t.begin(), t.end());
  a.makeCompressed();
  return a;
}

}  // namespace

Simplex::Simplex(const LinearProgram& lp, const Tolerances& tol)
    : n_(lp.num_vars()), m_(lp.num_eq() + lp.num_ineq()), l1_(lp.num_eq()), tol_(tol) {
  a_ = stack_rows(lp);
  const int total = n_ + m_;
  cost_ = Eigen::VectorXd::Zero(total);
  cost_.head(n_) = lp.objective;
  lo_.resize(total);
  hi_.resize(total);
  lo_.head(n_) = lp.lower;
  hi_.head(n_) = lp.upper;
  for (int i = 0; i < l1_; ++i) lo_[n_ + i] = hi_[n_ + i] = lp.eq_rhs[i];
  for (int i = l1_; i < m_; ++i) {
    lo_[n_ + i] = -kInf;
    hi_[n_ + i] = lp.ineq_rhs[i - l1_];
  }
  base_lo_ = lo_;
  base_hi_ = hi_;
  max_iterations_ = 50 * (n_ + m_) + 10000;
  slack_basis();
}

void Simplex::set_structural_bounds(int j, double lo, double hi) {
  lo_[j] = lo;
  hi_[j] = hi;
}

void Simplex::restore_bounds() {
  lo_ = base_lo_;
  hi_ = base_hi_;
}

void Simplex::place_nonbasic(int j) {
  if (std::isfinite(lo_[j]) && (status_[j] != kAtUpper || !std::isfinite(hi_[j]))) {
    status_[j] = kAtLower;
    x_[j] = lo_[j];
  } else if (std::isfinite(hi_[j])) {
    status_[j] = kAtUpper;
    x_[j] = hi_[j];
  } else {
    status_[j] = kFreeZero;
    x_[j] = 0.0;
  }
}

void Simplex::slack_basis() {
  const int total = n_ + m_;
  status_.assign(total, kAtLower);
  pos_.assign(total, -1);
  basic_.resize(m_);
  x_ = Eigen::VectorXd::Zero(total);
  for (int j = 0; j < n_; ++j) place_nonbasic(j);
  for (int i = 0; i < m_; ++i) {
    status_[n_ + i] = kBasic;
    basic_[i] = n_ + i;
    pos_[n_ + i] = i;
  }
  warm_ = false;
  refactor();
}

void Simplex::load_basis(const Basis& basis) {
  const int total = n_ + m_;
  if (static_cast<int>(basis.status.size()) != total ||
      std::count(basis.status.begin(), basis.status.end(), kBasic) != m_) {
    slack_basis();
    return;
  }
  status_ = basis.status;
  pos_.assign(total, -1);
  basic_.clear();
  for (int j = 0; j < total; ++j) {
    if (status_[j] == kBasic) {
      pos_[j] = static_cast<int>(basic_.size());
      basic_.push_back(j);
    } else {
      place_nonbasic(j);
    }
  }
  warm_ = true;
  refactor();
}

Basis Simplex::basis() const { return Basis{status_}; }

void Simplex::column(int j, Eigen::VectorXd& out) const {
  out.setZero(m_);
  if (j < n_) {
    for (SparseMatrix::InnerIterator it(a_, j); it; ++it) out[it.row()] = it.value();
  } else {
    out[j - n_] = -1.0;
  }
}

double Simplex::dot_column(int j, const Eigen::VectorXd& y) const {
  if (j >= n_) return -y[j - n_];
  double s = 0.0;
  for (SparseMatrix::InnerIterator it(a_, j); it; ++it) s += it.value() * y[it.row()];
  return s;
}

void Simplex::refactor() {
  etas_.clear();
  if (m_ == 0) {
    recompute_basics();
    return;
  }
  std::vector<Eigen::Triplet<double>> t;
  for (int i = 0; i < m_; ++i) {
    int j = basic_[i];
    if (j < n_) {
      for (SparseMatrix::InnerIterator it(a_, j); it; ++it) t.emplace_back(it.row(), i, it.value());
    } else {
      t.emplace_back(j - n_, i, -1.0);
    }
  }
  SparseMatrix b(m_, m_);
  b.setFromTriplets(t.begin(), t.end());
  b.makeCompressed();
  lu_ = std::make_unique<Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>>>();
  lu_->analyzePattern(b);
  lu_->factorize(b);
  if (lu_->info() != Eigen::Success) {
    // Singular basis: restart from the logical basis.
    const int total = n_ + m_;
    for (int j = 0; j < total; ++j) pos_[j] = -1;
    for (int j = 0; j < n_; ++j)
      if (status_[j] == kBasic) {
        status_[j] = kAtLower;
        place_nonbasic(j);
      }
    for (int i = 0; i < m_; ++i) {
      status_[n_ + i] = kBasic;
      basic_[i] = n_ + i;
      pos_[n_ + i] = i;
    }
    warm_ = false;
    refactor();
    return;
  }
  recompute_basics();
}

void Simplex::recompute_basics() {
  if (m_ == 0) return;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m_);
  for (int j = 0; j < n_; ++j) {
    if (status_[j] == kBasic || x_[j] == 0.0) continue;
    for (SparseMatrix::InnerIterator it(a_, j); it; ++it) rhs[it.row()] -= it.value() * x_[j];
  }
  for (int i = 0; i < m_; ++i) {
    int j = n_ + i;
    if (status_[j] != kBasic) rhs[i] += x_[j];
  }
  ftran(rhs);
  for (int i = 0; i < m_; ++i) x_[basic_[i]] = rhs[i];
}

void Simplex::ftran(Eigen::VectorXd& v) const {
  if (m_ == 0) return;
  v = lu_->solve(v).eval();
  for (const Eta& e : etas_) {
    double vr = v[e.row] / e.pivot;
    if (vr != 0.0)
      for (std::size_t k = 0; k < e.idx.size(); ++k) v[e.idx[k]] -= e.val[k] * vr;
    v[e.row] = vr;
  }
}

void Simplex::btran(Eigen::VectorXd& v) const {
  if (m_ == 0) return;
  for (auto it = etas_.rbegin(); it != etas_.rend(); ++it) {
    double s = v[it->row];
    for (std::size_t k = 0; k < it->idx.size(); ++k) s -= it->val[k] * v[it->idx[k]];
    v[it->row] = s / it->pivot;
  }
  v = lu_->transpose().solve(v).eval();
}

void Simplex::pivot(int entering, int row, const Eigen::VectorXd& alpha) {
  Eta e;
  e.row = row;
  e.pivot = alpha[row];
  for (int i = 0; i < m_; ++i)
    if (i != row && std::abs(alpha[i]) > kDropTol) {
      e.idx.push_back(i);
      e.val.push_back(alpha[i]);
    }
  etas_.push_back(std::move(e));
  int leaving = basic_[row];
  pos_[leaving] = -1;
  basic_[row] = entering;
  pos_[entering] = row;
  status_[entering] = kBasic;
}

void Simplex::compute_duals(const Eigen::VectorXd& cost_b, Eigen::VectorXd& y) const {
  y = cost_b;
  btran(y);
}

double Simplex::reduced_cost(int j, const Eigen::VectorXd& y, bool phase1) const {
  double c = phase1 ? 0.0 : cost_[j];
  return c - dot_column(j, y);
}

double Simplex::max_primal_infeasibility() const {
  double worst = 0.0;
  for (int j : basic_) {
    worst = std::max(worst, lo_[j] - x_[j]);
    worst = std::max(worst, x_[j] - hi_[j]);
  }
  return worst;
}

bool Simplex::dual_feasible(const Eigen::VectorXd& y) const {
  const int total = n_ + m_;
  for (int j = 0; j < total; ++j) {
    if (status_[j] == kBasic || is_fixed(j)) continue;
    double d = reduced_cost(j, y, false);
    if (status_[j] == kAtLower && d < -tol_.optimality) return false;
    if (status_[j] == kAtUpper && d > tol_.optimality) return false;
    if (status_[j] == kFreeZero && std::abs(d) > tol_.optimality) return false;
  }
  return true;
}

int Simplex::degenerate_limit() const {
  return kDegenerateLimit * std::max(1, (m_ + 99) / 100);
}

void Simplex::tick() {
  if (++iterations_ > max_iterations_) throw NumericalError("simplex stalled", iterations_);
}

Status Simplex::solve() {
  if (warm_ && max_primal_infeasibility() > tol_.feasibility) {
    Eigen::VectorXd cb(m_), y;
    for (int i = 0; i < m_; ++i) cb[i] = cost_[basic_[i]];
    compute_duals(cb, y);
    if (dual_feasible(y)) {
      try {
        Status s = dual();
        if (s != Status::kOptimal) return s;
      } catch (const NumericalError&) {
        max_iterations_ = iterations_ + 50 * (n_ + m_) + 10000;
      }
    }
  }
  return primal();
}

Status Simplex::primal() {
  const int total = n_ + m_;
  Eigen::VectorXd cb(m_), y, alpha;
  int degenerate_run = 0;
  bool bland = false;
  for (;;) {
    tick();
    if (static_cast<int>(etas_.size()) >= kRefactorEvery) refactor();

    bool phase1 = false;
    for (int i = 0; i < m_; ++i) {
      int j = basic_[i];
      if (x_[j] < lo_[j] - tol_.feasibility) {
        cb[i] = -1.0;
        phase1 = true;
      } else if (x_[j] > hi_[j] + tol_.feasibility) {
        cb[i] = 1.0;
        phase1 = true;
      } else {
        cb[i] = 0.0;
      }
    }
    if (!phase1)
      for (int i = 0; i < m_; ++i) cb[i] = cost_[basic_[i]];
    compute_duals(cb, y);

    // Pricing.
    int q = -1;
    double best = 0.0;
    double dq = 0.0;
    const double dtol = phase1 ? tol_.feasibility * 1e-2 : tol_.optimality;
    for (int j = 0; j < total; ++j) {
      if (status_[j] == kBasic || is_fixed(j)) continue;
      double d = reduced_cost(j, y, phase1);
      bool eligible = (status_[j] == kAtLower && d < -dtol) ||
                      (status_[j] == kAtUpper && d > dtol) ||
                      (status_[j] == kFreeZero && std::abs(d) > dtol);
      if (!eligible) continue;
      if (bland) {
        q = j;
        dq = d;
        break;
      }
      if (std::abs(d) > best) {
        best = std::abs(d);
        q = j;
        dq = d;
      }
    }

    if (q < 0) {
      refactor();
      if (phase1) {
        if (max_primal_infeasibility() > tol_.feasibility) return Status::kInfeasible;
        continue;
      }
      if (max_primal_infeasibility() > tol_.feasibility) continue;
      for (int i = 0; i < m_; ++i) cb[i] = cost_[basic_[i]];
      compute_duals(cb, y);
      if (dual_feasible(y)) return Status::kOptimal;
      continue;
    }

    const double sigma = dq < 0 ? 1.0 : -1.0;
    column(q, alpha);
    ftran(alpha);
    const double amax = alpha.size() ? alpha.cwiseAbs().maxCoeff() : 0.0;
    const double ptol = std::max(kPivotTol, kRelPivotTol * amax);

    // Ratio test: basic i moves by g_i * theta.
    auto target_of = [&](int i, double g, double& target) {
      int j = basic_[i];
      if (g > 0) {
        if (x_[j] < lo_[j] - tol_.feasibility) {
          target = lo_[j];
          return true;
        }
        if (x_[j] > hi_[j] + tol_.feasibility || !std::isfinite(hi_[j])) return false;
        target = hi_[j];
        return true;
      }
      if (x_[j] > hi_[j] + tol_.feasibility) {
        target = hi_[j];
        return true;
      }
      if (x_[j] < lo_[j] - tol_.feasibility || !std::isfinite(lo_[j])) return false;
      target = lo_[j];
      return true;
    };

    double range = hi_[q] - lo_[q];
    int leave = -1;
    double theta = kInf;
    if (bland) {
      for (int i = 0; i < m_; ++i) {
        if (std::abs(alpha[i]) <= ptol) continue;
        double g = -sigma * alpha[i];
        double target;
        if (!target_of(i, g, target)) continue;
        double t = std::max(0.0, (target - x_[basic_[i]]) / g);
        if (t < theta - 1e-12 || (t <= theta + 1e-12 && leave >= 0 && basic_[i] < basic_[leave])) {
          theta = std::min(theta, t);
          leave = i;
        }
      }
    } else {
      double theta_max = kInf;
      for (int i = 0; i < m_; ++i) {
        if (std::abs(alpha[i]) <= ptol) continue;
        double g = -sigma * alpha[i];
        double target;
        if (!target_of(i, g, target)) continue;
        double relaxed = (target - x_[basic_[i]] + (g > 0 ? tol_.feasibility : -tol_.feasibility)) / g;
        theta_max = std::min(theta_max, relaxed);
      }
      double best_alpha = 0.0;
      for (int i = 0; i < m_; ++i) {
        if (std::abs(alpha[i]) <= ptol) continue;
        double g = -sigma * alpha[i];
        double target;
        if (!target_of(i, g, target)) continue;
        double t = (target - x_[basic_[i]]) / g;
        if (t <= theta_max && std::abs(alpha[i]) > best_alpha) {
          best_alpha = std::abs(alpha[i]);
          leave = i;
          theta = std::max(0.0, t);
        }
      }
    }

    if (std::isfinite(range) && range <= theta) {
      // Bound flip.
      x_[q] += sigma * range;
      for (int i = 0; i < m_; ++i) x_[basic_[i]] -= sigma * range * alpha[i];
      status_[q] = status_[q] == kAtLower ? kAtUpper : kAtLower;
      x_[q] = status_[q] == kAtLower ? lo_[q] : hi_[q];
      degenerate_run = 0;
      bland = false;
      continue;
    }
    if (leave < 0) {
      if (phase1) throw NumericalError("phase one ray without blocking variable", iterations_);
      return Status::kUnbounded;
    }

    int lj = basic_[leave];
    double g_leave = -sigma * alpha[leave];
    bool to_lower;
    if (g_leave > 0)
      to_lower = x_[lj] < lo_[lj] - tol_.feasibility;
    else
      to_lower = !(x_[lj] > hi_[lj] + tol_.feasibility);

    x_[q] += sigma * theta;
    for (int i = 0; i < m_; ++i) x_[basic_[i]] -= sigma * theta * alpha[i];
    pivot(q, leave, alpha);
    status_[lj] = to_lower ? kAtLower : kAtUpper;
    x_[lj] = to_lower ? lo_[lj] : hi_[lj];

    if (theta < 1e-12) {
      if (++degenerate_run > degenerate_limit()) bland = true;
    } else {
      degenerate_run = 0;
      bland = false;
    }
  }
}

Status Simplex::dual() {
  const int total = n_ + m_;
  Eigen::VectorXd cb(m_), y, rho, alpha;
  std::vector<double> row_alpha(total, 0.0);
  int degenerate_run = 0;
  for (;;) {
    tick();
    if (static_cast<int>(etas_.size()) >= kRefactorEvery) refactor();
    for (int i = 0; i < m_; ++i) cb[i] = cost_[basic_[i]];
    compute_duals(cb, y);

    int r = -1;
    double worst = tol_.feasibility;
    for (int i = 0; i < m_; ++i) {
      int j = basic_[i];
      double v = std::max(lo_[j] - x_[j], x_[j] - hi_[j]);
      bool take = degenerate_run > degenerate_limit() ? (v > tol_.feasibility && (r < 0 || j < basic_[r]))
                                                    : v > worst;
      if (take) {
        worst = std::max(worst, v);
        r = i;
      }
    }
    if (r < 0) {
      refactor();
      if (max_primal_infeasibility() > tol_.feasibility) continue;
      return Status::kOptimal;
    }

    const int lj = basic_[r];
    const bool below = x_[lj] < lo_[lj];
    rho = Eigen::VectorXd::Zero(m_);
    rho[r] = 1.0;
    btran(rho);

    // Harris two-pass dual ratio test.
    double theta_max = kInf;
    for (int j = 0; j < total; ++j) {
      row_alpha[j] = 0.0;
      if (status_[j] == kBasic || is_fixed(j)) continue;
      double a = dot_column(j, rho);
      row_alpha[j] = a;
      if (std::abs(a) <= kPivotTol) continue;
      bool eligible = below ? ((status_[j] == kAtLower && a < 0) || (status_[j] == kAtUpper && a > 0) ||
                               status_[j] == kFreeZero)
                            : ((status_[j] == kAtLower && a > 0) || (status_[j] == kAtUpper && a < 0) ||
                               status_[j] == kFreeZero);
      if (!eligible) continue;
      double d = std::abs(reduced_cost(j, y, false));
      theta_max = std::min(theta_max, (d + tol_.optimality) / std::abs(a));
    }
    if (!std::isfinite(theta_max)) return Status::kInfeasible;
    int q = -1;
    double best_alpha = 0.0;
    double step = 0.0;
    for (int j = 0; j < total; ++j) {
      double a = row_alpha[j];
      if (std::abs(a) <= kPivotTol || status_[j] == kBasic || is_fixed(j)) continue;
      bool eligible = below ? ((status_[j] == kAtLower && a < 0) || (status_[j] == kAtUpper && a > 0) ||
                               status_[j] == kFreeZero)
                            : ((status_[j] == kAtLower && a > 0) || (status_[j] == kAtUpper && a < 0) ||
                               status_[j] == kFreeZero);
      if (!eligible) continue;
      double ratio = std::abs(reduced_cost(j, y, false)) / std::abs(a);
      if (ratio <= theta_max && std::abs(a) > best_alpha) {
        best_alpha = std::abs(a);
        q = j;
        step = ratio;
      }
    }
    if (q < 0) return Status::kInfeasible;

    column(q, alpha);
    ftran(alpha);
    if (std::abs(alpha[r]) <= kPivotTol) {
      refactor();
      continue;
    }
    double target = below ? lo_[lj] : hi_[lj];
    double dx = (x_[lj] - target) / alpha[r];
    x_[q] += dx;
    for (int i = 0; i < m_; ++i) x_[basic_[i]] -= dx * alpha[i];
    pivot(q, r, alpha);
    status_[lj] = below ? kAtLower : kAtUpper;
    x_[lj] = target;

    degenerate_run = step < 1e-12 ? degenerate_run + 1 : 0;
  }
}

double Simplex::objective_value() const { return cost_.head(n_).dot(x_.head(n_)); }

LpSolution Simplex::solution() const {
  LpSolution sol;
  sol.x = x_.head(n_);
  sol.objective = objective_value();
  Eigen::VectorXd cb(m_), y;
  for (int i = 0; i < m_; ++i) cb[i] = cost_[basic_[i]];
  compute_duals(cb, y);
  sol.eq_duals = -y.head(l1_);
  sol.ineq_duals = -y.tail(m_ - l1_);
  sol.reduced_costs.resize(n_);
  for (int j = 0; j < n_; ++j) sol.reduced_costs[j] = reduced_cost(j, y, false);
  for (int i = 0; i < m_ - l1_; ++i)
    if (sol.ineq_duals[i] > tol_.optimality) sol.active_set.push_back(i);
  sol.iterations = iterations_;
  sol.basis = basis();
  return sol;
}

}  // namespace hwctl::lp::detail
