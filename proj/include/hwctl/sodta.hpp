#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hwctl/hdq.hpp"
#include "hwctl/headway.hpp"
#include "hwctl/lp.hpp"
#include "hwctl/network.hpp"

// System-optimal dynamic traffic assignment for a fixed headway field.
//
// Variables, for k = 1..N and commodity (dummy destination) s:
//   physical link:       rho^s, qd^s, u^s, f^s, v^s, plus one delta per k
//   origin connector:    qd^s, v^s     (u = f = demand is data)
//   destination conn.:   u^s for its own commodity only (v = f = u, qd = 0)
// Commodities are kept only on links whose head reaches their destination.
//
// Equality rows: density per (physical link, s, k); down_queue per
// (physical link or origin connector, s, k); node_conservation per
// (non-dummy node, s, k).
// Inequality rows per (physical link, k): fd_free_upper, fd_cong_upper,
// fd_free_lower, fd_cong_lower, regime_free, regime_cong, down_queue_cap,
// up_queue_cap, inflow_cap, outflow_cap (capacity rows only when finite),
// then end_density per physical link. qd(N) = 0 is imposed by its upper bound.
namespace hwctl::sodta {

class VarIndex {
 public:
  VarIndex() = default;
  VarIndex(const Network& net, const DemandProfile& demand, int n_intervals);

  int rho(int link, int d, int k) const { return get(rho_, link, d, k); }
  int qd(int link, int d, int k) const { return get(qd_, link, d, k); }
  int u(int link, int d, int k) const { return get(u_, link, d, k); }
  int f(int link, int d, int k) const { return get(f_, link, d, k); }
  int v(int link, int d, int k) const { return get(v_, link, d, k); }
  int delta(int link, int k) const { return delta_[link * (n_ + 1) + k]; }
  bool carries(int link, int d) const { return carries_[link * n_dests() + d]; }

  int num_vars() const { return num_vars_; }
  int n_intervals() const { return n_; }
  int n_dests() const { return static_cast<int>(destinations_.size()); }
  const std::vector<int>& destinations() const { return destinations_; }
  const std::vector<int>& binaries() const { return binaries_; }
  std::vector<std::string> names(const Network& net) const;

 private:
  int get(const std::vector<int>& m, int link, int d, int k) const {
    return m[(static_cast<std::size_t>(link) * n_dests() + d) * (n_ + 1) + k];
  }

  int n_ = 0;
  int num_vars_ = 0;
  std::vector<int> destinations_;
  std::vector<char> carries_;
  std::vector<int> rho_, qd_, u_, f_, v_, delta_, binaries_;
};

struct RowTag {
  std::string family;
  int link = -1;  // node id for node_conservation
  int dest = -1;  // commodity index, -1 for aggregate rows
  int k = 0;
};

struct ConstraintSystem {
  lp::MixedProgram program;
  std::vector<RowTag> eq_tags;
  std::vector<RowTag> ineq_tags;
  // Derivatives with respect to headway cells (seconds), param = HeadwayField::cell.
  std::vector<lp::ParamDerivative> derivatives;
  VarIndex index;
  HeadwayField headway;
  std::vector<int> shockwave;  // n^w per (link, k), TrafficState layout
  double strict_eps = 1e-6;
};

struct BuildOptions {
  double strict_eps = 1e-6;  // relative margin below the breakpoint when delta = 0
};

// Throws std::invalid_argument when validate() reports problems or h is out of bounds.
ConstraintSystem build_constraints(const Network& net, const GlobalParams& params,
                                   const DemandProfile& demand, const HeadwayField& h,
                                   const BuildOptions& options = {});

// Model values of every variable, taken from a complete traffic state.
Eigen::VectorXd state_to_vector(const ConstraintSystem& sys, const hdq::TrafficState& st);

hdq::TrafficState vector_to_state(const Network& net, const GlobalParams& params,
                                  const DemandProfile& demand, const ConstraintSystem& sys,
                                  const Eigen::VectorXd& x);

// Max violation per family using the assembled matrices. Bound families are
// "nonnegativity", "end_queue" and "delta_range"; "integrality" covers delta.
hdq::Residuals constraint_residuals(const ConstraintSystem& sys, const Eigen::VectorXd& x);

// Signed residual of one tagged row evaluated from the state's fields
// (lhs - rhs), computed without the matrix.
double replay_row(const Network& net, const GlobalParams& params, const DemandProfile& demand,
                  const ConstraintSystem& sys, const RowTag& tag, const hdq::TrafficState& st);

double total_travel_time(const hdq::TrafficState& st, const GlobalParams& params,
                         const Network& net);

struct SolveOptions {
  lp::MipOptions mip;
  BuildOptions build;
  bool relax_binaries = false;  // LP relaxation as a lower bound
};

struct SolveResult {
  lp::Status status = lp::Status::kInfeasible;
  hdq::TrafficState state;
  double ttt = 0.0;
  lp::LpSolution solution;
  ConstraintSystem system;
  hdq::Residuals residuals;
  std::optional<double> horizon_bound;  // minutes, attached when infeasible
  double build_seconds = 0.0;
  double solve_seconds = 0.0;
};

SolveResult solve_fixed_headway(const Network& net, const GlobalParams& params,
                                const DemandProfile& demand, const HeadwayField& h,
                                const SolveOptions& options = {});

std::string report_json(const Network& net, const SolveResult& result);

}  // namespace hwctl::sodta
