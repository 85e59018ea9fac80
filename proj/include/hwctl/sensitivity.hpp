#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hwctl/headway.hpp"
#include "hwctl/lp.hpp"
#include "hwctl/network.hpp"
#include "hwctl/sodta.hpp"

// Gradient of the optimal objective with respect to headway parameters from
// the differentiated KKT system, and the descent search built on it.
namespace hwctl::sensitivity {

// Program with binaries frozen at their incumbent values, in generalized form:
// frozen binaries join A as equalities and finite bounds join C as rows.
struct KktSystem {
  int n = 0;   // variables
  int l1 = 0;  // equalities, including frozen binaries
  int l2 = 0;  // inequalities, including bound rows
  int m = 0;   // parameters
  std::vector<int> active;  // K: generalized inequality rows with mu > 0
  Eigen::MatrixXd Q;        // (n + l1 + k + 1) x (n + l1 + l2 + 1)
  Eigen::MatrixXd R;        // right-hand block before negation, rows of Q x m
  Eigen::VectorXd envelope;  // lambda'(dA x - dB) + mu'(dC x - dD), length m
};

struct KktOptions {
  double active_tol = 1e-9;  // mu_i > active_tol * (1 + max|mu|) enters K
};

// `sol` must be optimal with duals for the program with its binaries fixed
// (as returned by lp::solve_mip). Throws std::invalid_argument otherwise.
KktSystem assemble_kkt(const lp::MixedProgram& program,
                       const std::vector<lp::ParamDerivative>& derivatives, int num_params,
                       const lp::LpSolution& sol, const KktOptions& options = {});

KktSystem assemble_kkt(const lp::LpSolution& sol, const sodta::ConstraintSystem& sys,
                       const HeadwayField& h, const KktOptions& options = {});

struct GradientReport {
  Eigen::VectorXd dz_dh;  // length m
  Eigen::MatrixXd dx_dh;
  Eigen::MatrixXd dlambda_dh;
  Eigen::MatrixXd dmu_dh;
  int rank = 0;
  double sigma_max = 0.0;
  double sigma_min = 0.0;     // smallest singular value kept
  double condition = 0.0;     // sigma_max / sigma_min
  double residual = 0.0;      // max |Q sol + R|
  double envelope_gap = 0.0;  // max |dz_dh - envelope|
  std::string warning;        // set when Q is rank deficient or the system is inconsistent
};

// Minimum-norm solution through the singular value decomposition of Q with
// cutoff 1e-10 * sigma_max.
GradientReport gradient_ttt(const KktSystem& kkt);

// Central differences of the optimal TTT, one pair of re-solves per cell.
// Cells run concurrently on up to `jobs` threads.
Eigen::VectorXd finite_difference_gradient(const Network& net, const GlobalParams& params,
                                           const DemandProfile& demand, const HeadwayField& h,
                                           double step_seconds, int jobs = 1);

struct DescentOptions {
  double eta = 1e-4;     // s^2 / (veh min)
  int iterations = 20;
  bool backtracking = true;
  int max_halvings = 12;
  sodta::SolveOptions solve;
};

struct DescentTrace {
  std::vector<HeadwayField> h;  // h[0] = h0
  std::vector<double> ttt;
  std::vector<double> grad_norm;  // infinity norm at h[i]
  std::vector<double> step;       // eta actually applied to reach h[i], 0 for i = 0
  std::string status = "ok";      // "ok", "stalled", or the failure reason
  bool backtracking_used = false;
};

// h <- clamp(h - eta * dz/dh, h_min, h_max), re-solving at every iterate.
// A failed solve ends the run with the partial trace.
DescentTrace sensitivity_descent(const Network& net, const GlobalParams& params,
                                 const DemandProfile& demand, const HeadwayField& h0,
                                 const DescentOptions& options = {});

// iteration,ttt,grad_inf,step
std::string trace_csv(const DescentTrace& trace);

}  // namespace hwctl::sensitivity
