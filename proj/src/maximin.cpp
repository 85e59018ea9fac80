#include "hwctl/maximin.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>
#include <stdexcept>

#include "hwctl/hfd.hpp"
#include "hwctl/lp.hpp"
#include "hwctl/sodta.hpp"

namespace hwctl::maximin {

namespace {

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

double weight(const MaximinOptions& options, int cell) {
  if (options.weights.empty()) return 1.0;
  return options.weights.at(cell);
}

void check_weights(const HeadwayField& base, const MaximinOptions& options) {
  if (options.weights.empty()) return;
  if (static_cast<int>(options.weights.size()) != base.size())
    throw std::invalid_argument("one weight per headway cell is required");
  for (double w : options.weights)
    if (!(w >= 0.0)) throw std::invalid_argument("weights must be non-negative");
}

}  // namespace

const char* to_string(Binding b) {
  switch (b) {
    case Binding::kFdBreakpoint: return "fd-breakpoint";
    case Binding::kShockwaveUpper: return "shockwave-upper";
    case Binding::kHMax: return "h_max";
    case Binding::kCongestedPinned: return "congested-pinned";
  }
  return "?";
}

CellBounds cell_bounds(const Network& net, const GlobalParams& params, const hdq::TrafficState& x,
                       const HeadwayField& base, int link, int k, double strict_eps) {
  const LinkParams& p = net.links.at(link).params;
  const double dt = params.dt;
  const double L = params.vehicle_length;
  const double hb = base.at(link, k);
  CellBounds b;
  if (x.delta[x.at(link, k)]) {
    b.lower = b.upper = hb;
    b.binding = Binding::kCongestedPinned;
    return b;
  }
  const int nw = x.nw[x.at(link, k)];
  b.lower = std::max(p.h_min, 60.0 * dt * L * nw / p.length);
  b.upper = p.h_max;
  b.binding = Binding::kHMax;
  double shock = 60.0 * dt * L * (nw + 1) / p.length * (1.0 - strict_eps);
  if (shock < b.upper) {
    b.upper = shock;
    b.binding = Binding::kShockwaveUpper;
  }
  double rho = x.total(x.rho, link, k);
  if (rho > 0) {
    double breakpoint = 60.0 * ((1.0 - strict_eps) - rho * L) / (rho * p.free_flow_speed);
    if (breakpoint <= b.upper) {
      b.upper = breakpoint;
      b.binding = Binding::kFdBreakpoint;
    }
  }
  b.upper = std::max(b.upper, b.lower);
  return b;
}

bool cell_admits(const Network& net, const GlobalParams& params, const hdq::TrafficState& x,
                 const HeadwayField& base, int link, int k, double h, double strict_eps) {
  const LinkParams& p = net.links.at(link).params;
  const double L = params.vehicle_length;
  const double hb = base.at(link, k);
  if (x.delta[x.at(link, k)]) return std::abs(h - hb) <= 1e-12 * hb;
  if (h < p.h_min - 1e-12 || h > p.h_max + 1e-12) return false;
  int nw;
  try {
    nw = hfd::shockwave_steps(h, params.dt, L, p.length);
  } catch (const std::domain_error&) {
    return false;
  }
  if (nw != x.nw[x.at(link, k)]) return false;
  double rho = x.total(x.rho, link, k);
  return rho * (seconds_to_minutes(h) * p.free_flow_speed + L) <= 1.0 - strict_eps + 1e-15;
}

MaximinReport maximin_headway(const Network& net, const GlobalParams& params,
                              const DemandProfile& demand, const hdq::TrafficState& x,
                              const HeadwayField& base, const MaximinOptions& options) {
  check_weights(base, options);
  sodta::BuildOptions build;
  build.strict_eps = options.strict_eps;
  auto sys = sodta::build_constraints(net, params, demand, base, build);
  auto res = sodta::constraint_residuals(sys, sodta::state_to_vector(sys, x));
  for (const auto& [family, value] : res.by_family)
    if (value > options.residual_tol)
      throw std::invalid_argument("traffic state violates " + family + " by " + fmt(value));

  MaximinReport r;
  r.h_star = base;
  r.binding.assign(base.size(), Binding::kHMax);
  for (int link : base.links)
    for (int k = 1; k <= base.n_intervals; ++k) {
      CellBounds b = cell_bounds(net, params, x, base, link, k, options.strict_eps);
      int cell = base.cell(link, k);
      r.h_star.values[cell] = b.upper;
      r.binding[cell] = b.binding;
    }
  for (int c = 0; c < base.size(); ++c) {
    r.l1_norm += std::abs(r.h_star.values[c]);
    r.weighted_sum += weight(options, c) * r.h_star.values[c];
  }
  std::tie(r.mean_gap, r.mean_ratio) = headway_gap_stats(r.h_star, base);
  return r;
}

HeadwayField maximin_lp(const Network& net, const GlobalParams& params,
                        const hdq::TrafficState& x, const HeadwayField& base,
                        const MaximinOptions& options) {
  check_weights(base, options);
  const int m = base.size();
  const double dt = params.dt;
  const double L = params.vehicle_length;
  const double eps = options.strict_eps;
  lp::LinearProgram prog;
  prog.objective = Eigen::VectorXd::Zero(m);
  prog.lower = Eigen::VectorXd::Zero(m);
  prog.upper = Eigen::VectorXd::Zero(m);
  std::vector<Eigen::Triplet<double>> trip;
  std::vector<double> rhs;
  for (int link : base.links) {
    const LinkParams& p = net.links[link].params;
    for (int k = 1; k <= base.n_intervals; ++k) {
      int c = base.cell(link, k);
      prog.objective[c] = -weight(options, c);
      if (x.delta[x.at(link, k)]) {
        prog.lower[c] = prog.upper[c] = base.at(link, k);
        continue;
      }
      int nw = x.nw[x.at(link, k)];
      prog.lower[c] = p.h_min;
      prog.upper[c] = p.h_max;
      // Shockwave count unchanged: L_ij h >= dt L n^w and L_ij h <= dt L (n^w + 1) (1 - eps).
      trip.emplace_back(static_cast<int>(rhs.size()), c, -p.length / 60.0);
      rhs.push_back(-dt * L * nw);
      trip.emplace_back(static_cast<int>(rhs.size()), c, p.length / 60.0);
      rhs.push_back(dt * L * (nw + 1) * (1.0 - eps));
      double rho = x.total(x.rho, link, k);
      if (rho > 0) {
        trip.emplace_back(static_cast<int>(rhs.size()), c, rho * p.free_flow_speed / 60.0);
        rhs.push_back((1.0 - eps) - rho * L);
      }
    }
  }
  prog.ineq_matrix.resize(static_cast<int>(rhs.size()), m);
  prog.ineq_matrix.setFromTriplets(trip.begin(), trip.end());
  prog.ineq_rhs = Eigen::Map<Eigen::VectorXd>(rhs.data(), static_cast<Eigen::Index>(rhs.size()));
  prog.eq_matrix.resize(0, m);
  prog.eq_rhs.resize(0);
  auto sol = lp::solve_lp(prog);
  if (sol.status != lp::Status::kOptimal)
    throw std::runtime_error(std::string("maximin program is ") + lp::to_string(sol.status));
  HeadwayField h = base;
  for (int c = 0; c < m; ++c) h.values[c] = sol.x[c];
  return h;
}

PreservationReport verify_optimality_preserved(const HeadwayField& h_star, const Network& net,
                                               const GlobalParams& params,
                                               const DemandProfile& demand, double ttt_star,
                                               const hdq::TrafficState& x, double rel_tol,
                                               double replay_tol) {
  PreservationReport rep;
  rep.ttt_star = ttt_star;
  auto sys = sodta::build_constraints(net, params, demand, h_star);
  Eigen::VectorXd xv = sodta::state_to_vector(sys, x);
  const lp::LinearProgram& prog = sys.program.base;
  Eigen::VectorXd eq = prog.eq_matrix * xv - prog.eq_rhs;
  Eigen::VectorXd in = prog.ineq_matrix * xv - prog.ineq_rhs;
  auto note = [&](const sodta::RowTag& t, double v) {
    rep.replay_residual = std::max(rep.replay_residual, v);
    if (v > replay_tol)
      rep.violations.push_back(t.family + " link " + std::to_string(t.link) + " k " +
                               std::to_string(t.k) + " by " + fmt(v));
  };
  for (int i = 0; i < eq.size(); ++i) note(sys.eq_tags[i], std::abs(eq[i]));
  for (int i = 0; i < in.size(); ++i) note(sys.ineq_tags[i], std::max(0.0, in[i]));
  auto bounds = sodta::constraint_residuals(sys, xv);
  for (const char* family : {"nonnegativity", "end_queue", "delta_range", "integrality"}) {
    auto it = bounds.by_family.find(family);
    if (it != bounds.by_family.end()) note({family, -1, -1, 0}, it->second);
  }

  auto solved = sodta::solve_fixed_headway(net, params, demand, h_star);
  rep.ttt_resolved = solved.ttt;
  bool same = solved.status == lp::Status::kOptimal &&
              std::abs(solved.ttt - ttt_star) <= rel_tol * std::max(1.0, std::abs(ttt_star));
  if (solved.status != lp::Status::kOptimal)
    rep.violations.push_back(std::string("re-solve ") + lp::to_string(solved.status));
  else if (!same)
    rep.violations.push_back("re-solved TTT " + fmt(solved.ttt) + " differs from " + fmt(ttt_star));
  rep.preserved = same && rep.replay_residual <= replay_tol;
  return rep;
}

std::pair<double, double> headway_gap_stats(const HeadwayField& h, const HeadwayField& base) {
  if (h.links != base.links || h.n_intervals != base.n_intervals)
    throw std::invalid_argument("headway fields are not congruent");
  if (h.size() == 0) return {0.0, 1.0};
  double gap = 0.0, ratio = 0.0;
  for (int c = 0; c < h.size(); ++c) {
    gap += std::abs(h.values[c] - base.values[c]);
    ratio += h.values[c] / base.values[c];
  }
  return {gap / h.size(), ratio / h.size()};
}

UniquenessProbe probe_alternate_optimum(const Network& net, const GlobalParams& params,
                                        const DemandProfile& demand, const HeadwayField& h,
                                        double ttt_star, std::uint64_t seed, int directions) {
  auto sys = sodta::build_constraints(net, params, demand, h);
  lp::MixedProgram mip = sys.program;
  lp::LinearProgram& prog = mip.base;
  const int n = prog.num_vars();
  const int rows = prog.num_ineq();
  std::vector<Eigen::Triplet<double>> trip;
  for (int k = 0; k < prog.ineq_matrix.outerSize(); ++k)
    for (lp::SparseMatrix::InnerIterator it(prog.ineq_matrix, k); it; ++it)
      trip.emplace_back(it.row(), it.col(), it.value());
  for (int j = 0; j < n; ++j)
    if (prog.objective[j] != 0.0) trip.emplace_back(rows, j, prog.objective[j]);
  lp::SparseMatrix grown(rows + 1, n);
  grown.setFromTriplets(trip.begin(), trip.end());
  prog.ineq_matrix = grown;
  prog.ineq_rhs.conservativeResize(rows + 1);
  prog.ineq_rhs[rows] = ttt_star + 1e-7 * (1.0 + std::abs(ttt_star));

  UniquenessProbe probe;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int d = 0; d < directions; ++d) {
    Eigen::VectorXd r(n);
    for (int j = 0; j < n; ++j) r[j] = unit(rng);
    prog.objective = r;
    auto lo = lp::solve_mip(mip);
    prog.objective = -r;
    auto hi = lp::solve_mip(mip);
    probe.probes += 2;
    if (lo.status != lp::Status::kOptimal || hi.status != lp::Status::kOptimal)
      throw std::runtime_error("optimal face probe did not solve");
    double scale = 1.0 + std::max(lo.x.cwiseAbs().maxCoeff(), hi.x.cwiseAbs().maxCoeff());
    double spread = (lo.x - hi.x).cwiseAbs().maxCoeff();
    probe.spread = std::max(probe.spread, spread);
    if (spread > 1e-6 * scale) probe.unique = false;
  }
  return probe;
}

std::vector<double> link_means(const HeadwayField& h) {
  std::vector<double> out;
  for (std::size_t p = 0; p < h.links.size(); ++p) {
    double s = 0.0;
    for (int k = 0; k < h.n_intervals; ++k) s += h.values[p * h.n_intervals + k];
    out.push_back(h.n_intervals > 0 ? s / h.n_intervals : 0.0);
  }
  return out;
}

std::string report_csv(const Network& net, const hdq::TrafficState& x, const HeadwayField& base,
                       const MaximinReport& report) {
  std::ostringstream out;
  out << "link,tail,head,k,delta,rho,n_w,h_base_s,h_star_s,binding\n";
  for (int link : base.links)
    for (int k = 1; k <= base.n_intervals; ++k) {
      int c = base.cell(link, k);
      out << link << ',' << net.links[link].tail << ',' << net.links[link].head << ',' << k << ','
          << x.delta[x.at(link, k)] << ',' << fmt(x.total(x.rho, link, k)) << ','
          << x.nw[x.at(link, k)] << ',' << fmt(base.values[c]) << ','
          << fmt(report.h_star.values[c]) << ',' << to_string(report.binding[c]) << '\n';
    }
  return out.str();
}

std::string summary_csv(const Network& net, const HeadwayField& base, const MaximinReport& report) {
  std::ostringstream out;
  out << "link,tail,head,mean_h_star_s,mean_h_min_s\n";
  auto star = link_means(report.h_star);
  auto low = link_means(base);
  for (std::size_t p = 0; p < base.links.size(); ++p) {
    const Link& l = net.links[base.links[p]];
    out << l.id << ',' << l.tail << ',' << l.head << ',' << fmt(star[p]) << ',' << fmt(low[p])
        << '\n';
  }
  return out.str();
}

}  // namespace hwctl::maximin
