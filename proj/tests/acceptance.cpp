// Acceptance run: one PASS/FAIL line per criterion with the measured value and
// the tolerance it was held to. Exit status is the number of failed gating
// criteria (1 through 11).

#include <chrono>
#include <cstdio>
#include <map>
#include <random>
#include <string>

#include "hwctl/feasibility.hpp"
#include "hwctl/hdq.hpp"
#include "hwctl/hfd.hpp"
#include "hwctl/maximin.hpp"
#include "hwctl/scenario.hpp"
#include "hwctl/sensitivity.hpp"
#include "hwctl/sodta.hpp"
#include "support.hpp"

using namespace hwctl;

namespace {

constexpr double kTttReference = 27740.0;
constexpr double kTttTolerance = 0.02;
constexpr double kRuntimeBudget = 300.0;  // s
constexpr double kPreserveTol = 1e-6;
constexpr double kMeanTol = 0.05;  // s
constexpr double kRatioReference = 2.42;
constexpr double kRatioTol = 0.2;
constexpr double kDqTol = 1e-9;
constexpr double kFlowBoundTol = 1e-7;
constexpr double kEnumTol = 1e-8;
constexpr double kGradientTol = 1e-4;
constexpr double kSweepInversion = 0.02;  // s
constexpr double kReplayTol = 1e-6;
const double kLinkMeans[6] = {0.994, 1.050, 2.500, 0.962, 0.944, 0.804};

int failures = 0;

void report(int id, bool pass, const std::string& name, const std::string& detail,
            bool gating = true) {
  std::printf("criterion %2d: %s  %s: %s\n", id, pass ? "PASS" : "FAIL", name.c_str(),
              detail.c_str());
  std::fflush(stdout);
  if (gating && !pass) ++failures;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Baseline {
  Scenario sc;
  HeadwayField h;
  sodta::SolveResult r;
  double seconds = 0.0;
};

Baseline solve_small() {
  Baseline b;
  b.sc = build_small_network(50.0);
  b.h = HeadwayField::minimum(b.sc.network, b.sc.params.n_intervals);
  auto t0 = std::chrono::steady_clock::now();
  b.r = sodta::solve_fixed_headway(b.sc.network, b.sc.params, b.sc.demand, b.h);
  b.seconds = seconds_since(t0);
  return b;
}

// Every cell of h* admits x*, and raising any cell below h_max that is not
// pinned by congestion breaks admissibility.
bool elementwise_maximal(const Scenario& sc, const hdq::TrafficState& x, const HeadwayField& base,
                         const maximin::MaximinReport& rep, int* checked) {
  bool ok = true;
  *checked = 0;
  for (int link : base.links)
    for (int k = 1; k <= base.n_intervals; ++k) {
      const int c = base.cell(link, k);
      const double hs = rep.h_star.values[c];
      ok &= maximin::cell_admits(sc.network, sc.params, x, base, link, k, hs);
      auto b = rep.binding[c];
      if (b == maximin::Binding::kHMax || b == maximin::Binding::kCongestedPinned) continue;
      ok &= !maximin::cell_admits(sc.network, sc.params, x, base, link, k, hs * (1 + 1e-4));
      ++*checked;
    }
  auto sys = sodta::build_constraints(sc.network, sc.params, sc.demand, rep.h_star);
  ok &= sodta::constraint_residuals(sys, sodta::state_to_vector(sys, x)).max() <= kReplayTol;
  return ok;
}

double flow_bound_violation(const Scenario& sc, const HeadwayField& h,
                            const hdq::TrafficState& st) {
  return hdq::check_state(sc.network, sc.params, sc.demand, h, st).by_family.at("flow_bounds");
}

struct Certificate {
  bool ok = true;
  double worst_residual = 0.0;
  double worst_margin = 0.0;  // min over instances of TTT(constructed) - TTT(optimal)
  std::string note;
};

void certify(const Scenario& sc, Certificate& cert) {
  feasibility::Construction c;
  try {
    c = feasibility::construct_feasible_solution(sc.network, sc.params, sc.demand);
  } catch (const std::exception& e) {
    cert.ok = false;
    cert.note = e.what();
    return;
  }
  auto sys = sodta::build_constraints(sc.network, sc.params, sc.demand, c.headway);
  double res = sodta::constraint_residuals(sys, sodta::state_to_vector(sys, c.state)).max();
  auto opt = sodta::solve_fixed_headway(sc.network, sc.params, sc.demand, c.headway);
  cert.worst_residual = std::max(cert.worst_residual, res);
  if (opt.status != lp::Status::kOptimal) {
    cert.ok = false;
    cert.note = "optimal re-solve failed";
    return;
  }
  double margin = c.ttt - opt.ttt;
  cert.worst_margin = std::min(cert.worst_margin, margin / std::max(1.0, opt.ttt));
  cert.ok &= res <= kReplayTol && margin >= -1e-6 * std::max(1.0, opt.ttt);
}

// Nodes 1..6 of Sioux Falls: 1->2, 1->3, 2->6, 3->4, 4->5, 5->6, with link
// data copied from the full network; origins at 1 and 3, destination 6.
Scenario sioux_falls_subgraph() {
  GlobalParams p;
  p.dt = 2.0;
  p.n_intervals = 30;
  p.demand_horizon = 10.0;
  p.vehicle_length = 0.004;
  std::string dir = HWCTL_DATA_DIR;
  auto full = load_tntp(read_file(dir + "/SiouxFalls_net.tntp"),
                        read_file(dir + "/SiouxFalls_trips.tntp"), p);
  Scenario sc;
  sc.params = p;
  for (auto [tail, head] : std::vector<std::pair<int, int>>{{1, 2}, {1, 3}, {2, 6}, {3, 4},
                                                           {4, 5}, {5, 6}})
    for (const Link& l : full.network.links)
      if (!l.is_connector && l.tail == tail && l.head == head)
        sc.network.add_link(tail, head, l.params);
  sc.network.add_origin(1);
  sc.network.add_origin(3);
  sc.network.add_destination(6);
  sc.demand = uniform_demand(sc.network, sc.params, 20.0);
  return sc;
}

}  // namespace

int main() {
  auto start = std::chrono::steady_clock::now();
  Baseline base = solve_small();
  const bool solved = base.r.status == lp::Status::kOptimal;
  const double ttt = base.r.ttt;

  // 1
  {
    double rel = (ttt - kTttReference) / kTttReference;
    bool pass = solved && std::abs(rel) <= kTttTolerance && base.seconds < kRuntimeBudget;
    report(1, pass, "small-network min-headway TTT",
           fmt("TTT %.2f vs %.0f (rel %+.4f, tol %.2f)", ttt,
               kTttReference, rel, kTttTolerance) +
               fmt(", %.2f s (budget %.0f s)", base.seconds, kRuntimeBudget));
  }

  maximin::MaximinReport rep;
  if (solved)
    rep = maximin::maximin_headway(base.sc.network, base.sc.params, base.sc.demand, base.r.state,
                                   base.h);

  // 2
  {
    auto pr = maximin::verify_optimality_preserved(rep.h_star, base.sc.network, base.sc.params,
                                                   base.sc.demand, ttt, base.r.state);
    double d = std::abs(pr.ttt_resolved - ttt);
    report(2, solved && pr.preserved && d <= kPreserveTol * ttt, "maximin preserves the optimum",
           fmt("|TTT(h*) - TTT(h_min)| = %.3g (tol %.3g), replay residual %.3g", d,
               kPreserveTol * ttt, pr.replay_residual));
  }

  // 3
  {
    auto probe = maximin::probe_alternate_optimum(base.sc.network, base.sc.params, base.sc.demand,
                                                  base.h, ttt, 7, 4);
    auto means = maximin::link_means(rep.h_star);
    std::string m;
    double worst = 0.0;
    for (int i = 0; i < 6; ++i) {
      m += fmt(i ? ", %.3f" : "%.3f", means[i]);
      worst = std::max(worst, std::abs(means[i] - kLinkMeans[i]));
    }
    if (probe.unique) {
      report(3, worst <= kMeanTol, "per-link maximin means",
             "means (" + m + fmt("), max deviation %.3f s (tol %.2f s)", worst, kMeanTol));
    } else {
      int checked = 0;
      bool ok = elementwise_maximal(base.sc, base.r.state, base.h, rep, &checked);
      report(3, ok, "per-link maximin means",
             fmt("alternate optima detected (spread %.3g over %.0f probes); elementwise "
                 "maximality over %.0f raisable cells ",
                 probe.spread, probe.probes, checked) +
                 (ok ? "holds" : "fails") + "; means (" + m +
                 fmt("), max deviation from reference %.3f s (not gating)", worst));
    }
  }

  // 4
  report(4, solved && std::abs(rep.mean_ratio - kRatioReference) <= kRatioTol,
         "mean h*/h_min ratio",
         fmt("%.4f vs %.2f (tol %.2f); mean gap %.4f s", rep.mean_ratio, kRatioReference,
             kRatioTol, rep.mean_gap));

  // 5
  {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    const double L = 0.004, dt = 5.0;
    int bad = 0;
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      LinkParams p;
      p.free_flow_speed = 0.9 + 0.3 * U(rng);
      p.length = 3.2 + 1.3 * U(rng);
      p.inflow_cap = p.outflow_cap = 50;
      double rho_prev = U(rng) / L;
      double u = U(rng) * p.length * (1 - L * rho_prev) / (L * dt);
      double h1 = 0.5 + 2.0 * U(rng), h2 = 0.5 + 2.0 * U(rng);
      if (h1 > h2) std::swap(h1, h2);
      double f1 = hfd::resolve_regime(rho_prev, u, h1, p, dt, L).flow;
      double f2 = hfd::resolve_regime(rho_prev, u, h2, p, dt, L).flow;
      worst = std::max(worst, f2 - f1);
      bad += f1 < f2 - 1e-9 * (1 + f2);
    }
    report(5, bad == 0, "flow non-increasing in headway",
           fmt("%.0f of 1000 draws violate; max f(h2) - f(h1) = %.3g", bad, worst));
  }

  // 6
  {
    std::mt19937_64 rng(5);
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
      auto dev = fixtures::dq_deviation_on_random_delay_trajectory(rng);
      worst = std::max({worst, dev.downstream, dev.upstream});
    }
    report(6, worst <= kDqTol, "double-queue reduction",
           fmt("max queue deviation %.3g over 50 trajectories (tol %.0e)", worst, kDqTol));
  }

  // 7
  {
    double worst = 0.0;
    int trajectories = 0;
    for (double d : {20.0, 50.0}) {
      auto sc = build_small_network(d);
      auto h = HeadwayField::minimum(sc.network, sc.params.n_intervals);
      auto sim = hdq::simulate(sc.network, sc.params, sc.demand, h, {});
      worst = std::max(worst, flow_bound_violation(sc, h, sim.state));
      ++trajectories;
    }
    if (solved) {
      worst = std::max(worst, flow_bound_violation(base.sc, base.h, base.r.state));
      worst = std::max(worst, flow_bound_violation(base.sc, rep.h_star, base.r.state));
      trajectories += 2;
    }
    std::mt19937_64 rng(77);
    for (int t = 0; t < 20; ++t) {
      auto sc = fixtures::random_instance(rng);
      auto h = HeadwayField::minimum(sc.network, sc.params.n_intervals);
      auto sim = hdq::simulate(sc.network, sc.params, sc.demand, h, {});
      worst = std::max(worst, flow_bound_violation(sc, h, sim.state));
      auto opt = sodta::solve_fixed_headway(sc.network, sc.params, sc.demand, h);
      if (opt.status == lp::Status::kOptimal)
        worst = std::max(worst, flow_bound_violation(sc, h, opt.state));
      trajectories += 1 + (opt.status == lp::Status::kOptimal);
    }
    report(7, worst <= kFlowBoundTol, "flow bounds along trajectories",
           fmt("max violation %.3g over %.0f simulated and optimized trajectories (tol %.0e)", worst,
               trajectories, kFlowBoundTol));
  }

  // 8
  {
    std::mt19937_64 rng(12);
    double worst = 0.0;
    int mismatched = 0, feasible = 0;
    for (int t = 0; t < 200; ++t) {
      auto mip = fixtures::random_mip(rng);
      double oracle = fixtures::enumerate_binaries(mip);
      auto s = lp::solve_mip(mip);
      if (!std::isfinite(oracle)) {
        mismatched += s.status != lp::Status::kInfeasible;
        continue;
      }
      ++feasible;
      if (s.status != lp::Status::kOptimal) {
        ++mismatched;
        continue;
      }
      worst = std::max(worst, std::abs(s.objective - oracle));
    }
    report(8, mismatched == 0 && worst <= kEnumTol, "branch and bound vs enumeration",
           fmt("max |difference| %.3g over %.0f feasible of 200 programs, %.0f status mismatches "
               "(tol %.0e)",
               worst, feasible, mismatched, kEnumTol));
  }

  // 9
  {
    std::mt19937_64 rng(123);
    double worst_random = 0.0;
    int checked = 0;
    while (checked < 50) {
      auto err = fixtures::kkt_gradient_error(rng);
      if (!err) continue;
      worst_random = std::max(worst_random, *err);
      ++checked;
    }
    struct Field {
      double centre;
      unsigned seed;
    };
    double worst_network = 0.0;
    std::string fields;
    bool fields_ok = true;
    for (Field f : {Field{1.0, 5}, Field{0.9, 3}, Field{1.1, 7}}) {
      auto sc = build_small_network();
      auto h = HeadwayField::uniform(sc.network, sc.params.n_intervals, f.centre);
      std::mt19937 gen(f.seed);
      std::uniform_real_distribution<double> U(-0.1, 0.1);
      for (double& v : h.values) v += U(gen);
      double margin = fixtures::shockwave_margin(sc.network, sc.params, h.links, h.values,
                                                 h.n_intervals);
      auto r = sodta::solve_fixed_headway(sc.network, sc.params, sc.demand, h);
      if (r.status != lp::Status::kOptimal || margin <= 1e-3) {
        fields_ok = false;
        fields += fmt(" [%.1f+-0.1: unusable, margin %.3g]", f.centre, margin);
        continue;
      }
      auto g = sensitivity::gradient_ttt(sensitivity::assemble_kkt(r.solution, r.system, h));
      auto fd = sensitivity::finite_difference_gradient(sc.network, sc.params, sc.demand, h, 1e-4, 8);
      double err = (g.dz_dh - fd).cwiseAbs().maxCoeff() / (1 + fd.cwiseAbs().maxCoeff());
      worst_network = std::max(worst_network, err);
      fields += fmt(" [%.1f+-0.1: err %.2g, |grad| %.4g]", f.centre, err,
                    fd.cwiseAbs().maxCoeff());
    }
    sensitivity::DescentOptions opt;
    opt.iterations = 20;
    auto h0 = HeadwayField::uniform(base.sc.network, base.sc.params.n_intervals, 1.0);
    auto trace =
        sensitivity::sensitivity_descent(base.sc.network, base.sc.params, base.sc.demand, h0, opt);
    bool descent_ok = !trace.ttt.empty() && trace.ttt.back() >= ttt - 1e-6 * ttt &&
                      (trace.status == "stationary" || trace.status == "ok");
    bool pass = fields_ok && worst_random <= kGradientTol && worst_network <= kGradientTol &&
                descent_ok;
    report(9, pass, "sensitivity gradient",
           fmt("random programs max rel err %.3g (tol %.0e); small network", worst_random,
               kGradientTol) +
               fields +
               fmt("; descent %.0f -> %.0f after %.0f accepted steps", trace.ttt.front(),
                   trace.ttt.back(), trace.ttt.size() - 1.0) +
               " (" + trace.status + fmt("), plateau above %.0f (reference 33500)", ttt));
  }

  // 10
  {
    scenario::Config cfg;
    cfg.jobs = 4;
    auto rows = scenario::demand_sweep(cfg, 30, 70, 9, {0.5});
    int inversions = 0;
    double largest = 0.0;
    bool all_ok = true;
    std::string gaps;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      all_ok &= rows[i].status == "ok";
      gaps += fmt(i ? " %.4f" : "%.4f", rows[i].mean_gap);
      if (i && rows[i].mean_gap > rows[i - 1].mean_gap) {
        ++inversions;
        largest = std::max(largest, rows[i].mean_gap - rows[i - 1].mean_gap);
      }
    }
    bool pass = all_ok && (inversions == 0 || (inversions == 1 && largest <= kSweepInversion));
    report(10, pass, "mean gap across demand 30..70",
           "gaps " + gaps +
               fmt("; %.0f inversions, largest %.3g s (allowed 1 of at most %.2f s)", inversions,
                   largest, kSweepInversion));
  }

  // 11
  {
    Certificate cert;
    certify(base.sc, cert);
    std::mt19937_64 rng(2024);
    for (int t = 0; t < 20 && cert.ok; ++t) certify(fixtures::random_instance(rng), cert);
    report(11, cert.ok, "feasibility certificate",
           fmt("small network + 20 random instances: max replay residual %.3g (tol %.0e), "
               "min relative TTT margin %.3g",
               cert.worst_residual, kReplayTol, cert.worst_margin) +
               (cert.note.empty() ? "" : "; " + cert.note));
  }

  // 12
  {
    auto sc = sioux_falls_subgraph();
    auto problems = validate(sc.network, sc.params);
    std::string detail = "full network not attempted; 6-link subgraph (nodes 1-6, dt 2 min, "
                         "N 30, T1 10 min, 20 veh/min per origin):";
    bool pass = problems.empty();
    if (!pass) {
      detail += " invalid: " + problems.front();
    } else {
      auto h = HeadwayField::minimum(sc.network, sc.params.n_intervals);
      auto r = sodta::solve_fixed_headway(sc.network, sc.params, sc.demand, h);
      if (r.status != lp::Status::kOptimal) {
        pass = false;
        detail += " solve infeasible";
      } else {
        auto mm = maximin::maximin_headway(sc.network, sc.params, sc.demand, r.state, h);
        auto pr = maximin::verify_optimality_preserved(mm.h_star, sc.network, sc.params,
                                                       sc.demand, r.ttt, r.state);
        double fb = std::max(flow_bound_violation(sc, h, r.state),
                             flow_bound_violation(sc, mm.h_star, r.state));
        auto sim = hdq::simulate(sc.network, sc.params, sc.demand, h, {});
        fb = std::max(fb, flow_bound_violation(sc, h, sim.state));
        Certificate cert;
        certify(sc, cert);
        pass = pr.preserved && fb <= kFlowBoundTol && cert.ok;
        detail += fmt(" TTT %.1f, mean gap %.3f s, ratio %.2f;", r.ttt, mm.mean_gap,
                      mm.mean_ratio) +
                  " preservation " + (pr.preserved ? "holds" : "fails") +
                  fmt(", flow-bound violation %.3g, certificate residual %.3g", fb,
                      cert.worst_residual) +
                  (cert.note.empty() ? "" : " (" + cert.note + ")");
      }
    }
    report(12, pass, "Sioux Falls subgraph (not gating)", detail, false);
  }

  std::printf("gating failures: %d; total %.1f s\n", failures, seconds_since(start));
  return failures;
}
