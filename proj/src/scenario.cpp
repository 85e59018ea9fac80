#include "hwctl/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <sstream>

#include <json.hpp>

#include "hwctl/feasibility.hpp"
#include "hwctl/headway.hpp"
#include "hwctl/maximin.hpp"
#include "hwctl/sensitivity.hpp"
#include "hwctl/sodta.hpp"

namespace hwctl::scenario {

namespace {

using Json = nlohmann::ordered_json;

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

void apply_timing(const Config& c, GlobalParams& p) {
  if (c.dt) p.dt = *c.dt;
  if (c.horizon) {
    if (!(p.dt > 0)) throw ConfigError("interval length must be positive");
    double n = *c.horizon / p.dt;
    if (!(n >= 1) || std::abs(n - std::round(n)) > 1e-9)
      throw ConfigError("horizon must be a positive multiple of the interval length");
    p.n_intervals = static_cast<int>(std::round(n));
  }
  if (c.demand_horizon) p.demand_horizon = *c.demand_horizon;
  if (c.vehicle_length) p.vehicle_length = *c.vehicle_length;
}

void apply_headway_bounds(const Config& c, Network& net) {
  for (int id : net.physical_links()) {
    if (c.h_min) net.links[id].params.h_min = *c.h_min;
    if (c.h_max) net.links[id].params.h_max = *c.h_max;
  }
}

std::string headway_summary(const Network& net, const HeadwayField& h, const HeadwayField& base) {
  std::ostringstream out;
  out << "link,tail,head,mean_h_s,mean_h_min_s\n";
  auto mean = maximin::link_means(h);
  auto low = maximin::link_means(base);
  for (std::size_t p = 0; p < h.links.size(); ++p) {
    const Link& l = net.links[h.links[p]];
    out << l.id << ',' << l.tail << ',' << l.head << ',' << fmt(mean[p]) << ',' << fmt(low[p])
        << '\n';
  }
  return out.str();
}

Json link_means_json(const Network& net, const HeadwayField& h) {
  Json out = Json::array();
  auto mean = maximin::link_means(h);
  for (std::size_t p = 0; p < h.links.size(); ++p) {
    const Link& l = net.links[h.links[p]];
    out.push_back({{"link", l.id}, {"tail", l.tail}, {"head", l.head}, {"mean_h_s", mean[p]}});
  }
  return out;
}

sodta::SolveOptions solve_options(const Config& c) {
  sodta::SolveOptions o;
  o.mip.tol.feasibility = c.solver_tol;
  return o;
}

void fail(RunResult& r, int code, const std::string& why) {
  r.exit_code = code;
  r.error = why;
  Json j;
  j["status"] = code == kInfeasible ? "infeasible" : code == kConfigError ? "config-error"
                                                                          : "solver-failure";
  j["error"] = why;
  r.report_json = j.dump(2);
}

// Report for an infeasible fixed-headway solve.
void infeasible(RunResult& r, const Network& net, const sodta::SolveResult& s) {
  r.exit_code = kInfeasible;
  r.error = "no feasible traffic state within the horizon";
  Json j = Json::parse(sodta::report_json(net, s));
  j["error"] = r.error;
  if (s.horizon_bound) j["sufficient_horizon_min"] = *s.horizon_bound;
  r.report_json = j.dump(2);
}

void run_min_hw(const Config& c, const Scenario& sc, RunResult& r) {
  auto h = HeadwayField::minimum(sc.network, sc.params.n_intervals);
  auto s = sodta::solve_fixed_headway(sc.network, sc.params, sc.demand, h, solve_options(c));
  if (s.status != lp::Status::kOptimal) return infeasible(r, sc.network, s);
  r.ttt = s.ttt;
  Json j = Json::parse(sodta::report_json(sc.network, s));
  j["headway_means"] = link_means_json(sc.network, h);
  r.report_json = j.dump(2);
  r.trajectory_csv = hdq::trajectory_csv(sc.network, s.state);
  r.summary_csv = headway_summary(sc.network, h, h);
}

void run_maximin_hw(const Config& c, const Scenario& sc, RunResult& r) {
  auto h = HeadwayField::minimum(sc.network, sc.params.n_intervals);
  auto s = sodta::solve_fixed_headway(sc.network, sc.params, sc.demand, h, solve_options(c));
  if (s.status != lp::Status::kOptimal) return infeasible(r, sc.network, s);
  r.ttt = s.ttt;
  auto rep = maximin::maximin_headway(sc.network, sc.params, sc.demand, s.state, h);
  auto kept = maximin::verify_optimality_preserved(rep.h_star, sc.network, sc.params, sc.demand,
                                                    s.ttt, s.state);
  r.mean_gap = rep.mean_gap;
  r.mean_ratio = rep.mean_ratio;

  Json j = Json::parse(sodta::report_json(sc.network, s));
  Json m;
  m["mean_gap_s"] = rep.mean_gap;
  m["mean_ratio"] = rep.mean_ratio;
  m["l1_norm_s"] = rep.l1_norm;
  std::map<std::string, int> counts;
  for (auto b : rep.binding) ++counts[maximin::to_string(b)];
  m["binding_counts"] = counts;
  m["headway_means"] = link_means_json(sc.network, rep.h_star);
  m["preserved"] = kept.preserved;
  m["ttt_resolved"] = kept.ttt_resolved;
  m["replay_residual"] = kept.replay_residual;
  m["violations"] = kept.violations;
  if (c.probe_directions > 0) {
    auto probe = maximin::probe_alternate_optimum(sc.network, sc.params, sc.demand, h, s.ttt,
                                                  c.seed, c.probe_directions);
    m["optimum_unique"] = probe.unique;
    m["optimum_spread"] = probe.spread;
  }
  j["maximin"] = m;
  r.report_json = j.dump(2);
  r.trajectory_csv = hdq::trajectory_csv(sc.network, s.state);
  r.summary_csv = headway_summary(sc.network, rep.h_star, h);
  r.extra_name = "maximin_cells.csv";
  r.extra_csv = maximin::report_csv(sc.network, s.state, h, rep);
  if (!kept.preserved) {
    r.exit_code = kSolverFailure;
    r.error = "maximin headway did not preserve the optimum";
  }
}

void run_so_hw(const Config& c, const Scenario& sc, RunResult& r) {
  auto base = HeadwayField::minimum(sc.network, sc.params.n_intervals);
  HeadwayField h0 = base;
  for (int cell = 0; cell < h0.size(); ++cell) {
    const LinkParams& p = sc.network.links[h0.links[cell / h0.n_intervals]].params;
    h0.values[cell] = std::clamp(c.descent_start, p.h_min, p.h_max);
  }
  sensitivity::DescentOptions o;
  o.eta = c.eta;
  o.iterations = c.iterations;
  o.backtracking = c.backtracking;
  o.solve = solve_options(c);
  auto trace = sensitivity::sensitivity_descent(sc.network, sc.params, sc.demand, h0, o);
  if (trace.ttt.empty()) {
    auto s = sodta::solve_fixed_headway(sc.network, sc.params, sc.demand, h0, o.solve);
    return infeasible(r, sc.network, s);
  }
  const HeadwayField& last = trace.h.back();
  auto s = sodta::solve_fixed_headway(sc.network, sc.params, sc.demand, last, o.solve);
  r.ttt = trace.ttt.back();
  Json j = Json::parse(sodta::report_json(sc.network, s));
  Json d;
  d["status"] = trace.status;
  d["iterations"] = static_cast<int>(trace.ttt.size()) - 1;
  d["eta"] = c.eta;
  d["backtracking"] = c.backtracking;
  d["backtracking_used"] = trace.backtracking_used;
  d["ttt_start"] = trace.ttt.front();
  d["ttt_final"] = trace.ttt.back();
  d["headway_means"] = link_means_json(sc.network, last);
  j["descent"] = d;
  r.report_json = j.dump(2);
  r.trajectory_csv = hdq::trajectory_csv(sc.network, s.state);
  r.summary_csv = headway_summary(sc.network, last, base);
  r.extra_name = "descent_trace.csv";
  r.extra_csv = sensitivity::trace_csv(trace);
}

void write_outputs(const Config& c, const RunResult& r) {
  namespace fs = std::filesystem;
  fs::create_directories(c.out_dir);
  auto put = [&](const std::string& name, const std::string& text) {
    if (text.empty()) return;
    std::ofstream f(fs::path(c.out_dir) / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + name);
    f << text;
  };
  put("config.json", config_json(c));
  put("report.json", r.report_json);
  put("trajectory.csv", r.trajectory_csv);
  put("headway_summary.csv", r.summary_csv);
  if (!r.extra_name.empty()) put(r.extra_name, r.extra_csv);
}

}  // namespace

const char* to_string(Kind k) {
  switch (k) {
    case Kind::kMinHw: return "min-hw";
    case Kind::kMaximinHw: return "maximin-hw";
    case Kind::kSoHw: return "so-hw";
  }
  return "?";
}

Kind parse_kind(const std::string& name) {
  for (Kind k : {Kind::kMinHw, Kind::kMaximinHw, Kind::kSoHw})
    if (name == to_string(k)) return k;
  throw ConfigError("unknown scenario '" + name + "'");
}

Scenario load(const Config& c) {
  Scenario sc;
  try {
    if (c.network == "small") {
      sc = build_small_network(c.demand);
      apply_timing(c, sc.params);
      apply_headway_bounds(c, sc.network);
      if (!c.vehicle_length) settle_vehicle_length(sc.network, sc.params);
      sc.demand = uniform_demand(sc.network, sc.params, c.demand);
    } else if (ends_with(c.network, ".json")) {
      sc = scenario_from_json(read_file(c.network));
      apply_timing(c, sc.params);
      apply_headway_bounds(c, sc.network);
    } else {
      if (c.trips.empty()) throw ConfigError("a TNTP network needs a trips file");
      GlobalParams p;
      apply_timing(c, p);
      TntpOptions o;
      if (c.h_min) o.h_min = *c.h_min;
      if (c.h_max) o.h_max = *c.h_max;
      sc = load_tntp(read_file(c.network), read_file(c.trips), p, o);
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (!(c.demand >= 0)) throw ConfigError("demand must be non-negative");
  for (const auto& od : sc.demand.pairs)
    if (static_cast<int>(od.rate.size()) > sc.params.n_intervals)
      throw ConfigError("demand extends past the horizon");
  auto problems = validate(sc.network, sc.params);
  if (!problems.empty()) throw ConfigError(problems.front());
  if (c.jobs < 1) throw ConfigError("jobs must be at least 1");
  if (!(c.solver_tol > 0)) throw ConfigError("solver tolerance must be positive");
  return sc;
}

RunResult run_scenario(const Config& c) {
  RunResult r;
  try {
    Scenario sc = load(c);
    switch (c.kind) {
      case Kind::kMinHw: run_min_hw(c, sc, r); break;
      case Kind::kMaximinHw: run_maximin_hw(c, sc, r); break;
      case Kind::kSoHw: run_so_hw(c, sc, r); break;
    }
  } catch (const ConfigError& e) {
    fail(r, kConfigError, e.what());
  } catch (const std::invalid_argument& e) {
    fail(r, kConfigError, e.what());
  } catch (const std::exception& e) {
    fail(r, kSolverFailure, e.what());
  }
  if (!c.out_dir.empty()) {
    try {
      write_outputs(c, r);
    } catch (const std::exception& e) {
      if (r.exit_code == kSuccess) {
        r.exit_code = kConfigError;
        r.error = e.what();
      }
    }
  }
  return r;
}

std::vector<double> levels(double lo, double hi, int steps) {
  if (steps < 1 || !(lo <= hi)) throw ConfigError("sweep range is empty");
  if (steps == 1 || lo == hi) return {lo};
  std::vector<double> out;
  for (int i = 0; i < steps; ++i) out.push_back(lo + (hi - lo) * i / (steps - 1));
  return out;
}

namespace {

std::vector<SweepRow> run_levels(const Config& base, std::vector<SweepRow> rows) {
  auto one = [&base](SweepRow row) {
    Config c = base;
    c.kind = Kind::kMaximinHw;
    c.demand = row.demand;
    c.h_min = row.h_min;
    c.out_dir.clear();
    c.probe_directions = 0;
    RunResult r = run_scenario(c);
    row.mean_gap = r.mean_gap;
    row.ttt = r.ttt;
    if (r.exit_code != kSuccess) row.status = r.error;
    return row;
  };
  const int jobs = std::max(1, base.jobs);
  for (std::size_t start = 0; start < rows.size(); start += jobs) {
    std::vector<std::future<SweepRow>> batch;
    for (std::size_t i = start; i < std::min(rows.size(), start + jobs); ++i)
      batch.push_back(std::async(jobs > 1 ? std::launch::async : std::launch::deferred, one,
                                 rows[i]));
    for (std::size_t i = 0; i < batch.size(); ++i) rows[start + i] = batch[i].get();
  }
  return rows;
}

}  // namespace

std::vector<SweepRow> demand_sweep(const Config& base, double lo, double hi, int steps,
                                   const std::vector<double>& h_min_levels) {
  if (h_min_levels.empty()) throw ConfigError("no h_min levels");
  std::vector<SweepRow> rows;
  for (double hm : h_min_levels)
    for (double d : levels(lo, hi, steps)) rows.push_back({d, hm});
  return run_levels(base, rows);
}

std::vector<SweepRow> headway_sweep(const Config& base, double lo, double hi, int steps) {
  std::vector<SweepRow> rows;
  for (double hm : levels(lo, hi, steps)) rows.push_back({base.demand, hm});
  return run_levels(base, rows);
}

std::string sweep_csv(const std::vector<SweepRow>& rows, bool headway_first) {
  auto quote = [](const std::string& s) {
    std::string q = "\"";
    for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return q + "\"";
  };
  std::ostringstream out;
  out << (headway_first ? "h_min,demand" : "demand,h_min") << ",mean_gap_seconds,ttt,status\n";
  for (const auto& r : rows) {
    double a = headway_first ? r.h_min : r.demand;
    double b = headway_first ? r.demand : r.h_min;
    out << fmt(a) << ',' << fmt(b) << ',' << fmt(r.mean_gap) << ',' << fmt(r.ttt) << ','
        << quote(r.status) << '\n';
  }
  return out.str();
}

std::string config_json(const Config& c) {
  Json j;
  j["network"] = c.network;
  if (!c.trips.empty()) j["trips"] = c.trips;
  j["demand"] = c.demand;
  auto opt = [&](const char* key, const std::optional<double>& v) {
    if (v) j[key] = *v;
  };
  opt("dt_min", c.dt);
  opt("horizon_min", c.horizon);
  opt("demand_horizon_min", c.demand_horizon);
  opt("veh_length_km", c.vehicle_length);
  opt("h_min_s", c.h_min);
  opt("h_max_s", c.h_max);
  j["scenario"] = to_string(c.kind);
  j["seed"] = c.seed;
  j["solver_tol"] = c.solver_tol;
  if (c.kind == Kind::kSoHw) {
    j["eta"] = c.eta;
    j["iterations"] = c.iterations;
    j["backtracking"] = c.backtracking;
    j["descent_start_s"] = c.descent_start;
  }
  if (c.kind == Kind::kMaximinHw) j["probe_directions"] = c.probe_directions;
  return j.dump(2);
}

}  // namespace hwctl::scenario
