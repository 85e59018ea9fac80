#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hwctl/feasibility.hpp"
#include "hwctl/hfd.hpp"
#include "hwctl/sodta.hpp"
#include "support.hpp"

using namespace hwctl;

namespace {

// 1 -> 2 -> 3 with identical links, one origin at 1 and the destination at 3.
Scenario two_links(double rate) {
  Scenario sc;
  LinkParams p;
  p.free_flow_speed = 1.0;
  p.length = 4.0;
  p.inflow_cap = p.outflow_cap = 60.0;
  p.q_up_cap = p.q_down_cap = 500.0;
  sc.network.add_link(1, 2, p);
  sc.network.add_link(2, 3, p);
  sc.network.add_origin(1);
  sc.network.add_destination(3);
  sc.params.dt = 5.0;
  sc.params.n_intervals = 18;
  sc.params.demand_horizon = 20.0;
  sc.params.vehicle_length = 0.004;
  sc.demand = uniform_demand(sc.network, sc.params, rate);
  return sc;
}

}  // namespace

TEST(HorizonBound, ZeroDemandIsLoadingWindow) {
  auto sc = two_links(0.0);
  EXPECT_DOUBLE_EQ(feasibility::horizon_bound(sc.network, sc.params, sc.demand), 20.0);
}

TEST(HorizonBound, HandComputedTwoLinkPath) {
  auto sc = two_links(10.0);
  // Release rate halfway between v_f / length and the peak flow at h_max.
  const double lo = 1.0 / 4.0;
  const double hi = 1.0 / (2.5 / 60.0 + 0.004);
  const double rate = lo + 0.5 * (hi - lo);
  const double batch = 200.0;  // below 0.9 * 500, so one batch
  const double passage = batch / rate + 4.0 * std::log(4.0 * rate);
  const double want = 20.0 + 2.0 * passage;
  auto plan = feasibility::make_plan(sc.network, sc.params, sc.demand);
  ASSERT_EQ(plan.pairs.size(), 1u);
  EXPECT_EQ(plan.pairs[0].batches, 1);
  EXPECT_NEAR(plan.pairs[0].rate, rate, 1e-12);
  EXPECT_NEAR(feasibility::feasibility_horizon(sc.network, sc.demand, plan), want, 1e-9);
  EXPECT_NE(feasibility::plan_json(sc.network, plan).find("\"batches\""), std::string::npos);
}

TEST(HorizonBound, LargeDemandSplitsIntoBatches) {
  auto sc = two_links(50.0);  // 1000 veh against batches of at most 450
  auto plan = feasibility::make_plan(sc.network, sc.params, sc.demand);
  EXPECT_EQ(plan.pairs[0].batches, 3);
  EXPECT_NEAR(plan.pairs[0].batch * 3, 1000.0, 1e-9);
}

TEST(HorizonBoundProperty, NonDecreasingInDemand) {
  double prev = 0.0;
  for (double rate = 0.0; rate <= 80.0; rate += 2.5) {
    auto sc = two_links(rate);
    double b = feasibility::horizon_bound(sc.network, sc.params, sc.demand);
    EXPECT_GE(b, prev - 1e-9) << "rate " << rate;
    prev = b;
  }
}

TEST(HorizonBound, UnreachableDestinationThrows) {
  auto sc = two_links(10.0);
  sc.network.add_link(4, 5, sc.network.links[0].params);
  int o = sc.network.add_origin(4);
  int d = sc.network.add_destination(3);
  sc.demand.pairs.push_back({o, d, sc.demand.pairs[0].rate});
  EXPECT_THROW(feasibility::make_plan(sc.network, sc.params, sc.demand), std::invalid_argument);
}

TEST(SteadyDensity, SatisfiesFreeFlowBranchAndConservation) {
  LinkParams p;
  p.free_flow_speed = 1.1;
  p.length = 3.3;
  for (double F : {1.0, 10.0, 40.0}) {
    double rho = feasibility::steady_density(F, p);
    ASSERT_LT(rho, hfd::critical_density(0.5, p.free_flow_speed, 0.004));
    EXPECT_NEAR(hfd::flow_fd(rho, 0.5, p, 0.004), F, 1e-12 * F);
    EXPECT_NEAR(hfd::density_update(rho, F, F, 5.0, p.length, 0.004), rho, 1e-12 * rho);
  }
}

TEST(Construction, SmallNetworkIsFeasibleAndNoBetterThanOptimum) {
  auto sc = build_small_network();
  auto c = feasibility::construct_feasible_solution(sc.network, sc.params, sc.demand);
  auto res = hdq::check_state(sc.network, sc.params, sc.demand, c.headway, c.state);
  EXPECT_LE(res.max(), 1e-7);
  auto sys = sodta::build_constraints(sc.network, sc.params, sc.demand, c.headway);
  EXPECT_LE(sodta::constraint_residuals(sys, sodta::state_to_vector(sys, c.state)).max(), 1e-6);
  auto opt = sodta::solve_fixed_headway(sc.network, sc.params, sc.demand, c.headway);
  ASSERT_EQ(opt.status, lp::Status::kOptimal);
  EXPECT_GE(c.ttt, opt.ttt - 1e-6 * opt.ttt);
  EXPECT_NEAR(c.ttt, sodta::total_travel_time(c.state, sc.params, sc.network), 1e-9 * c.ttt);
  EXPECT_EQ(c.paths.size(), sc.demand.pairs.size());
}

TEST(ConstructionProperty, RandomInstancesReplayCleanly) {
  std::mt19937_64 rng(55);
  int built = 0;
  for (int t = 0; t < 20; ++t) {
    auto sc = fixtures::random_instance(rng);
    feasibility::ConstructionOptions opt;
    opt.max_headway = t % 2 == 1;
    feasibility::Construction c;
    try {
      c = feasibility::construct_feasible_solution(sc.network, sc.params, sc.demand, opt);
    } catch (const feasibility::HorizonTooShort& e) {
      EXPECT_GT(e.bound(), sc.params.n_intervals * sc.params.dt) << "instance " << t;
      continue;
    }
    auto sys = sodta::build_constraints(sc.network, sc.params, sc.demand, c.headway);
    auto res = sodta::constraint_residuals(sys, sodta::state_to_vector(sys, c.state));
    EXPECT_LE(res.max(), 1e-6) << "instance " << t;
    auto opt_r = sodta::solve_fixed_headway(sc.network, sc.params, sc.demand, c.headway);
    ASSERT_EQ(opt_r.status, lp::Status::kOptimal) << "instance " << t;
    EXPECT_GE(c.ttt, opt_r.ttt - 1e-6 * opt_r.ttt) << "instance " << t;
    ++built;
  }
  EXPECT_GE(built, 15);
}

TEST(Construction, ShortHorizonThrows) {
  auto sc = build_small_network();
  sc.params.n_intervals = 10;
  sc.demand = uniform_demand(sc.network, sc.params, 50.0);
  try {
    feasibility::construct_feasible_solution(sc.network, sc.params, sc.demand);
    FAIL() << "expected HorizonTooShort";
  } catch (const feasibility::HorizonTooShort& e) {
    EXPECT_GT(e.bound(), 50.0);
  }
}
