#include <gtest/gtest.h>

#include <functional>
#include <limits>
#include <random>

#include "hwctl/lp.hpp"
#include "support.hpp"

using namespace hwctl;
using lp::Status;
using namespace hwctl::fixtures;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}  // namespace


TEST(Lp, TwoVariableOptimumAndDuals) {
  // min -x - 2y  s.t. x + y <= 4, x - y <= 1, 0 <= x, y <= 3.
  Eigen::MatrixXd C(2, 2);
  C << 1, 1, 1, -1;
  auto p = make(Eigen::Vector2d(-1, -2), Eigen::MatrixXd(0, 2), Eigen::VectorXd(0), C,
                Eigen::Vector2d(4, 1), Eigen::Vector2d(0, 0), Eigen::Vector2d(3, 3));
  auto s = lp::solve_lp(p);
  ASSERT_EQ(s.status, Status::kOptimal);
  EXPECT_NEAR(s.x[0], 1.0, 1e-9);
  EXPECT_NEAR(s.x[1], 3.0, 1e-9);
  EXPECT_NEAR(s.objective, -7.0, 1e-9);
  EXPECT_NEAR(s.ineq_duals[0], 1.0, 1e-9);
  EXPECT_NEAR(s.ineq_duals[1], 0.0, 1e-9);
  auto k = lp::kkt_residuals(p, s);
  EXPECT_LE(k.stationarity, 1e-9);
  EXPECT_LE(k.complementarity, 1e-9);
  EXPECT_LE(k.duality_gap, 1e-9);
}

TEST(Lp, DetectsInfeasibleAndUnbounded) {
  Eigen::MatrixXd C(1, 1);
  C << 1;
  auto bad = make(Eigen::VectorXd::Ones(1), Eigen::MatrixXd(0, 1), Eigen::VectorXd(0), C,
                  Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Zero(1),
                  Eigen::VectorXd::Constant(1, kInf));
  EXPECT_EQ(lp::solve_lp(bad).status, Status::kInfeasible);
  auto open = make(-Eigen::VectorXd::Ones(1), Eigen::MatrixXd(0, 1), Eigen::VectorXd(0),
                   Eigen::MatrixXd(0, 1), Eigen::VectorXd(0), Eigen::VectorXd::Zero(1),
                   Eigen::VectorXd::Constant(1, kInf));
  EXPECT_EQ(lp::solve_lp(open).status, Status::kUnbounded);
}

TEST(Lp, FreeVariablesAndEqualities) {
  // min x + y  s.t. x - y = 1, x + y >= -2, x, y free: optimum on x + y = -2.
  Eigen::MatrixXd A(1, 2), C(1, 2);
  A << 1, -1;
  C << -1, -1;
  auto p = make(Eigen::Vector2d(1, 1), A, Eigen::VectorXd::Ones(1), C,
                Eigen::VectorXd::Constant(1, 2.0), Eigen::Vector2d(-kInf, -kInf),
                Eigen::Vector2d(kInf, kInf));
  auto s = lp::solve_lp(p);
  ASSERT_EQ(s.status, Status::kOptimal);
  EXPECT_NEAR(s.objective, -2.0, 1e-9);
  EXPECT_NEAR(s.x[0] - s.x[1], 1.0, 1e-9);
}

TEST(Lp, RejectsInconsistentDimensions) {
  auto p = make(Eigen::Vector2d(1, 1), Eigen::MatrixXd(0, 2), Eigen::VectorXd(0),
                Eigen::MatrixXd(1, 2), Eigen::VectorXd(0), Eigen::Vector2d(0, 0),
                Eigen::Vector2d(1, 1));
  EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(LpProperty, MatchesVertexEnumeration) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 200; ++t) {
    int n = 2 + static_cast<int>(rng() % 3);
    auto p = random_lp(rng, n, static_cast<int>(rng() % 2), 2 + static_cast<int>(rng() % 3));
    auto s = lp::solve_lp(p);
    ASSERT_EQ(s.status, Status::kOptimal) << "program " << t;
    EXPECT_NEAR(s.objective, vertex_oracle(p), 1e-8) << "program " << t;
    auto k = lp::kkt_residuals(p, s);
    EXPECT_LE(std::max({k.primal, k.stationarity, k.dual_sign, k.complementarity}), 1e-8)
        << "program " << t;
  }
}

TEST(LpProperty, WarmStartReproducesOptimum) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 30; ++t) {
    auto p = random_lp(rng, 8, 2, 6);
    auto s = lp::solve_lp(p);
    ASSERT_EQ(s.status, Status::kOptimal);
    p.ineq_rhs.array() += 0.01;
    auto cold = lp::solve_lp(p);
    auto warm = lp::solve_lp(p, {}, &s.basis);
    ASSERT_EQ(warm.status, Status::kOptimal);
    EXPECT_NEAR(warm.objective, cold.objective, 1e-9);
  }
}

TEST(Lp, DegenerateProgramTerminates) {
  // Many redundant constraints through the same vertex.
  const int m = 40;
  Eigen::MatrixXd C(m, 3);
  Eigen::VectorXd d(m);
  for (int i = 0; i < m; ++i) {
    C.row(i) << 1.0 + i % 3, 1.0 + (i / 3) % 3, 1.0;
    d[i] = C.row(i).sum();
  }
  auto p = make(-Eigen::Vector3d(1, 1, 1), Eigen::MatrixXd(0, 3), Eigen::VectorXd(0), C, d,
                Eigen::Vector3d::Zero(), Eigen::Vector3d::Constant(kInf));
  auto s = lp::solve_lp(p);
  ASSERT_EQ(s.status, Status::kOptimal);
  EXPECT_NEAR(s.objective, -3.0, 1e-9);
}


TEST(MipProperty, BranchAndBoundMatchesEnumeration) {
  std::mt19937_64 rng(12);
  int feasible = 0;
  for (int t = 0; t < 200; ++t) {
    auto mip = random_mip(rng);
    double oracle = enumerate_binaries(mip);
    auto s = lp::solve_mip(mip);
    if (!std::isfinite(oracle)) {
      EXPECT_EQ(s.status, Status::kInfeasible) << "program " << t;
      continue;
    }
    ++feasible;
    ASSERT_EQ(s.status, Status::kOptimal) << "program " << t;
    EXPECT_NEAR(s.objective, oracle, 1e-8) << "program " << t;
    for (int j : mip.binary_idx) EXPECT_NEAR(s.x[j], std::round(s.x[j]), 1e-9);
  }
  EXPECT_GE(feasible, 100);
}

TEST(Mip, NodeLimitCarriesIncumbent) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> U(0.1, 1.0);
  // Knapsack with 14 items resists a two-node budget.
  const int n = 14;
  lp::MixedProgram mip;
  Eigen::VectorXd c(n);
  Eigen::MatrixXd C(1, n);
  for (int j = 0; j < n; ++j) {
    c[j] = -U(rng);
    C(0, j) = U(rng);
    mip.binary_idx.push_back(j);
  }
  mip.base = make(c, Eigen::MatrixXd(0, n), Eigen::VectorXd(0), C,
                  Eigen::VectorXd::Constant(1, 0.37 * C.sum()), Eigen::VectorXd::Zero(n),
                  Eigen::VectorXd::Ones(n));
  lp::MipOptions o;
  o.node_limit = 2;
  EXPECT_THROW(lp::solve_mip(mip, o), lp::NodeLimitError);
  auto full = lp::solve_mip(mip);
  EXPECT_EQ(full.status, Status::kOptimal);
  EXPECT_NEAR(full.objective, enumerate_binaries(mip), 1e-8);
}

TEST(Mip, LpFormatSections) {
  lp::MixedProgram mip;
  Eigen::MatrixXd C(1, 2);
  C << 1, 1;
  mip.base = make(Eigen::Vector2d(1, -1), Eigen::MatrixXd(0, 2), Eigen::VectorXd(0), C,
                  Eigen::VectorXd::Ones(1), Eigen::Vector2d(0, 0), Eigen::Vector2d(1, kInf));
  mip.binary_idx = {0};
  std::string text = lp::to_lp_format(mip, {"a", "b"});
  for (const char* s : {"Minimize", "Subject To", "Bounds", "Binaries", "End", " a", " b"})
    EXPECT_NE(text.find(s), std::string::npos) << s;
  EXPECT_NE(text.find("+inf"), std::string::npos);
}
