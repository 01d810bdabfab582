#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "pmsop/lp_simplex.hpp"
#include "support/oracles.hpp"

namespace pmsop {
namespace {

TEST(LPSimplex, SingleBoundedVariable) {
  LinearProgram lp;
  lp.add_variable(0.0, 1.0, -1.0);
  const auto s = solve(lp);
  ASSERT_EQ(s.status, LPStatus::Optimal);
  EXPECT_DOUBLE_EQ(s.x[0], 1.0);
  EXPECT_DOUBLE_EQ(s.objective, -1.0);
  EXPECT_DOUBLE_EQ(s.reduced_costs[0], -1.0);
}

TEST(LPSimplex, ContradictoryRowsAreInfeasible) {
  LinearProgram lp;
  const int x = lp.add_variable(-kInf, kInf, 1.0);
  lp.add_row({{x, 1.0}}, RowSense::GreaterEqual, 2.0);
  lp.add_row({{x, 1.0}}, RowSense::LessEqual, 1.0);
  EXPECT_EQ(solve(lp).status, LPStatus::Infeasible);
}

TEST(LPSimplex, UnboundedRay) {
  LinearProgram lp;
  const int x = lp.add_variable(0.0, kInf, -1.0);
  const int y = lp.add_variable(0.0, kInf, 0.0);
  lp.add_row({{x, 1.0}, {y, -1.0}}, RowSense::LessEqual, 1.0);
  EXPECT_EQ(solve(lp).status, LPStatus::Unbounded);
}

TEST(LPSimplex, EqualityDualIsRhsSensitivity) {
  // min x + 2y  s.t.  x + y = 3, x <= 2, y free.
  LinearProgram lp;
  const int x = lp.add_variable(-kInf, 2.0, 1.0);
  const int y = lp.add_variable(-kInf, kInf, 2.0);
  lp.add_row({{x, 1.0}, {y, 1.0}}, RowSense::Equal, 3.0);
  const auto s = solve(lp);
  ASSERT_EQ(s.status, LPStatus::Optimal);
  EXPECT_NEAR(s.objective, 4.0, 1e-12);
  EXPECT_NEAR(s.row_duals[0], 2.0, 1e-12);
  EXPECT_NEAR(s.reduced_costs[0], -1.0, 1e-12);
}

TEST(LPSimplex, FreePinnedVariableCarriesItsDual) {
  // Pinned z = 0.3 via an equality on a free variable; cost 5 z + |x - z| over x in [0, 1] with x cost -1.
  LinearProgram lp;
  const int z = lp.add_variable(-kInf, kInf, 5.0);
  const int x = lp.add_variable(0.0, 1.0, -1.0);
  const int e = lp.add_variable(0.0, kInf, 2.0);
  lp.add_row({{z, 1.0}}, RowSense::Equal, 0.3);
  lp.add_row({{e, 1.0}, {x, -1.0}, {z, 1.0}}, RowSense::GreaterEqual, 0.0);
  lp.add_row({{e, 1.0}, {x, 1.0}, {z, -1.0}}, RowSense::GreaterEqual, 0.0);
  const auto s = solve(lp);
  ASSERT_EQ(s.status, LPStatus::Optimal);
  // Optimum x = z (penalty slope 2 beats revenue 1): value 5z - z = 4z.
  EXPECT_NEAR(s.objective, 1.2, 1e-12);
  EXPECT_NEAR(s.row_duals[0], 4.0, 1e-12);
}

TEST(LPSimplex, DegenerateProblemTerminates) {
  // Klee-Minty-like degenerate stack: many constraints through the origin.
  LinearProgram lp;
  const int n = 5;
  for (int j = 0; j < n; ++j) lp.add_variable(0.0, kInf, -1.0 - j);
  for (int i = 0; i < 12; ++i) {
    std::vector<std::pair<int, double>> terms;
    for (int j = 0; j < n; ++j) terms.emplace_back(j, ((i + j) % 3) - 0.5);
    lp.add_row(std::move(terms), RowSense::LessEqual, 0.0);
  }
  std::vector<std::pair<int, double>> cap;
  for (int j = 0; j < n; ++j) cap.emplace_back(j, 1.0);
  lp.add_row(std::move(cap), RowSense::LessEqual, 1.0);
  const auto s = solve(lp);
  ASSERT_EQ(s.status, LPStatus::Optimal);
  const auto r = kkt_residuals(lp, s);
  EXPECT_LE(r.primal, 1e-9);
  EXPECT_LE(r.dual, 1e-9);
  EXPECT_LE(r.gap, 1e-9);
}

TEST(LPSimplex, DimensionMismatchRejected) {
  LinearProgram lp;
  lp.add_variable(0.0, 1.0, 1.0);
  lp.add_row({{3, 1.0}}, RowSense::LessEqual, 1.0);
  EXPECT_THROW(solve(lp), std::invalid_argument);
  LinearProgram bad;
  bad.cost = {1.0, 2.0};
  bad.lower = {0.0};
  bad.upper = {1.0, 1.0};
  EXPECT_THROW(solve(bad), std::invalid_argument);
}

TEST(LPSimplex, MatchesVertexEnumeration) {
  std::mt19937_64 rng(2024);
  int optimal = 0;
  for (int k = 0; k < 200; ++k) {
    const LinearProgram lp = testing::random_lp(rng);
    const auto s = solve(lp);
    const auto ref = testing::vertex_enumeration(lp);
    if (!ref) {
      EXPECT_EQ(s.status, LPStatus::Infeasible) << "instance " << k;
      continue;
    }
    ASSERT_EQ(s.status, LPStatus::Optimal) << "instance " << k;
    ++optimal;
    EXPECT_NEAR(s.objective, *ref, 1e-7) << "instance " << k;
    const auto r = kkt_residuals(lp, s);
    EXPECT_LE(r.primal, 1e-9) << "instance " << k;
    EXPECT_LE(r.dual, 1e-9) << "instance " << k;
    EXPECT_LE(r.gap, 1e-7) << "instance " << k;
    EXPECT_LE(r.complementarity, 1e-7) << "instance " << k;
  }
  EXPECT_GT(optimal, 50);
}

TEST(LPSimplex, SameBytesSameSolution) {
  std::mt19937_64 rng(7);
  const LinearProgram lp = testing::random_lp(rng);
  const auto a = solve(lp), b = solve(lp);
  EXPECT_EQ(a.iterations, b.iterations);
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.row_duals, b.row_duals);
}

TEST(LPSimplex, EqualityRhsSensitivityMatchesDual) {
  std::mt19937_64 rng(99);
  int probed = 0, discarded = 0;
  for (int k = 0; k < 100; ++k) {
    LinearProgram lp = testing::random_lp(rng);
    for (auto& row : lp.rows) row.sense = RowSense::LessEqual;
    lp.rows.front().sense = RowSense::Equal;
    const auto s = solve(lp);
    if (s.status != LPStatus::Optimal) continue;
    const double eps = 1e-6;
    LinearProgram moved = lp;
    moved.rows.front().rhs += eps;
    const auto t = solve(moved);
    if (t.status != LPStatus::Optimal || t.basis != s.basis) {
      ++discarded;
      continue;
    }
    const double predicted = s.row_duals.front() * eps;
    const double actual = t.objective - s.objective;
    EXPECT_NEAR(actual, predicted, 1e-4 * std::abs(predicted) + 1e-11) << "instance " << k;
    ++probed;
  }
  std::cout << "[sensitivity] probed=" << probed << " discarded=" << discarded << '\n';
  EXPECT_GT(probed, 10);
}

TEST(LPSimplex, TextDumpListsEveryRow) {
  LinearProgram lp;
  const int x = lp.add_variable(0.0, 1.0, 2.0);
  lp.add_row({{x, 1.0}}, RowSense::GreaterEqual, 0.5);
  std::ostringstream out;
  lp.write(out);
  EXPECT_NE(out.str().find("r0: 1*x0 >= 0.5"), std::string::npos);
}

}  // namespace
}  // namespace pmsop
