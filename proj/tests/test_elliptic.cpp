#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "graphflow/elliptic.hpp"
#include "graphflow/flow.hpp"
#include "graphflow/scenarios.hpp"
#include "support.hpp"

using namespace graphflow;
using testsupport::unit_box;

namespace {

// Independent solve of the frozen problem: probe the nodal operator
// g^ij D_ij with unit vectors to build the dense matrix, then factor it.
GraphField dense_frozen_solve(const MetricField& metric, const GraphField& psi) {
  const DomainGrid& grid = psi.grid();
  const auto& unknowns = grid.interior_nodes();
  const auto nu = static_cast<Eigen::Index>(unknowns.size());
  const int m = psi.codim();
  auto apply = [&](const GraphField& v, Eigen::Index row, int comp) {
    return nondiv_operator(node_jet(v, unknowns[row]), metric.inverse(unknowns[row]))(comp);
  };
  std::vector<double> zeros(grid.size() * m, 0.0);
  const std::vector<double> zero_bnd(grid.boundary_nodes().size() * m, 0.0);
  std::vector<double> values(psi.values().begin(), psi.values().end());
  for (int comp = 0; comp < m; ++comp) {
    Eigen::MatrixXd a(nu, nu);
    for (Eigen::Index col = 0; col < nu; ++col) {
      std::vector<double> e = zeros;
      e[unknowns[col] * m + comp] = 1.0;
      const GraphField probe(psi.grid_ptr(), m, e, zero_bnd);
      for (Eigen::Index row = 0; row < nu; ++row) a(row, col) = apply(probe, row, comp);
    }
    // Boundary contribution: the operator applied to psi with a zero interior.
    const GraphField lift = psi.with_values(zeros);
    Eigen::VectorXd b(nu);
    for (Eigen::Index row = 0; row < nu; ++row) b(row) = -apply(lift, row, comp);
    const Eigen::VectorXd x = a.fullPivLu().solve(b);
    for (Eigen::Index k = 0; k < nu; ++k) values[unknowns[k] * m + comp] = x(k);
  }
  return psi.with_values(std::move(values));
}

double max_diff(const GraphField& a, const GraphField& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.values().size(); ++k) d = std::max(d, std::abs(a.values()[k] - b.values()[k]));
  return d;
}

}  // namespace

TEST(LinearSolve, FlatAffineExtension) {
  const GraphField psi = make_scenario("affine", {.resolution = 9}).sample();
  const GraphField zero_interior = psi.with_values(std::vector<double>(psi.values().size(), 0.0));
  const LinearSolveResult r = linear_solve(MetricField::flat(2, psi.size()), zero_interior);
  ASSERT_TRUE(r.converged);
  EXPECT_LT(max_diff(r.solution, psi), 1e-12);
}

TEST(LinearSolve, OneDimensionalLine) {
  const GridPtr g = make_grid(unit_box(1, 11));
  std::vector<double> bnd{0.0, 1.0};
  const GraphField psi(g, 1, std::vector<double>(g->size(), 0.0), bnd);
  const LinearSolveResult r = linear_solve(MetricField::flat(1, g->size()), psi);
  ASSERT_TRUE(r.converged);
  for (NodeId p = 0; p < g->size(); ++p) EXPECT_NEAR(r.solution(p, 0), g->coord(p, 0), 1e-13);
}

TEST(LinearSolve, MatchesDenseDirectSolve) {
  const GraphField psi = make_scenario("scherk", {.resolution = 9}).sample();
  // Freeze the metric of an intermediate iterate: the flat harmonic extension.
  const GraphField u0 = linear_solve(MetricField::flat(2, psi.size()), psi).solution;
  const MetricField metric = induced_metric(u0);
  const LinearSolveResult r = linear_solve(metric, psi);
  ASSERT_TRUE(r.converged);
  EXPECT_LT(r.residual_inf, 1e-11);
  const GraphField oracle = dense_frozen_solve(metric, psi);
  EXPECT_LT(max_diff(r.solution, oracle), 1e-10);
  // Codimension-one maximum principle.
  double lo = 1e300, hi = -1e300;
  for (NodeId p : psi.grid().boundary_nodes()) {
    lo = std::min(lo, psi(p, 0));
    hi = std::max(hi, psi(p, 0));
  }
  for (NodeId p = 0; p < psi.size(); ++p) {
    EXPECT_GE(r.solution(p, 0), lo - 1e-10);
    EXPECT_LE(r.solution(p, 0), hi + 1e-10);
  }
}

TEST(LinearSolve, SecondComponentSolvedIndependently) {
  const GraphField psi = make_scenario("random_area_decreasing", {.resolution = 9, .seed = 4}).sample();
  const MetricField metric = induced_metric(psi);
  const LinearSolveResult r = linear_solve(metric, psi);
  ASSERT_TRUE(r.converged);
  EXPECT_LT(max_diff(r.solution, dense_frozen_solve(metric, psi)), 1e-10);
}

TEST(LinearSolve, RejectsPeriodic) {
  const GraphField psi = make_scenario("torus_bump", {.resolution = 8}).sample();
  EXPECT_THROW(linear_solve(MetricField::flat(2, psi.size()), psi), std::invalid_argument);
  EXPECT_THROW(picard_solve(psi), std::invalid_argument);
}

TEST(Picard, AffineConvergesInOneIteration) {
  const GraphField psi = make_scenario("affine", {.resolution = 9}).sample();
  const PicardReport r = picard_solve(psi);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.iterations, 1u);
  ASSERT_EQ(r.residual_history.size(), 1u);
  EXPECT_LT(max_diff(r.final, psi), 1e-12);
  const auto j = to_json(r);
  EXPECT_EQ(j["iterations"], 1);
  EXPECT_EQ(j["converged"], true);
  EXPECT_EQ(j["residual_history"].size(), 1u);
  EXPECT_EQ(j["residual_history"][0][0], 0);
}

TEST(Picard, ConvergedGuessIsReturnedUnchanged) {
  const GraphField psi = make_scenario("scherk", {.resolution = 17, .boundary_scale = 0.5}).sample();
  const PicardReport first = picard_solve(psi, {.outer_tol = 1e-10});
  ASSERT_TRUE(first.converged);
  const PicardReport again = picard_solve(psi, {.outer_tol = 1e-10}, first.final);
  EXPECT_TRUE(again.converged);
  EXPECT_EQ(again.iterations, 0u);
  EXPECT_EQ(max_diff(again.final, first.final), 0.0);
}

TEST(Picard, ScherkSecondOrderAccurate) {
  auto error = [](int res) {
    const Scenario sc = make_scenario("scherk", {.resolution = res});
    const GraphField exact = sc.sample();
    const PicardReport r = picard_solve(exact, {.outer_tol = 1e-10});
    EXPECT_TRUE(r.converged) << res;
    return max_diff(r.final, exact);
  };
  const double e17 = error(17), e33 = error(33);
  EXPECT_LT(e33, 1e-2);
  EXPECT_GE(std::log2(e17 / e33), 1.8);
}

TEST(Picard, AgreesWithFlowLimit) {
  const double outer_tol = 1e-10, residual_tol = 1e-10;
  for (std::uint64_t seed : {1, 2}) {
    const GraphField psi = make_scenario("small_bump", {.resolution = 17, .seed = seed}).sample();
    const PicardReport picard = picard_solve(psi, {.outer_tol = outer_tol});
    ASSERT_TRUE(picard.converged);
    const FlowRun flow = run_flow({.initial = psi, .t_max = 20.0, .residual_tol = residual_tol, .record_every = 1000});
    ASSERT_TRUE(flow.converged());
    EXPECT_LE(max_diff(picard.final, flow.final_state.field), 10.0 * (outer_tol + residual_tol));
  }
}

TEST(Picard, ResidualHistoryDecreases) {
  const GraphField psi = make_scenario("scherk", {.resolution = 17}).sample();
  const PicardReport r = picard_solve(psi, {.outer_tol = 1e-10});
  ASSERT_TRUE(r.converged);
  ASSERT_GE(r.residual_history.size(), 3u);
  for (std::size_t k = 0; k < r.residual_history.size(); ++k) EXPECT_EQ(r.residual_history[k].first, k);
  EXPECT_LT(r.residual_history.back().second, 1e-10);
  EXPECT_LT(r.residual_history.back().second, r.residual_history.front().second);
}

TEST(Picard, OuterBudgetReportsNonConvergence) {
  const GraphField psi = make_scenario("scherk", {.resolution = 17}).sample();
  const PicardReport r = picard_solve(psi, {.outer_tol = 1e-14, .max_outer = 3});
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.iterations, 3u);
}
