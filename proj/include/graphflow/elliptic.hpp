#pragma once

// Dirichlet problem for the minimal surface system by frozen-coefficient
// (Picard) iteration: each outer step solves the decoupled linear problems
//   g^ij(Du_k) D_ij v^a = 0,  v = psi on the boundary,
// with the same non-divergence stencils used by the flow.

#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include <json.hpp>

#include "graphflow/geometry.hpp"
#include "graphflow/grid.hpp"
#include "graphflow/jet.hpp"
#include "graphflow/operators.hpp"

namespace graphflow {

struct LinearSolveOptions {
  double inner_tol = 1e-11;      // interior residual, L-infinity
  std::size_t max_inner = 100000;  // total Krylov iterations
};

struct LinearSolveResult {
  GraphField solution;
  std::size_t iterations = 0;
  double residual_inf = 0.0;
  bool converged = false;
};

namespace detail {

/// Rows of the frozen operator on interior unknowns: A v_int = b, with
/// boundary contributions moved to b.
struct FrozenSystem {
  Eigen::SparseMatrix<double, Eigen::RowMajor> matrix;
  std::vector<std::size_t> rank;  // node -> unknown index, or kNoNode
  std::vector<NodeId> unknowns;
};

inline FrozenSystem assemble_frozen(const DomainGrid& grid, const MetricField& metric) {
  FrozenSystem sys;
  sys.unknowns.assign(grid.interior_nodes().begin(), grid.interior_nodes().end());
  sys.rank.assign(grid.size(), kNoNode);
  for (std::size_t k = 0; k < sys.unknowns.size(); ++k) sys.rank[sys.unknowns[k]] = k;
  std::vector<Eigen::Triplet<double>> triplets;
  const int n = grid.dim();
  for (std::size_t row = 0; row < sys.unknowns.size(); ++row) {
    const NodeId p = sys.unknowns[row];
    auto push = [&](const Stencil& s, double c) {
      for (int k = 0; k < s.count; ++k) triplets.emplace_back(int(row), int(s.node[k]), c * s.weight[k]);
    };
    for (int i = 0; i < n; ++i) {
      push(second_derivative_stencil(grid, p, i), metric.g_inv(p, i, i));
      for (int j = i + 1; j < n; ++j) {
        const double c = metric.g_inv(p, i, j) + metric.g_inv(p, j, i);
        if (c != 0.0) push(cross_derivative_stencil(grid, p, i, j), c);
      }
    }
  }
  // Columns are node ids here; split into unknown and boundary parts.
  Eigen::SparseMatrix<double, Eigen::RowMajor> full(static_cast<Eigen::Index>(sys.unknowns.size()),
                                                    static_cast<Eigen::Index>(grid.size()));
  full.setFromTriplets(triplets.begin(), triplets.end());
  sys.matrix = full;
  return sys;
}

}  // namespace detail

/// Solves g^ij D_ij v^a = 0 at interior nodes with v = psi on the boundary for
/// every component, using BiCGSTAB with an incomplete-LU preconditioner and
/// iterative refinement on the L-infinity residual. `guess` seeds the interior.
inline LinearSolveResult linear_solve(const MetricField& metric, const GraphField& psi,
                                      const LinearSolveOptions& opt = {},
                                      const GraphField* guess = nullptr) {
  const DomainGrid& grid = psi.grid();
  if (grid.periodic()) throw std::invalid_argument("linear_solve: dirichlet mode required");
  const detail::FrozenSystem full = detail::assemble_frozen(grid, metric);
  const auto nu = static_cast<Eigen::Index>(full.unknowns.size());

  // Restrict columns to unknowns; boundary columns feed the right-hand side.
  std::vector<Eigen::Triplet<double>> inner;
  std::vector<std::vector<std::pair<NodeId, double>>> bnd_terms(full.unknowns.size());
  for (Eigen::Index row = 0; row < full.matrix.outerSize(); ++row)
    for (decltype(full.matrix)::InnerIterator it(full.matrix, row); it; ++it) {
      const auto col = static_cast<NodeId>(it.col());
      if (full.rank[col] != kNoNode)
        inner.emplace_back(int(row), int(full.rank[col]), it.value());
      else
        bnd_terms[row].emplace_back(col, it.value());
    }
  Eigen::SparseMatrix<double, Eigen::RowMajor> a(nu, nu);
  a.setFromTriplets(inner.begin(), inner.end());
  a.makeCompressed();

  Eigen::BiCGSTAB<Eigen::SparseMatrix<double, Eigen::RowMajor>, Eigen::IncompleteLUT<double>> solver;
  solver.preconditioner().setDroptol(1e-6);
  solver.preconditioner().setFillfactor(20);
  solver.compute(a);
  if (solver.info() != Eigen::Success) throw std::runtime_error("linear_solve: preconditioner setup failed");
  solver.setTolerance(1e-15);

  const int m = psi.codim();
  std::vector<double> values(psi.values().begin(), psi.values().end());
  LinearSolveResult out{psi, 0, 0.0, true};
  double worst = 0.0;
  for (int comp = 0; comp < m; ++comp) {
    Eigen::VectorXd b = Eigen::VectorXd::Zero(nu);
    for (Eigen::Index row = 0; row < nu; ++row)
      for (const auto& [node, w] : bnd_terms[row]) b(row) -= w * psi(node, comp);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(nu);
    if (guess != nullptr)
      for (Eigen::Index k = 0; k < nu; ++k) x(k) = (*guess)(full.unknowns[k], comp);
    double res = (b - a * x).lpNorm<Eigen::Infinity>();
    for (int refine = 0; refine < 30 && res >= opt.inner_tol && out.iterations < opt.max_inner; ++refine) {
      solver.setMaxIterations(static_cast<Eigen::Index>(opt.max_inner - out.iterations));
      const Eigen::VectorXd r = b - a * x;
      const Eigen::VectorXd d = solver.solve(r);
      out.iterations += static_cast<std::size_t>(std::max<Eigen::Index>(1, solver.iterations()));
      x += d;
      const double next = (b - a * x).lpNorm<Eigen::Infinity>();
      if (!std::isfinite(next) || next >= res) {
        res = std::min(res, next);
        break;
      }
      res = next;
    }
    worst = std::max(worst, res);
    if (!(res < opt.inner_tol)) out.converged = false;
    for (Eigen::Index k = 0; k < nu; ++k) values[full.unknowns[k] * m + comp] = x(k);
  }
  out.residual_inf = worst;
  out.solution = psi.with_values(std::move(values));
  return out;
}

struct PicardOptions {
  double outer_tol = 1e-9;
  std::size_t max_outer = 100;
  LinearSolveOptions inner;
};

struct PicardReport {
  std::size_t iterations = 0;  // linear solves performed
  std::vector<std::pair<std::size_t, double>> residual_history;
  bool converged = false;
  bool diverged = false;
  bool inner_failure = false;
  GraphField final;
};

inline nlohmann::json to_json(const PicardReport& r) {
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& [k, res] : r.residual_history) hist.push_back({k, res});
  return {{"iterations", r.iterations}, {"converged", r.converged}, {"residual_history", hist}};
}

/// Outer iteration u_{k+1} = linear_solve(metric(u_k), psi), starting from the
/// flat harmonic extension of psi (or from `initial` when given). Stops when
/// the interior non-divergence residual of u_k is below outer_tol; aborts
/// when it grows to 10x its running minimum.
inline PicardReport picard_solve(const GraphField& psi, const PicardOptions& opt = {},
                                 const std::optional<GraphField>& initial = std::nullopt) {
  if (psi.grid().periodic()) throw std::invalid_argument("picard_solve: dirichlet mode required");
  PicardReport report{0, {}, false, false, false, psi};
  GraphField u = psi;
  if (initial) {
    u = psi.with_values(std::vector<double>(initial->values().begin(), initial->values().end()));
  } else {
    const LinearSolveResult h = linear_solve(MetricField::flat(psi.dim(), psi.size()), psi, opt.inner);
    ++report.iterations;
    if (!h.converged) report.inner_failure = true;
    u = h.solution;
  }
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0;; ++k) {
    const double res = ms_residual_nondiv(u, NodeSet::interior).linf;
    report.residual_history.emplace_back(k, res);
    if (res < opt.outer_tol) {
      report.converged = true;
      break;
    }
    best = std::min(best, res);
    if (res > 10.0 * best || !std::isfinite(res)) {
      report.diverged = true;
      break;
    }
    if (report.iterations >= opt.max_outer) break;
    const LinearSolveResult next = linear_solve(induced_metric(u), psi, opt.inner, &u);
    ++report.iterations;
    if (!next.converged) report.inner_failure = true;
    u = next.solution;
  }
  report.final = std::move(u);
  return report;
}

}  // namespace graphflow
