#pragma once

// Explicit time integration of the non-parametric mean curvature flow
//   du/dt = g^ij(Du) d_ij u,   u = psi on the boundary (or periodic),
// and the monitor pipeline that checks the gradient and *omega estimates
// along a trajectory.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "graphflow/geometry.hpp"
#include "graphflow/grid.hpp"
#include "graphflow/io.hpp"
#include "graphflow/jet.hpp"
#include "graphflow/operators.hpp"
#include "graphflow/parallel.hpp"

namespace graphflow {

struct FlowState {
  double t = 0.0;
  GraphField field;
  std::size_t step_index = 0;
  double dt = 0.0;
};

struct FlowMonitorRecord {
  double t = 0.0;
  std::size_t step = 0;
  double area = 0.0;
  double min_star_omega = 1.0;           // interior nodes
  double boundary_min_star_omega = 1.0;  // boundary nodes (1 when there are none)
  double max_grad = 0.0;                 // sup |Du|, Frobenius, all nodes
  double boundary_max_grad = 0.0;
  double dissipation = 0.0;  // sum over moving nodes of w |H|^2 sqrt g
  double residual_l2 = 0.0;
  double residual_inf = 0.0;
  double max_A2 = 0.0;
  double eta = 0.0;  // running sup |Du|^2 up to this record
  double boundary_bound_rhs = 0.0;
  bool small_data_ok = false;
  // (A(t + dt) - A(t)) / dt for the step taken right after this record; NaN
  // for the last record.
  double area_rate = std::numeric_limits<double>::quiet_NaN();
};

inline const char* kMonitorCsvHeader =
    "t,area,min_star_omega,max_grad,boundary_max_grad,dissipation,residual_l2,residual_inf,max_A2,"
    "boundary_bound_rhs,small_data_ok";

inline void write_monitors_csv(std::ostream& os, const std::vector<FlowMonitorRecord>& records) {
  using io::format_double;
  os << kMonitorCsvHeader << "\n";
  for (const auto& r : records) {
    os << format_double(r.t) << ',' << format_double(r.area) << ',' << format_double(r.min_star_omega) << ','
       << format_double(r.max_grad) << ',' << format_double(r.boundary_max_grad) << ','
       << format_double(r.dissipation) << ',' << format_double(r.residual_l2) << ','
       << format_double(r.residual_inf) << ',' << format_double(r.max_A2) << ','
       << format_double(r.boundary_bound_rhs) << ',' << (r.small_data_ok ? "true" : "false") << "\n";
  }
}

inline nlohmann::json to_json(const FlowMonitorRecord& r) {
  return {{"t", r.t},
          {"step", r.step},
          {"area", r.area},
          {"min_star_omega", r.min_star_omega},
          {"max_grad", r.max_grad},
          {"boundary_max_grad", r.boundary_max_grad},
          {"dissipation", r.dissipation},
          {"residual_l2", r.residual_l2},
          {"residual_inf", r.residual_inf},
          {"max_A2", r.max_A2},
          {"boundary_bound_rhs", r.boundary_bound_rhs},
          {"small_data_ok", r.small_data_ok}};
}

class BlowUpError : public std::runtime_error {
 public:
  BlowUpError(const std::string& what, std::optional<FlowMonitorRecord> last)
      : std::runtime_error(what), last_record(std::move(last)) {}
  std::optional<FlowMonitorRecord> last_record;
};

// ---------------------------------------------------------------------------
// Boundary-data estimates

/// sup over all nodes of |D^2 psi| and sup over boundary nodes of |D psi| (Frobenius).
struct DataBounds {
  double sup_hessian = 0.0;
  double sup_boundary_gradient = 0.0;
  double diameter = 0.0;
  int n = 0;
};

inline DataBounds data_bounds(const GraphField& psi) {
  const DomainGrid& grid = psi.grid();
  DataBounds b;
  b.n = grid.dim();
  b.diameter = grid.diameter();
  std::vector<double> hess(grid.size(), 0.0), grad(grid.size(), 0.0);
  parallel::for_each_index(grid.size(), [&](std::size_t p) {
    const NodeJet j = node_jet(psi, p);
    double s = 0.0;
    for (int a = 0; a < j.m; ++a)
      for (int i = 0; i < j.n; ++i)
        for (int k = 0; k < j.n; ++k) s += j.second(a, i, k) * j.second(a, i, k);
    hess[p] = std::sqrt(s);
    grad[p] = std::sqrt(j.grad_norm2());
  });
  for (NodeId p = 0; p < grid.size(); ++p) {
    b.sup_hessian = std::max(b.sup_hessian, hess[p]);
    if (grid.is_boundary(p)) b.sup_boundary_gradient = std::max(b.sup_boundary_gradient, grad[p]);
  }
  return b;
}

/// 4 n diam (1 + eta) sup|D^2 psi| + sqrt2 sup_boundary |D psi|.
inline double boundary_bound_rhs(const DataBounds& b, double eta) {
  return 4.0 * b.n * b.diameter * (1.0 + eta) * b.sup_hessian + std::sqrt(2.0) * b.sup_boundary_gradient;
}

inline double boundary_bound_rhs(const GraphField& psi, double eta) { return boundary_bound_rhs(data_bounds(psi), eta); }

struct SmallDataResult {
  bool ok = false;
  double lhs = 0.0;
  double rhs = 0.0;
};

/// 8 n diam sup|D^2 psi| + sqrt2 sup_boundary |D psi|  <  sqrt(2^(1/n) - 1).
inline SmallDataResult small_data_check(const DataBounds& b) {
  SmallDataResult r;
  r.lhs = 8.0 * b.n * b.diameter * b.sup_hessian + std::sqrt(2.0) * b.sup_boundary_gradient;
  r.rhs = grad_threshold(0.0, b.n);
  r.ok = r.lhs < r.rhs;
  return r;
}

inline SmallDataResult small_data_check(const GraphField& psi) { return small_data_check(data_bounds(psi)); }

/// Largest delta in (0, 1), to dyadic precision, with min *omega > 1/sqrt(2 - delta)
/// and the strengthened boundary inequality
///   8 n diam sup|D^2 psi| + sqrt2 sup|D psi| < sqrt((2 - delta)^(1/n) - 1)
/// both holding for the initial data. Zero when no such delta exists.
inline double certify_delta(const GraphField& psi, const DataBounds& b) {
  const SingularSpectrum spec = singular_spectrum(psi);
  const double min_omega = *std::min_element(spec.star_omega.begin(), spec.star_omega.end());
  const double lhs = small_data_check(b).lhs;
  auto holds = [&](double delta) { return min_omega > omega_threshold(delta) && lhs < grad_threshold(delta, b.n); };
  double lo = 0.0, hi = 1.0;
  for (int k = 0; k < 48; ++k) {
    const double mid = 0.5 * (lo + hi);
    (holds(mid) ? lo : hi) = mid;
  }
  return lo;
}

inline double certify_delta(const GraphField& psi) { return certify_delta(psi, data_bounds(psi)); }

// ---------------------------------------------------------------------------
// Stepping

/// dt = safety h_min^2 / (2 n), using that g^ij has eigenvalues at most 1.
inline double cfl_dt(const DomainGrid& grid, double safety) {
  if (!(safety > 0.0 && safety <= 1.0)) throw std::invalid_argument("cfl_dt: safety must lie in (0, 1]");
  const double h = grid.h_min();
  return safety * h * h / (2.0 * grid.dim());
}

inline double cfl_dt(const FlowState& state, double safety) { return cfl_dt(state.field.grid(), safety); }

/// Velocity g^ij d_ij u at interior nodes (the nodes that move), zero elsewhere.
inline NodalResidual flow_velocity(const GraphField& field) { return ms_residual_nondiv(field, NodeSet::interior); }

namespace detail {
inline FlowState advance(const FlowState& s, const NodalResidual& velocity, double dt) {
  const DomainGrid& grid = s.field.grid();
  std::vector<double> values(s.field.values().begin(), s.field.values().end());
  const int m = s.field.codim();
  for (NodeId p : grid.interior_nodes())
    for (int a = 0; a < m; ++a) {
      const double v = values[p * m + a] + dt * velocity.values[p * m + a];
      if (!std::isfinite(v)) throw BlowUpError("flow step produced a non-finite value", std::nullopt);
      values[p * m + a] = v;
    }
  return FlowState{s.t + dt, s.field.with_values(std::move(values)), s.step_index + 1, dt};
}
}  // namespace detail

/// Forward Euler step at interior nodes; boundary nodes stay pinned to psi.
inline FlowState step(const FlowState& state, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("step: dt must be positive");
  if (dt > cfl_dt(state, 1.0) * (1.0 + 1e-12)) throw std::invalid_argument("step: dt exceeds the stability bound");
  return detail::advance(state, flow_velocity(state.field), dt);
}

// ---------------------------------------------------------------------------
// Monitors

struct MonitorContext {
  DataBounds bounds;
  SmallDataResult small_data;
  double eta = 0.0;  // running sup |Du|^2
};

/// Full geometric snapshot of a state: jets, metric, H and |A|^2 at every node.
struct StateGeometry {
  JetField jets;
  MetricField metric;
  FrameField frame;
  SingularSpectrum spectrum;
  NodalResidual mean_curvature;
  std::vector<double> a2;
};

inline StateGeometry state_geometry(const GraphField& field) {
  JetField jets = jet(field);
  MetricField metric = induced_metric(jets);
  FrameField frame = frames(jets, metric);
  SingularSpectrum spectrum = singular_spectrum(jets);
  NodalResidual h = mean_curvature(jets, metric, frame);
  std::vector<double> a2 = second_fundamental_norm(jets, metric, frame);
  return {std::move(jets), std::move(metric), std::move(frame), std::move(spectrum), std::move(h), std::move(a2)};
}

inline FlowMonitorRecord compute_monitors(const FlowState& state, const NodalResidual& velocity,
                                          const StateGeometry& geo, MonitorContext& ctx) {
  const DomainGrid& grid = state.field.grid();
  FlowMonitorRecord r;
  r.t = state.t;
  r.step = state.step_index;
  r.area = area(state.field);
  double min_int = std::numeric_limits<double>::infinity();
  double min_bnd = 1.0;
  double diss = 0.0;
  for (NodeId p = 0; p < grid.size(); ++p) {
    const double w = geo.spectrum.star_omega[p];
    const double grad = std::sqrt(geo.spectrum.grad_norm2(p));
    r.max_grad = std::max(r.max_grad, grad);
    ctx.eta = std::max(ctx.eta, grad * grad);
    if (grid.is_interior(p)) {
      min_int = std::min(min_int, w);
      double h2 = 0.0;
      for (double c : geo.mean_curvature.at(p)) h2 += c * c;
      diss += grid.weight(p) * h2 * geo.metric.sqrt_g(p);
      r.max_A2 = std::max(r.max_A2, geo.a2[p]);
    } else {
      min_bnd = std::min(min_bnd, w);
      r.boundary_max_grad = std::max(r.boundary_max_grad, grad);
    }
  }
  r.min_star_omega = min_int;
  r.boundary_min_star_omega = min_bnd;
  r.dissipation = diss;
  r.residual_l2 = velocity.l2;
  r.residual_inf = velocity.linf;
  r.eta = ctx.eta;
  r.boundary_bound_rhs = boundary_bound_rhs(ctx.bounds, ctx.eta);
  r.small_data_ok = ctx.small_data.ok;
  return r;
}

// ---------------------------------------------------------------------------
// Driver

struct FlowConfig {
  GraphField initial;  // u(0); its boundary data are psi
  double safety = 0.5;
  double t_max = 1.0;
  double residual_tol = 1e-8;
  std::size_t record_every = 100;
  double slack = 10.0;              // c in the O(h) / O(h^2) allowances
  double evolution_rel_tol = 1e-2;  // relative allowance on delta |A|^2 *omega
  std::size_t max_steps = std::numeric_limits<std::size_t>::max();
};

/// Counts of recorded times at which an estimate failed (per-node counts for
/// the pointwise evolution inequality are in evolution_nodes_failed).
struct FlowViolations {
  std::size_t area_monotone = 0;
  std::size_t omega_minprinciple = 0;
  std::size_t evolution_inequality = 0;
  std::size_t boundary_bound = 0;
  std::size_t interior_grad = 0;
  std::size_t evolution_nodes_checked = 0;
  std::size_t evolution_nodes_failed = 0;
};

enum class FlowStatus { converged, timeout };

struct FlowRun {
  FlowState final_state;
  std::vector<FlowMonitorRecord> records;
  FlowStatus status = FlowStatus::timeout;
  double delta_certified = 0.0;
  SmallDataResult small_data;
  bool boundary_bound_asserted = false;
  FlowViolations violations;
  double final_residual_inf = 0.0;

  bool converged() const { return status == FlowStatus::converged; }
};

namespace detail {

/// Discrete (d/dt + H_x . D - Delta_Sigma) *omega at full-stencil nodes, with
/// the transport term converting the graph-coordinate time derivative into
/// the derivative along the geometric flow.
inline void check_evolution(const FlowState& before, const StateGeometry& geo, const GraphField& after,
                            double dt, double delta, double rel_tol, double slack_h, FlowViolations& v) {
  const DomainGrid& grid = before.field.grid();
  const SingularSpectrum next = singular_spectrum(after);
  const auto& w = geo.spectrum.star_omega;
  const std::vector<double> lap = surface_laplacian(grid, w, geo.metric);
  const int n = grid.dim();
  std::size_t failed = 0;
  for (NodeId p : grid.full_stencil_nodes()) {
    double transport = 0.0;
    for (int i = 0; i < n; ++i)
      transport += geo.mean_curvature.at(p)[i] * first_derivative_stencil(grid, p, i).apply(w);
    const double lhs = (next.star_omega[p] - w[p]) / dt + transport - lap[p];
    const double rhs = delta * geo.a2[p] * w[p] * (1.0 - rel_tol) - slack_h;
    ++v.evolution_nodes_checked;
    if (lhs < rhs) ++failed;
  }
  v.evolution_nodes_failed += failed;
  if (failed > 0) ++v.evolution_inequality;
}

}  // namespace detail

/// Integrates until the interior residual drops below residual_tol, t reaches
/// t_max or the step budget runs out. Throws BlowUpError when the state
/// leaves the regime (|Du| > 10, *omega < 1e-6 or non-finite values).
inline FlowRun run_flow(const FlowConfig& cfg) {
  if (!(cfg.residual_tol > 0.0) || !(cfg.t_max >= 0.0) || cfg.record_every == 0 || !(cfg.slack >= 0.0))
    throw std::invalid_argument("run_flow: invalid configuration");
  const DomainGrid& grid = cfg.initial.grid();
  const double dt = cfl_dt(grid, cfg.safety);
  FlowRun run{FlowState{0.0, cfg.initial, 0, dt}};
  MonitorContext ctx;
  ctx.bounds = data_bounds(cfg.initial);
  ctx.small_data = small_data_check(ctx.bounds);
  run.small_data = ctx.small_data;
  run.delta_certified = certify_delta(cfg.initial, ctx.bounds);
  run.boundary_bound_asserted = grid.convex();
  const double delta = run.delta_certified;
  const double h = grid.h_max();

  FlowState state{0.0, cfg.initial, 0, dt};
  double initial_interior_min = 0.0;
  double boundary_min_so_far = 1.0;
  double area0 = 0.0;

  for (;;) {
    const NodalResidual velocity = flow_velocity(state.field);
    if (!std::isfinite(velocity.linf))
      throw BlowUpError("non-finite velocity", run.records.empty() ? std::nullopt : std::optional(run.records.back()));
    const bool converged = velocity.linf < cfg.residual_tol;
    const bool timeout = state.t >= cfg.t_max * (1.0 - 1e-14) || state.step_index >= cfg.max_steps;
    const bool record = state.step_index % cfg.record_every == 0 || converged || timeout;

    std::optional<StateGeometry> geo;
    if (record) {
      geo = state_geometry(state.field);
      FlowMonitorRecord rec = compute_monitors(state, velocity, *geo, ctx);
      if (rec.max_grad > 10.0 || rec.min_star_omega < 1e-6 || !std::isfinite(rec.area))
        throw BlowUpError("flow left the admissible regime at t = " + io::format_double(rec.t),
                          run.records.empty() ? std::optional(rec) : std::optional(run.records.back()));
      if (run.records.empty()) {
        initial_interior_min = rec.min_star_omega;
        area0 = rec.area;
      } else if (rec.area > run.records.back().area + 1e-9 * area0) {
        ++run.violations.area_monotone;
      }
      if (!grid.periodic()) boundary_min_so_far = std::min(boundary_min_so_far, rec.boundary_min_star_omega);
      if (delta > 0.0) {
        if (rec.min_star_omega < std::min(initial_interior_min, boundary_min_so_far) - cfg.slack * h * h)
          ++run.violations.omega_minprinciple;
        if (rec.max_grad * rec.max_grad >= 1.0 - delta) ++run.violations.interior_grad;
      }
      if (run.boundary_bound_asserted && rec.boundary_max_grad >= rec.boundary_bound_rhs + cfg.slack * h)
        ++run.violations.boundary_bound;
      run.records.push_back(rec);
    }

    if (converged || timeout) {
      run.status = converged ? FlowStatus::converged : FlowStatus::timeout;
      run.final_residual_inf = velocity.linf;
      break;
    }

    FlowState next = detail::advance(state, velocity, dt);
    if (record) {
      run.records.back().area_rate = (area(next.field) - run.records.back().area) / dt;
      if (delta > 0.0)
        detail::check_evolution(state, *geo, next.field, dt, delta, cfg.evolution_rel_tol, cfg.slack * h,
                                run.violations);
    }
    state = std::move(next);
  }
  run.final_state = std::move(state);
  return run;
}

}  // namespace graphflow
