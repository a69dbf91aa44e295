#pragma once

// Post-hoc diagnostics: blow-up/blow-down rescaling, density ratios and
// refinement studies.

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "graphflow/geometry.hpp"
#include "graphflow/grid.hpp"
#include "graphflow/io.hpp"
#include "graphflow/operators.hpp"
#include "graphflow/scenarios.hpp"

namespace graphflow {

class AnalysisError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Multilinear interpolation of the field at y; nullopt when the enclosing
/// lattice cell is not fully active.
inline std::optional<std::array<double, kMaxCodim>> interpolate(const GraphField& field, std::span<const double> y) {
  const DomainGrid& grid = field.grid();
  const int n = grid.dim();
  const auto& spec = grid.spec();
  Index base{};
  std::array<double, kMaxDim> frac{};
  for (int i = 0; i < n; ++i) {
    const double s = (y[i] - spec.box[i].lo) / grid.spacing(i);
    const int last = spec.resolution[i] - 1;
    if (s < -1e-9 || s > last + 1e-9) return std::nullopt;
    int k = static_cast<int>(std::floor(s));
    k = std::clamp(k, 0, last - 1);
    base[i] = k;
    frac[i] = std::clamp(s - k, 0.0, 1.0);
  }
  std::array<double, kMaxCodim> out{};
  const int m = field.codim();
  for (int corner = 0; corner < (1 << n); ++corner) {
    Index idx = base;
    double w = 1.0;
    for (int i = 0; i < n; ++i) {
      const bool up = (corner >> i) & 1;
      idx[i] += up;
      w *= up ? frac[i] : 1.0 - frac[i];
    }
    if (w == 0.0) continue;
    const NodeId q = grid.node_at(idx);
    if (q == kNoNode) return std::nullopt;
    for (int a = 0; a < m; ++a) out[a] += w * field(q, a);
  }
  return out;
}

/// u_lambda(x) = (u(x0 + lambda x) - u(x0)) / lambda sampled on `target`.
inline GraphField rescale(const GraphField& field, double lambda, std::span<const double> x0, const GridPtr& target) {
  if (!(lambda > 0.0)) throw AnalysisError("rescale: lambda must be positive");
  const int n = field.dim();
  const int m = field.codim();
  if (target->dim() != n || static_cast<int>(x0.size()) != n) throw AnalysisError("rescale: dimension mismatch");
  const auto centre = interpolate(field, x0);
  if (!centre) throw AnalysisError("rescale: x0 lies outside the source domain");
  std::vector<double> values(target->size() * m);
  for (NodeId p = 0; p < target->size(); ++p) {
    std::array<double, kMaxDim> y{};
    for (int i = 0; i < n; ++i) y[i] = x0[i] + lambda * target->coord(p, i);
    const auto u = interpolate(field, {y.data(), std::size_t(n)});
    if (!u) throw AnalysisError("rescale: target point outside the source domain");
    for (int a = 0; a < m; ++a) values[p * m + a] = ((*u)[a] - (*centre)[a]) / lambda;
  }
  return GraphField(target, m, std::move(values));
}

/// max |rescale(u, lambda, x0) - rescale(u, 1, x0)| on `target`: zero for
/// fields that are 1-homogeneous about x0.
inline double homogeneity_defect(const GraphField& field, double lambda, std::span<const double> x0,
                                 const GridPtr& target) {
  const GraphField a = rescale(field, lambda, x0, target);
  const GraphField b = rescale(field, 1.0, x0, target);
  double d = 0.0;
  for (std::size_t k = 0; k < a.values().size(); ++k) d = std::max(d, std::abs(a.values()[k] - b.values()[k]));
  return d;
}

/// Volume of the unit n-ball, n <= 4.
inline double unit_ball_volume(int n) {
  static constexpr std::array<double, 5> table = {1.0, 2.0, 3.14159265358979324, 4.18879020478639098,
                                                  4.93480220054467931};
  if (n < 1 || n > 4) throw std::out_of_range("unit_ball_volume: n must be in [1, 4]");
  return table[static_cast<std::size_t>(n)];
}

struct DensityProfile {
  std::vector<double> center;  // n + m coordinates
  std::vector<double> radii;
  std::vector<double> ratios;
  std::vector<double> errors;
  double omega_n = 0.0;
};

/// sigma(r) = area(graph within B_r(p)) / (omega_n r^n), summing w sqrt g over
/// the nodes whose graph point lies in the ball. The error estimate is half
/// the graph area of the band of nodes the cut can misassign.
inline DensityProfile density_ratio(const GraphField& field, std::span<const double> p, std::span<const double> radii) {
  const DomainGrid& grid = field.grid();
  const int n = grid.dim();
  const int m = field.codim();
  if (static_cast<int>(p.size()) != n + m) throw AnalysisError("density_ratio: centre needs n + m coordinates");
  for (std::size_t k = 0; k < radii.size(); ++k)
    if (!(radii[k] > 0.0) || (k > 0 && !(radii[k] > radii[k - 1])))
      throw AnalysisError("density_ratio: radii must be positive and strictly increasing");
  const MetricField metric = induced_metric(field);
  std::vector<double> dist(grid.size());
  std::vector<double> band(grid.size());  // change of dist across half a cell
  for (NodeId q = 0; q < grid.size(); ++q) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += (grid.coord(q, i) - p[i]) * (grid.coord(q, i) - p[i]);
    for (int a = 0; a < m; ++a) s += (field(q, a) - p[n + a]) * (field(q, a) - p[n + a]);
    dist[q] = std::sqrt(s);
    const SmallMat du = node_gradient(grid, field.values(), m, q);
    double b = 0.0;
    for (int i = 0; i < n; ++i) {
      double g = grid.coord(q, i) - p[i];
      for (int a = 0; a < m; ++a) g += (field(q, a) - p[n + a]) * du(a, i);
      b += 0.5 * grid.spacing(i) * std::abs(g);
    }
    band[q] = dist[q] > 0.0 ? b / dist[q] : 0.5 * grid.h_max() * n;
  }
  // Nodes within their band of the sphere may fall on either side of the
  // cut; half their graph area is the error estimate.
  auto measure = [&](double r, double& inside, double& uncertain) {
    inside = uncertain = 0.0;
    for (NodeId q = 0; q < grid.size(); ++q) {
      const double wq = grid.weight(q) * metric.sqrt_g(q);
      if (std::abs(dist[q] - r) < band[q]) uncertain += wq;
      if (!(dist[q] < r)) continue;
      if (grid.is_boundary(q))
        throw AnalysisError("density_ratio: radius " + io::format_double(r) + " leaves the domain");
      inside += wq;
    }
  };
  DensityProfile out;
  out.center.assign(p.begin(), p.end());
  out.radii.assign(radii.begin(), radii.end());
  out.omega_n = unit_ball_volume(n);
  for (double r : radii) {
    const double ball = out.omega_n * std::pow(r, n);
    double inside = 0.0, uncertain = 0.0;
    measure(r, inside, uncertain);
    out.ratios.push_back(inside / ball);
    out.errors.push_back(0.5 * uncertain / ball);
  }
  return out;
}

inline void write_density_csv(std::ostream& os, const DensityProfile& d) {
  os << "r,sigma,err\n";
  for (std::size_t k = 0; k < d.radii.size(); ++k)
    os << io::format_double(d.radii[k]) << ',' << io::format_double(d.ratios[k]) << ','
       << io::format_double(d.errors[k]) << "\n";
}

enum class ResidualKind { nondiv_inf, nondiv_l2, div_inf, div_l2 };

inline ResidualKind parse_residual_kind(const std::string& s) {
  if (s == "nondiv_inf") return ResidualKind::nondiv_inf;
  if (s == "nondiv_l2") return ResidualKind::nondiv_l2;
  if (s == "div_inf") return ResidualKind::div_inf;
  if (s == "div_l2") return ResidualKind::div_l2;
  throw AnalysisError("unknown residual kind '" + s + "'");
}

inline const char* to_string(ResidualKind k) {
  switch (k) {
    case ResidualKind::nondiv_inf: return "nondiv_inf";
    case ResidualKind::nondiv_l2: return "nondiv_l2";
    case ResidualKind::div_inf: return "div_inf";
    case ResidualKind::div_l2: return "div_l2";
  }
  return "?";
}

struct SubharmonicityReport {
  double delta = 0.0;  // area-decreasing margin of the field
  double tolerance = 0.0;
  std::size_t checked = 0;
  std::size_t satisfied = 0;
  double worst_gap = 0.0;  // min over nodes of lhs - rhs + tolerance

  double fraction() const { return checked ? double(satisfied) / double(checked) : 1.0; }
};

/// Checks  Delta_Sigma(-ln *omega) >= delta |A|^2 *omega - slack h  at
/// full-stencil nodes, with delta the field's area-decreasing margin.
inline SubharmonicityReport subharmonicity(const GraphField& field, double slack = 10.0) {
  const DomainGrid& grid = field.grid();
  const JetField jets = jet(field);
  const MetricField metric = induced_metric(jets);
  const SingularSpectrum spectrum = singular_spectrum(jets);
  const std::vector<double> a2 = second_fundamental_norm(jets, metric, frames(jets, metric));
  std::vector<double> neg_log(grid.size());
  for (NodeId p = 0; p < grid.size(); ++p) neg_log[p] = -std::log(spectrum.star_omega[p]);
  const std::vector<double> lap = surface_laplacian(grid, neg_log, metric);
  SubharmonicityReport r;
  r.delta = spectrum.ad_margin;
  r.tolerance = slack * grid.h_max();
  r.worst_gap = std::numeric_limits<double>::infinity();
  for (NodeId p : grid.full_stencil_nodes()) {
    const double gap = lap[p] - r.delta * a2[p] * spectrum.star_omega[p] + r.tolerance;
    ++r.checked;
    if (gap >= 0.0) ++r.satisfied;
    r.worst_gap = std::min(r.worst_gap, gap);
  }
  return r;
}

/// Per-node residual of the chosen form; nodes outside the full-stencil set are zero.
inline NodalResidual residual_field(const GraphField& field, ResidualKind kind) {
  switch (kind) {
    case ResidualKind::nondiv_inf:
    case ResidualKind::nondiv_l2: return ms_residual_nondiv(field);
    case ResidualKind::div_inf:
    case ResidualKind::div_l2: return ms_residual_div(field, induced_metric(field));
  }
  return {};
}

inline bool is_l2(ResidualKind k) { return k == ResidualKind::nondiv_l2 || k == ResidualKind::div_l2; }

/// Node set the residual norms of each form are taken over.
inline NodeSet norm_set(ResidualKind k) {
  return k == ResidualKind::div_inf || k == ResidualKind::div_l2 ? NodeSet::flux_interior : NodeSet::full_stencil;
}

/// Residual norm over full-stencil interior nodes.
inline double residual_norm(const GraphField& field, ResidualKind kind) {
  const NodalResidual r = residual_field(field, kind);
  return is_l2(kind) ? r.l2 : r.linf;
}

struct RefinementRow {
  int resolution = 0;
  double h = 0.0;
  double norm = 0.0;
  // Norm of this level's residual sampled only at the previous level's
  // norm nodes (dyadically nested levels only).
  std::optional<double> nested_norm;
  std::optional<double> order;  // against the previous row
  bool exact = false;           // both norms below 1e-12
};

inline constexpr double kExactResidual = 1e-12;

/// Node-for-node nesting: fine index = 2 x coarse index on every axis.
inline bool dyadically_nested(const GridSpec& coarse, const GridSpec& fine) {
  if (coarse.mode != BoundaryMode::dirichlet || fine.mode != BoundaryMode::dirichlet) return false;
  for (int i = 0; i < coarse.dim; ++i)
    if (fine.resolution[i] - 1 != 2 * (coarse.resolution[i] - 1)) return false;
  return true;
}

/// Residual norms per resolution and empirical orders
///   log(norm(h) / norm(h')) / log(h / h').
/// When successive levels are dyadically nested the finer norm is taken over
/// the coarse level's norm nodes, so both levels are measured at the
/// same points; otherwise each level uses its own full-stencil set.
inline std::vector<RefinementRow> refinement_study(const Scenario& scenario, const std::vector<int>& resolutions,
                                                   ResidualKind kind = ResidualKind::nondiv_inf) {
  if (resolutions.size() < 2) throw AnalysisError("refinement_study: needs at least two resolutions");
  std::vector<RefinementRow> rows;
  GridPtr prev_grid;
  for (int res : resolutions) {
    const GridPtr grid = make_grid(scenario.domain_at(res));
    const NodalResidual r = residual_field(scenario.sample(grid), kind);
    RefinementRow row;
    row.resolution = res;
    row.h = grid->h_max();
    row.norm = is_l2(kind) ? r.l2 : r.linf;
    double compare = row.norm;
    if (prev_grid && dyadically_nested(prev_grid->spec(), grid->spec())) {
      double mx = 0.0, sum = 0.0;
      for (NodeId p = 0; p < prev_grid->size(); ++p) {
        if (!in_set(*prev_grid, p, norm_set(kind))) continue;
        Index idx = prev_grid->index(p);
        for (int i = 0; i < grid->dim(); ++i) idx[i] *= 2;
        const NodeId q = grid->node_at(idx);
        double s = 0.0;
        for (double v : r.at(q)) s += v * v;
        mx = std::max(mx, std::sqrt(s));
        sum += s;
      }
      compare = is_l2(kind) ? std::sqrt(sum * prev_grid->cell_volume()) : mx;
      row.nested_norm = compare;
    }
    if (!rows.empty()) {
      const RefinementRow& prev = rows.back();
      if (prev.norm < kExactResidual && row.norm < kExactResidual)
        row.exact = true;
      else
        row.order = std::log(prev.norm / compare) / std::log(prev.h / row.h);
    } else {
      row.exact = row.norm < kExactResidual;
    }
    rows.push_back(row);
    prev_grid = grid;
  }
  return rows;
}

}  // namespace graphflow
