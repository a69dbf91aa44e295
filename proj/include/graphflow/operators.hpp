#pragma once

// Geometric differential operators on graphs F(x) = (x, u(x)): minimal
// surface residuals in both forms, tangent/normal projectors, the mean
// curvature vector, |A|^2 and the Laplace-Beltrami operator.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "graphflow/geometry.hpp"
#include "graphflow/grid.hpp"
#include "graphflow/jet.hpp"
#include "graphflow/parallel.hpp"

namespace graphflow {

/// Node subsets used for norms. flux_interior: full-stencil nodes whose axis
/// neighbours are interior, so every nodal coefficient a staggered flux
/// reads comes from central first differences.
enum class NodeSet { full_stencil, flux_interior, interior, all };

inline bool in_set(const DomainGrid& grid, NodeId p, NodeSet set) {
  switch (set) {
    case NodeSet::full_stencil: return grid.is_full_stencil(p);
    case NodeSet::flux_interior:
      if (!grid.is_full_stencil(p)) return false;
      for (int i = 0; i < grid.dim(); ++i)
        if (!grid.is_interior(grid.neighbor(p, i, -1)) || !grid.is_interior(grid.neighbor(p, i, +1))) return false;
      return true;
    case NodeSet::interior: return grid.is_interior(p);
    case NodeSet::all: return true;
  }
  return false;
}

/// Per-node vector quantity with L2 (cell-volume weighted) and L-infinity
/// (max Euclidean node norm) over the selected node set.
struct NodalResidual {
  int components = 0;
  std::vector<double> values;
  double l2 = 0.0;
  double linf = 0.0;

  std::span<const double> at(NodeId p) const {
    return {values.data() + p * components, std::size_t(components)};
  }
};

inline void compute_norms(const DomainGrid& grid, NodalResidual& r, NodeSet set) {
  double sum = 0.0;
  double mx = 0.0;
  for (NodeId p = 0; p < grid.size(); ++p) {
    if (!in_set(grid, p, set)) continue;
    double s = 0.0;
    for (int c = 0; c < r.components; ++c) s += r.values[p * r.components + c] * r.values[p * r.components + c];
    sum += s;
    mx = std::max(mx, std::sqrt(s));
  }
  r.l2 = std::sqrt(sum * grid.cell_volume());
  r.linf = mx;
}

// ---------------------------------------------------------------------------
// Node kernels

/// sum_ij g^ij d^2 u^a / dx^i dx^j for every component a.
inline SmallVec nondiv_operator(const NodeJet& jet, const SmallMat& g_inv) {
  SmallVec r = SmallVec::Zero(jet.m);
  for (int a = 0; a < jet.m; ++a) {
    double s = 0.0;
    for (int i = 0; i < jet.n; ++i)
      for (int j = 0; j < jet.n; ++j) s += g_inv(i, j) * jet.second(a, i, j);
    r(a) = s;
  }
  return r;
}

/// Columns dF/dx^i, tangent projector T = J g^-1 J^T and normal projector P = I - T.
struct NodeFrame {
  SmallMat jacobian;
  SmallMat tangent;
  SmallMat normal;
};

inline NodeFrame node_frame(const NodeJet& jet, const SmallMat& g_inv) {
  const int n = jet.n;
  const int d = jet.n + jet.m;
  NodeFrame f;
  f.jacobian = SmallMat::Zero(d, n);
  for (int i = 0; i < n; ++i) f.jacobian(i, i) = 1.0;
  for (int a = 0; a < jet.m; ++a)
    for (int i = 0; i < n; ++i) f.jacobian(n + a, i) = jet.first(a, i);
  f.tangent = f.jacobian * g_inv * f.jacobian.transpose();
  f.tangent = 0.5 * (f.tangent + f.tangent.transpose()).eval();
  f.normal = SmallMat::Identity(d, d) - f.tangent;
  return f;
}

/// Ambient second derivative d^2 F / dx^i dx^j = (0, D^2_ij u).
inline SmallVec ambient_hessian(const NodeJet& jet, int i, int j) {
  SmallVec v = SmallVec::Zero(jet.n + jet.m);
  for (int a = 0; a < jet.m; ++a) v(jet.n + a) = jet.second(a, i, j);
  return v;
}

inline SmallVec node_mean_curvature(const NodeJet& jet, const SmallMat& g_inv, const NodeFrame& frame) {
  SmallVec v = SmallVec::Zero(jet.n + jet.m);
  v.tail(jet.m) = nondiv_operator(jet, g_inv);
  return frame.normal * v;
}

inline double node_second_fundamental_norm(const NodeJet& jet, const SmallMat& g_inv, const NodeFrame& frame) {
  const int n = jet.n;
  std::array<SmallVec, kMaxDim * kMaxDim> normal_part;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      normal_part[i * kMaxDim + j] = frame.normal * ambient_hessian(jet, i, j);
      normal_part[j * kMaxDim + i] = normal_part[i * kMaxDim + j];
    }
  double s = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) {
          const double w = g_inv(i, k) * g_inv(j, l);
          if (w != 0.0) s += w * normal_part[i * kMaxDim + j].dot(normal_part[k * kMaxDim + l]);
        }
  return s;
}

// ---------------------------------------------------------------------------
// Field-level operators

/// Projectors per node; the Jacobian is kept alongside.
class FrameField {
 public:
  FrameField() = default;
  explicit FrameField(std::vector<NodeFrame> frames) : frames_(std::move(frames)) {}
  std::size_t size() const { return frames_.size(); }
  const NodeFrame& operator[](NodeId p) const { return frames_[p]; }

 private:
  std::vector<NodeFrame> frames_;
};

inline FrameField frames(const JetField& jets, const MetricField& metric) {
  std::vector<NodeFrame> out(jets.size());
  parallel::for_each_index(jets.size(), [&](std::size_t p) { out[p] = node_frame(jets[p], metric.inverse(p)); });
  return FrameField(std::move(out));
}

/// r^a = sum g^ij d_ij u^a at every node; norms over `set`.
inline NodalResidual ms_residual_nondiv(const JetField& jets, const MetricField& metric,
                                        NodeSet set = NodeSet::full_stencil) {
  NodalResidual r;
  r.components = jets.codim();
  r.values.assign(jets.size() * r.components, 0.0);
  parallel::for_each_index(jets.size(), [&](std::size_t p) {
    const SmallVec v = nondiv_operator(jets[p], metric.inverse(p));
    for (int a = 0; a < r.components; ++a) r.values[p * r.components + a] = v(a);
  });
  compute_norms(jets.grid(), r, set);
  return r;
}

/// Streaming form of the non-divergence residual computed straight from the
/// field, only at nodes of `set` (zero elsewhere); no jets are stored.
inline NodalResidual ms_residual_nondiv(const GraphField& field, NodeSet set = NodeSet::full_stencil) {
  const DomainGrid& grid = field.grid();
  NodalResidual r;
  r.components = field.codim();
  r.values.assign(grid.size() * r.components, 0.0);
  parallel::for_each_index(grid.size(), [&](std::size_t p) {
    if (!in_set(grid, p, set)) return;
    const NodeJet j = node_jet(field, p);
    const SmallVec v = nondiv_operator(j, metric_from_gradient(j.gradient()).g_inv);
    for (int a = 0; a < r.components; ++a) r.values[p * r.components + a] = v(a);
  });
  compute_norms(grid, r, set);
  return r;
}

namespace detail {

/// Divergence of the staggered flux  sum_j avg_i(c_ij) Dface_j f  at a
/// full-stencil node; c(q, i, j) is the nodal coefficient.
template <class Coef, class Value>
double staggered_divergence(const DomainGrid& grid, NodeId p, const Coef& c, const Value& f) {
  const int n = grid.dim();
  double div = 0.0;
  for (int i = 0; i < n; ++i) {
    const double hi = grid.spacing(i);
    double face[2];
    for (int side = 0; side < 2; ++side) {
      const NodeId lo_node = side == 0 ? p : grid.neighbor(p, i, -1);
      const NodeId hi_node = side == 0 ? grid.neighbor(p, i, +1) : p;
      double flux = 0.0;
      for (int j = 0; j < n; ++j) {
        const double coef = 0.5 * (c(lo_node, i, j) + c(hi_node, i, j));
        if (coef == 0.0) continue;
        double grad;
        if (j == i) {
          grad = (f(hi_node) - f(lo_node)) / hi;
        } else {
          const double hj = grid.spacing(j);
          grad = (f(grid.neighbor(lo_node, j, +1)) - f(grid.neighbor(lo_node, j, -1)) +
                  f(grid.neighbor(hi_node, j, +1)) - f(grid.neighbor(hi_node, j, -1))) /
                 (4.0 * hj);
        }
        flux += coef * grad;
      }
      face[side] = flux;
    }
    div += (face[0] - face[1]) / hi;
  }
  return div;
}

}  // namespace detail

/// Divergence form: first n components sum_i D_i(sqrt g g^ij), last m
/// components sum_ij D_i(sqrt g g^ij D_j u^a), with midpoint-averaged
/// coefficients on cell faces. Zero outside full-stencil nodes; norms over
/// flux-interior nodes.
inline NodalResidual ms_residual_div(const GraphField& field, const MetricField& metric) {
  const DomainGrid& grid = field.grid();
  const int n = grid.dim();
  const int m = field.codim();
  NodalResidual r;
  r.components = n + m;
  r.values.assign(grid.size() * r.components, 0.0);
  auto coef = [&](NodeId q, int i, int j) { return metric.sqrt_g(q) * metric.g_inv(q, i, j); };
  parallel::for_each_index(grid.size(), [&](std::size_t p) {
    if (!grid.is_full_stencil(p)) return;
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int i = 0; i < n; ++i)
        s += (coef(grid.neighbor(p, i, +1), i, j) - coef(grid.neighbor(p, i, -1), i, j)) / (2.0 * grid.spacing(i));
      r.values[p * r.components + j] = s;
    }
    for (int a = 0; a < m; ++a)
      r.values[p * r.components + n + a] =
          detail::staggered_divergence(grid, p, coef, [&](NodeId q) { return field(q, a); });
  });
  compute_norms(grid, r, NodeSet::flux_interior);
  return r;
}

/// Codimension-one divergence form D_i(D_i u / sqrt(1 + |Du|^2)) with the
/// face gradient evaluated on each face.
inline NodalResidual mse_residual_div(const GraphField& field) {
  if (field.codim() != 1) throw std::invalid_argument("mse_residual_div: codimension must be 1");
  const DomainGrid& grid = field.grid();
  const int n = grid.dim();
  NodalResidual r;
  r.components = 1;
  r.values.assign(grid.size(), 0.0);
  auto u = [&](NodeId q) { return field(q, 0); };
  parallel::for_each_index(grid.size(), [&](std::size_t p) {
    if (!grid.is_full_stencil(p)) return;
    double div = 0.0;
    for (int i = 0; i < n; ++i) {
      const double hi = grid.spacing(i);
      double face[2];
      for (int side = 0; side < 2; ++side) {
        const NodeId lo_node = side == 0 ? p : grid.neighbor(p, i, -1);
        const NodeId hi_node = side == 0 ? grid.neighbor(p, i, +1) : p;
        double grad2 = 0.0;
        double normal_grad = 0.0;
        for (int j = 0; j < n; ++j) {
          double gj;
          if (j == i) {
            gj = (u(hi_node) - u(lo_node)) / hi;
            normal_grad = gj;
          } else {
            gj = (u(grid.neighbor(lo_node, j, +1)) - u(grid.neighbor(lo_node, j, -1)) +
                  u(grid.neighbor(hi_node, j, +1)) - u(grid.neighbor(hi_node, j, -1))) /
                 (4.0 * grid.spacing(j));
          }
          grad2 += gj * gj;
        }
        face[side] = normal_grad / std::sqrt(1.0 + grad2);
      }
      div += (face[0] - face[1]) / hi;
    }
    r.values[p] = div;
  });
  compute_norms(grid, r, NodeSet::flux_interior);
  return r;
}

/// H = P (sum g^ij d_ij F), n+m components per node.
inline NodalResidual mean_curvature(const JetField& jets, const MetricField& metric, const FrameField& frame) {
  NodalResidual h;
  h.components = jets.dim() + jets.codim();
  h.values.assign(jets.size() * h.components, 0.0);
  parallel::for_each_index(jets.size(), [&](std::size_t p) {
    const SmallVec v = node_mean_curvature(jets[p], metric.inverse(p), frame[p]);
    for (int c = 0; c < h.components; ++c) h.values[p * h.components + c] = v(c);
  });
  compute_norms(jets.grid(), h, NodeSet::full_stencil);
  return h;
}

inline std::vector<double> second_fundamental_norm(const JetField& jets, const MetricField& metric,
                                                   const FrameField& frame) {
  std::vector<double> out(jets.size());
  parallel::for_each_index(jets.size(), [&](std::size_t p) {
    out[p] = node_second_fundamental_norm(jets[p], metric.inverse(p), frame[p]);
  });
  return out;
}

/// Laplace-Beltrami (1/sqrt g) D_i(sqrt g g^ij D_j f) with the same staggered
/// fluxes as the divergence-form residual. Defined on full-stencil nodes,
/// zero elsewhere.
inline std::vector<double> surface_laplacian(const DomainGrid& grid, std::span<const double> f,
                                             const MetricField& metric) {
  std::vector<double> out(grid.size(), 0.0);
  auto coef = [&](NodeId q, int i, int j) { return metric.sqrt_g(q) * metric.g_inv(q, i, j); };
  parallel::for_each_index(grid.size(), [&](std::size_t p) {
    if (!grid.is_full_stencil(p)) return;
    out[p] = detail::staggered_divergence(grid, p, coef, [&](NodeId q) { return f[q]; }) / metric.sqrt_g(p);
  });
  return out;
}

}  // namespace graphflow
