#pragma once

// Finite-difference stencils and first/second derivative jets of nodal fields.
//
// Along each axis: central differences when both neighbours are active,
// second-order one-sided differences when a leg leaves the active set, and
// first-order fallbacks when the one-sided stencil does not fit. Mixed second
// derivatives are the axis-i stencil applied to the axis-j first derivative,
// which reduces to the 4-point cross stencil at full-stencil nodes.

#include <array>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "graphflow/grid.hpp"
#include "graphflow/linalg.hpp"
#include "graphflow/parallel.hpp"

namespace graphflow {

struct Stencil {
  static constexpr int kCapacity = 16;
  std::array<NodeId, kCapacity> node{};
  std::array<double, kCapacity> weight{};
  int count = 0;

  void add(NodeId nd, double w) {
    node[count] = nd;
    weight[count] = w;
    ++count;
  }
  double apply(std::span<const double> values, int m, int component) const {
    double s = 0.0;
    for (int k = 0; k < count; ++k) s += weight[k] * values[node[k] * m + component];
    return s;
  }
  double apply(std::span<const double> scalar) const {
    double s = 0.0;
    for (int k = 0; k < count; ++k) s += weight[k] * scalar[node[k]];
    return s;
  }
};

inline Stencil first_derivative_stencil(const DomainGrid& grid, NodeId p, int axis) {
  Stencil s;
  const double h = grid.spacing(axis);
  const NodeId plus = grid.neighbor(p, axis, +1);
  const NodeId minus = grid.neighbor(p, axis, -1);
  if (plus != kNoNode && minus != kNoNode) {
    s.add(minus, -0.5 / h);
    s.add(plus, 0.5 / h);
    return s;
  }
  const NodeId plus2 = plus != kNoNode ? grid.neighbor(p, axis, +2) : kNoNode;
  const NodeId minus2 = minus != kNoNode ? grid.neighbor(p, axis, -2) : kNoNode;
  if (plus2 != kNoNode) {
    s.add(p, -1.5 / h);
    s.add(plus, 2.0 / h);
    s.add(plus2, -0.5 / h);
  } else if (minus2 != kNoNode) {
    s.add(p, 1.5 / h);
    s.add(minus, -2.0 / h);
    s.add(minus2, 0.5 / h);
  } else if (plus != kNoNode) {
    s.add(p, -1.0 / h);
    s.add(plus, 1.0 / h);
  } else if (minus != kNoNode) {
    s.add(p, 1.0 / h);
    s.add(minus, -1.0 / h);
  }
  return s;
}

inline Stencil second_derivative_stencil(const DomainGrid& grid, NodeId p, int axis) {
  Stencil s;
  const double h2 = grid.spacing(axis) * grid.spacing(axis);
  const NodeId plus = grid.neighbor(p, axis, +1);
  const NodeId minus = grid.neighbor(p, axis, -1);
  if (plus != kNoNode && minus != kNoNode) {
    s.add(minus, 1.0 / h2);
    s.add(p, -2.0 / h2);
    s.add(plus, 1.0 / h2);
    return s;
  }
  for (int dir : {+1, -1}) {
    const NodeId q1 = dir > 0 ? plus : minus;
    if (q1 == kNoNode) continue;
    const NodeId q2 = grid.neighbor(p, axis, 2 * dir);
    if (q2 == kNoNode) continue;
    const NodeId q3 = grid.neighbor(p, axis, 3 * dir);
    if (q3 != kNoNode) {
      s.add(p, 2.0 / h2);
      s.add(q1, -5.0 / h2);
      s.add(q2, 4.0 / h2);
      s.add(q3, -1.0 / h2);
    } else {
      s.add(p, 1.0 / h2);
      s.add(q1, -2.0 / h2);
      s.add(q2, 1.0 / h2);
    }
    return s;
  }
  return s;
}

/// Mixed derivative d^2/dx_i dx_j, i != j: the axis-j difference of the
/// axis-i difference. If a node of the outer stencil has no axis-j stencil the
/// order is swapped; empty when neither order closes.
inline Stencil cross_derivative_stencil(const DomainGrid& grid, NodeId p, int axis_i, int axis_j) {
  for (auto [outer_axis, inner_axis] : {std::pair{axis_i, axis_j}, std::pair{axis_j, axis_i}}) {
    Stencil s;
    const Stencil outer = first_derivative_stencil(grid, p, outer_axis);
    bool closed = outer.count > 0;
    for (int k = 0; k < outer.count && closed; ++k) {
      const Stencil inner = first_derivative_stencil(grid, outer.node[k], inner_axis);
      closed = inner.count > 0;
      for (int l = 0; l < inner.count; ++l) s.add(inner.node[l], outer.weight[k] * inner.weight[l]);
    }
    if (closed) return s;
  }
  return {};
}

/// Du (m x n) and D^2u (m x n x n) at one node.
struct NodeJet {
  int n = 0;
  int m = 0;
  std::array<double, kMaxCodim * kMaxDim> du{};
  std::array<double, kMaxCodim * kMaxDim * kMaxDim> d2u{};

  double first(int a, int i) const { return du[a * kMaxDim + i]; }
  double& first(int a, int i) { return du[a * kMaxDim + i]; }
  double second(int a, int i, int j) const { return d2u[(a * kMaxDim + i) * kMaxDim + j]; }
  double& second(int a, int i, int j) { return d2u[(a * kMaxDim + i) * kMaxDim + j]; }

  SmallMat gradient() const {
    SmallMat g(m, n);
    for (int a = 0; a < m; ++a)
      for (int i = 0; i < n; ++i) g(a, i) = first(a, i);
    return g;
  }
  double grad_norm2() const {
    double s = 0.0;
    for (int a = 0; a < m; ++a)
      for (int i = 0; i < n; ++i) s += first(a, i) * first(a, i);
    return s;
  }
};

/// Du only, at one node, for any scalar or vector nodal data with m components.
inline SmallMat node_gradient(const DomainGrid& grid, std::span<const double> values, int m, NodeId p) {
  const int n = grid.dim();
  SmallMat g(m, n);
  for (int i = 0; i < n; ++i) {
    const Stencil s = first_derivative_stencil(grid, p, i);
    for (int a = 0; a < m; ++a) g(a, i) = s.apply(values, m, a);
  }
  return g;
}

inline NodeJet node_jet(const DomainGrid& grid, std::span<const double> values, int m, NodeId p) {
  NodeJet jet;
  const int n = grid.dim();
  jet.n = n;
  jet.m = m;
  for (int i = 0; i < n; ++i) {
    const Stencil s1 = first_derivative_stencil(grid, p, i);
    const Stencil s2 = second_derivative_stencil(grid, p, i);
    for (int a = 0; a < m; ++a) {
      jet.first(a, i) = s1.apply(values, m, a);
      jet.second(a, i, i) = s2.apply(values, m, a);
    }
    for (int j = i + 1; j < n; ++j) {
      const Stencil sx = cross_derivative_stencil(grid, p, i, j);
      for (int a = 0; a < m; ++a) {
        const double v = sx.apply(values, m, a);
        jet.second(a, i, j) = v;
        jet.second(a, j, i) = v;
      }
    }
  }
  return jet;
}

inline NodeJet node_jet(const GraphField& field, NodeId p) {
  return node_jet(field.grid(), field.values(), field.codim(), p);
}

/// Materialized jets for every active node.
class JetField {
 public:
  JetField(GridPtr grid, int m) : grid_(std::move(grid)), jets_(grid_->size()) {
    for (auto& j : jets_) {
      j.n = grid_->dim();
      j.m = m;
    }
  }

  const DomainGrid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }
  int dim() const { return grid_->dim(); }
  int codim() const { return jets_.empty() ? 0 : jets_.front().m; }
  std::size_t size() const { return jets_.size(); }
  const NodeJet& operator[](NodeId node) const { return jets_[node]; }
  NodeJet& operator[](NodeId node) { return jets_[node]; }

 private:
  GridPtr grid_;
  std::vector<NodeJet> jets_;
};

inline JetField jet(const GraphField& field) {
  JetField out(field.grid_ptr(), field.codim());
  parallel::for_each_index(field.size(), [&](std::size_t p) { out[p] = node_jet(field, p); });
  return out;
}

}  // namespace graphflow
