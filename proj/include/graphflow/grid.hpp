#pragma once

// Structured lattices over boxes, optionally masked to a ball or annulus, and
// the nodal fields that live on them.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "graphflow/linalg.hpp"

namespace graphflow {

class GridError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class BoundaryMode { dirichlet, periodic };

enum class NodeKind : std::uint8_t { interior, boundary };

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

using Point = std::array<double, kMaxDim>;
using Index = std::array<int, kMaxDim>;

/// Domain selector applied to lattice coordinates.
struct MaskShape {
  enum class Kind { none, ball, annulus };

  Kind kind = Kind::none;
  std::vector<double> center;
  double r_in = 0.0;
  double r_out = 0.0;

  static MaskShape none() { return {}; }
  static MaskShape ball(std::vector<double> center, double radius) {
    return {Kind::ball, std::move(center), 0.0, radius};
  }
  static MaskShape annulus(std::vector<double> center, double r_in, double r_out) {
    return {Kind::annulus, std::move(center), r_in, r_out};
  }

  bool active() const { return kind != Kind::none; }

  // Ball: |x - c| <= R (closed, so lattice points on the sphere stay in).
  // Annulus: r_in < |x - c| < r_out.
  bool contains(std::span<const double> x) const {
    if (kind == Kind::none) return true;
    double r2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = x[i] - center[i];
      r2 += d * d;
    }
    const double r = std::sqrt(r2);
    constexpr double fuzz = 1e-12;
    if (kind == Kind::ball) return r <= r_out * (1.0 + fuzz);
    return r > r_in * (1.0 + fuzz) && r < r_out * (1.0 - fuzz);
  }
};

struct GridSpec {
  int dim = 1;
  std::vector<Interval> box;
  std::vector<int> resolution;
  MaskShape mask;
  BoundaryMode mode = BoundaryMode::dirichlet;
  std::size_t max_active = 2'000'000;
};

class DomainGrid;
using GridPtr = std::shared_ptr<const DomainGrid>;
using NodeId = std::size_t;
inline constexpr NodeId kNoNode = std::numeric_limits<NodeId>::max();

GridPtr make_grid(const GridSpec& spec);

class DomainGrid {
 public:
  const GridSpec& spec() const { return spec_; }
  int dim() const { return spec_.dim; }
  BoundaryMode mode() const { return spec_.mode; }
  bool periodic() const { return spec_.mode == BoundaryMode::periodic; }
  std::size_t size() const { return lattice_of_.size(); }
  std::size_t lattice_size() const { return active_of_.size(); }

  double spacing(int axis) const { return spacing_[axis]; }
  double h_min() const { return *std::min_element(spacing_.begin(), spacing_.begin() + dim()); }
  double h_max() const { return *std::max_element(spacing_.begin(), spacing_.begin() + dim()); }
  double cell_volume() const {
    double v = 1.0;
    for (int i = 0; i < dim(); ++i) v *= spacing_[i];
    return v;
  }

  Index index(NodeId node) const { return unflatten(lattice_of_[node]); }
  double coord(NodeId node, int axis) const {
    return spec_.box[axis].lo + spacing_[axis] * index(node)[axis];
  }
  Point point(NodeId node) const {
    Point x{};
    const Index idx = index(node);
    for (int i = 0; i < dim(); ++i) x[i] = spec_.box[i].lo + spacing_[i] * idx[i];
    return x;
  }
  std::span<const double> point_span(const Point& p) const { return {p.data(), std::size_t(dim())}; }

  /// Active node at a lattice index; wraps in periodic mode, kNoNode if the
  /// index is off the lattice or masked out.
  NodeId node_at(Index idx) const {
    std::size_t flat = 0;
    for (int i = dim() - 1; i >= 0; --i) {
      int k = idx[i];
      const int n = spec_.resolution[i];
      if (periodic()) {
        k %= n;
        if (k < 0) k += n;
      } else if (k < 0 || k >= n) {
        return kNoNode;
      }
      flat = flat * static_cast<std::size_t>(n) + static_cast<std::size_t>(k);
    }
    return active_of_[flat];
  }

  NodeId neighbor(NodeId node, int axis, int offset) const {
    Index idx = index(node);
    idx[axis] += offset;
    return node_at(idx);
  }

  NodeKind kind(NodeId node) const { return kind_[node]; }
  bool is_boundary(NodeId node) const { return kind_[node] == NodeKind::boundary; }
  bool is_interior(NodeId node) const { return kind_[node] == NodeKind::interior; }
  /// Interior node whose axis and diagonal (+-e_i +-e_j) neighbours are all active.
  bool is_full_stencil(NodeId node) const { return full_stencil_[node] != 0; }

  std::span<const NodeId> interior_nodes() const { return interior_; }
  std::span<const NodeId> boundary_nodes() const { return boundary_; }
  std::span<const NodeId> full_stencil_nodes() const { return full_; }
  /// Position of a boundary node inside boundary_nodes().
  std::size_t boundary_rank(NodeId node) const { return boundary_rank_[node]; }

  /// Trapezoidal weight: product of half-weights on box faces for plain
  /// boxes, 1 (interior) or 1/2 (boundary) times the cell volume on masks.
  double weight(NodeId node) const { return weight_[node]; }

  /// Largest distance between active node coordinates.
  double diameter() const {
    std::call_once(diameter_once_, [this] { diameter_ = compute_diameter(); });
    return diameter_;
  }

  /// Bounded convex domain: an unmasked box or a ball mask in dirichlet mode.
  bool convex() const {
    return !periodic() &&
           (spec_.mask.kind == MaskShape::Kind::none || spec_.mask.kind == MaskShape::Kind::ball);
  }

  /// Recomputes the interior/boundary split from the active set.
  std::vector<NodeKind> classify() const {
    std::vector<NodeKind> kinds(size(), NodeKind::interior);
    if (periodic()) return kinds;
    for (NodeId node = 0; node < size(); ++node) {
      for (int axis = 0; axis < dim() && kinds[node] == NodeKind::interior; ++axis)
        if (neighbor(node, axis, +1) == kNoNode || neighbor(node, axis, -1) == kNoNode)
          kinds[node] = NodeKind::boundary;
    }
    return kinds;
  }

 private:
  friend GridPtr make_grid(const GridSpec& spec);
  DomainGrid() = default;

  Index unflatten(std::size_t flat) const {
    Index idx{};
    for (int i = 0; i < dim(); ++i) {
      const auto n = static_cast<std::size_t>(spec_.resolution[i]);
      idx[i] = static_cast<int>(flat % n);
      flat /= n;
    }
    return idx;
  }

  double compute_diameter() const {
    if (!spec_.mask.active()) {
      double s = 0.0;
      for (int i = 0; i < dim(); ++i) {
        const double extent = spacing_[i] * (spec_.resolution[i] - 1);
        s += extent * extent;
      }
      return std::sqrt(s);
    }
    // Extreme points of the active set are boundary nodes.
    double best = 0.0;
    const auto& nodes = boundary_.empty() ? interior_ : boundary_;
    std::vector<Point> pts;
    pts.reserve(nodes.size());
    for (NodeId nd : nodes) pts.push_back(point(nd));
    for (std::size_t a = 0; a < pts.size(); ++a)
      for (std::size_t b = a + 1; b < pts.size(); ++b) {
        double s = 0.0;
        for (int i = 0; i < dim(); ++i) s += (pts[a][i] - pts[b][i]) * (pts[a][i] - pts[b][i]);
        best = std::max(best, s);
      }
    return std::sqrt(best);
  }

  GridSpec spec_;
  std::array<double, kMaxDim> spacing_{};
  std::vector<NodeId> active_of_;       // lattice -> node or kNoNode
  std::vector<std::size_t> lattice_of_;  // node -> lattice
  std::vector<NodeKind> kind_;
  std::vector<std::uint8_t> full_stencil_;
  std::vector<NodeId> interior_, boundary_, full_;
  std::vector<std::size_t> boundary_rank_;
  std::vector<double> weight_;
  mutable std::once_flag diameter_once_;
  mutable double diameter_ = 0.0;
};

inline GridPtr make_grid(const GridSpec& spec) {
  const int n = spec.dim;
  if (n < 1 || n > kMaxDim) throw GridError("make_grid: dimension must be in [1, 4]");
  if (static_cast<int>(spec.box.size()) != n || static_cast<int>(spec.resolution.size()) != n)
    throw GridError("make_grid: box and resolution must have one entry per axis");
  const bool periodic = spec.mode == BoundaryMode::periodic;
  if (periodic && spec.mask.active()) throw GridError("make_grid: periodic mode cannot be masked");

  std::shared_ptr<DomainGrid> grid(new DomainGrid());
  grid->spec_ = spec;
  std::size_t lattice = 1;
  for (int i = 0; i < n; ++i) {
    const int res = spec.resolution[i];
    if (res < 3) throw GridError("make_grid: resolution must be >= 3 on every axis");
    const double extent = spec.box[i].hi - spec.box[i].lo;
    const double h = extent / (periodic ? res : res - 1);
    if (!(h > 0.0) || !std::isfinite(h)) throw GridError("make_grid: spacing must be positive");
    grid->spacing_[i] = h;
    lattice *= static_cast<std::size_t>(res);
  }

  const MaskShape& mask = spec.mask;
  if (mask.active()) {
    if (static_cast<int>(mask.center.size()) != n)
      throw GridError("make_grid: mask center has wrong dimension");
    if (mask.kind == MaskShape::Kind::annulus && !(mask.r_in >= 0.0 && mask.r_in < mask.r_out))
      throw GridError("make_grid: annulus needs 0 <= r_in < r_out");
    if (!(mask.r_out > 0.0)) throw GridError("make_grid: mask radius must be positive");
    constexpr double fuzz = 1e-12;
    for (int i = 0; i < n; ++i) {
      if (mask.center[i] - mask.r_out < spec.box[i].lo - fuzz ||
          mask.center[i] + mask.r_out > spec.box[i].hi + fuzz)
        throw GridError("make_grid: mask does not fit inside the box");
    }
  }

  grid->active_of_.assign(lattice, kNoNode);
  {
    Point x{};
    for (std::size_t flat = 0; flat < lattice; ++flat) {
      const Index idx = grid->unflatten(flat);
      for (int i = 0; i < n; ++i) x[i] = spec.box[i].lo + grid->spacing_[i] * idx[i];
      if (mask.contains({x.data(), std::size_t(n)})) {
        if (grid->lattice_of_.size() >= spec.max_active)
          throw GridError("make_grid: active node count exceeds the cap of " +
                          std::to_string(spec.max_active));
        grid->active_of_[flat] = grid->lattice_of_.size();
        grid->lattice_of_.push_back(flat);
      }
    }
  }

  const std::size_t count = grid->lattice_of_.size();
  grid->kind_ = grid->classify();
  grid->full_stencil_.assign(count, 0);
  grid->boundary_rank_.assign(count, kNoNode);
  for (NodeId node = 0; node < count; ++node) {
    if (grid->kind_[node] == NodeKind::boundary) {
      grid->boundary_rank_[node] = grid->boundary_.size();
      grid->boundary_.push_back(node);
      continue;
    }
    grid->interior_.push_back(node);
    bool full = true;
    const Index idx = grid->index(node);
    for (int i = 0; i < n && full; ++i)
      for (int j = i + 1; j < n && full; ++j)
        for (int si : {-1, 1})
          for (int sj : {-1, 1}) {
            Index q = idx;
            q[i] += si;
            q[j] += sj;
            if (grid->node_at(q) == kNoNode) full = false;
          }
    if (full) {
      grid->full_stencil_[node] = 1;
      grid->full_.push_back(node);
    }
  }
  if (grid->interior_.empty()) throw GridError("make_grid: domain has no interior nodes");

  const double cell = grid->cell_volume();
  grid->weight_.assign(count, cell);
  for (NodeId node = 0; node < count; ++node) {
    if (periodic) continue;
    if (mask.active()) {
      if (grid->kind_[node] == NodeKind::boundary) grid->weight_[node] = 0.5 * cell;
      continue;
    }
    const Index idx = grid->index(node);
    for (int i = 0; i < n; ++i)
      if (idx[i] == 0 || idx[i] == spec.resolution[i] - 1) grid->weight_[node] *= 0.5;
  }
  return grid;
}

class FieldError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// m values per active node plus the Dirichlet data carried on boundary nodes.
class GraphField {
 public:
  GraphField(GridPtr grid, int m) : GraphField(grid, m, std::vector<double>(grid->size() * m, 0.0)) {}

  /// Boundary data are read off the boundary nodes of `values`.
  GraphField(GridPtr grid, int m, std::vector<double> values)
      : grid_(std::move(grid)), m_(m), values_(std::move(values)) {
    check_shape();
    boundary_data_.resize(grid_->boundary_nodes().size() * m_);
    for (std::size_t b = 0; b < grid_->boundary_nodes().size(); ++b)
      for (int a = 0; a < m_; ++a) boundary_data_[b * m_ + a] = values_[grid_->boundary_nodes()[b] * m_ + a];
  }

  /// Explicit boundary data; in dirichlet mode the boundary values are pinned to them.
  GraphField(GridPtr grid, int m, std::vector<double> values, std::vector<double> boundary_data)
      : grid_(std::move(grid)), m_(m), values_(std::move(values)), boundary_data_(std::move(boundary_data)) {
    check_shape();
    if (boundary_data_.size() != grid_->boundary_nodes().size() * m_)
      throw FieldError("GraphField: boundary data size mismatch");
    pin_boundary();
  }

  const DomainGrid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }
  int codim() const { return m_; }
  int dim() const { return grid_->dim(); }
  std::size_t size() const { return grid_->size(); }

  double operator()(NodeId node, int component) const { return values_[node * m_ + component]; }
  std::span<const double> at(NodeId node) const { return {values_.data() + node * m_, std::size_t(m_)}; }
  std::span<const double> values() const { return values_; }
  std::span<const double> boundary_data() const { return boundary_data_; }

  /// Same grid and boundary data, new nodal values (boundary re-pinned in dirichlet mode).
  GraphField with_values(std::vector<double> values) const {
    return GraphField(grid_, m_, std::move(values), boundary_data_);
  }

  /// Values of one component, one entry per node.
  std::vector<double> component(int a) const {
    std::vector<double> out(size());
    for (NodeId nd = 0; nd < size(); ++nd) out[nd] = values_[nd * m_ + a];
    return out;
  }

 private:
  void check_shape() const {
    if (m_ < 1 || m_ > kMaxCodim) throw FieldError("GraphField: codimension must be in [1, 4]");
    if (values_.size() != grid_->size() * m_) throw FieldError("GraphField: value count mismatch");
    for (double v : values_)
      if (!std::isfinite(v)) throw FieldError("GraphField: non-finite value");
    for (double v : boundary_data_)
      if (!std::isfinite(v)) throw FieldError("GraphField: non-finite boundary value");
  }
  void pin_boundary() {
    if (grid_->periodic()) return;
    const auto bnd = grid_->boundary_nodes();
    for (std::size_t b = 0; b < bnd.size(); ++b)
      for (int a = 0; a < m_; ++a) values_[bnd[b] * m_ + a] = boundary_data_[b * m_ + a];
  }

  GridPtr grid_;
  int m_;
  std::vector<double> values_;
  std::vector<double> boundary_data_;
};

using MapFn = std::function<void(std::span<const double> x, std::span<double> out)>;

/// Samples f at every active node; the boundary data are f on boundary nodes.
inline GraphField sample_field(const GridPtr& grid, int m, const MapFn& f) {
  std::vector<double> values(grid->size() * m);
  for (NodeId node = 0; node < grid->size(); ++node) {
    const Point x = grid->point(node);
    std::span<double> out(values.data() + node * m, std::size_t(m));
    f(grid->point_span(x), out);
    for (double v : out)
      if (!std::isfinite(v))
        throw FieldError("sample_field: non-finite sample at node " + std::to_string(node));
  }
  return GraphField(grid, m, std::move(values));
}

}  // namespace graphflow
