#pragma once

// Pointwise algebra of the induced metric g = I + Du^T Du: inverse, volume
// element, singular values of Du, *omega, area, and ellipticity checks.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "graphflow/grid.hpp"
#include "graphflow/jet.hpp"
#include "graphflow/linalg.hpp"
#include "graphflow/parallel.hpp"

namespace graphflow {

struct NodeMetric {
  SmallMat g;
  SmallMat g_inv;
  double det_g = 1.0;
  double sqrt_g = 1.0;
};

inline NodeMetric metric_from_gradient(const SmallMat& du) {
  const Eigen::Index n = du.cols();
  if (!du.allFinite()) throw std::domain_error("induced metric: non-finite gradient");
  NodeMetric out;
  out.g = SmallMat::Identity(n, n) + du.transpose() * du;
  Eigen::LLT<SmallMat> llt(out.g);
  if (llt.info() != Eigen::Success) throw std::domain_error("induced metric is not positive definite");
  const SmallMat l = llt.matrixL();
  double root = 1.0;
  for (Eigen::Index i = 0; i < n; ++i) root *= l(i, i);
  out.sqrt_g = root;
  out.det_g = root * root;
  out.g_inv = llt.solve(SmallMat::Identity(n, n));
  out.g_inv = 0.5 * (out.g_inv + out.g_inv.transpose()).eval();
  return out;
}

/// Per-node g_ij, g^ij, det g and sqrt g, stored as dense n x n blocks.
class MetricField {
 public:
  MetricField() = default;
  MetricField(int n, std::size_t count)
      : n_(n), g_(count * n * n), g_inv_(count * n * n), det_(count), sqrt_(count) {}

  int dim() const { return n_; }
  std::size_t size() const { return det_.size(); }
  double g(NodeId p, int i, int j) const { return g_[(p * n_ + i) * n_ + j]; }
  double g_inv(NodeId p, int i, int j) const { return g_inv_[(p * n_ + i) * n_ + j]; }
  double det_g(NodeId p) const { return det_[p]; }
  double sqrt_g(NodeId p) const { return sqrt_[p]; }

  SmallMat metric(NodeId p) const { return block(g_, p); }
  SmallMat inverse(NodeId p) const { return block(g_inv_, p); }

  void set(NodeId p, const NodeMetric& m) {
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) {
        g_[(p * n_ + i) * n_ + j] = m.g(i, j);
        g_inv_[(p * n_ + i) * n_ + j] = m.g_inv(i, j);
      }
    det_[p] = m.det_g;
    sqrt_[p] = m.sqrt_g;
  }

  /// Replaces the inverse metric at a node (frozen-coefficient experiments).
  void set_inverse(NodeId p, const SmallMat& g_inv) {
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) g_inv_[(p * n_ + i) * n_ + j] = g_inv(i, j);
  }

  /// Flat metric g = I at every node.
  static MetricField flat(int n, std::size_t count) {
    MetricField f(n, count);
    NodeMetric id{SmallMat::Identity(n, n), SmallMat::Identity(n, n), 1.0, 1.0};
    for (NodeId p = 0; p < count; ++p) f.set(p, id);
    return f;
  }

 private:
  SmallMat block(const std::vector<double>& data, NodeId p) const {
    SmallMat b(n_, n_);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) b(i, j) = data[(p * n_ + i) * n_ + j];
    return b;
  }

  int n_ = 0;
  std::vector<double> g_, g_inv_, det_, sqrt_;
};

inline void require_finite(const NodeJet& j) {
  for (int a = 0; a < j.m; ++a)
    for (int i = 0; i < j.n; ++i) {
      if (!std::isfinite(j.first(a, i))) throw std::domain_error("non-finite jet entry");
      for (int k = 0; k < j.n; ++k)
        if (!std::isfinite(j.second(a, i, k))) throw std::domain_error("non-finite jet entry");
    }
}

inline MetricField induced_metric(const JetField& jets) {
  MetricField out(jets.dim(), jets.size());
  parallel::for_each_index(jets.size(), [&](std::size_t p) {
    require_finite(jets[p]);
    out.set(p, metric_from_gradient(jets[p].gradient()));
  });
  return out;
}

/// Metric from Du alone, without second derivatives.
inline MetricField induced_metric(const GraphField& field) {
  MetricField out(field.dim(), field.size());
  parallel::for_each_index(field.size(), [&](std::size_t p) {
    const SmallMat du = node_gradient(field.grid(), field.values(), field.codim(), p);
    for (Eigen::Index k = 0; k < du.size(); ++k)
      if (!std::isfinite(du.data()[k])) throw std::domain_error("non-finite gradient");
    out.set(p, metric_from_gradient(du));
  });
  return out;
}

/// Singular values of Du, descending: square roots of the eigenvalues of Du^T Du.
inline SmallVec singular_values(const SmallMat& du) {
  SmallVec ev = jacobi_eigenvalues(du.transpose() * du);
  for (Eigen::Index i = 0; i < ev.size(); ++i) ev(i) = std::sqrt(std::max(0.0, ev(i)));
  return ev;
}

inline double star_omega_from(const SmallVec& lambda) {
  double prod = 1.0;
  for (Eigen::Index i = 0; i < lambda.size(); ++i) prod *= 1.0 + lambda(i) * lambda(i);
  return 1.0 / std::sqrt(prod);
}

/// Largest product lambda_i lambda_j over i < j; zero when n = 1.
inline double max_pair_product(const SmallVec& lambda) {
  return lambda.size() >= 2 ? lambda(0) * lambda(1) : 0.0;
}

/// Singular values, *omega per node; eta = max |Du|^2 and the area-decreasing
/// margin 1 - max lambda_i lambda_j over the field.
struct SingularSpectrum {
  int n = 0;
  std::vector<double> lambda;  // n per node
  std::vector<double> star_omega;
  double eta = 0.0;
  double ad_margin = 1.0;

  std::size_t size() const { return star_omega.size(); }
  double singular(NodeId p, int i) const { return lambda[p * n + i]; }
  double grad_norm2(NodeId p) const {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += lambda[p * n + i] * lambda[p * n + i];
    return s;
  }
  double pair_product(NodeId p) const { return n >= 2 ? lambda[p * n] * lambda[p * n + 1] : 0.0; }
};

namespace detail {
inline SingularSpectrum spectrum_from_gradients(int n, std::size_t count,
                                                const std::function<SmallMat(NodeId)>& grad) {
  SingularSpectrum s;
  s.n = n;
  s.lambda.assign(count * n, 0.0);
  s.star_omega.assign(count, 1.0);
  parallel::for_each_index(count, [&](std::size_t p) {
    const SmallVec lam = singular_values(grad(p));
    for (int i = 0; i < n; ++i) s.lambda[p * n + i] = lam(i);
    s.star_omega[p] = star_omega_from(lam);
  });
  double eta = 0.0;
  double pair = 0.0;
  for (NodeId p = 0; p < count; ++p) {
    eta = std::max(eta, s.grad_norm2(p));
    pair = std::max(pair, s.pair_product(p));
  }
  s.eta = eta;
  s.ad_margin = 1.0 - pair;
  return s;
}
}  // namespace detail

inline SingularSpectrum singular_spectrum(const JetField& jets) {
  return detail::spectrum_from_gradients(jets.dim(), jets.size(), [&](NodeId p) {
    require_finite(jets[p]);
    return jets[p].gradient();
  });
}

inline SingularSpectrum singular_spectrum(const GraphField& field) {
  return detail::spectrum_from_gradients(field.dim(), field.size(), [&](NodeId p) {
    return node_gradient(field.grid(), field.values(), field.codim(), p);
  });
}

struct AreaElements {
  std::vector<double> det_form;      // sqrt det(I + Du^T Du)
  std::vector<double> product_form;  // prod (1 + lambda_i^2)^(1/2)
  double max_relative_gap = 0.0;
};

inline AreaElements area_elements(const GraphField& field) {
  AreaElements e;
  const std::size_t count = field.size();
  e.det_form.resize(count);
  e.product_form.resize(count);
  parallel::for_each_index(count, [&](std::size_t p) {
    const SmallMat du = node_gradient(field.grid(), field.values(), field.codim(), p);
    e.det_form[p] = metric_from_gradient(du).sqrt_g;
    e.product_form[p] = 1.0 / star_omega_from(singular_values(du));
  });
  for (NodeId p = 0; p < count; ++p)
    e.max_relative_gap =
        std::max(e.max_relative_gap, std::abs(e.det_form[p] - e.product_form[p]) / e.det_form[p]);
  return e;
}

inline double integrate(const DomainGrid& grid, std::span<const double> nodal) {
  double s = 0.0;
  for (NodeId p = 0; p < grid.size(); ++p) s += grid.weight(p) * nodal[p];
  return s;
}

/// Graph area by trapezoidal quadrature of the volume element. The
/// determinant and singular-value forms must agree to 1e-10 relative.
inline double area(const GraphField& field) {
  const AreaElements e = area_elements(field);
  if (e.max_relative_gap > 1e-10)
    throw std::logic_error("area: determinant and singular-value volume elements disagree");
  return integrate(field.grid(), e.det_form);
}

/// Extreme eigenvalues of g^ij over all nodes, checked against [1/(1+eta), 1].
inline std::pair<double, double> ellipticity_bounds(const MetricField& metric, const SingularSpectrum& spectrum) {
  const std::size_t count = metric.size();
  std::vector<double> lo(count), hi(count);
  parallel::for_each_index(count, [&](std::size_t p) {
    const SmallVec ev = jacobi_eigenvalues(metric.inverse(p));
    hi[p] = ev(0);
    lo[p] = ev(ev.size() - 1);
  });
  const double lambda_min = *std::min_element(lo.begin(), lo.end());
  const double lambda_max = *std::max_element(hi.begin(), hi.end());
  if (lambda_min < 1.0 / (1.0 + spectrum.eta) - 1e-12 || lambda_max > 1.0 + 1e-12)
    throw std::logic_error("ellipticity_bounds: g^ij eigenvalues outside [1/(1+eta), 1]");
  return {lambda_min, lambda_max};
}

struct GradImplicationReport {
  double omega_threshold = 0.0;  // 1/sqrt(2 - delta)
  double grad_threshold = 0.0;   // sqrt((2 - delta)^(1/n) - 1)
  std::size_t checked = 0;
  std::size_t violations = 0;
};

inline double omega_threshold(double delta) { return 1.0 / std::sqrt(2.0 - delta); }
inline double grad_threshold(double delta, int n) { return std::sqrt(std::pow(2.0 - delta, 1.0 / n) - 1.0); }

/// Checks per node: *omega > 1/sqrt(2-d) implies |Du|^2 < 1-d, and
/// |Du| < sqrt((2-d)^(1/n) - 1) implies *omega > 1/sqrt(2-d).
inline GradImplicationReport grad_implications(const SingularSpectrum& spectrum, double delta) {
  if (!(delta >= 0.0 && delta < 1.0)) throw std::invalid_argument("grad_implications: delta must lie in [0, 1)");
  GradImplicationReport r;
  r.omega_threshold = omega_threshold(delta);
  r.grad_threshold = grad_threshold(delta, spectrum.n);
  for (NodeId p = 0; p < spectrum.size(); ++p) {
    const double w = spectrum.star_omega[p];
    const double du2 = spectrum.grad_norm2(p);
    ++r.checked;
    if (w > r.omega_threshold && !(du2 < 1.0 - delta)) ++r.violations;
    if (std::sqrt(du2) < r.grad_threshold && !(w > r.omega_threshold)) ++r.violations;
  }
  return r;
}

}  // namespace graphflow
