#pragma once

// Fixed-capacity dense algebra for per-node work. Matrices never exceed
// (n+m) x (n+m) with n, m <= 4, so storage lives on the stack.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

namespace graphflow {

inline constexpr int kMaxDim = 4;
inline constexpr int kMaxCodim = 4;
inline constexpr int kMaxAmbient = kMaxDim + kMaxCodim;

using SmallMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor,
                               kMaxAmbient, kMaxAmbient>;
using SmallVec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxAmbient, 1>;

class JacobiNonConvergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct JacobiOptions {
  double off_diagonal_tol = 1e-13;
  int max_sweeps = 100;
};

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, sorted
/// descending. The off-diagonal Frobenius norm is driven below
/// tol * max(1, |A|_F).
inline SmallVec jacobi_eigenvalues(SmallMat a, const JacobiOptions& opt = {}) {
  const Eigen::Index n = a.rows();
  if (a.cols() != n) throw std::invalid_argument("jacobi_eigenvalues: matrix not square");
  const double scale = std::max(1.0, a.norm());
  auto off_norm = [&] {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
  };
  int sweep = 0;
  while (off_norm() > opt.off_diagonal_tol * scale) {
    if (++sweep > opt.max_sweeps)
      throw JacobiNonConvergence("jacobi_eigenvalues: no convergence after " +
                                 std::to_string(opt.max_sweeps) + " sweeps");
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
      }
    }
  }
  SmallVec ev = a.diagonal();
  std::sort(ev.data(), ev.data() + n, std::greater<>());
  return ev;
}

}  // namespace graphflow
