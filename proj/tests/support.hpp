#pragma once

// Shared fixtures and independent oracles for the test binaries.

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "graphflow/grid.hpp"
#include "graphflow/linalg.hpp"

namespace testsupport {

using namespace graphflow;

inline GridSpec unit_box(int n, int res, double lo = 0.0, double hi = 1.0) {
  GridSpec s;
  s.dim = n;
  s.box.assign(n, Interval{lo, hi});
  s.resolution.assign(n, res);
  return s;
}

/// Random smooth map: a few sine modes per component with amplitudes up to
/// `amp`, drawn from its own generator (independent of the library RNG).
inline GraphField random_field(std::uint64_t seed, int n, int m, int res, double amp) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  struct Mode {
    double a;
    std::vector<double> k;
    double phase;
  };
  std::vector<std::vector<Mode>> modes(m);
  for (auto& comp : modes)
    for (int j = 0; j < 3; ++j) {
      Mode md{amp * u(rng), std::vector<double>(n), std::numbers::pi * u(rng)};
      for (double& k : md.k) k = 3.0 * u(rng);
      comp.push_back(md);
    }
  const auto grid = make_grid(unit_box(n, res));
  return sample_field(grid, m, [&](std::span<const double> x, std::span<double> out) {
    for (int a = 0; a < m; ++a) {
      double s = 0.0;
      for (const Mode& md : modes[a]) {
        double arg = md.phase;
        for (int i = 0; i < n; ++i) arg += md.k[i] * x[i];
        s += md.a * std::sin(arg);
      }
      out[a] = s;
    }
  });
}

/// Power sums tr(A^k), k = 1..n, which determine the eigenvalues of a
/// symmetric matrix through the characteristic polynomial (Newton identities).
inline std::vector<double> power_sums(const SmallMat& a) {
  std::vector<double> out;
  SmallMat p = a;
  for (Eigen::Index k = 0; k < a.rows(); ++k) {
    out.push_back(p.trace());
    p = (p * a).eval();
  }
  return out;
}

/// Characteristic polynomial coefficients c_0..c_n of det(tI - A) by the
/// Faddeev-LeVerrier recursion.
inline std::vector<double> char_poly(const SmallMat& a) {
  const Eigen::Index n = a.rows();
  std::vector<double> c(n + 1, 0.0);
  c[n] = 1.0;
  SmallMat m = SmallMat::Zero(n, n);
  for (Eigen::Index k = 1; k <= n; ++k) {
    m = (a * m).eval() + c[n - k + 1] * SmallMat::Identity(n, n);
    c[n - k] = -(a * m).trace() / static_cast<double>(k);
  }
  return c;
}

inline double eval_poly(const std::vector<double>& c, double t) {
  double s = 0.0;
  for (auto it = c.rbegin(); it != c.rend(); ++it) s = s * t + *it;
  return s;
}

}  // namespace testsupport
