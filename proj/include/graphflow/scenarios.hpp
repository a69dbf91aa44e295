#pragma once

// Analytic fixtures: the Hopf map and its Lawson-Osserman cone, Scherk's
// surface, spherical caps, small bumps and seeded random area-decreasing maps.

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "graphflow/geometry.hpp"
#include "graphflow/grid.hpp"

namespace graphflow {

class ScenarioError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// eta(z1, z2) = (|z1|^2 - |z2|^2, 2 z1 conj(z2)), with the complex slot split into (re, im).
inline std::array<double, 3> hopf_map(std::complex<double> z1, std::complex<double> z2) {
  const std::complex<double> w = 2.0 * z1 * std::conj(z2);
  return {std::norm(z1) - std::norm(z2), w.real(), w.imag()};
}

/// u(x) = (sqrt5 / 2) |x| eta(x / |x|) on R^4 = C^2, u(0) = 0.
inline std::array<double, 3> lawson_osserman_cone(const std::array<double, 4>& x) {
  const double r = std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2] + x[3] * x[3]);
  if (r == 0.0) return {0.0, 0.0, 0.0};
  // eta is 2-homogeneous, so |x| eta(x/|x|) = eta(x) / |x|.
  const auto e = hopf_map({x[0], x[1]}, {x[2], x[3]});
  const double c = 0.5 * std::sqrt(5.0) / r;
  return {c * e[0], c * e[1], c * e[2]};
}

struct ScenarioFlags {
  bool exact_minimal = false;
  bool area_decreasing = false;
  bool codim1 = false;
};

struct ScenarioParams {
  std::optional<int> n;
  std::optional<int> m;
  std::optional<int> resolution;
  std::optional<double> amplitude;
  std::optional<double> epsilon;
  std::optional<bool> periodic;
  std::optional<std::vector<double>> slope;   // affine: m x n, row-major
  std::optional<std::vector<double>> offset;  // affine: m entries
  std::optional<double> inner_radius;         // lo_cone: hole radius, 0 = full box
  double boundary_scale = 1.0;                // multiplies the whole map (R psi)
  std::uint64_t seed = 0;
};

struct Scenario {
  std::string name;
  int n = 0;
  int m = 0;
  GridSpec domain;
  MapFn exact_map;
  ScenarioFlags flags;

  GridPtr grid() const { return make_grid(domain); }
  /// Same box, mask and mode at another resolution (node count per axis).
  GridSpec domain_at(int resolution) const {
    GridSpec s = domain;
    s.resolution.assign(static_cast<std::size_t>(n), resolution);
    return s;
  }
  GraphField sample(const GridPtr& g) const { return sample_field(g, m, exact_map); }
  GraphField sample() const { return sample(grid()); }
};

struct ScenarioInfo {
  const char* name;
  const char* description;
};

inline const std::vector<ScenarioInfo>& scenario_catalogue() {
  static const std::vector<ScenarioInfo> catalogue = {
      {"zero", "u = 0 on the unit box"},
      {"affine", "u = A x + b, exact minimal"},
      {"scherk", "u = log(cos y / cos x) on [-1,1]^2, exact codimension-one minimal graph"},
      {"sphere_cap", "upper unit hemisphere over the ball |x| <= 0.5"},
      {"lo_cone", "Lawson-Osserman cone over the Hopf map on the annulus 0.25 < |x| < 1 in R^4"},
      {"small_bump", "Gaussian bump of small amplitude on the unit box (seeded centre)"},
      {"random_area_decreasing", "band-limited seeded map rescaled to a prescribed area-decreasing margin"},
      {"torus_bump", "zero-mean-slope periodic map on the unit torus"},
  };
  return catalogue;
}

namespace detail {

inline GridSpec box_spec(int n, double lo, double hi, int res, BoundaryMode mode = BoundaryMode::dirichlet) {
  GridSpec s;
  s.dim = n;
  s.box.assign(static_cast<std::size_t>(n), Interval{lo, hi});
  s.resolution.assign(static_cast<std::size_t>(n), res);
  s.mode = mode;
  return s;
}

/// Uniform doubles in [0, 1) from raw 64-bit draws, identical on every platform.
class UniformStream {
 public:
  explicit UniformStream(std::uint64_t seed) : engine_(seed) {}
  double next() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double between(double lo, double hi) { return lo + (hi - lo) * next(); }
  int integer(int lo, int hi) { return lo + static_cast<int>(next() * (hi - lo + 1)); }

 private:
  std::mt19937_64 engine_;
};

inline MapFn scaled(MapFn f, double s) {
  if (s == 1.0) return f;
  return [f = std::move(f), s](std::span<const double> x, std::span<double> out) {
    f(x, out);
    for (double& v : out) v *= s;
  };
}

struct FourierMode {
  std::array<int, kMaxDim> k{};
  double coef = 0.0;
  double phase = 0.0;
};

}  // namespace detail

inline Scenario make_scenario(const std::string& name, const ScenarioParams& params = {}) {
  using detail::box_spec;
  constexpr double pi = std::numbers::pi;
  Scenario sc;
  sc.name = name;
  auto dims = [&](int n_default, int m_default) {
    sc.n = params.n.value_or(n_default);
    sc.m = params.m.value_or(m_default);
    if (sc.n < 1 || sc.n > kMaxDim) throw ScenarioError(name + ": n must be in [1, 4]");
    if (sc.m < 1 || sc.m > kMaxCodim) throw ScenarioError(name + ": m must be in [1, 4]");
  };
  auto fixed_dims = [&](int n, int m) {
    if ((params.n && *params.n != n) || (params.m && *params.m != m))
      throw ScenarioError(name + ": dimensions are fixed to n=" + std::to_string(n) + ", m=" + std::to_string(m));
    sc.n = n;
    sc.m = m;
  };

  if (name == "zero") {
    dims(2, 1);
    sc.domain = box_spec(sc.n, 0.0, 1.0, params.resolution.value_or(33));
    sc.exact_map = [](std::span<const double>, std::span<double> out) {
      for (double& v : out) v = 0.0;
    };
    sc.flags = {true, true, sc.m == 1};
  } else if (name == "affine") {
    dims(2, 2);
    std::vector<double> a(static_cast<std::size_t>(sc.n * sc.m));
    std::vector<double> b(static_cast<std::size_t>(sc.m));
    for (int r = 0; r < sc.m; ++r) {
      b[r] = 0.1 * (r + 1);
      for (int c = 0; c < sc.n; ++c) a[r * sc.n + c] = 0.3 * ((r + c) % 2 == 0 ? 1.0 : -0.5) / (1.0 + 0.5 * r);
    }
    if (params.slope) {
      if (params.slope->size() != a.size()) throw ScenarioError("affine: slope must have m*n entries");
      a = *params.slope;
    }
    if (params.offset) {
      if (params.offset->size() != b.size()) throw ScenarioError("affine: offset must have m entries");
      b = *params.offset;
    }
    sc.domain = box_spec(sc.n, 0.0, 1.0, params.resolution.value_or(17));
    const int n = sc.n, m = sc.m;
    sc.exact_map = [a, b, n, m](std::span<const double> x, std::span<double> out) {
      for (int r = 0; r < m; ++r) {
        double s = b[r];
        for (int c = 0; c < n; ++c) s += a[r * n + c] * x[c];
        out[r] = s;
      }
    };
    SmallMat du(m, n);
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < n; ++c) du(r, c) = a[r * n + c] * params.boundary_scale;
    sc.flags = {true, max_pair_product(singular_values(du)) < 1.0, m == 1};
  } else if (name == "scherk") {
    fixed_dims(2, 1);
    sc.domain = box_spec(2, -1.0, 1.0, params.resolution.value_or(33));
    sc.exact_map = [](std::span<const double> x, std::span<double> out) {
      out[0] = std::log(std::cos(x[1]) / std::cos(x[0]));
    };
    sc.flags = {true, true, true};
  } else if (name == "sphere_cap") {
    dims(2, 1);
    if (sc.m != 1) throw ScenarioError("sphere_cap: codimension is 1");
    sc.domain = box_spec(sc.n, -0.5, 0.5, params.resolution.value_or(33));
    sc.domain.mask = MaskShape::ball(std::vector<double>(static_cast<std::size_t>(sc.n), 0.0), 0.5);
    sc.exact_map = [](std::span<const double> x, std::span<double> out) {
      double r2 = 0.0;
      for (double xi : x) r2 += xi * xi;
      out[0] = std::sqrt(1.0 - r2);
    };
    sc.flags = {false, true, true};
  } else if (name == "lo_cone") {
    fixed_dims(4, 3);
    sc.domain = box_spec(4, -1.0, 1.0, params.resolution.value_or(17));
    const double r_in = params.inner_radius.value_or(0.25);
    if (!(r_in >= 0.0 && r_in < 1.0)) throw ScenarioError("lo_cone: inner_radius must lie in [0, 1)");
    if (r_in > 0.0) sc.domain.mask = MaskShape::annulus({0.0, 0.0, 0.0, 0.0}, r_in, 1.0);
    sc.exact_map = [](std::span<const double> x, std::span<double> out) {
      const auto u = lawson_osserman_cone({x[0], x[1], x[2], x[3]});
      out[0] = u[0];
      out[1] = u[1];
      out[2] = u[2];
    };
    sc.flags = {true, false, false};
  } else if (name == "small_bump") {
    dims(2, 1);
    detail::UniformStream rng(params.seed);
    std::vector<double> centre(static_cast<std::size_t>(sc.n));
    for (double& c : centre) c = 0.5 + rng.between(-0.1, 0.1);
    const double width = 0.3;
    const double base = params.amplitude.value_or(5e-4) * rng.between(0.8, 1.2);
    std::vector<double> amp(static_cast<std::size_t>(sc.m));
    for (int a = 0; a < sc.m; ++a) amp[a] = base * (1.0 - 0.25 * a);
    sc.domain = box_spec(sc.n, 0.0, 1.0, params.resolution.value_or(33));
    sc.exact_map = [centre, amp, width](std::span<const double> x, std::span<double> out) {
      double r2 = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) r2 += (x[i] - centre[i]) * (x[i] - centre[i]);
      const double g = std::exp(-r2 / (2.0 * width * width));
      for (std::size_t a = 0; a < out.size(); ++a) out[a] = amp[a] * g;
    };
    sc.flags = {false, true, sc.m == 1};
  } else if (name == "random_area_decreasing" || name == "torus_bump") {
    const bool torus = name == "torus_bump";
    dims(2, 2);
    const bool periodic = torus || params.periodic.value_or(false);
    const double eps = params.epsilon.value_or(0.1);
    if (!(eps > 0.0 && eps < 1.0)) throw ScenarioError(name + ": epsilon must lie in (0, 1)");
    sc.domain = box_spec(sc.n, 0.0, 1.0, params.resolution.value_or(periodic ? 32 : 33),
                         periodic ? BoundaryMode::periodic : BoundaryMode::dirichlet);
    std::vector<std::vector<detail::FourierMode>> modes(static_cast<std::size_t>(sc.m));
    if (torus) {
      // u^a = sin(2 pi x_{a mod n}) + 0.5 cos(2 pi (x_1 + ... )): a fixed low-mode map.
      for (int a = 0; a < sc.m; ++a) {
        detail::FourierMode first;
        first.k[a % sc.n] = 1;
        first.coef = 1.0;
        first.phase = a % 2 == 0 ? 0.0 : pi / 2;
        detail::FourierMode second;
        for (int i = 0; i < sc.n; ++i) second.k[i] = (i + a) % 2 == 0 ? 1 : -1;
        second.coef = 0.5;
        second.phase = 0.25 * pi * (a + 1);
        modes[a] = {first, second};
      }
    } else {
      detail::UniformStream rng(params.seed);
      for (int a = 0; a < sc.m; ++a)
        for (int k = 0; k < 3; ++k) {
          detail::FourierMode mode;
          bool nonzero = false;
          for (int i = 0; i < sc.n; ++i) {
            mode.k[i] = rng.integer(-2, 2);
            nonzero = nonzero || mode.k[i] != 0;
          }
          if (!nonzero) mode.k[0] = 1;
          mode.coef = rng.between(-1.0, 1.0);
          mode.phase = rng.between(0.0, 2.0 * pi);
          modes[a].push_back(mode);
        }
    }
    const int n = sc.n;
    auto unit_map = [modes, n](std::span<const double> x, std::span<double> out) {
      for (std::size_t a = 0; a < out.size(); ++a) {
        double s = 0.0;
        for (const auto& md : modes[a]) {
          double arg = md.phase;
          for (int i = 0; i < n; ++i) arg += 2.0 * std::numbers::pi * md.k[i] * x[i];
          s += md.coef * std::sin(arg);
        }
        out[a] = s;
      }
    };
    // Pair products of singular values scale with amplitude^2, so shrinking
    // the amplitude reaches any margin below 1.
    double amp = params.amplitude.value_or(torus ? 0.05 : 0.2) * params.boundary_scale;
    const GridPtr ref = make_grid(sc.domain);
    const double unit_pair = 1.0 - singular_spectrum(sample_field(ref, sc.m, unit_map)).ad_margin;
    if (unit_pair * amp * amp > 1.0 - eps) amp = std::sqrt((1.0 - eps) / unit_pair) * (1.0 - 1e-9);
    sc.exact_map = detail::scaled(unit_map, amp);
    if (singular_spectrum(sample_field(ref, sc.m, sc.exact_map)).ad_margin < eps)
      throw ScenarioError(name + ": cannot reach the requested area-decreasing margin");
    sc.flags = {false, true, sc.m == 1};
    // The margin was enforced for the whole map; do not rescale again below.
    return sc;
  } else {
    throw ScenarioError("unknown scenario '" + name + "'");
  }
  sc.exact_map = detail::scaled(std::move(sc.exact_map), params.boundary_scale);
  return sc;
}

}  // namespace graphflow
