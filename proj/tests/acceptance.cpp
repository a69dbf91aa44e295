// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <json.hpp>

#include "graphflow/analysis.hpp"
#include "graphflow/elliptic.hpp"
#include "graphflow/flow.hpp"
#include "graphflow/geometry.hpp"
#include "graphflow/operators.hpp"
#include "graphflow/scenarios.hpp"
#include "support.hpp"

#ifndef GRAPHFLOW_CLI
#error "GRAPHFLOW_CLI must name the graphflow executable"
#endif

using namespace graphflow;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string g3(double v) { return fmt("%.3g", v); }

double max_diff(const GraphField& a, const GraphField& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.values().size(); ++k) d = std::max(d, std::abs(a.values()[k] - b.values()[k]));
  return d;
}

/// Random smooth fields over a spread of dimensions and amplitudes.
GraphField random_case(int k) {
  const int n = 1 + k % 4;
  const int m = 1 + (k / 4) % 4;
  const int res = n <= 2 ? 17 : (n == 3 ? 9 : 7);
  const double amp = 0.05 + 1.5 * ((k * 37) % 100) / 100.0;
  return testsupport::random_field(1000 + k, n, m, res, amp);
}

Outcome exact_residuals() {
  const auto start = std::chrono::steady_clock::now();
  double affine = 0.0;
  for (auto [n, m, res] : {std::tuple{2, 2, 9}, {2, 2, 33}, {2, 1, 17}, {3, 2, 9}, {4, 3, 9}, {1, 3, 17}}) {
    const GraphField f = make_scenario("affine", {.n = n, .m = m, .resolution = res}).sample();
    affine = std::max({affine, ms_residual_nondiv(f).linf, ms_residual_div(f, induced_metric(f)).linf});
    if (m == 1) affine = std::max(affine, mse_residual_div(f).linf);
  }
  const auto scherk = refinement_study(make_scenario("scherk"), {33, 65, 129});
  const auto cone = refinement_study(make_scenario("lo_cone"), {17, 33});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool ok = affine < 1e-12 && *scherk[1].order >= 1.8 && *scherk[2].order >= 1.8 && *cone[1].order >= 1.5 &&
                  secs < 300.0;
  return {ok, "affine max " + g3(affine) + "; scherk orders " + fmt("%.2f", *scherk[1].order) + ", " +
                  fmt("%.2f", *scherk[2].order) + "; lo_cone order " + fmt("%.2f", *cone[1].order) + "; " +
                  fmt("%.1f", secs) + " s"};
}

Outcome area_formula() {
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) worst = std::max(worst, area_elements(random_case(k)).max_relative_gap);
  return {worst <= 1e-10, "100 fields, worst relative gap " + g3(worst)};
}

Outcome ellipticity() {
  int failures = 0;
  double worst_low = 0.0, worst_high = 0.0;
  for (int k = 0; k < 100; ++k) {
    const GraphField f = random_case(k);
    const MetricField metric = induced_metric(f);
    const SingularSpectrum spec = singular_spectrum(f);
    for (NodeId p = 0; p < f.size(); ++p) {
      const SmallVec ev = jacobi_eigenvalues(metric.inverse(p));
      const double lo = ev(ev.size() - 1), hi = ev(0);
      const double floor = 1.0 / (1.0 + spec.eta);
      worst_low = std::min(worst_low, lo - floor);
      worst_high = std::max(worst_high, hi - 1.0);
      if (lo < floor - 1e-12 || hi > 1.0 + 1e-12) ++failures;
    }
  }
  return {failures == 0, "100 fields, " + std::to_string(failures) + " nodes outside; min(lo - 1/(1+eta)) " +
                             g3(worst_low) + ", max(hi - 1) " + g3(worst_high)};
}

struct BumpRuns {
  std::vector<FlowRun> runs;
  double h = 0.0;
};

BumpRuns small_bump_runs() {
  BumpRuns b;
  for (std::uint64_t seed : {1, 2, 3}) {
    const GraphField f = make_scenario("small_bump", {.resolution = 33, .seed = seed}).sample();
    b.h = f.grid().h_max();
    b.runs.push_back(run_flow({.initial = f, .t_max = 5.0, .residual_tol = 1e-8, .record_every = 10}));
  }
  return b;
}

Outcome dissipation(const FlowRun& run) {
  double worst = 0.0;
  std::size_t checked = 0, bad = 0;
  for (const auto& r : run.records) {
    if (std::isnan(r.area_rate)) continue;
    const double allowance = 0.05 * r.dissipation + 1e-10;
    const double gap = std::abs(r.area_rate + r.dissipation);
    worst = std::max(worst, gap / allowance);
    ++checked;
    bad += gap > allowance;
  }
  const bool ok = bad == 0 && run.violations.area_monotone == 0 && checked > 0;
  return {ok, std::to_string(checked) + " records, worst |dA/dt + D| / allowance " + fmt("%.3f", worst) +
                  ", area increases " + std::to_string(run.violations.area_monotone)};
}

Outcome omega_principle(const BumpRuns& b) {
  std::size_t omega = 0, grad = 0;
  double min_delta = 1.0;
  bool certified = true;
  for (const auto& run : b.runs) {
    certified = certified && run.delta_certified > 0.0 && run.converged();
    min_delta = std::min(min_delta, run.delta_certified);
    omega += run.violations.omega_minprinciple;
    grad += run.violations.interior_grad;
  }
  return {certified && omega == 0 && grad == 0,
          std::to_string(b.runs.size()) + " seeds, min delta " + fmt("%.3f", min_delta) + ", *omega violations " +
              std::to_string(omega) + ", |Du|^2 violations " + std::to_string(grad)};
}

Outcome boundary_estimate(const BumpRuns& b) {
  std::size_t records = 0, bad = 0;
  double worst = -1e300;
  std::vector<FlowRun> runs = b.runs;
  const GraphField aff = make_scenario("affine", {.resolution = 17}).sample();
  runs.push_back(run_flow({.initial = aff, .t_max = 0.1}));
  for (const auto& run : runs) {
    if (!run.boundary_bound_asserted) return {false, "domain not convex"};
    const double h = run.final_state.field.grid().h_max();
    for (const auto& r : run.records) {
      ++records;
      worst = std::max(worst, r.boundary_max_grad - (r.boundary_bound_rhs + 10.0 * h));
    }
    bad += run.violations.boundary_bound;
  }
  return {bad == 0, std::to_string(records) + " records over " + std::to_string(runs.size()) +
                        " convex runs, max(lhs - rhs - 10h) " + g3(worst)};
}

Outcome subharmonic() {
  double worst = 1.0;
  std::size_t checked = 0;
  bool converged = true;
  for (std::uint64_t seed : {1, 2, 3}) {
    const GraphField psi = make_scenario("random_area_decreasing", {.resolution = 65, .seed = seed}).sample();
    const PicardReport solved = picard_solve(psi, {.outer_tol = 1e-10});
    converged = converged && solved.converged;
    const SubharmonicityReport r = subharmonicity(solved.final);
    converged = converged && r.delta > 0.0;
    worst = std::min(worst, r.fraction());
    checked += r.checked;
  }
  return {converged && worst >= 0.99,
          "3 converged fields on 65^2, " + std::to_string(checked) + " nodes, worst fraction " + fmt("%.4f", worst)};
}

Outcome bernstein() {
  const GraphField f = make_scenario("torus_bump").sample();
  const FlowRun run = run_flow({.initial = f, .t_max = 10.0, .residual_tol = 1e-10, .record_every = 500});
  const auto& last = run.records.back();
  const bool ok = last.max_grad < 1e-6 && last.max_A2 < 1e-8 && run.final_state.t <= 10.0;
  return {ok, "t = " + fmt("%.3f", run.final_state.t) + ", max_grad " + g3(last.max_grad) + ", max_A2 " +
                  g3(last.max_A2)};
}

Outcome method_agreement() {
  const double outer_tol = 1e-10, residual_tol = 1e-10;
  double worst = 0.0;
  bool converged = true;
  for (std::uint64_t seed : {1, 2}) {
    const GraphField psi = make_scenario("small_bump", {.resolution = 33, .seed = seed}).sample();
    const PicardReport picard = picard_solve(psi, {.outer_tol = outer_tol});
    const FlowRun flow = run_flow({.initial = psi, .t_max = 20.0, .residual_tol = residual_tol, .record_every = 5000});
    converged = converged && picard.converged && flow.converged();
    worst = std::max(worst, max_diff(picard.final, flow.final_state.field));
  }
  const double tol = 10.0 * (outer_tol + residual_tol);
  return {converged && worst <= tol, "max |picard - flow| " + g3(worst) + " vs " + g3(tol)};
}

Outcome density() {
  bool ok = true;
  double plane_worst = 0.0;
  const std::vector<double> radii{0.2, 0.3, 0.4, 0.5};
  const GridPtr g = make_grid(testsupport::unit_box(2, 33, -1.0, 1.0));
  const GraphField flat(g, 1);
  const GraphField tilted = sample_field(g, 2, [](std::span<const double> x, std::span<double> out) {
    out[0] = 0.4 * x[0] - 0.2 * x[1];
    out[1] = 0.1 * x[0] + 0.3 * x[1];
  });
  for (const auto& [field, centre] : {std::pair{&flat, std::vector<double>{0.0, 0.0, 0.0}},
                                      std::pair{&tilted, std::vector<double>{0.0, 0.0, 0.0, 0.0}}}) {
    const DensityProfile d = density_ratio(*field, centre, radii);
    for (std::size_t k = 0; k < radii.size(); ++k) {
      plane_worst = std::max(plane_worst, std::abs(d.ratios[k] - 1.0) / d.errors[k]);
      ok = ok && std::abs(d.ratios[k] - 1.0) <= d.errors[k];
    }
  }
  const GraphField cone = make_scenario("lo_cone", {.resolution = 33, .inner_radius = 0.0}).sample();
  const std::vector<double> cone_radii{0.5, 0.75, 1.0};
  const DensityProfile d = density_ratio(cone, std::vector<double>(7, 0.0), cone_radii);
  double spread = 0.0, allowance = 1e300;
  for (std::size_t i = 0; i < cone_radii.size(); ++i) {
    ok = ok && d.ratios[i] >= 1.0 - d.errors[i];
    for (std::size_t j = i + 1; j < cone_radii.size(); ++j) {
      const double gap = std::abs(d.ratios[i] - d.ratios[j]);
      spread = std::max(spread, gap);
      allowance = std::min(allowance, d.errors[i] + d.errors[j]);
      ok = ok && gap <= d.errors[i] + d.errors[j];
    }
  }
  return {ok, "planes max |sigma - 1| / err " + fmt("%.3f", plane_worst) + "; cone sigma " + fmt("%.4f", d.ratios[0]) +
                  ", " + fmt("%.4f", d.ratios[1]) + ", " + fmt("%.4f", d.ratios[2]) + " (16/9 = 1.7778), spread " +
                  g3(spread) + " within " + g3(allowance)};
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / ("graphflow_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  const nlohmann::json cfg = {{"spec_version", "1"},
                              {"scenario", "small_bump"},
                              {"seed", 5},
                              {"params", {{"resolution", 65}}},
                              {"flow", {{"t_max", 0.05}, {"record_every", 50}}}};
  std::ofstream(root / "config.json") << cfg.dump(2);
  auto run = [&](int threads) {
    const fs::path out = root / ("t" + std::to_string(threads));
    const std::string cmd = std::string("\"") + GRAPHFLOW_CLI + "\" run-flow --config \"" +
                            (root / "config.json").string() + "\" --out \"" + out.string() + "\" --threads " +
                            std::to_string(threads) + " 2>/dev/null";
    if (std::system(cmd.c_str()) != 0) return std::string();
    std::ifstream in(out / "monitors.csv", std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const std::string one = run(1), eight = run(8);
  std::size_t lines = 0;
  for (char c : one) lines += c == '\n';
  fs::remove_all(root);
  return {!one.empty() && one == eight,
          "monitors.csv " + std::to_string(one.size()) + " bytes, " + std::to_string(lines) + " lines, " +
              (one == eight ? "identical" : "different")};
}

}  // namespace

int main() {
  int failed = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& f) {
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
    std::fflush(stdout);
  };
  report(1, "exact-solution residuals", exact_residuals);
  report(2, "area-formula equivalence", area_formula);
  report(3, "ellipticity bounds", ellipticity);
  std::optional<BumpRuns> bumps;
  try {
    bumps = small_bump_runs();
  } catch (const std::exception& e) {
    std::printf("small_bump runs failed: %s\n", e.what());
  }
  auto need = [&](auto f) {
    return [&, f]() { return bumps ? f(*bumps) : Outcome{false, "small_bump runs unavailable"}; };
  };
  report(4, "flow dissipation", need([](const BumpRuns& b) { return dissipation(b.runs.front()); }));
  report(5, "*omega maximum principle", need(omega_principle));
  report(6, "boundary gradient estimate", need(boundary_estimate));
  report(7, "subharmonicity", subharmonic);
  report(8, "Bernstein flattening", bernstein);
  report(9, "method agreement", method_agreement);
  report(10, "density diagnostics", density);
  report(11, "determinism", determinism);
  std::printf("%d of 11 criteria passed\n", 11 - failed);
  return failed == 0 ? 0 : 1;
}
