#pragma once

// Run configuration and the command implementations behind the graphflow
// executable: run-flow, solve, verify, analyze and list-scenarios.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "graphflow/analysis.hpp"
#include "graphflow/elliptic.hpp"
#include "graphflow/flow.hpp"
#include "graphflow/geometry.hpp"
#include "graphflow/io.hpp"
#include "graphflow/parallel.hpp"
#include "graphflow/scenarios.hpp"

namespace graphflow::cli {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum ExitCode : int { kOk = 0, kFailed = 1, kUsage = 2, kIoError = 3 };

struct FlowParams {
  double safety = 0.5;
  double t_max = 1.0;
  double residual_tol = 1e-8;
  std::size_t record_every = 100;
  double slack = 10.0;
  std::optional<std::size_t> max_steps;
};

struct PicardParams {
  double outer_tol = 1e-9;
  std::size_t max_outer = 100;
  double inner_tol = 1e-11;
  std::size_t max_inner = 100000;
  bool compare_flow = false;
};

struct VerifyParams {
  std::vector<int> resolutions;  // empty: per-scenario defaults
  std::optional<double> min_order;
};

struct AnalysisParams {
  std::vector<double> center;  // n + m coordinates; empty: (x0, u(x0))
  std::vector<double> radii;
  std::vector<double> lambdas;
  std::vector<double> x0;  // empty: box centre
  std::optional<double> target_half_width;
  int target_resolution = 17;
};

struct RunConfig {
  std::string scenario = "zero";
  ScenarioParams params;
  std::optional<std::string> psi_snapshot;
  FlowParams flow;
  PicardParams picard;
  VerifyParams verify;
  AnalysisParams analysis;
  std::string out = "out";
  std::uint64_t seed = 0;
  std::optional<int> threads;
};

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

using nlohmann::json;

inline void require_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
}

inline double get_number(const json& j, const std::string& where) {
  if (!j.is_number()) throw ConfigError(where + ": expected a number");
  return j.get<double>();
}

inline double get_positive(const json& j, const std::string& where) {
  const double v = get_number(j, where);
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(where + ": must be positive");
  return v;
}

inline std::int64_t get_integer(const json& j, const std::string& where) {
  if (!j.is_number_integer()) throw ConfigError(where + ": expected an integer");
  return j.get<std::int64_t>();
}

inline std::size_t get_count(const json& j, const std::string& where) {
  const std::int64_t v = get_integer(j, where);
  if (v < 1) throw ConfigError(where + ": must be at least 1");
  return static_cast<std::size_t>(v);
}

inline std::vector<double> get_numbers(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + ": expected an array of numbers");
  std::vector<double> out;
  for (const auto& e : j) out.push_back(get_number(e, where));
  return out;
}

inline ScenarioParams parse_params(const json& j) {
  require_keys(j, {"n", "m", "resolution", "amplitude", "epsilon", "periodic", "slope", "offset", "inner_radius",
                   "boundary_scale"},
               "params");
  ScenarioParams p;
  if (j.contains("n")) p.n = static_cast<int>(get_integer(j["n"], "params.n"));
  if (j.contains("m")) p.m = static_cast<int>(get_integer(j["m"], "params.m"));
  if (j.contains("resolution")) p.resolution = static_cast<int>(get_integer(j["resolution"], "params.resolution"));
  if (j.contains("amplitude")) p.amplitude = get_number(j["amplitude"], "params.amplitude");
  if (j.contains("epsilon")) p.epsilon = get_number(j["epsilon"], "params.epsilon");
  if (j.contains("periodic")) {
    if (!j["periodic"].is_boolean()) throw ConfigError("params.periodic: expected a boolean");
    p.periodic = j["periodic"].get<bool>();
  }
  if (j.contains("slope")) p.slope = get_numbers(j["slope"], "params.slope");
  if (j.contains("offset")) p.offset = get_numbers(j["offset"], "params.offset");
  if (j.contains("inner_radius")) p.inner_radius = get_number(j["inner_radius"], "params.inner_radius");
  if (j.contains("boundary_scale")) p.boundary_scale = get_number(j["boundary_scale"], "params.boundary_scale");
  return p;
}

}  // namespace detail

/// Strict parse: "spec_version" must be "1" and unknown keys are rejected at every level.
inline RunConfig parse_config(const nlohmann::json& j) {
  using namespace detail;
  require_keys(j, {"spec_version", "scenario", "params", "psi_snapshot", "flow", "picard", "verify", "analysis", "out",
                   "seed", "threads"},
               "config");
  if (!j.contains("spec_version") || j["spec_version"] != "1")
    throw ConfigError("config: \"spec_version\" must be \"1\"");
  RunConfig c;
  if (j.contains("scenario")) {
    if (!j["scenario"].is_string()) throw ConfigError("scenario: expected a string");
    c.scenario = j["scenario"].get<std::string>();
  }
  if (j.contains("params")) c.params = parse_params(j["params"]);
  if (j.contains("psi_snapshot")) {
    if (!j["psi_snapshot"].is_string()) throw ConfigError("psi_snapshot: expected a path");
    c.psi_snapshot = j["psi_snapshot"].get<std::string>();
  }
  if (j.contains("flow")) {
    const json& f = j["flow"];
    require_keys(f, {"safety", "t_max", "residual_tol", "record_every", "slack", "max_steps"}, "flow");
    if (f.contains("safety")) c.flow.safety = get_positive(f["safety"], "flow.safety");
    if (c.flow.safety > 1.0) throw ConfigError("flow.safety: must not exceed 1");
    if (f.contains("t_max")) c.flow.t_max = get_positive(f["t_max"], "flow.t_max");
    if (f.contains("residual_tol")) c.flow.residual_tol = get_positive(f["residual_tol"], "flow.residual_tol");
    if (f.contains("record_every")) c.flow.record_every = get_count(f["record_every"], "flow.record_every");
    if (f.contains("slack")) c.flow.slack = get_positive(f["slack"], "flow.slack");
    if (f.contains("max_steps")) c.flow.max_steps = get_count(f["max_steps"], "flow.max_steps");
  }
  if (j.contains("picard")) {
    const json& p = j["picard"];
    require_keys(p, {"outer_tol", "max_outer", "inner_tol", "max_inner", "compare_flow"}, "picard");
    if (p.contains("outer_tol")) c.picard.outer_tol = get_positive(p["outer_tol"], "picard.outer_tol");
    if (p.contains("max_outer")) c.picard.max_outer = get_count(p["max_outer"], "picard.max_outer");
    if (p.contains("inner_tol")) c.picard.inner_tol = get_positive(p["inner_tol"], "picard.inner_tol");
    if (p.contains("max_inner")) c.picard.max_inner = get_count(p["max_inner"], "picard.max_inner");
    if (p.contains("compare_flow")) {
      if (!p["compare_flow"].is_boolean()) throw ConfigError("picard.compare_flow: expected a boolean");
      c.picard.compare_flow = p["compare_flow"].get<bool>();
    }
  }
  if (j.contains("verify")) {
    const json& v = j["verify"];
    require_keys(v, {"resolutions", "min_order"}, "verify");
    if (v.contains("resolutions")) {
      if (!v["resolutions"].is_array()) throw ConfigError("verify.resolutions: expected an array");
      for (const auto& r : v["resolutions"])
        c.verify.resolutions.push_back(static_cast<int>(get_integer(r, "verify.resolutions")));
      if (c.verify.resolutions.size() < 2) throw ConfigError("verify.resolutions: needs at least two levels");
    }
    if (v.contains("min_order")) c.verify.min_order = get_positive(v["min_order"], "verify.min_order");
  }
  if (j.contains("analysis")) {
    const json& a = j["analysis"];
    require_keys(a, {"center", "radii", "lambdas", "x0", "target_half_width", "target_resolution"}, "analysis");
    if (a.contains("center")) c.analysis.center = get_numbers(a["center"], "analysis.center");
    if (a.contains("radii")) c.analysis.radii = get_numbers(a["radii"], "analysis.radii");
    if (a.contains("lambdas")) c.analysis.lambdas = get_numbers(a["lambdas"], "analysis.lambdas");
    for (double l : c.analysis.lambdas)
      if (!(l > 0.0)) throw ConfigError("analysis.lambdas: must be positive");
    if (a.contains("x0")) c.analysis.x0 = get_numbers(a["x0"], "analysis.x0");
    if (a.contains("target_half_width"))
      c.analysis.target_half_width = get_positive(a["target_half_width"], "analysis.target_half_width");
    if (a.contains("target_resolution"))
      c.analysis.target_resolution = static_cast<int>(get_integer(a["target_resolution"], "analysis.target_resolution"));
  }
  if (j.contains("out")) {
    if (!j["out"].is_string()) throw ConfigError("out: expected a path");
    c.out = j["out"].get<std::string>();
  }
  if (j.contains("seed")) {
    const std::int64_t s = get_integer(j["seed"], "seed");
    if (s < 0) throw ConfigError("seed: must be non-negative");
    c.seed = static_cast<std::uint64_t>(s);
  }
  if (j.contains("threads")) c.threads = static_cast<int>(get_count(j["threads"], "threads"));
  c.params.seed = c.seed;
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

/// --threads, then GRAPHFLOW_THREADS, then the config, then 1.
inline int resolve_threads(std::optional<int> flag, const char* env, std::optional<int> config) {
  if (flag) {
    if (*flag < 1) throw ConfigError("--threads must be at least 1");
    return *flag;
  }
  if (env != nullptr && *env != '\0') {
    try {
      std::size_t used = 0;
      const int k = std::stoi(env, &used);
      if (used != std::string(env).size() || k < 1) throw std::invalid_argument("bad");
      return k;
    } catch (const std::exception&) {
      throw ConfigError("GRAPHFLOW_THREADS must be a positive integer");
    }
  }
  return config.value_or(1);
}

// ---------------------------------------------------------------------------
// Shared plumbing

namespace detail {

inline std::filesystem::path prepare_out(const RunConfig& c) {
  const std::filesystem::path dir(c.out);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw std::runtime_error("cannot create output directory '" + c.out + "'");
  return dir;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  os << text;
  os.close();
  if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) { write_text(path, io::dump_json(j)); }

inline std::string snapshot_text(const GraphField& f) {
  std::ostringstream os;
  io::write_snapshot(os, f);
  return os.str();
}

inline Scenario scenario_of(const RunConfig& c) {
  ScenarioParams p = c.params;
  p.seed = c.seed;
  return make_scenario(c.scenario, p);
}

/// Boundary data (and initial state) from the scenario or an external snapshot.
inline GraphField initial_field(const RunConfig& c, const Scenario& sc) {
  const GridPtr grid = sc.grid();
  if (!c.psi_snapshot) return sc.sample(grid);
  std::ifstream in(*c.psi_snapshot);
  if (!in) throw std::runtime_error("cannot open snapshot '" + *c.psi_snapshot + "'");
  return io::read_snapshot(in, grid);
}

inline FlowConfig flow_config(const RunConfig& c, const GraphField& initial) {
  FlowConfig f{initial};
  f.safety = c.flow.safety;
  f.t_max = c.flow.t_max;
  f.residual_tol = c.flow.residual_tol;
  f.record_every = c.flow.record_every;
  f.slack = c.flow.slack;
  if (c.flow.max_steps) f.max_steps = *c.flow.max_steps;
  return f;
}

inline PicardOptions picard_options(const RunConfig& c) {
  PicardOptions o;
  o.outer_tol = c.picard.outer_tol;
  o.max_outer = c.picard.max_outer;
  o.inner.inner_tol = c.picard.inner_tol;
  o.inner.max_inner = c.picard.max_inner;
  return o;
}

inline double max_abs_diff(const GraphField& a, const GraphField& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.values().size(); ++k) d = std::max(d, std::abs(a.values()[k] - b.values()[k]));
  return d;
}

inline nlohmann::json violations_json(const FlowViolations& v) {
  return {{"area_monotone", v.area_monotone},
          {"omega_minprinciple", v.omega_minprinciple},
          {"boundary_bound", v.boundary_bound},
          {"interior_grad", v.interior_grad},
          {"evolution_inequality", v.evolution_inequality}};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands

/// Integrates the flow; writes monitors.csv, final.csv and summary.json, or
/// error.json on blow-up.
inline int cmd_run_flow(const RunConfig& c, std::ostream& log = std::cerr) {
  const auto dir = detail::prepare_out(c);
  const Scenario sc = detail::scenario_of(c);
  const GraphField u0 = detail::initial_field(c, sc);
  std::optional<FlowRun> attempt;
  try {
    attempt = run_flow(detail::flow_config(c, u0));
  } catch (const BlowUpError& e) {
    nlohmann::json err = {{"error", "blow_up"}, {"message", e.what()}};
    err["last_record"] = e.last_record ? to_json(*e.last_record) : nlohmann::json(nullptr);
    detail::write_json(dir / "error.json", err);
    log << "run-flow: " << e.what() << "\n";
    return kFailed;
  }
  const FlowRun& run = *attempt;
  std::ostringstream monitors;
  write_monitors_csv(monitors, run.records);
  detail::write_text(dir / "monitors.csv", monitors.str());
  detail::write_text(dir / "final.csv", detail::snapshot_text(run.final_state.field));
  const FlowMonitorRecord& last = run.records.back();
  const nlohmann::json summary = {
      {"scenario", c.scenario},
      {"converged", run.converged()},
      {"t_final", run.final_state.t},
      {"steps", run.final_state.step_index},
      {"final_residual_inf", run.final_residual_inf},
      {"final_max_grad", last.max_grad},
      {"final_max_A2", last.max_A2},
      {"delta_certified", run.delta_certified},
      {"small_data", {{"ok", run.small_data.ok}, {"lhs", run.small_data.lhs}, {"rhs", run.small_data.rhs}}},
      {"boundary_bound_asserted", run.boundary_bound_asserted},
      {"violations", detail::violations_json(run.violations)},
      {"evolution_nodes", {{"checked", run.violations.evolution_nodes_checked},
                           {"failed", run.violations.evolution_nodes_failed}}}};
  detail::write_json(dir / "summary.json", summary);
  log << "run-flow: " << (run.converged() ? "converged" : "timeout") << " at t = " << io::format_double(run.final_state.t)
      << "\n";
  return kOk;
}

/// Picard solve; writes picard_report.json and solution.csv, plus
/// comparison.json against the flow limit when requested.
inline int cmd_solve(const RunConfig& c, std::ostream& log = std::cerr) {
  const auto dir = detail::prepare_out(c);
  const Scenario sc = detail::scenario_of(c);
  const GraphField psi = detail::initial_field(c, sc);
  const PicardReport report = picard_solve(psi, detail::picard_options(c));
  detail::write_json(dir / "picard_report.json", to_json(report));
  detail::write_text(dir / "solution.csv", detail::snapshot_text(report.final));
  log << "solve: " << (report.converged ? "converged" : "not converged") << " after " << report.iterations
      << " linear solves\n";
  if (!report.converged) return kFailed;
  if (c.picard.compare_flow) {
    std::optional<FlowRun> attempt;
    try {
      attempt = run_flow(detail::flow_config(c, psi));
    } catch (const BlowUpError& e) {
      log << "solve: flow comparison blew up: " << e.what() << "\n";
      return kFailed;
    }
    const FlowRun& run = *attempt;
    const double diff = detail::max_abs_diff(report.final, run.final_state.field);
    const double tol = 10.0 * (c.picard.outer_tol + c.flow.residual_tol);
    const bool agree = run.converged() && diff <= tol;
    detail::write_json(dir / "comparison.json", {{"max_abs_diff", diff},
                                                 {"tolerance", tol},
                                                 {"flow_converged", run.converged()},
                                                 {"flow_t_final", run.final_state.t},
                                                 {"agree", agree}});
    if (!agree) return kFailed;
  }
  return kOk;
}

inline std::vector<int> default_resolutions(const std::string& scenario) {
  if (scenario == "scherk") return {33, 65, 129};
  if (scenario == "lo_cone") return {17, 33};
  if (scenario == "affine" || scenario == "zero") return {9, 17, 33};
  return {17, 33, 65};
}

inline double default_min_order(const std::string& scenario) { return scenario == "lo_cone" ? 1.5 : 1.8; }

/// Refinement study plus per-resolution invariant checks; writes
/// verify_report.json. Nonzero exit when an invariant fails.
inline int cmd_verify(const RunConfig& c, std::ostream& log = std::cerr) {
  const auto dir = detail::prepare_out(c);
  const Scenario sc = detail::scenario_of(c);
  if (!sc.flags.exact_minimal && !sc.flags.area_decreasing)
    throw ConfigError("verify: scenario '" + c.scenario + "' is neither exact_minimal nor area_decreasing");
  const std::vector<int> levels = c.verify.resolutions.empty() ? default_resolutions(c.scenario) : c.verify.resolutions;
  const double min_order = c.verify.min_order.value_or(default_min_order(c.scenario));
  nlohmann::json invariants = nlohmann::json::array();
  bool all = true;
  auto record = [&](nlohmann::json entry, bool passed) {
    entry["passed"] = passed;
    all = all && passed;
    invariants.push_back(std::move(entry));
  };

  if (sc.flags.exact_minimal) {
    for (ResidualKind kind : {ResidualKind::nondiv_inf, ResidualKind::div_l2}) {
      const auto rows = refinement_study(sc, levels, kind);
      nlohmann::json table = nlohmann::json::array();
      bool ok = true;
      for (const auto& r : rows) {
        nlohmann::json row = {{"resolution", r.resolution}, {"h", r.h}, {"norm", r.norm}, {"exact", r.exact}};
        row["nested_norm"] = r.nested_norm ? nlohmann::json(*r.nested_norm) : nlohmann::json(nullptr);
        row["order"] = r.order ? nlohmann::json(*r.order) : nlohmann::json(nullptr);
        table.push_back(row);
        if (r.order) ok = ok && *r.order >= min_order;
        else if (&r != &rows.front()) ok = ok && r.exact;
      }
      if (rows.front().exact) ok = ok && std::all_of(rows.begin(), rows.end(), [](const auto& r) { return r.exact; });
      record({{"name", std::string("residual_refinement_") + to_string(kind)}, {"min_order", min_order}, {"rows", table}},
             ok);
    }
  }

  for (int res : levels) {
    const GraphField f = sc.sample(make_grid(sc.domain_at(res)));
    const SingularSpectrum spec = singular_spectrum(f);
    const AreaElements elems = area_elements(f);
    record({{"name", "area_formula"}, {"resolution", res}, {"max_relative_gap", elems.max_relative_gap}},
           elems.max_relative_gap <= 1e-10);
    bool elliptic = true;
    std::pair<double, double> bounds{0.0, 0.0};
    try {
      bounds = ellipticity_bounds(induced_metric(f), spec);
    } catch (const std::logic_error&) {
      elliptic = false;
    }
    record({{"name", "ellipticity"},
            {"resolution", res},
            {"eta", spec.eta},
            {"min_eigenvalue", bounds.first},
            {"max_eigenvalue", bounds.second}},
           elliptic);
    if (sc.flags.area_decreasing)
      record({{"name", "area_decreasing"}, {"resolution", res}, {"ad_margin", spec.ad_margin}}, spec.ad_margin > 0.0);
    if (sc.m == 1)
      record({{"name", "codim1_area_decreasing"}, {"resolution", res}, {"ad_margin", spec.ad_margin}},
             spec.ad_margin > 1.0 - 1e-6);
  }

  const nlohmann::json report = {{"scenario", c.scenario}, {"passed", all}, {"invariants", invariants}};
  detail::write_json(dir / "verify_report.json", report);
  log << "verify " << c.scenario << ": " << (all ? "pass" : "FAIL") << "\n";
  return all ? kOk : kFailed;
}

/// Density ratios (density.csv) and blow-up/blow-down rescalings
/// (rescale_<k>.csv per lambda, homogeneity.csv).
inline int cmd_analyze(const RunConfig& c, std::ostream& log = std::cerr) {
  const auto dir = detail::prepare_out(c);
  const Scenario sc = detail::scenario_of(c);
  const GraphField u = detail::initial_field(c, sc);
  const DomainGrid& grid = u.grid();
  const int n = grid.dim(), m = u.codim();
  std::vector<double> x0 = c.analysis.x0;
  if (x0.empty())
    for (int i = 0; i < n; ++i) x0.push_back(0.5 * (grid.spec().box[i].lo + grid.spec().box[i].hi));
  if (static_cast<int>(x0.size()) != n) throw ConfigError("analysis.x0: needs n coordinates");
  std::vector<double> centre = c.analysis.center;
  if (centre.empty()) {
    const auto ux = interpolate(u, x0);
    if (!ux) throw ConfigError("analysis.x0: outside the active domain");
    centre = x0;
    for (int a = 0; a < m; ++a) centre.push_back((*ux)[a]);
  }
  double reach = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i)
    reach = std::min({reach, x0[i] - grid.spec().box[i].lo, grid.spec().box[i].hi - x0[i]});
  std::vector<double> radii = c.analysis.radii;
  if (radii.empty())
    for (int k = 1; k <= 4; ++k) radii.push_back(0.2 * k * reach);
  std::ostringstream density;
  write_density_csv(density, density_ratio(u, centre, radii));
  detail::write_text(dir / "density.csv", density.str());

  if (!c.analysis.lambdas.empty()) {
    const double lmax = std::max(1.0, *std::max_element(c.analysis.lambdas.begin(), c.analysis.lambdas.end()));
    const double half = c.analysis.target_half_width.value_or(0.5 * reach / lmax);
    GridSpec ts;
    ts.dim = n;
    ts.box.assign(static_cast<std::size_t>(n), Interval{-half, half});
    ts.resolution.assign(static_cast<std::size_t>(n), c.analysis.target_resolution);
    const GridPtr target = make_grid(ts);
    std::string homogeneity = "lambda,defect\n";
    for (std::size_t k = 0; k < c.analysis.lambdas.size(); ++k) {
      const double lambda = c.analysis.lambdas[k];
      const GraphField v = rescale(u, lambda, x0, target);
      detail::write_text(dir / ("rescale_" + std::to_string(k) + ".csv"), detail::snapshot_text(v));
      homogeneity += io::format_double(lambda) + "," + io::format_double(homogeneity_defect(u, lambda, x0, target)) + "\n";
    }
    detail::write_text(dir / "homogeneity.csv", homogeneity);
  }
  log << "analyze: wrote density for " << radii.size() << " radii\n";
  return kOk;
}

inline int cmd_list_scenarios(std::ostream& os) {
  for (const auto& s : scenario_catalogue()) os << s.name << "\t" << s.description << "\n";
  return kOk;
}

}  // namespace graphflow::cli
