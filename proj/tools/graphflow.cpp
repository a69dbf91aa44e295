// graphflow: command-line driver for flow runs, Picard solves, verification
// suites and density/rescaling analyses.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "graphflow/cli.hpp"

int main(int argc, char** argv) {
  using namespace graphflow;
  CLI::App app{"Mean curvature flow and minimal surface system solver for graphs"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::string> out;
  std::optional<int> threads;
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--out", out, "output directory (overrides the config)");
  app.add_option("--threads", threads, "worker threads (fallback: GRAPHFLOW_THREADS)");
  app.add_option("--seed", seed, "RNG seed (overrides the config)");

  auto* run_flow = app.add_subcommand("run-flow", "integrate the mean curvature flow");
  auto* solve = app.add_subcommand("solve", "Picard solve of the Dirichlet problem");
  auto* verify = app.add_subcommand("verify", "refinement study and invariant checks");
  auto* analyze = app.add_subcommand("analyze", "density ratios and rescalings");
  auto* list = app.add_subcommand("list-scenarios", "print the scenario catalogue");

  CLI11_PARSE(app, argc, argv);

  try {
    if (list->parsed()) return cli::cmd_list_scenarios(std::cout);
    cli::RunConfig cfg;
    if (!config_path.empty()) cfg = cli::load_config(config_path);
    if (out) cfg.out = *out;
    if (seed) cfg.seed = *seed;
    parallel::set_threads(cli::resolve_threads(threads, std::getenv("GRAPHFLOW_THREADS"), cfg.threads));
    if (run_flow->parsed()) return cli::cmd_run_flow(cfg);
    if (solve->parsed()) return cli::cmd_solve(cfg);
    if (verify->parsed()) return cli::cmd_verify(cfg);
    if (analyze->parsed()) return cli::cmd_analyze(cfg);
  } catch (const cli::ConfigError& e) {
    std::cerr << "graphflow: " << e.what() << "\n";
    return cli::kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "graphflow: " << e.what() << "\n";
    return cli::kUsage;
  } catch (const std::exception& e) {
    std::cerr << "graphflow: " << e.what() << "\n";
    return cli::kIoError;
  }
  return cli::kUsage;
}
