// ippgd: solve, bench, check and flow commands.

#include "ippgd/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Inexact projected preconditioned gradient descent"};
  app.require_subcommand(1);

  std::string solve_cfg, bench_cfg, flow_cfg, scope = "all";
  auto* solve = app.add_subcommand("solve", "Run one solve from a config file; writes the trace CSV");
  solve->add_option("config", solve_cfg, "Config file")->required()->check(CLI::ExistingFile);
  auto* bench = app.add_subcommand("bench", "Run a method x grid benchmark matrix (IPPGD_THREADS caps workers)");
  bench->add_option("config", bench_cfg, "Config file")->required()->check(CLI::ExistingFile);
  auto* check = app.add_subcommand("check", "Run the seeded property suites");
  check->add_option("--scope", scope, "projection, fixed-point, lyapunov, pde or all")
      ->check(CLI::IsMember({"projection", "fixed-point", "lyapunov", "pde", "all"}));
  auto* flow = app.add_subcommand("flow", "Integrate the continuous flow; writes (t, E1, E2, E, constraint_res)");
  flow->add_option("config", flow_cfg, "Config file")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : ippgd::exit_error;
  }

  if (*solve) return ippgd::cmd_solve(solve_cfg, std::cout, std::cerr);
  if (*bench) return ippgd::cmd_bench(bench_cfg, std::cout, std::cerr);
  if (*check) return ippgd::cmd_check(scope, std::cout, std::cerr);
  return ippgd::cmd_flow(flow_cfg, std::cout, std::cerr);
}
