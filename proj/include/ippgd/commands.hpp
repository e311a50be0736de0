#pragma once

// Command implementations behind the ippgd executable, and the mapping from
// configuration files to problems, solver settings and flows.
//
// Exit codes: 0 success (converged), 1 error, 2 iteration limit or failed
// bench rows, 3 failed property checks.

#include "ippgd/bench.hpp"
#include "ippgd/checks.hpp"
#include "ippgd/config.hpp"
#include "ippgd/dynamics.hpp"

#include <ostream>
#include <string>

namespace ippgd {

enum ExitCode { exit_ok = 0, exit_error = 1, exit_not_converged = 2, exit_check_failed = 3 };

/// [problem]: type = quadratic | pde; quadratic keys dim, constraints,
/// kappa, seed, delta, instance; pde keys n, nu = a0, a1, a2.
ProblemSelector parse_problem(const Config& c);

/// Applies the solver keys of `section` on top of `cfg`: alpha, tau,
/// metric_policy, metric_every, max_iters, grad_tol, step_tol, calibrate,
/// estimate_delta, divergence_window, schedule = none | ramp | adaptive,
/// n_start, n_max, ramp_fraction, increment, forcing.
void apply_solver_keys(const Config& c, const std::string& section, SolverConfig& cfg);

/// Method defaults, then [solver], then [method.<name>] overrides.
SolverConfig solver_config_for(const Config& c, const ProblemSelector& sel, Method m);

struct SolveJob {
  ProblemSelector problem;
  SolverConfig solver;
  std::string trace_path;  // empty: no trace file
  bool wall_time = true;
};
SolveJob parse_solve_job(const Config& c);

/// [bench]: methods, grids (or dims), seed, output_dir.
BenchConfig parse_bench_config(const Config& c);

struct FlowJob {
  ProblemSelector problem;
  FlowConfig flow;
  /// Lyapunov weight; 0 selects the continuous-theory lambda.
  double lambda = 0.0;
  std::string trajectory_path;
  std::uint64_t start_seed = 7;
};
/// [flow]: integrator, dt, t_end, alpha, record_every, n_mg, lambda,
/// start_seed; [output] trajectory.
FlowJob parse_flow_job(const Config& c);

int cmd_solve(const std::string& config_path, std::ostream& out, std::ostream& err);
int cmd_bench(const std::string& config_path, std::ostream& out, std::ostream& err);
int cmd_check(const std::string& scope, std::ostream& out, std::ostream& err);
int cmd_flow(const std::string& config_path, std::ostream& out, std::ostream& err);

}  // namespace ippgd
