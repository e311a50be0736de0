#pragma once

// Benchmark plumbing: PDE run setup, key = value configuration files and the
// method x grid benchmark matrix.

#include "ippgd/pde.hpp"
#include "ippgd/solver.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace ippgd {

/// Manufactured PDE problem on an n x n grid in shifted form.
struct PdeSetup {
  PdeProblem problem;
  ProblemSpec spec;
};
PdeSetup pde_setup(Index n, const NuCoefficient& nu);

/// W-cycle Schur provider for diagonal metrics on the grid.
std::unique_ptr<MultigridSchurProvider> pde_schur_provider(const MixedGrid& grid, MgOptions opts = {});

/// Method defaults for the PDE benchmark. Fixed-metric methods use the
/// analytic alpha = nu1 / 2; IPPGDv uses alpha = 1 / L_v and IPPGDv-tau
/// alpha = 2 / ((L_v + 1) tau), with L_v the variable-metric Lipschitz ratio
/// (the metric makes mu_v = 1).
SolverConfig pde_method_config(Method m, const NuCoefficient& nu, double tau = 1.0);

enum class ProblemKind { quadratic, pde };

/// Which problem a run uses. Quadratics have the identity metric, so the
/// variable-metric methods reduce to IPPGD with relaxation; their
/// inexactness is the prescribed level `delta` instead of cycles.
struct ProblemSelector {
  ProblemKind kind = ProblemKind::quadratic;
  Index dim = 20;
  Index constraints = 5;
  double kappa = 10.0;
  std::uint64_t seed = 1;
  std::string instance;  // load_instance prefix; overrides the generator
  double delta = 0.0;
  Index n = 32;
  NuCoefficient nu;

  std::string label() const;
};

/// A ready-to-run problem with a Schur provider matching the method.
struct BuiltProblem {
  ProblemSpec spec;
  Vector u0;
  std::unique_ptr<SchurProvider> provider;
  std::optional<QuadraticInstance> quadratic;
  std::optional<MetricSet> quadratic_metric;  // prescribed-inexactness metric
  std::optional<PdeProblem> pde;
  std::string label;
};

/// Method defaults for the selected problem (see pde_method_config).
SolverConfig method_defaults(const ProblemSelector& sel, Method m, double tau = 1.0);
BuiltProblem build_problem(const ProblemSelector& sel, Method m);

struct BenchConfig {
  ProblemSelector problem;
  /// PDE grid sizes n (n x n cells) or quadratic dimensions.
  std::vector<Index> grids;
  std::vector<Method> methods;
  std::vector<SolverConfig> solver;  // one per method
  std::string output_dir;            // empty: no files
  std::uint64_t seed = 1;

  void validate() const;
};

struct BenchRow {
  Method method = Method::pgd;
  Index grid = 0;
  std::string label;
  Index dofs = 0;
  int iterations = 0;
  double avg_cycles = 0.0;
  long long total_cycles = 0;
  double grad_norm = 0.0;
  double constraint_res = 0.0;
  double wall_s = 0.0;
  /// converged, max_iters or FAILED.
  std::string status;
  std::string error;
  std::optional<double> flux_error;

  bool ok() const { return status == "converged"; }
};

struct BenchReport {
  std::vector<BenchRow> rows;  // grid-major, methods in config order

  const BenchRow* find(Method m, Index grid) const;
  bool all_converged() const;
  /// method,grid,dofs,iterations,avg_wcycles,total_wcycles,grad_norm_M,
  /// constraint_res,status[,wall_s]
  void write_csv(std::ostream& out, bool include_wall = true) const;
  void write_csv(const std::string& path, bool include_wall = true) const;
  /// Methods as rows, grids as columns: iterations and average W-cycles.
  void print_table(std::ostream& out) const;
};

/// Parallel worker count from IPPGD_THREADS (default 1).
int bench_threads_from_env();

/// Runs the method x grid matrix on up to `threads` workers. A failing cell
/// becomes a FAILED row; the others still run.
BenchReport run_bench(const BenchConfig& cfg, int threads = 1);

}  // namespace ippgd
