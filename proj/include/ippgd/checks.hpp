#pragma once

// Seeded property suites shared by `ippgd check` and the acceptance binary.
// Every suite reports named inequalities; measured quantities that have no
// pass/fail meaning of their own go to `notes`.

#include "ippgd/report.hpp"

#include <cstdint>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace ippgd {

struct SuiteResult {
  explicit SuiteResult(std::string n = {}) : name(std::move(n)) {}
  std::string name;
  CheckReport report;
  std::vector<std::string> notes;
  double seconds = 0.0;
  bool passed() const { return report.passed(); }
};

/// Inexact projection inequalities and identities plus the two-metric
/// bounds on random instances (dims <= 50).
SuiteResult projection_suite(int instances = 100, std::uint64_t seed = 1);
/// The SPD perturbation lemma on random pairs (dims <= 20) with a
/// dense-inverse oracle.
SuiteResult spd_lemma_suite(int pairs = 100, std::uint64_t seed = 1);
/// estimate_delta against a dense generalized eigenvalue oracle (dims <= 200).
SuiteResult delta_estimator_suite(int instances = 50, std::uint64_t seed = 1);
/// Picard contraction of phi on quadratics with kappa in {2, 10, 100}.
SuiteResult contraction_suite(int instances = 20, std::uint64_t seed = 1);
/// Equilibrium error bounds on a (kappa, delta*, alpha) grid of 27 points.
SuiteResult equilibrium_suite(std::uint64_t seed = 1);
/// Discrete strong Lyapunov property and product bound on theory-compliant
/// runs, plus a negative control that must be flagged.
SuiteResult discrete_lyapunov_suite(int iterations = 500, std::uint64_t seed = 1);
/// RK4 flows on quadratics: exponential bound, fitted rate >= 0.9 omega and
/// monotonicity of an inexact flow.
SuiteResult continuous_lyapunov_suite(double dt = 1e-3, double t_end = 20.0, std::uint64_t seed = 1);
/// Bitwise recovery identities: IPPGDv-tau with tau = 1 against IPPGDv, and
/// forward Euler with dt = tau against the relaxed solver.
SuiteResult recovery_suite(std::uint64_t seed = 1);
/// nu~^{-1} round trip on log-spaced s for both benchmark coefficients.
SuiteResult nu_roundtrip_suite();
/// Smallest W-cycle count reaching a 1e-8 relative Schur residual, per grid.
SuiteResult mg_threshold_suite(const std::vector<long>& grids = {32, 64, 128});
/// Flux error slope of the manufactured solution over the given grids.
SuiteResult manufactured_suite(const std::vector<long>& grids = {32, 64, 128});
/// PDE energy gradient against finite differences on a small grid.
SuiteResult pde_gradient_suite();

enum class CheckScope { projection, fixed_point, lyapunov, pde, all };
std::string to_string(CheckScope s);
/// Accepts projection, fixed-point, lyapunov, pde, all.
CheckScope parse_check_scope(const std::string& s);

/// Runs the suites of a scope, printing one block per suite to `out`.
std::vector<SuiteResult> run_check_scope(CheckScope scope, std::ostream& out);

/// Prints per-inequality max violations and notes.
void print_suite(const SuiteResult& r, std::ostream& out);

}  // namespace ippgd
