#pragma once

// Objective abstraction, a dense quadratic testbed and fixed-point tools.

#include "ippgd/operator.hpp"
#include "ippgd/projection.hpp"
#include "ippgd/report.hpp"

#include <functional>
#include <optional>
#include <string>

namespace ippgd {

/// min f(u) subject to B u = 0. Problems with an affine constraint B x = g
/// are shifted beforehand: x = shift + u with B shift = g, so the solver only
/// sees the homogeneous form.
struct ProblemSpec {
  std::string name;
  Index dim = 0;
  std::function<double(const Vector&)> eval_f;
  std::function<Vector(const Vector&)> eval_grad;
  LinearOperator constraint_b;
  /// Particular solution of the original affine constraint (empty if g = 0).
  Vector shift;
  /// Variable metric M(u); evaluated at the shifted variable u.
  std::function<LinearOperator(const Vector&)> metric_builder;
  /// Fixed metric used by the fixed-metric methods.
  LinearOperator reference_metric;
  /// (mu, L) of f in the reference metric, when known.
  std::optional<std::pair<double, double>> mu_l;
  /// Exact Hessian for quadratic objectives.
  std::optional<LinearOperator> hessian;

  void validate() const;
  Vector physical(const Vector& u) const { return shift.size() == 0 ? u : Vector(shift + u); }
};

/// D_f(u, v) = f(u) - f(v) - <grad f(v), u - v>.
double bregman(const ProblemSpec& problem, const Vector& u, const Vector& v);

/// Central differences of eval_f against eval_grad along random directions
/// at `points` random points; reports the relative mismatch.
CheckReport gradient_consistency(const ProblemSpec& problem, int points, std::uint64_t seed = 3, double tol = 1e-6,
                                 double point_scale = 1.0);

/// f(u) = 1/2 u^T A u + b^T u with constraint rows `bc`.
struct QuadraticInstance {
  DenseMatrix a;
  Vector b;
  DenseMatrix bc;
  std::uint64_t seed = 0;
  double kappa_target = 1.0;

  Index dim() const { return a.rows(); }
  double f(const Vector& u) const { return 0.5 * u.dot(a * u) + b.dot(u); }
  Vector grad(const Vector& u) const { return a * u + b; }
};

/// Eigenvalues log-spaced in [1, kappa] conjugated by a random orthogonal
/// matrix; Gaussian constraint rows and linear term. Deterministic in seed.
QuadraticInstance gen_quadratic(Index dim, Index constraint_rows, double kappa_target, std::uint64_t seed);

/// Problem view of a quadratic instance in the fixed metric `m` (identity
/// when empty).
ProblemSpec quadratic_problem(const QuadraticInstance& q, const DenseMatrix& m = DenseMatrix());

/// Minimizer from the dense KKT system [A B^T; B 0][u; p] = [-b; 0].
Vector kkt_oracle(const QuadraticInstance& q);

/// Matrix Market files <prefix>_A.mtx and <prefix>_B.mtx plus a text file
/// <prefix>_b.txt whose first lines are "# seed <n>" and "# kappa <x>".
void save_instance(const QuadraticInstance& q, const std::string& prefix);
QuadraticInstance load_instance(const std::string& prefix);

/// phi(u) = P~(u - alpha M^{-1} grad f(u)) for the metric set.
Vector phi(const ProblemSpec& problem, const InexactProjector& p, double alpha, const Vector& u);

struct FixedPointOptions {
  /// Convexity / Lipschitz constants in the metric M; derived from the
  /// problem Hessian when not given.
  std::optional<double> mu;
  std::optional<double> l;
  std::optional<Vector> u0;
  /// Overrides the default iteration cap.
  int max_iterations = 0;
};

struct FixedPointResult {
  Vector u_phi_star;
  int iterations = 0;
  double contraction_ratio_observed = 0.0;
  double contraction_bound = 0.0;  // max{|1 - alpha L|, |1 - alpha mu|}
  double final_step = 0.0;
  std::string warning;
};

/// Picard iteration until |u_{n+1} - u_n|_M <= tol. The cap is
/// 10 log(d0/tol) / log(1/ratio) + 10 iterations, d0 the first step length.
FixedPointResult fixed_point_solve(const ProblemSpec& problem, const MetricSet& metric, double alpha, double tol,
                                   const FixedPointOptions& opts = {});

/// Constants (mu, L) of a quadratic in the metric M.
LoewnerInterval quadratic_constants(const QuadraticInstance& q, const LinearOperator& m);

/// Fixed point of phi for a quadratic, from the dense linear system
/// (I - P~ (I - alpha M^{-1} A)) u = -alpha P~ M^{-1} b.
Vector quadratic_fixed_point(const QuadraticInstance& q, const MetricSet& metric, double alpha);

struct UDiffReport {
  CheckReport checks;
  double mu = 0.0, l = 0.0, kappa = 0.0, delta_star = 0.0, alpha = 0.0;
  double distance = 0.0;  // |u_phi* - u*|_M
  /// rhs / lhs for each inequality (>= 1 means satisfied).
  double slack_proj_residual = 0.0, slack_distance = 0.0, slack_gradient_gap = 0.0, slack_gradient_size = 0.0;
  bool preconditions_met = false;
};

/// Checks, with dense quantities,
///   proj_residual:  |(I - P~)(u* - u_phi*)|_M <= 2 alpha delta* |grad f(u*)|_{M^-1}
///   distance:       |u_phi* - u*|_M <= 3 sqrt(kappa) mu^{-1/2} delta* sqrt(alpha) |grad f(u*)|_{M^-1}
///   gradient_gap:   |grad f(u_phi*) - grad f(u*)|_{M^-1} <= 3 sqrt(L) kappa delta* sqrt(alpha) |grad f(u*)|_{M^-1}
///   gradient_size:  |grad f(u_phi*)|_{M^-1} <= 2 |grad f(u*)|_{M^-1}
/// The last three need alpha <= 1/L and delta* <= 1/(4 kappa); they are
/// skipped (and preconditions_met is false) otherwise.
UDiffReport u_diff_bound_check(const QuadraticInstance& q, const MetricSet& metric, double alpha, double tol = 1e-10);

}  // namespace ippgd
