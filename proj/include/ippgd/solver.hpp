#pragma once

// Projected preconditioned gradient iterations with exact or inexact
// projections, the relaxed variant and the step-size theory.

#include "ippgd/multigrid.hpp"
#include "ippgd/operator.hpp"
#include "ippgd/problems.hpp"
#include "ippgd/projection.hpp"

#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace ippgd {

enum class Method { pgd, ippgd, ippgdv, ippgdv_tau };
std::string to_string(Method m);
/// Accepts PGD, IPPGD, IPPGDv, IPPGDv-tau (case-insensitive).
Method parse_method(const std::string& s);

enum class MetricPolicy { fixed, every_iteration, every_m };
std::string to_string(MetricPolicy p);
MetricPolicy parse_metric_policy(const std::string& s);

struct StopCriteria {
  /// Relative to the initial value of |u - phi(u)|_M / alpha, which is the
  /// projected gradient norm for a feasible start.
  double grad_tol = 1e-6;
  double step_tol = 1e-14;  // absolute, in the current metric norm
};

struct SolverConfig {
  Method method = Method::ippgd;
  /// Step size; 0 selects 1/L from the problem constants.
  double alpha = 0.0;
  double tau = 1.0;
  MetricPolicy metric_policy = MetricPolicy::fixed;
  int metric_every = 1;  // for every_m
  /// Cycle schedule for S~^{-1}; empty means exact projections.
  std::optional<MgSchedule> mg_schedule;
  int max_iters = 1000;
  StopCriteria stop;
  /// Scale S~^{-1} so that S <= S~ when the provider cannot guarantee it.
  bool calibrate = true;
  /// Record a spectral estimate of delta_k per iteration (costly).
  bool estimate_delta = false;
  /// Consecutive iterations in which both f (beyond 1e-12 relative slack)
  /// and the fixed-point residual grow before divergence is declared.
  int divergence_window = 10;

  /// Throws Error naming the offending field.
  void validate() const;
  /// Defaults for a method: PGD exact and fixed, IPPGD adaptively scheduled
  /// and fixed, IPPGDv and IPPGDv-tau adaptively scheduled with the metric
  /// rebuilt every iteration.
  static SolverConfig for_method(Method m);
};

/// Supplies S~^{-1} for the current metric.
class SchurProvider {
 public:
  virtual ~SchurProvider() = default;
  /// Called whenever the metric changes.
  virtual void set_metric(const LinearOperator& m) = 0;
  /// S~^{-1} with n_mg inner cycles; n_mg = 0 requests an exact inverse.
  virtual LinearOperator schur_inverse(int n_mg) = 0;
  /// True when S <= S~ holds by construction for this cycle count.
  virtual bool dominated(int n_mg) const = 0;
  /// Inner cycles applied so far; -1 when the provider has no cycle notion.
  virtual long long cycles() const { return -1; }
};

/// Exact S^{-1} = (B M^{-1} B^T)^{-1} via the exact projector (dense
/// Cholesky or CG). Every n_mg yields the exact inverse.
class ExactSchurProvider : public SchurProvider {
 public:
  explicit ExactSchurProvider(LinearOperator b, ExactProjectorOptions opts = {});
  void set_metric(const LinearOperator& m) override;
  LinearOperator schur_inverse(int n_mg) override;
  bool dominated(int) const override { return true; }

 private:
  LinearOperator b_;
  ExactProjectorOptions opts_;
  std::optional<ExactProjector> exact_;
};

/// A fixed S~^{-1} (for instance a prescribed inexactness level); the
/// metric may not change.
class FixedSchurProvider : public SchurProvider {
 public:
  FixedSchurProvider(LinearOperator s_tilde_inverse, bool dominated = true);
  void set_metric(const LinearOperator& m) override;
  LinearOperator schur_inverse(int) override { return s_tilde_inverse_; }
  bool dominated(int) const override { return dominated_; }

 private:
  LinearOperator s_tilde_inverse_;
  bool dominated_;
  bool metric_set_ = false;
};

/// W-cycle approximations of S^{-1} for diagonal metrics whose Schur
/// complement is a 5-point operator. n_mg = 0 cycles until the relative
/// residual drops below exact_tol.
class MultigridSchurProvider : public SchurProvider {
 public:
  using FieldBuilder = std::function<FaceField(const LinearOperator& m)>;
  MultigridSchurProvider(FieldBuilder builder, MgOptions opts = {}, double exact_tol = 1e-8, int max_cycles = 50);
  void set_metric(const LinearOperator& m) override;
  LinearOperator schur_inverse(int n_mg) override;
  /// Symmetric smoothing makes even cycle counts dominated: the error
  /// propagator (I - G S)^n is positive semidefinite.
  bool dominated(int n_mg) const override { return n_mg % 2 == 0; }
  long long cycles() const override { return *cycles_; }
  std::shared_ptr<const MgHierarchy> hierarchy() const { return hierarchy_; }

 private:
  FieldBuilder builder_;
  MgOptions opts_;
  double exact_tol_;
  int max_cycles_;
  std::shared_ptr<const MgHierarchy> hierarchy_;
  std::shared_ptr<long long> cycles_;
};

struct IterationRecord {
  int k = 0;
  double f = 0.0;
  double grad_norm_m = 0.0;     // |P~ M^{-1} grad f(u_k)|_{M_k}
  /// |u_k - phi(u_k)|_{M_k} / alpha: equals grad_norm_m at feasible iterates
  /// and also sees the constraint violation; drives the stopping test.
  /// Not part of the CSV.
  double fixed_point_res = 0.0;
  double constraint_res = 0.0;  // |B u_k| (shifted problems: |B x_k - g|)
  double e1 = std::numeric_limits<double>::quiet_NaN();
  double e2 = std::numeric_limits<double>::quiet_NaN();
  double e = std::numeric_limits<double>::quiet_NaN();
  double delta_est = std::numeric_limits<double>::quiet_NaN();
  int n_mg = 0;  // inner cycles spent producing u_k (0 for k = 0)
  double theta_est = std::numeric_limits<double>::quiet_NaN();
  double wall_ms = 0.0;  // cumulative
};

struct IterationTrace {
  std::vector<IterationRecord> records;
  /// One CSV line per record with columns
  /// k,f,grad_norm_M,constraint_res,E1,E2,E,delta_est,n_mg,theta_est,wall_ms.
  void write_csv(std::ostream& out, bool include_wall = true) const;
  void write_csv(const std::string& path, bool include_wall = true) const;
  int iterations() const { return records.empty() ? 0 : records.back().k; }
  /// Mean inner cycles per outer iteration.
  double average_cycles() const;
};

struct LyapunovValues {
  double e1 = 0.0;
  double e2 = 0.0;
  double e = 0.0;
};

/// Optional per-iterate diagnostics; they never alter the iterates.
struct RunHooks {
  std::function<LyapunovValues(const Vector& u)> lyapunov;
  std::function<double(const LinearOperator& m, const LinearOperator& s_tilde_inverse)> theta;
  /// Observes (k, metric set) whenever the metric or cycle count changes.
  std::function<void(int k, const MetricSet& metric)> metric_observer;
};

enum class RunStatus { converged, max_iters };

struct SolveResult {
  Vector u;
  IterationTrace trace;
  RunStatus status = RunStatus::max_iters;
  std::string stop_reason;
  double alpha = 0.0;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, IterationTrace trace) : Error(what), trace_(std::move(trace)) {}
  const IterationTrace& trace() const { return trace_; }

 private:
  IterationTrace trace_;
};

/// (1 - tau) u + tau phi; shared with the forward Euler flow integrator so
/// both produce identical bits.
Vector relaxed_update(const Vector& u, const Vector& phi_u, double tau);

/// u_{k+1} = (1 - tau) u_k + tau P~(u_k - alpha M^{-1} grad f(u_k)).
Vector step(const ProblemSpec& problem, const Vector& u, const InexactProjector& p, double alpha, double tau);

/// P~ for the metric last passed to provider.set_metric, with n_mg cycles;
/// scaled so that S <= S~ when `calibrate` is set and the provider cannot
/// guarantee it. Shared by run and the flow integrator.
InexactProjector make_projector(const ProblemSpec& problem, const LinearOperator& m, SchurProvider& provider,
                                int n_mg, bool calibrate);

/// Resolves cfg.alpha = 0 to 1/L of the reference metric.
double resolve_alpha(const ProblemSpec& problem, const SolverConfig& cfg);

SolveResult run(const ProblemSpec& problem, const Vector& u0, const SolverConfig& cfg, SchurProvider& provider,
                const RunHooks& hooks = {});

/// Constants entering the discrete Lyapunov theorem.
struct TheoryConstants {
  double mu = 1.0;
  double l = 1.0;
  double kappa = 1.0;
  double theta_m = 0.0;
  double k_s = 0.0;
  double k_theta = 0.0;
  /// |grad f(u*)|_{M*^{-1}}, mu and kappa in the anchor metric.
  double grad_star_norm = 0.0;
  double mu_star = 1.0;
  double kappa_star = 1.0;
  double tau = 1.0;
  double delta = 0.0;
  double delta_star = 0.0;

  static TheoryConstants from_mu_l(double mu, double l);
  /// (9 kappa* + 4) delta* + (1 + 2 K_S) delta.
  double p() const;
  double k1(double alpha) const;
  double k2(double alpha) const;
  double k3(double epsilon) const;
  double k4() const;
  double k5() const;
  /// mu*^{1/2} |grad f(u*)|_{M*^{-1}}.
  double c_star() const { return std::sqrt(mu_star) * grad_star_norm; }
  /// min(1 / (16 K1), 1e-2).
  double lambda(double alpha) const;
  /// min{alpha mu / (4 kappa), 1/32}.
  double omega_k(double alpha) const;

  /// Continuous-time counterparts: K1 = 2 (2 kappa^2 + alpha^2 L^2),
  /// lambda = min(1 / (4 K1), 1e-2), omega = min{alpha mu / (8 kappa), 3/2}.
  double k1_continuous(double alpha) const;
  double lambda_continuous(double alpha) const;
  double omega_continuous(double alpha) const;
};

struct TheoryBounds {
  double tau_max = 0.0;
  double tau_from_step = 0.0;   // 1 / (36 kappa^2 L alpha)
  double tau_from_delta = 0.0;  // 49 / (48 (1 + 1.5 (1 + theta_m) delta^2))
  double delta_max = 0.0;
  double delta_star_max = 0.0;
  double p_max = 0.0;
  double lambda = 0.0;
  double omega = 0.0;
};

/// Explicit admissible bounds; terms divided by K_theta C* are infinite
/// when that product vanishes.
TheoryBounds theory_bounds(const TheoryConstants& tc, double alpha);

struct ContinuousBounds {
  double delta_max = 0.0;       // min{sqrt(lambda) / (4 sqrt2 (1 + theta_m) kappa), 1 / (8 theta_m + 9)}
  double delta_star_max = 0.0;  // min{sqrt(lambda) / (8 sqrt6 K_theta (1 + theta_m) sqrt(kappa) C*), 1 / (4 kappa*)}
  double p_max = 0.0;           // min{sqrt(6 lambda), sqrt2 / kappa} / (8 (1 + theta_m) K_theta sqrt(kappa) C*)
  double lambda = 0.0;
  double omega = 0.0;
};

/// Admissible inexactness for the continuous flow.
ContinuousBounds continuous_bounds(const TheoryConstants& tc, double alpha);

/// Bound on (lambda alpha)^{-1} E2_0 for a feasible start:
/// 3 alpha mu* / (8 (9 kappa* + 4)^2 kappa* K_theta^2); infinite when
/// K_theta = 0.
double feasible_start_bound(const TheoryConstants& tc, double alpha);

/// Per-step factor of the product bound: 1 - min{kappa^{-4}/9, tau/2}/16.
double product_bound_factor(double kappa, double tau);

}  // namespace ippgd
