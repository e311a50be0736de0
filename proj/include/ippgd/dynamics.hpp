#pragma once

// Continuous projected flow, Lyapunov functions, strong-Lyapunov checks on
// iteration traces and the empirical audit of the metric assumptions.

#include "ippgd/problems.hpp"
#include "ippgd/projection.hpp"
#include "ippgd/report.hpp"
#include "ippgd/solver.hpp"

#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace ippgd {

/// Reference points of the Lyapunov functions: the minimizer u*, the fixed
/// point u*_phi of phi for the limit metric and the limit projector P~_{M*}.
struct LyapunovAnchors {
  Vector u_star;
  Vector u_phi_star;
  InexactProjector projector_star;

  const LinearOperator& m_star() const { return projector_star.metric().m; }
  /// Dense anchors of a quadratic: u* from the KKT system and u*_phi from
  /// the linear fixed-point system for `star` and alpha.
  static LyapunovAnchors for_quadratic(const QuadraticInstance& q, const MetricSet& star, double alpha);
};

struct LyapunovState {
  double lambda_weight = 0.0;
  double alpha = 0.0;
  double e1 = 0.0;       // D_f(u, u*_phi)
  double e2 = 0.0;       // 1/2 |(I - P~_{M*})(u - u*_phi)|^2_{M*}
  double e_total = 0.0;  // lambda alpha e1 + e2
};

/// E1 is anchored at u*_phi: the error inequalities behind the decrease
/// estimates differentiate D_f(u, u*_phi), and both anchors agree for exact
/// projections.
LyapunovState lyapunov_eval(const ProblemSpec& problem, const Vector& u, const LyapunovAnchors& anchors,
                            double lambda_weight, double alpha);

/// Run hook filling the E1, E2, E trace columns.
std::function<LyapunovValues(const Vector&)> lyapunov_hook(const ProblemSpec& problem, LyapunovAnchors anchors,
                                                           double lambda_weight, double alpha);

enum class Integrator { forward_euler, rk4 };
std::string to_string(Integrator i);
Integrator parse_integrator(const std::string& s);

struct FlowConfig {
  Integrator integrator = Integrator::rk4;
  double alpha = 0.0;  // 0 selects 1/L
  /// RK4 needs dt <= 0.1; forward Euler accepts dt in (0, 1], where dt plays
  /// the role of the relaxation tau.
  double dt = 1e-3;
  double t_end = 1.0;
  MetricPolicy metric_policy = MetricPolicy::fixed;
  /// Inner cycles for S~^{-1}; 0 requests the provider's exact inverse.
  int n_mg = 0;
  bool calibrate = true;
  /// Record every this many steps (the final state is always recorded).
  int record_every = 1;
  /// Keep every state (memory heavy; used for identity checks).
  bool keep_states = false;

  void validate() const;
};

struct FlowSample {
  double t = 0.0;
  double e1 = std::numeric_limits<double>::quiet_NaN();
  double e2 = std::numeric_limits<double>::quiet_NaN();
  double e = std::numeric_limits<double>::quiet_NaN();
  double constraint_res = 0.0;
};

struct FlowResult {
  std::vector<FlowSample> samples;
  std::vector<Vector> states;  // with keep_states: u at every step, u0 first
  Vector u;
  double alpha = 0.0;
  int steps = 0;

  /// Columns t,E1,E2,E,constraint_res.
  void write_csv(std::ostream& out) const;
  void write_csv(const std::string& path) const;
  /// Least-squares slope of -log E(t) over samples with E >= floor * E(0).
  double fitted_rate(double floor = 1e-10) const;
};

class FlowBlowUp : public Error {
 public:
  FlowBlowUp(const std::string& what, FlowResult partial) : Error(what), partial_(std::move(partial)) {}
  const FlowResult& partial() const { return partial_; }

 private:
  FlowResult partial_;
};

struct FlowLyapunov {
  LyapunovAnchors anchors;
  double lambda_weight = 0.0;
};

/// Integrates u' = -u + P~_{M(t)}(u - alpha M(t)^{-1} grad f(u)). A variable
/// metric is rebuilt from the current state at every right-hand-side
/// evaluation. Forward Euler with dt = tau performs exactly the arithmetic of
/// the relaxed solver step. Throws FlowBlowUp when |u| exceeds 1e12.
FlowResult integrate_flow(const ProblemSpec& problem, const Vector& u0, const FlowConfig& cfg,
                          SchurProvider& provider, const std::optional<FlowLyapunov>& lyapunov = std::nullopt);

struct SlpOptions {
  double tau = 1.0;
  double alpha = 0.0;
  double lambda_weight = 0.0;
  /// Absolute slack is slack_rel * E_0.
  double slack_rel = 1e-10;
  /// Check the feasible-start bound on E2_0 (only meaningful when u0 is in
  /// ker B).
  bool feasible_start = false;
};

struct SlpReport {
  CheckReport checks;
  int first_violation = -1;  // k of the first decrease violation
  double omega = 0.0;
  double product_factor = 0.0;
  bool passed() const { return checks.passed(); }
};

/// Verifies along a trace carrying E1, E2, E:
///   slp_decrease:   (E_{k+1} - E_k) / tau <= -omega E_k + slack
///   slp_product:    E_k <= prod_{l<=k} f_l (E1_0 + (lambda alpha)^{-1} E2_0)
///   slp_nonneg:     E1_k, E2_k >= 0 (up to rounding of E_0 size)
///   feasible_start: (lambda alpha)^{-1} E2_0 <= feasible_start_bound (optional)
SlpReport slp_check_discrete(const IterationTrace& trace, const TheoryConstants& tc, const SlpOptions& opts);

/// Continuous bound E(t) <= exp(-omega t) (E1(0) + (lambda alpha)^{-1} E2(0))
/// and monotonicity E(t + dt) <= E(t) along a flow.
CheckReport flow_decay_check(const FlowResult& flow, double omega, double lambda_weight, double alpha,
                             double slack_rel = 1e-12);

/// One retained iterate of a run for the audit.
struct MetricSnapshot {
  int k = 0;
  Vector u;
  MetricSet metric;
};

/// Run hooks retaining (u_k, metric set) every `every` iterations; chains to
/// an optional Lyapunov hook.
class SnapshotRecorder {
 public:
  explicit SnapshotRecorder(int every = 1) : every_(every) {}
  RunHooks hooks(std::function<LyapunovValues(const Vector&)> lyapunov = {});
  const std::vector<MetricSnapshot>& snapshots() const { return *snapshots_; }

 private:
  int every_;
  std::shared_ptr<std::vector<MetricSnapshot>> snapshots_ = std::make_shared<std::vector<MetricSnapshot>>();
};

struct AuditOptions {
  int ks_samples = 8;
  std::uint64_t seed = 21;
  double tol = 1e-8;
  /// Skip the Schur-side quantities (theta~, delta, K_S).
  bool metric_only = false;
};

struct AuditReport {
  std::vector<int> k;
  std::vector<double> theta;        // H1' metric deviation
  std::vector<double> theta_tilde;  // H1' Schur-inverse deviation
  std::vector<double> delta;        // H2' inexactness level
  std::vector<double> distance;     // |u_k - u*_phi|_{M*}
  double theta_m = 0.0;
  /// H4': max_k Theta_{k,m} / (sqrt(mu*) |u_k - u*_phi|_{M*}) over iterates
  /// away from u*_phi; an empirical estimate.
  double k_theta = 0.0;
  /// H3': sampled lower bound on K_S; never the true operator constant.
  double k_s_lower = 0.0;
  std::vector<std::string> not_assessed;
};

/// Empirical estimates of the metric assumptions along retained iterates,
/// relative to the anchors. mu_star is mu of f in M*.
AuditReport assumption_audit(const std::vector<MetricSnapshot>& snapshots, const LyapunovAnchors& anchors,
                             double mu_star, const AuditOptions& opts = {});

/// Theta = max{c2 - 1, 1/c1 - 1, 0} for lambda(Q^{-1} R) in [c1, c2], i.e.
/// the smallest Theta with R - Q <= Theta Q and Q - R <= Theta R.
double loewner_deviation(const LinearOperator& q, const LinearOperator& r, double tol = 1e-8);

}  // namespace ippgd
