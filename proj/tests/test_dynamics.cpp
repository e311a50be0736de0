#include "ippgd/bench.hpp"
#include "ippgd/dynamics.hpp"
#include "testing.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace ippgd;
using ippgd::testing::rel_diff;

namespace {

// Identity metric, eigenvalues of A in [1, kappa]: mu = 1, L = kappa exactly.
struct QuadSetup {
  QuadraticInstance q;
  DenseMatrix m;
  ProblemSpec spec;
  TheoryConstants tc;
};

QuadSetup make_setup(double kappa, std::uint64_t seed, Index dim = 12, Index rows = 4) {
  QuadSetup s;
  s.q = gen_quadratic(dim, rows, kappa, seed);
  s.m = DenseMatrix::Identity(dim, dim);
  s.spec = quadratic_problem(s.q, s.m);
  s.tc = TheoryConstants::from_mu_l(s.spec.mu_l->first, s.spec.mu_l->second);
  return s;
}

MetricSet metric_with_delta(const QuadSetup& s, double delta, std::uint64_t seed = 3) {
  return prescribed_inexactness_metric(s.m, s.q.bc, delta, seed);
}

}  // namespace

TEST(Lyapunov, VanishesAtExactMinimizer) {
  const QuadSetup s = make_setup(4.0, 1);
  const double alpha = 1.0 / s.tc.l;
  const auto anchors = LyapunovAnchors::for_quadratic(s.q, metric_with_delta(s, 0.0), alpha);
  EXPECT_LE(rel_diff(anchors.u_star, anchors.u_phi_star), 1e-10);
  const LyapunovState st = lyapunov_eval(s.spec, anchors.u_star, anchors, 0.01, alpha);
  EXPECT_LE(std::abs(st.e_total), 1e-16 * (1.0 + std::abs(s.q.f(anchors.u_star))));
}

TEST(Lyapunov, ExactProjectionKillsE2OnKernel) {
  const QuadSetup s = make_setup(4.0, 2);
  const double alpha = 1.0 / s.tc.l;
  const auto anchors = LyapunovAnchors::for_quadratic(s.q, metric_with_delta(s, 0.0), alpha);
  const ExactProjector p(LinearOperator::dense_spd(s.m), LinearOperator::dense(s.q.bc));
  const Vector u = p.project(random_vector(12, 5));
  const LyapunovState st = lyapunov_eval(s.spec, u, anchors, 0.01, alpha);
  EXPECT_LE(st.e2, 1e-24);
  EXPECT_GT(st.e1, 0.0);
}

TEST(Lyapunov, QuadraticBregmanIdentityAndTotal) {
  const QuadSetup s = make_setup(10.0, 3);
  const double alpha = 1.0 / s.tc.l;
  const auto anchors = LyapunovAnchors::for_quadratic(s.q, metric_with_delta(s, 0.2), alpha);
  const Vector u = random_vector(12, 6);
  const LyapunovState st = lyapunov_eval(s.spec, u, anchors, 0.003, alpha);
  const Vector d = u - anchors.u_phi_star;
  EXPECT_NEAR(st.e1, 0.5 * d.dot(s.q.a * d), 1e-12 * st.e1);
  EXPECT_EQ(st.e_total, 0.003 * alpha * st.e1 + st.e2);
  EXPECT_GE(st.e2, 0.0);
  EXPECT_THROW(lyapunov_eval(s.spec, Vector::Zero(5), anchors, 0.003, alpha), DimensionError);
}

TEST(Flow, Validation) {
  FlowConfig c;
  c.dt = 0.2;
  EXPECT_THROW(c.validate(), Error);
  c.integrator = Integrator::forward_euler;
  EXPECT_NO_THROW(c.validate());
  c.dt = 1.5;
  EXPECT_THROW(c.validate(), Error);
  c.dt = 1.0;
  c.t_end = 0.0;
  EXPECT_THROW(c.validate(), Error);
  EXPECT_EQ(parse_integrator("RK4"), Integrator::rk4);
  EXPECT_EQ(parse_integrator(to_string(Integrator::forward_euler)), Integrator::forward_euler);
}

namespace {

// Iterates u_k of a solver run, captured through the Lyapunov hook.
std::vector<Vector> run_states(const ProblemSpec& spec, const Vector& u0, const SolverConfig& cfg,
                               SchurProvider& provider) {
  std::vector<Vector> states;
  RunHooks hooks;
  hooks.lyapunov = [&states](const Vector& u) {
    states.push_back(u);
    return LyapunovValues{};
  };
  run(spec, u0, cfg, provider, hooks);
  return states;
}

}  // namespace

TEST(Flow, EulerReproducesSolverBitwise) {
  const QuadSetup s = make_setup(10.0, 4);
  const MetricSet ms = metric_with_delta(s, 0.3);
  for (double tau : {1.0, 0.5}) {
    SolverConfig cfg = SolverConfig::for_method(Method::pgd);
    cfg.tau = tau;
    cfg.calibrate = false;
    cfg.max_iters = 25;
    cfg.stop.grad_tol = 1e-300;
    FixedSchurProvider p1(ms.schur_tilde_inverse);
    const std::vector<Vector> iterates = run_states(s.spec, random_vector(12, 8), cfg, p1);
    FlowConfig fc;
    fc.integrator = Integrator::forward_euler;
    fc.dt = tau;
    fc.t_end = 25 * tau;
    fc.calibrate = false;
    fc.keep_states = true;
    FixedSchurProvider p2(ms.schur_tilde_inverse);
    const FlowResult flow = integrate_flow(s.spec, random_vector(12, 8), fc, p2);
    ASSERT_EQ(flow.states.size(), iterates.size());
    for (std::size_t k = 0; k < iterates.size(); ++k) EXPECT_TRUE(flow.states[k] == iterates[k]) << "k = " << k;
  }
}

TEST(Flow, EulerReproducesVariableMetricSolverBitwise) {
  const PdeSetup pde = pde_setup(16, NuCoefficient{1.0, 6.0, 5.0});
  SolverConfig cfg = pde_method_config(Method::ippgdv, pde.problem.nu);
  MgSchedule fixed3;
  fixed3.n_start = fixed3.n_max = 3;
  cfg.mg_schedule = fixed3;
  cfg.max_iters = 8;
  cfg.stop.grad_tol = 1e-300;
  auto p1 = pde_schur_provider(pde.problem.grid);
  const std::vector<Vector> iterates = run_states(pde.spec, Vector::Zero(pde.spec.dim), cfg, *p1);
  FlowConfig fc;
  fc.integrator = Integrator::forward_euler;
  fc.dt = 1.0;
  fc.t_end = 8.0;
  fc.alpha = cfg.alpha;
  fc.metric_policy = MetricPolicy::every_iteration;
  fc.n_mg = 3;
  fc.keep_states = true;
  auto p2 = pde_schur_provider(pde.problem.grid);
  const FlowResult flow = integrate_flow(pde.spec, Vector::Zero(pde.spec.dim), fc, *p2);
  ASSERT_EQ(flow.states.size(), iterates.size());
  for (std::size_t k = 0; k < iterates.size(); ++k) EXPECT_TRUE(flow.states[k] == iterates[k]) << "k = " << k;
}

TEST(Flow, ContinuousExponentialDecay) {
  for (double kappa : {2.0, 10.0}) {
    const QuadSetup s = make_setup(kappa, 11);
    const double alpha = 1.0 / s.tc.l;
    const ContinuousBounds cb = continuous_bounds(s.tc, alpha);
    const auto anchors = LyapunovAnchors::for_quadratic(s.q, metric_with_delta(s, 0.0), alpha);
    FlowConfig fc;
    fc.dt = 1e-3;
    fc.t_end = 20.0;
    fc.record_every = 10;
    ExactSchurProvider provider(s.spec.constraint_b);
    const FlowResult flow =
        integrate_flow(s.spec, random_vector(12, 12), fc, provider, FlowLyapunov{anchors, cb.lambda});
    const CheckReport rep = flow_decay_check(flow, cb.omega, cb.lambda, alpha);
    EXPECT_TRUE(rep.passed()) << "kappa " << kappa << " worst " << rep.worst();
    EXPECT_GE(flow.fitted_rate(), 0.9 * cb.omega) << "kappa " << kappa;
  }
}

TEST(Flow, InexactFlowIsMonotone) {
  const QuadSetup s = make_setup(4.0, 13);
  const double alpha = 1.0 / s.tc.l;
  const MetricSet ms = metric_with_delta(s, 0.3);
  const auto anchors = LyapunovAnchors::for_quadratic(s.q, ms, alpha);
  const ContinuousBounds cb = continuous_bounds(s.tc, alpha);
  FlowConfig fc;
  fc.dt = 0.05;
  fc.t_end = 150.0;
  fc.calibrate = false;
  FixedSchurProvider provider(ms.schur_tilde_inverse);
  const FlowResult flow =
      integrate_flow(s.spec, random_vector(12, 14), fc, provider, FlowLyapunov{anchors, cb.lambda});
  const CheckReport rep = flow_decay_check(flow, cb.omega, cb.lambda, alpha);
  EXPECT_EQ(rep.checks[1].name, "flow_monotone");
  EXPECT_EQ(rep.checks[1].max_violation, 0.0);
  // The flow settles at u*_phi, not at u*.
  EXPECT_LE(rel_diff(flow.u, anchors.u_phi_star), 1e-6);
  EXPECT_GT(rel_diff(anchors.u_phi_star, anchors.u_star), 1e-6);
}

TEST(Flow, BlowUpIsReported) {
  QuadraticInstance q;
  q.a = -DenseMatrix::Identity(4, 4);
  q.b = Vector::Ones(4);
  q.bc = DenseMatrix::Zero(1, 4);
  q.bc(0, 0) = 1.0;
  ProblemSpec spec;
  spec.name = "concave";
  spec.dim = 4;
  spec.eval_f = [q](const Vector& u) { return q.f(u); };
  spec.eval_grad = [q](const Vector& u) { return q.grad(u); };
  spec.constraint_b = LinearOperator::dense(q.bc);
  spec.reference_metric = LinearOperator::identity(4);
  FlowConfig fc;
  fc.alpha = 1.0;
  fc.dt = 0.1;
  fc.t_end = 100.0;
  ExactSchurProvider provider(spec.constraint_b);
  try {
    integrate_flow(spec, Vector::Constant(4, 2.0), fc, provider);
    FAIL() << "expected blow-up";
  } catch (const FlowBlowUp& e) {
    EXPECT_TRUE(all_finite(e.partial().u));
    EXPECT_LE(e.partial().u.norm(), 1e12);
    EXPECT_GT(e.partial().steps, 10);
  }
}

TEST(Flow, FittedRateOfExactExponential) {
  FlowResult f;
  for (int i = 0; i <= 100; ++i) {
    FlowSample s;
    s.t = 0.1 * i;
    s.e = 3.0 * std::exp(-0.7 * s.t);
    f.samples.push_back(s);
  }
  EXPECT_NEAR(f.fitted_rate(), 0.7, 1e-12);
  std::ostringstream os;
  f.write_csv(os);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "t,E1,E2,E,constraint_res");
}

namespace {

struct Compliant {
  double alpha, tau, lambda, delta;
  TheoryConstants tc;
};

// Largest step, relaxation and inexactness admitted by the discrete theorem
// for a fixed metric (theta = 0, K_theta = 0, delta* = delta).
Compliant compliant(const TheoryConstants& base) {
  Compliant c{};
  c.tc = base;
  c.alpha = 1.0 / base.l;
  c.tc.tau = 1.0;
  c.tau = theory_bounds(c.tc, c.alpha).tau_max;
  c.tc.tau = c.tau;
  const TheoryBounds b = theory_bounds(c.tc, c.alpha);
  c.lambda = b.lambda;
  c.delta = std::min(b.delta_max, b.delta_star_max);
  c.tc.delta = c.tc.delta_star = c.delta;
  return c;
}

IterationTrace lyapunov_run(const QuadSetup& s, const MetricSet& ms, double alpha, double tau, double lambda,
                            const Vector& u0, int iters) {
  SolverConfig cfg = SolverConfig::for_method(Method::pgd);
  cfg.alpha = alpha;
  cfg.tau = tau;
  cfg.calibrate = false;
  cfg.max_iters = iters;
  cfg.stop.grad_tol = 1e-300;
  cfg.stop.step_tol = 1e-300;
  RunHooks hooks;
  hooks.lyapunov = lyapunov_hook(s.spec, LyapunovAnchors::for_quadratic(s.q, ms, alpha), lambda, alpha);
  FixedSchurProvider provider(ms.schur_tilde_inverse);
  return run(s.spec, u0, cfg, provider, hooks).trace;
}

}  // namespace

TEST(DiscreteLyapunov, ExactFeasibleStartKeepsE2Zero) {
  const QuadSetup s = make_setup(2.0, 21);
  const Compliant c = compliant(s.tc);
  const MetricSet ms = metric_with_delta(s, 0.0);
  const ExactProjector p(LinearOperator::dense_spd(s.m), LinearOperator::dense(s.q.bc));
  const IterationTrace t = lyapunov_run(s, ms, c.alpha, c.tau, c.lambda, p.project(random_vector(12, 2)), 500);
  for (const auto& r : t.records) EXPECT_LE(r.e2, 1e-20 * t.records[0].e1);
  SlpOptions o{c.tau, c.alpha, c.lambda};
  const SlpReport rep = slp_check_discrete(t, c.tc, o);
  EXPECT_TRUE(rep.passed()) << rep.checks.worst();
}

TEST(DiscreteLyapunov, TheoryCompliantInexactRuns) {
  for (double kappa : {2.0, 5.0}) {
    const QuadSetup s = make_setup(kappa, 22);
    const Compliant c = compliant(s.tc);
    ASSERT_GT(c.delta, 0.0);
    const MetricSet ms = metric_with_delta(s, c.delta);
    const IterationTrace t = lyapunov_run(s, ms, c.alpha, c.tau, c.lambda, random_vector(12, 3), 500);
    ASSERT_EQ(t.records.size(), 501u);
    SlpOptions o{c.tau, c.alpha, c.lambda};
    const SlpReport rep = slp_check_discrete(t, c.tc, o);
    EXPECT_TRUE(rep.passed()) << "kappa " << kappa << " worst " << rep.checks.worst() << " at k "
                              << rep.first_violation;
  }
}

TEST(DiscreteLyapunov, LargeTauAndDeltaAreFlagged) {
  // Start at u*_phi + d with d in ker B, where E2 vanishes: one inexact step
  // with tau = 1 injects a constraint component of size about delta that
  // the small lambda alpha E1 part cannot pay for.
  const QuadSetup s = make_setup(10.0, 23);
  const double alpha = 1.0 / s.tc.l;
  const double lambda = s.tc.lambda(alpha);
  TheoryConstants tc = s.tc;
  const ExactProjector p(LinearOperator::dense_spd(s.m), LinearOperator::dense(s.q.bc));
  const Vector d = p.project(random_vector(12, 4));
  for (double delta : {0.5, 0.0}) {
    const MetricSet ms = metric_with_delta(s, delta);
    const Vector u0 = LyapunovAnchors::for_quadratic(s.q, ms, alpha).u_phi_star + d;
    const IterationTrace t = lyapunov_run(s, ms, alpha, 1.0, lambda, u0, 200);
    tc.delta = tc.delta_star = delta;
    SlpOptions o{1.0, alpha, lambda};
    const SlpReport rep = slp_check_discrete(t, tc, o);
    if (delta > 0.0) {
      EXPECT_FALSE(rep.passed());
      EXPECT_EQ(rep.first_violation, 0);
      EXPECT_EQ(rep.checks.worst(), "slp_decrease");
    } else {
      EXPECT_TRUE(rep.passed()) << rep.checks.worst();
    }
  }
}

TEST(DiscreteLyapunov, FeasibleStartBoundIsLambdaIndependent) {
  // With K_theta at the largest value the p condition admits, the bound and
  // (lambda alpha)^{-1} E2_0 both scale like 1 / lambda.
  const QuadSetup s = make_setup(3.0, 24);
  const double alpha = 1.0 / s.tc.l;
  const double delta = 0.01;
  const MetricSet ms = metric_with_delta(s, delta);
  const auto anchors = LyapunovAnchors::for_quadratic(s.q, ms, alpha);
  const ExactProjector p(LinearOperator::dense_spd(s.m), LinearOperator::dense(s.q.bc));
  const Vector u0 = p.project(random_vector(12, 9));
  TheoryConstants tc = s.tc;
  tc.delta = tc.delta_star = delta;
  tc.grad_star_norm = norm_m_inverse(anchors.m_star(), s.q.grad(anchors.u_star));
  double ratio0 = 0.0;
  for (double shrink : {1.0, 0.1, 0.01}) {
    const double lambda = tc.lambda(alpha) * shrink;
    tc.k_theta = std::sqrt(lambda) / (9.0 * tc.p() * std::sqrt(tc.kappa) * tc.c_star());
    const LyapunovState st = lyapunov_eval(s.spec, u0, anchors, lambda, alpha);
    const double lhs = st.e2 / (lambda * alpha);
    const double rhs = feasible_start_bound(tc, alpha);
    EXPECT_LE(lhs, rhs) << "shrink " << shrink;
    if (shrink == 1.0) ratio0 = lhs / rhs;
    EXPECT_NEAR(lhs / rhs, ratio0, 1e-9 * ratio0);
  }
}

TEST(Audit, FixedMetricAndExactProjection) {
  const QuadSetup s = make_setup(4.0, 31);
  const double alpha = 1.0 / s.tc.l;
  const MetricSet ms = metric_with_delta(s, 0.0);
  SnapshotRecorder rec(5);
  SolverConfig cfg = SolverConfig::for_method(Method::pgd);
  cfg.calibrate = false;
  cfg.max_iters = 40;
  cfg.stop.grad_tol = 1e-300;
  FixedSchurProvider provider(ms.schur_tilde_inverse);
  run(s.spec, random_vector(12, 1), cfg, provider, rec.hooks());
  ASSERT_EQ(rec.snapshots().size(), 9u);
  const auto anchors = LyapunovAnchors::for_quadratic(s.q, ms, alpha);
  const AuditReport a = assumption_audit(rec.snapshots(), anchors, s.tc.mu);
  for (std::size_t i = 0; i < a.theta.size(); ++i) {
    EXPECT_LE(a.theta[i], 1e-8);
    EXPECT_LE(a.theta_tilde[i], 1e-8);
    EXPECT_LE(a.delta[i], 1e-8);
  }
  EXPECT_LE(a.k_s_lower, 0.0);
  EXPECT_TRUE(a.not_assessed.empty());
}

TEST(Audit, VariableMetricThetaTracksDistance) {
  const PdeSetup pde = pde_setup(16, NuCoefficient{1.0, 1.0, 5.0});
  SolverConfig cfg = pde_method_config(Method::ippgdv, pde.problem.nu);
  cfg.mg_schedule.reset();
  cfg.stop.grad_tol = 1e-10;
  cfg.max_iters = 200;
  SnapshotRecorder rec(1);
  auto provider = pde_schur_provider(pde.problem.grid);
  const SolveResult r = run(pde.spec, Vector::Zero(pde.spec.dim), cfg, *provider, rec.hooks());
  ASSERT_EQ(r.status, RunStatus::converged);
  // Anchors from the converged state: exact projection, so u*_phi = u*.
  const LinearOperator m_star = pde.spec.metric_builder(r.u);
  ExactSchurProvider exact(pde.spec.constraint_b);
  exact.set_metric(m_star);
  const LyapunovAnchors anchors{
      r.u, r.u, InexactProjector(MetricSet{m_star, exact.schur_inverse(0), "star"}, pde.spec.constraint_b)};
  AuditOptions o;
  o.metric_only = true;
  const AuditReport a = assumption_audit(rec.snapshots(), anchors, 1.0, o);
  ASSERT_GE(a.theta.size(), 4u);
  EXPECT_GT(a.theta.front(), 10.0 * a.theta[a.theta.size() - 2]);
  EXPECT_GT(a.k_theta, 0.0);
  EXPECT_TRUE(std::isfinite(a.k_theta));
  EXPECT_EQ(a.not_assessed.size(), 3u);
}

TEST(CheckReport, ReferencesSurviveLaterAdds) {
  CheckReport rep;
  auto& first = rep.add("first");
  for (int i = 0; i < 64; ++i) rep.add("filler" + std::to_string(i));
  first.record(2.0, 1.0, 7);
  EXPECT_FALSE(rep.passed());
  EXPECT_EQ(rep.worst(), "first");
  EXPECT_EQ(rep.checks.front().worst_index, 7);
}
