#include "ippgd/checks.hpp"

#include "ippgd/bench.hpp"
#include "ippgd/dynamics.hpp"
#include "ippgd/multigrid.hpp"
#include "ippgd/pde.hpp"
#include "ippgd/problems.hpp"
#include "ippgd/projection.hpp"
#include "ippgd/solver.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

namespace ippgd {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

DenseMatrix gaussian_matrix(Index rows, Index cols, std::uint64_t seed) {
  const Vector raw = random_vector(rows * cols, seed);
  return Eigen::Map<const DenseMatrix>(raw.data(), rows, cols);
}

/// Eigenvalues log-spaced in [lo, hi] under a random rotation.
DenseMatrix spd_matrix(Index n, std::uint64_t seed, double lo, double hi) {
  const DenseMatrix q = Eigen::HouseholderQR<DenseMatrix>(gaussian_matrix(n, n, seed)).householderQ() *
                        DenseMatrix::Identity(n, n);
  Vector lam(n);
  for (Index i = 0; i < n; ++i) {
    const double t = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
    lam[i] = lo * std::pow(hi / lo, t);
  }
  const DenseMatrix a = q * lam.asDiagonal() * q.transpose();
  return 0.5 * (a + a.transpose());
}

/// Records "lhs <= rhs" and keeps the worst sample index.
void expect_le(CheckReport& rep, const std::string& name, double lhs, double rhs, int index = 0) {
  rep.add(name).record(lhs, rhs, index);
}

/// Stores an already relative violation as is.
void record_violation(CheckReport& rep, const std::string& name, double v, int index) {
  InequalityCheck& c = rep.add(name);
  ++c.samples;
  if (!(v <= c.max_violation) || c.worst_index < 0) {
    c.max_violation = std::max(c.max_violation, std::isnan(v) ? HUGE_VAL : v);
    c.worst_index = index;
  }
}

void expect_true(CheckReport& rep, const std::string& name, bool ok, int index = 0) {
  rep.add(name).record(ok ? 0.0 : 1.0, 0.0, index);
}

struct Quad {
  QuadraticInstance q;
  DenseMatrix m;
  ProblemSpec spec;
  TheoryConstants tc;
};

// Identity metric and eigenvalues of A in [1, kappa]: mu = 1, L = kappa.
Quad make_quad(double kappa, std::uint64_t seed, Index dim = 12, Index rows = 4) {
  Quad s;
  s.q = gen_quadratic(dim, rows, kappa, seed);
  s.m = DenseMatrix::Identity(dim, dim);
  s.spec = quadratic_problem(s.q, s.m);
  s.tc = TheoryConstants::from_mu_l(s.spec.mu_l->first, s.spec.mu_l->second);
  return s;
}

struct Compliant {
  double alpha = 0.0, tau = 0.0, lambda = 0.0, delta = 0.0;
  TheoryConstants tc;
};

// Largest step, relaxation and inexactness admitted by the discrete theorem
// for a fixed metric (theta = 0, K_theta = 0, delta* = delta).
Compliant compliant(const TheoryConstants& base) {
  Compliant c;
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

SolverConfig plain_config(double alpha, double tau, int iters) {
  SolverConfig cfg = SolverConfig::for_method(Method::pgd);
  cfg.alpha = alpha;
  cfg.tau = tau;
  cfg.calibrate = false;
  cfg.max_iters = iters;
  cfg.stop.grad_tol = 1e-300;
  cfg.stop.step_tol = 1e-300;
  return cfg;
}

IterationTrace lyapunov_run(const Quad& s, const MetricSet& ms, double alpha, double tau, double lambda,
                            const Vector& u0, int iters) {
  RunHooks hooks;
  hooks.lyapunov = lyapunov_hook(s.spec, LyapunovAnchors::for_quadratic(s.q, ms, alpha), lambda, alpha);
  FixedSchurProvider provider(ms.schur_tilde_inverse);
  return run(s.spec, u0, plain_config(alpha, tau, iters), provider, hooks).trace;
}

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

std::string trace_csv(const IterationTrace& t) {
  std::ostringstream os;
  t.write_csv(os, false);
  return os.str();
}

bool same_states(const std::vector<Vector>& a, const std::vector<Vector>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (!(a[k] == b[k])) return false;
  }
  return true;
}

const NuCoefficient kMild{1.0, 1.0, 5.0};
const NuCoefficient kStrong{1.0, 6.0, 5.0};

}  // namespace

SuiteResult projection_suite(int instances, std::uint64_t seed) {
  const auto t0 = Clock::now();
  SuiteResult out{"projection"};
  int dproj = 0;
  for (int i = 0; i < instances; ++i) {
    const std::uint64_t s = seed * 1000 + static_cast<std::uint64_t>(i);
    const Index n = 8 + static_cast<Index>((i * 7) % 43);
    const Index r = 1 + static_cast<Index>(i % std::max<Index>(1, n / 3));
    const double delta = 0.05 + 0.9 * static_cast<double>(i % 10) / 10.0;
    const DenseMatrix m = spd_matrix(n, s, 0.5, 4.0);
    const DenseMatrix b = gaussian_matrix(r, n, s + 7919);
    const MetricSet ms = prescribed_inexactness_metric(m, b, delta, s);
    const InexactProjector ip(ms, LinearOperator::dense(b));
    const ExactProjector exact(ms.m, LinearOperator::dense(b));
    PiSuiteOptions opts;
    opts.seed = s;
    opts.epsilon = estimate_delta(ip).delta;
    const DenseMatrix a = spd_matrix(n, s + 31, 1.0, 10.0);
    opts.gradient = [a](const Vector& u) { return Vector(a * u + Vector::Ones(u.size())); };
    out.report.merge(lemma_pi_suite(ip, exact, opts));
    if (i % 4 == 0) {
      const DenseMatrix m2 = m + 0.3 * spd_matrix(n, s + 53, 0.1, 1.0);
      const double e2 = 0.5 * delta + 0.2;
      const InexactProjector ip2(prescribed_inexactness_metric(m2, b, e2, s + 1), LinearOperator::dense(b));
      out.report.merge(lemma_dproj_check(ip, ip2, delta, e2, 20, s));
      ++dproj;
    }
  }
  out.report.tolerance = 1e-8;
  out.notes.push_back("instances=" + std::to_string(instances) + " two_metric_pairs=" + std::to_string(dproj));
  out.seconds = seconds_since(t0);
  return out;
}

SuiteResult spd_lemma_suite(int pairs, std::uint64_t seed) {
  const auto t0 = Clock::now();
  SuiteResult out{"spd_lemma"};
  for (int i = 0; i < pairs; ++i) {
    const std::uint64_t s = seed * 1000 + 2 * static_cast<std::uint64_t>(i);
    const Index n = 2 + static_cast<Index>((i * 5) % 19);
    const DenseMatrix q = spd_matrix(n, s + 1, 0.5, 3.0);
    const DenseMatrix r = spd_matrix(n, s + 2, 0.5, 3.0);
    const SpdLemmaReport rep = lemma_spd_check(LinearOperator::dense_spd(q), LinearOperator::dense_spd(r), 10, s);
    record_violation(out.report, "spd_sampled", rep.max_violation, i);
    // Operator form with dense inverses: factor R^{-1} - (Q^{-1}-R^{-1}) R (Q^{-1}-R^{-1}) >= 0.
    const DenseMatrix qi = q.inverse(), ri = r.inverse();
    const double c1 = rep.bounds.c1, c2 = rep.bounds.c2;
    const double f = std::max((1 - c1) * (1 - c1), (1 - c2) * (1 - c2));
    const DenseMatrix gap = f * ri - (qi - ri) * r * (qi - ri);
    Eigen::SelfAdjointEigenSolver<DenseMatrix> es(0.5 * (gap + gap.transpose()), Eigen::EigenvaluesOnly);
    record_violation(out.report, "spd_dense_oracle", std::max(0.0, -es.eigenvalues().minCoeff() / ri.norm()), i);
  }
  out.report.tolerance = 1e-9;
  out.notes.push_back("pairs=" + std::to_string(pairs));
  out.seconds = seconds_since(t0);
  return out;
}

SuiteResult delta_estimator_suite(int instances, std::uint64_t seed) {
  const auto t0 = Clock::now();
  SuiteResult out{"delta_estimator"};
  double worst = 0.0;
  for (int i = 0; i < instances; ++i) {
    const std::uint64_t s = seed * 1000 + static_cast<std::uint64_t>(i);
    const Index n = 20 + static_cast<Index>((i * 37) % 181);
    const Index r = std::max<Index>(1, n / 4);
    const DenseMatrix m = spd_matrix(n, s, 0.5, 5.0);
    const DenseMatrix b = gaussian_matrix(r, n, s + 4099);
    const DenseMatrix schur = b * m.llt().solve(b.transpose());
    DenseMatrix s_tilde;
    if (i % 2 == 0) {
      // Prescribed spectrum of S~^{-1} S.
      const MetricSet ms = prescribed_inexactness_metric(m, b, 0.02 + 0.9 * (i % 7) / 7.0, s);
      s_tilde = ms.schur_tilde_inverse.to_dense().inverse();
    } else {
      // S plus a random positive semidefinite perturbation of rank <= 3.
      const DenseMatrix g = gaussian_matrix(r, std::min<Index>(3, r), s + 17);
      s_tilde = schur + (0.1 + 0.2 * (i % 5)) * schur.norm() / std::max(1.0, g.squaredNorm()) * g * g.transpose();
    }
    s_tilde = 0.5 * (s_tilde + s_tilde.transpose()).eval();
    const InexactProjector ip(MetricSet{LinearOperator::dense_spd(m), LinearOperator::dense(s_tilde.inverse()), "t"},
                              LinearOperator::dense(b));
    // Generalized problem S x = lambda S~ x gives the spectrum of S~^{-1} S.
    Eigen::GeneralizedSelfAdjointEigenSolver<DenseMatrix> ges(schur, s_tilde, Eigen::EigenvaluesOnly);
    const double oracle = 1.0 - ges.eigenvalues().minCoeff();
    const double est = estimate_delta(ip, 1e-10).delta;
    worst = std::max(worst, std::abs(est - oracle));
    out.report.add("delta_abs_error").record(std::abs(est - oracle), 1e-6, i);
  }
  out.notes.push_back("instances=" + std::to_string(instances) + " max_abs_error=" + fmt(worst, 3));
  out.seconds = seconds_since(t0);
  return out;
}

SuiteResult contraction_suite(int instances, std::uint64_t seed) {
  const auto t0 = Clock::now();
  SuiteResult out{"contraction"};
  const double kappas[3] = {2.0, 10.0, 100.0};
  double worst_gap = -1.0;
  for (int i = 0; i < instances; ++i) {
    const std::uint64_t s = seed * 1000 + static_cast<std::uint64_t>(i);
    const double kappa = kappas[i % 3];
    const Quad qd = make_quad(kappa, s, 16, 4);
    const double l = qd.tc.l;
    // Steps on both sides of 2 / (mu + L).
    const double alpha = (i % 2 == 0 ? 1.0 : 1.6) / l;
    const MetricSet ms = prescribed_inexactness_metric(qd.m, qd.q.bc, 0.05 * (i % 4), s);
    FixedPointOptions fo;
    fo.u0 = random_vector(16, s + 3);
    const FixedPointResult r = fixed_point_solve(qd.spec, ms, alpha, 1e-11, fo);
    out.report.add("picard_ratio").record(r.contraction_ratio_observed, r.contraction_bound + 0.05, i);
    worst_gap = std::max(worst_gap, r.contraction_ratio_observed - r.contraction_bound);
  }
  out.notes.push_back("instances=" + std::to_string(instances) + " max(observed-bound)=" + fmt(worst_gap, 3));
  out.seconds = seconds_since(t0);
  return out;
}

SuiteResult equilibrium_suite(std::uint64_t seed) {
  const auto t0 = Clock::now();
  SuiteResult out{"equilibrium"};
  int points = 0, skipped = 0;
  double exact_distance = 0.0;
  for (double kappa : {2.0, 10.0, 100.0}) {
    for (double dfrac : {0.0, 0.5, 1.0}) {
      for (double afrac : {1.0, 0.5, 0.25}) {
        const std::uint64_t s = seed * 1000 + static_cast<std::uint64_t>(points);
        const Quad qd = make_quad(kappa, s, 20, 5);
        const double delta = dfrac / (4.0 * kappa);
        const MetricSet ms = prescribed_inexactness_metric(qd.m, qd.q.bc, delta, s);
        const UDiffReport rep = u_diff_bound_check(qd.q, ms, afrac / qd.tc.l);
        if (!rep.preconditions_met) ++skipped;
        out.report.merge(rep.checks);
        expect_true(out.report, "preconditions_met", rep.preconditions_met, points);
        if (dfrac == 0.0) {
          exact_distance = std::max(exact_distance, rep.distance);
          expect_le(out.report, "exact_degeneracy", rep.distance, 1e-8, points);
        }
        ++points;
      }
    }
  }
  out.notes.push_back("points=" + std::to_string(points) + " max_distance_at_delta0=" + fmt(exact_distance, 3));
  out.seconds = seconds_since(t0);
  return out;
}

SuiteResult discrete_lyapunov_suite(int iterations, std::uint64_t seed) {
  const auto t0 = Clock::now();
  SuiteResult out{"discrete_lyapunov"};
  int idx = 0;
  for (double kappa : {2.0, 5.0, 10.0}) {
    const Quad qd = make_quad(kappa, seed * 100 + static_cast<std::uint64_t>(kappa));
    const Compliant c = compliant(qd.tc);
    const MetricSet ms = prescribed_inexactness_metric(qd.m, qd.q.bc, c.delta, seed + 3);
    const IterationTrace t =
        lyapunov_run(qd, ms, c.alpha, c.tau, c.lambda, random_vector(qd.spec.dim, seed + 5), iterations);
    expect_true(out.report, "full_length", t.iterations() == iterations, idx);
    out.report.merge(slp_check_discrete(t, c.tc, SlpOptions{c.tau, c.alpha, c.lambda}).checks);
    out.notes.push_back("kappa=" + fmt(kappa) + " tau=" + fmt(c.tau, 3) + " delta=" + fmt(c.delta, 3) +
                        " lambda=" + fmt(c.lambda, 3) + " E_end/E_0=" + fmt(t.records.back().e / t.records[0].e, 3));
    ++idx;
  }
  // Negative control: tau = 1 and delta = 0.5 from u*_phi + d with d in
  // ker B, where E2 = 0; the first step injects an O(delta) constraint
  // component that the decrease inequality cannot absorb.
  {
    const Quad qd = make_quad(10.0, seed * 100 + 23);
    const double alpha = 1.0 / qd.tc.l, lambda = qd.tc.lambda(alpha);
    const ExactProjector p(LinearOperator::dense_spd(qd.m), LinearOperator::dense(qd.q.bc));
    const MetricSet ms = prescribed_inexactness_metric(qd.m, qd.q.bc, 0.5, seed + 3);
    const Vector u0 = LyapunovAnchors::for_quadratic(qd.q, ms, alpha).u_phi_star +
                      p.project(random_vector(qd.spec.dim, seed + 4));
    TheoryConstants tc = qd.tc;
    tc.delta = tc.delta_star = 0.5;
    const SlpReport rep =
        slp_check_discrete(lyapunov_run(qd, ms, alpha, 1.0, lambda, u0, 200), tc, SlpOptions{1.0, alpha, lambda});
    expect_true(out.report, "negative_control_flagged", !rep.passed());
    out.notes.push_back("negative control first violation at k=" + std::to_string(rep.first_violation));
  }
  out.seconds = seconds_since(t0);
  return out;
}

SuiteResult continuous_lyapunov_suite(double dt, double t_end, std::uint64_t seed) {
  const auto t0 = Clock::now();
  SuiteResult out{"continuous_lyapunov"};
  int idx = 0;
  for (double kappa : {2.0, 10.0}) {
    const Quad qd = make_quad(kappa, seed * 100 + 11);
    const double alpha = 1.0 / qd.tc.l;
    const ContinuousBounds cb = continuous_bounds(qd.tc, alpha);
    const auto anchors = LyapunovAnchors::for_quadratic(
        qd.q, prescribed_inexactness_metric(qd.m, qd.q.bc, 0.0, seed), alpha);
    FlowConfig fc;
    fc.dt = dt;
    fc.t_end = t_end;
    fc.record_every = std::max(1, static_cast<int>(std::lround(0.01 / dt)));
    ExactSchurProvider provider(qd.spec.constraint_b);
    const FlowResult flow =
        integrate_flow(qd.spec, random_vector(qd.spec.dim, seed + 12), fc, provider, FlowLyapunov{anchors, cb.lambda});
    out.report.merge(flow_decay_check(flow, cb.omega, cb.lambda, alpha));
    const double rate = flow.fitted_rate();
    expect_le(out.report, "fitted_rate", 0.9 * cb.omega, rate, idx);
    out.notes.push_back("kappa=" + fmt(kappa) + " omega=" + fmt(cb.omega) + " fitted=" + fmt(rate));
    ++idx;
  }
  // Inexact flow: monotone decay towards u*_phi.
  {
    const Quad qd = make_quad(4.0, seed * 100 + 13);
    const double alpha = 1.0 / qd.tc.l;
    const MetricSet ms = prescribed_inexactness_metric(qd.m, qd.q.bc, 0.3, seed + 3);
    const auto anchors = LyapunovAnchors::for_quadratic(qd.q, ms, alpha);
    const ContinuousBounds cb = continuous_bounds(qd.tc, alpha);
    FlowConfig fc;
    fc.dt = 0.05;
    fc.t_end = 150.0;
    fc.calibrate = false;
    FixedSchurProvider provider(ms.schur_tilde_inverse);
    const FlowResult flow =
        integrate_flow(qd.spec, random_vector(qd.spec.dim, seed + 14), fc, provider, FlowLyapunov{anchors, cb.lambda});
    CheckReport rep = flow_decay_check(flow, cb.omega, cb.lambda, alpha);
    record_violation(out.report, "inexact_flow_monotone", rep.find("flow_monotone")->max_violation, 0);
    const double dist = (flow.u - anchors.u_phi_star).norm() / anchors.u_phi_star.norm();
    expect_le(out.report, "inexact_flow_limit", dist, 1e-6);
  }
  out.seconds = seconds_since(t0);
  return out;
}

SuiteResult recovery_suite(std::uint64_t seed) {
  const auto t0 = Clock::now();
  SuiteResult out{"recovery"};
  // IPPGDv-tau with tau = 1 against IPPGDv at a shared step size.
  const PdeSetup pde = pde_setup(32, kStrong);
  const double lv = kStrong.variable_metric_ratio();
  int idx = 0;
  for (double alpha : {1.0 / lv, 2.0 / (lv + 1.0)}) {
    SolveResult res[2];
    for (int j = 0; j < 2; ++j) {
      SolverConfig cfg = pde_method_config(j == 0 ? Method::ippgdv : Method::ippgdv_tau, kStrong, 1.0);
      cfg.alpha = alpha;
      cfg.stop.grad_tol = 1e-5;
      cfg.max_iters = 400;
      auto provider = pde_schur_provider(pde.problem.grid);
      res[j] = run(pde.spec, Vector::Zero(pde.spec.dim), cfg, *provider);
    }
    const bool same = trace_csv(res[0].trace) == trace_csv(res[1].trace) && res[0].u == res[1].u;
    expect_true(out.report, "tau_one_recovers_ippgdv", same, idx);
    out.notes.push_back("alpha=" + fmt(alpha) + " iterations=" + std::to_string(res[0].trace.iterations()));
    ++idx;
  }
  // Forward Euler with dt = tau reproduces the relaxed solver iterates.
  const Quad qd = make_quad(10.0, seed * 100 + 4);
  const MetricSet ms = prescribed_inexactness_metric(qd.m, qd.q.bc, 0.3, seed);
  idx = 0;
  for (double tau : {1.0, 0.5}) {
    SolverConfig cfg = plain_config(0.0, tau, 25);
    FixedSchurProvider p1(ms.schur_tilde_inverse);
    const auto iterates = run_states(qd.spec, random_vector(qd.spec.dim, seed + 8), cfg, p1);
    FlowConfig fc;
    fc.integrator = Integrator::forward_euler;
    fc.dt = tau;
    fc.t_end = 25 * tau;
    fc.calibrate = false;
    fc.keep_states = true;
    FixedSchurProvider p2(ms.schur_tilde_inverse);
    const FlowResult flow = integrate_flow(qd.spec, random_vector(qd.spec.dim, seed + 8), fc, p2);
    expect_true(out.report, "euler_recovers_solver", same_states(flow.states, iterates), idx++);
  }
  // Variable metric with inexact multigrid projections.
  {
    const PdeSetup small = pde_setup(16, kStrong);
    SolverConfig cfg = pde_method_config(Method::ippgdv, kStrong);
    MgSchedule fixed3;
    fixed3.n_start = fixed3.n_max = 3;
    cfg.mg_schedule = fixed3;
    cfg.max_iters = 8;
    cfg.stop.grad_tol = 1e-300;
    auto p1 = pde_schur_provider(small.problem.grid);
    const auto iterates = run_states(small.spec, Vector::Zero(small.spec.dim), cfg, *p1);
    FlowConfig fc;
    fc.integrator = Integrator::forward_euler;
    fc.dt = 1.0;
    fc.t_end = 8.0;
    fc.alpha = cfg.alpha;
    fc.metric_policy = MetricPolicy::every_iteration;
    fc.n_mg = 3;
    fc.keep_states = true;
    auto p2 = pde_schur_provider(small.problem.grid);
    const FlowResult flow = integrate_flow(small.spec, Vector::Zero(small.spec.dim), fc, *p2);
    expect_true(out.report, "euler_recovers_solver", same_states(flow.states, iterates), idx);
  }
  out.seconds = seconds_since(t0);
  return out;
}

SuiteResult nu_roundtrip_suite() {
  const auto t0 = Clock::now();
  SuiteResult out{"nu_roundtrip"};
  int idx = 0;
  for (const auto& nu : {kMild, kStrong}) {
    for (int k = 0; k <= 90; ++k) {
      const double s = 1e-6 * std::pow(10.0, k / 10.0);
      const double back = nu_tilde_inverse(nu, nu.nu_tilde(s));
      expect_le(out.report, "roundtrip", std::abs(back - s), 1e-10 * (1.0 + s), idx++);
    }
  }
  out.seconds = seconds_since(t0);
  return out;
}

SuiteResult mg_threshold_suite(const std::vector<long>& grids) {
  const auto t0 = Clock::now();
  SuiteResult out{"mg_threshold"};
  int idx = 0;
  for (const auto& nu : {kMild, kStrong}) {
    std::string counts;
    for (long n : grids) {
      const PdeProblem p = manufactured_problem(n, n, nu);
      const Vector sigma = particular_flux(p);
      const auto h = build_hierarchy(schur_field_from_mass(p.grid, weighted_mass_diagonal(p, sigma)));
      const MgSolveResult r = mg_solve(h, random_vector(p.grid.num_cells(), 5), 1e-8, 20);
      expect_true(out.report, "threshold_within_20", r.converged, idx++);
      counts += (counts.empty() ? "" : ",") + std::to_string(n) + ":" + std::to_string(r.cycles);
    }
    out.notes.push_back("nu=(" + fmt(nu.a0) + "," + fmt(nu.a1) + "," + fmt(nu.a2) + ") cycles " + counts);
  }
  out.seconds = seconds_since(t0);
  return out;
}

SuiteResult manufactured_suite(const std::vector<long>& grids) {
  const auto t0 = Clock::now();
  SuiteResult out{"manufactured"};
  std::vector<double> logh, loge;
  std::string errs;
  for (long n : grids) {
    const PdeSetup s = pde_setup(n, kMild);
    SolverConfig cfg = pde_method_config(Method::ippgdv, kMild);
    cfg.mg_schedule.reset();
    cfg.stop.grad_tol = 1e-9;
    cfg.max_iters = 500;
    auto provider = pde_schur_provider(s.problem.grid);
    const SolveResult r = run(s.spec, Vector::Zero(s.spec.dim), cfg, *provider);
    expect_true(out.report, "solve_converged", r.status == RunStatus::converged);
    const double e = flux_l2_error(s.problem, s.spec.physical(r.u));
    logh.push_back(std::log(1.0 / static_cast<double>(n)));
    loge.push_back(std::log(e));
    errs += (errs.empty() ? "" : ",") + std::to_string(n) + ":" + fmt(e, 3);
  }
  const double k = static_cast<double>(logh.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < logh.size(); ++i) mx += logh[i] / k, my += loge[i] / k;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < logh.size(); ++i) {
    num += (logh[i] - mx) * (loge[i] - my);
    den += (logh[i] - mx) * (logh[i] - mx);
  }
  const double slope = num / den;
  expect_le(out.report, "flux_slope", 0.9, slope);
  out.notes.push_back("errors " + errs + " slope=" + fmt(slope));
  out.seconds = seconds_since(t0);
  return out;
}

SuiteResult pde_gradient_suite() {
  const auto t0 = Clock::now();
  SuiteResult out{"pde_gradient"};
  for (const auto& nu : {kMild, kStrong}) {
    const PdeProblem p = manufactured_problem(8, 8, nu);
    out.report.merge(gradient_consistency(pde_problem_spec(p, particular_flux(p)), 20, 5, 1e-6, 0.5));
  }
  out.seconds = seconds_since(t0);
  return out;
}

std::string to_string(CheckScope s) {
  switch (s) {
    case CheckScope::projection: return "projection";
    case CheckScope::fixed_point: return "fixed-point";
    case CheckScope::lyapunov: return "lyapunov";
    case CheckScope::pde: return "pde";
    case CheckScope::all: return "all";
  }
  return "?";
}

CheckScope parse_check_scope(const std::string& s) {
  for (CheckScope c : {CheckScope::projection, CheckScope::fixed_point, CheckScope::lyapunov, CheckScope::pde,
                       CheckScope::all}) {
    if (s == to_string(c)) return c;
  }
  throw Error("unknown check scope '" + s + "' (expected projection, fixed-point, lyapunov, pde or all)");
}

void print_suite(const SuiteResult& r, std::ostream& out) {
  out << "[" << (r.passed() ? "PASS" : "FAIL") << "] " << r.name << " (" << std::fixed << std::setprecision(2)
      << r.seconds << " s)" << std::defaultfloat << "\n";
  for (const auto& c : r.report.checks) {
    out << "    " << std::left << std::setw(34) << c.name << std::right << " max_violation=" << std::setprecision(3)
        << c.max_violation << " samples=" << c.samples;
    if (c.max_violation > r.report.tolerance) out << " worst_index=" << c.worst_index << "  <-- FAILED";
    out << "\n";
  }
  for (const auto& n : r.notes) out << "    note: " << n << "\n";
  out << std::setprecision(6);
}

std::vector<SuiteResult> run_check_scope(CheckScope scope, std::ostream& out) {
  using Fn = SuiteResult (*)();
  std::vector<Fn> fns;
  const bool all = scope == CheckScope::all;
  if (all || scope == CheckScope::projection) {
    fns.push_back([] { return projection_suite(); });
    fns.push_back([] { return spd_lemma_suite(); });
    fns.push_back([] { return delta_estimator_suite(); });
  }
  if (all || scope == CheckScope::fixed_point) {
    fns.push_back([] { return contraction_suite(); });
    fns.push_back([] { return equilibrium_suite(); });
  }
  if (all || scope == CheckScope::lyapunov) {
    fns.push_back([] { return discrete_lyapunov_suite(); });
    fns.push_back([] { return continuous_lyapunov_suite(); });
  }
  if (all || scope == CheckScope::pde) {
    fns.push_back([] { return nu_roundtrip_suite(); });
    fns.push_back([] { return pde_gradient_suite(); });
    fns.push_back([] { return mg_threshold_suite(); });
    fns.push_back([] { return manufactured_suite({16, 32, 64}); });
    fns.push_back([] { return recovery_suite(); });
  }
  std::vector<SuiteResult> results;
  for (Fn f : fns) {
    results.push_back(f());
    print_suite(results.back(), out);
    out.flush();
  }
  return results;
}

}  // namespace ippgd
