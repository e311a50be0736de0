#include "ippgd/solver.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

namespace ippgd {

namespace {

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::pgd: return "PGD";
    case Method::ippgd: return "IPPGD";
    case Method::ippgdv: return "IPPGDv";
    case Method::ippgdv_tau: return "IPPGDv-tau";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  const std::string l = lower(s);
  if (l == "pgd") return Method::pgd;
  if (l == "ippgd") return Method::ippgd;
  if (l == "ippgdv") return Method::ippgdv;
  if (l == "ippgdv-tau" || l == "ippgdv_tau") return Method::ippgdv_tau;
  throw Error("unknown method '" + s + "' (expected PGD, IPPGD, IPPGDv or IPPGDv-tau)");
}

std::string to_string(MetricPolicy p) {
  switch (p) {
    case MetricPolicy::fixed: return "fixed";
    case MetricPolicy::every_iteration: return "every-iteration";
    case MetricPolicy::every_m: return "every-m";
  }
  return "?";
}

MetricPolicy parse_metric_policy(const std::string& s) {
  const std::string l = lower(s);
  if (l == "fixed") return MetricPolicy::fixed;
  if (l == "every-iteration" || l == "every_iteration") return MetricPolicy::every_iteration;
  if (l == "every-m" || l == "every_m") return MetricPolicy::every_m;
  throw Error("unknown metric policy '" + s + "' (expected fixed, every-iteration or every-m)");
}

void SolverConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw Error("alpha must be positive (0 selects 1/L)");
  if (!(tau > 0.0 && tau <= 1.0)) throw Error("tau must be in (0,1]");
  if (metric_policy == MetricPolicy::every_m && metric_every < 1) throw Error("metric_every must be >= 1");
  if (max_iters < 0) throw Error("max_iters must be >= 0");
  if (!(stop.grad_tol > 0.0)) throw Error("grad_tol must be positive");
  if (!(stop.step_tol > 0.0)) throw Error("step_tol must be positive");
  if (divergence_window < 1) throw Error("divergence_window must be >= 1");
  if (mg_schedule) mg_schedule->validate();
}

SolverConfig SolverConfig::for_method(Method m) {
  SolverConfig c;
  c.method = m;
  switch (m) {
    case Method::pgd:
      break;
    case Method::ippgd:
      c.mg_schedule = MgSchedule{};
      c.mg_schedule->mode = ScheduleMode::adaptive;
      break;
    case Method::ippgdv:
    case Method::ippgdv_tau:
      c.mg_schedule = MgSchedule{};
      c.mg_schedule->mode = ScheduleMode::adaptive;
      c.metric_policy = MetricPolicy::every_iteration;
      break;
  }
  return c;
}

ExactSchurProvider::ExactSchurProvider(LinearOperator b, ExactProjectorOptions opts)
    : b_(std::move(b)), opts_(std::move(opts)) {}

void ExactSchurProvider::set_metric(const LinearOperator& m) { exact_.emplace(m, b_, opts_); }

LinearOperator ExactSchurProvider::schur_inverse(int) {
  if (!exact_) throw Error("schur_inverse called before set_metric");
  return exact_->schur_inverse();
}

FixedSchurProvider::FixedSchurProvider(LinearOperator s_tilde_inverse, bool dominated)
    : s_tilde_inverse_(std::move(s_tilde_inverse)), dominated_(dominated) {}

void FixedSchurProvider::set_metric(const LinearOperator&) {
  if (metric_set_) throw Error("a fixed Schur approximation cannot follow a changing metric");
  metric_set_ = true;
}

MultigridSchurProvider::MultigridSchurProvider(FieldBuilder builder, MgOptions opts, double exact_tol,
                                               int max_cycles)
    : builder_(std::move(builder)),
      opts_(opts),
      exact_tol_(exact_tol),
      max_cycles_(max_cycles),
      cycles_(std::make_shared<long long>(0)) {}

void MultigridSchurProvider::set_metric(const LinearOperator& m) {
  hierarchy_ = std::make_shared<const MgHierarchy>(build_hierarchy(builder_(m), opts_));
}

LinearOperator MultigridSchurProvider::schur_inverse(int n_mg) {
  if (!hierarchy_) throw Error("schur_inverse called before set_metric");
  auto h = hierarchy_;
  auto counter = cycles_;
  const Index n = h->size();
  if (n_mg > 0) {
    auto act = [h, counter, n_mg](const Vector& in, Vector& out) {
      out = h->apply(in, n_mg);
      *counter += n_mg;
    };
    return LinearOperator(n, n, act, {true, true});
  }
  const double tol = exact_tol_;
  const int max_cycles = max_cycles_;
  auto act = [h, counter, tol, max_cycles](const Vector& in, Vector& out) {
    MgSolveResult r = mg_solve(*h, in, tol, max_cycles);
    *counter += r.cycles;
    if (!r.converged) {
      throw NonConvergence("multigrid Schur solve stalled", r.relative_residual, r.relative_residual);
    }
    out = std::move(r.x);
  };
  return LinearOperator(n, n, act, {true, true});
}

void IterationTrace::write_csv(std::ostream& out, bool include_wall) const {
  out << "k,f,grad_norm_M,constraint_res,E1,E2,E,delta_est,n_mg,theta_est,wall_ms\n";
  char buf[512];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%.17g,%.17g\n", r.k, r.f,
                  r.grad_norm_m, r.constraint_res, r.e1, r.e2, r.e, r.delta_est, r.n_mg, r.theta_est,
                  include_wall ? r.wall_ms : 0.0);
    out << buf;
  }
}

void IterationTrace::write_csv(const std::string& path, bool include_wall) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  write_csv(out, include_wall);
}

double IterationTrace::average_cycles() const {
  if (records.size() < 2) return 0.0;
  double s = 0.0;
  for (std::size_t i = 1; i < records.size(); ++i) s += records[i].n_mg;
  return s / static_cast<double>(records.size() - 1);
}

Vector relaxed_update(const Vector& u, const Vector& phi_u, double tau) {
  if (tau == 1.0) return phi_u;
  return (1.0 - tau) * u + tau * phi_u;
}

Vector step(const ProblemSpec& problem, const Vector& u, const InexactProjector& p, double alpha, double tau) {
  const Vector g = problem.eval_grad(u);
  const Vector v = u - alpha * p.metric().m.solve(g);
  return relaxed_update(u, p.project(v), tau);
}

double resolve_alpha(const ProblemSpec& problem, const SolverConfig& cfg) {
  if (cfg.alpha > 0.0) return cfg.alpha;
  if (!problem.mu_l) throw Error("alpha not given and the problem has no Lipschitz constant");
  return 1.0 / problem.mu_l->second;
}

InexactProjector make_projector(const ProblemSpec& problem, const LinearOperator& m, SchurProvider& provider,
                                int n_mg, bool calibrate) {
  InexactProjector p(MetricSet{m, provider.schur_inverse(n_mg), "k"}, problem.constraint_b);
  if (calibrate && n_mg > 0 && !provider.dominated(n_mg)) p = calibrate_domination(p).projector;
  return p;
}

namespace {

// Projectors for the current metric, cached per cycle count.
class ProjectionCache {
 public:
  ProjectionCache(const ProblemSpec& problem, const SolverConfig& cfg, SchurProvider& provider)
      : problem_(problem), cfg_(cfg), provider_(provider) {}

  void set_metric(const LinearOperator& m) {
    m_ = m;
    provider_.set_metric(m);
    entries_.clear();
  }

  struct Entry {
    std::optional<InexactProjector> projector;
    double delta = std::numeric_limits<double>::quiet_NaN();
  };

  const Entry& get(int n_mg) {
    auto it = entries_.find(n_mg);
    if (it != entries_.end()) return it->second;
    Entry e;
    InexactProjector p = make_projector(problem_, m_, provider_, n_mg, cfg_.calibrate);
    if (cfg_.estimate_delta) {
      if (n_mg == 0 && provider_.cycles() < 0) {
        e.delta = 0.0;
      } else {
        const SpectralEstimate s = schur_ratio_extremes(p, 1e-8);
        e.delta = std::max(0.0, 1.0 - s.lambda_min);
      }
    }
    e.projector = std::move(p);
    return entries_.emplace(n_mg, std::move(e)).first->second;
  }

  const LinearOperator& m() const { return m_; }

  // Spread of lambda(S~^{-1} S) for one uncalibrated cycle.
  double one_cycle_inexactness() {
    InexactProjector p(MetricSet{m_, provider_.schur_inverse(1), "one-cycle"}, problem_.constraint_b);
    const SpectralEstimate s = schur_ratio_extremes(p, 1e-6);
    return std::max(1.0 - s.lambda_min, s.lambda_max - 1.0);
  }

 private:
  const ProblemSpec& problem_;
  const SolverConfig& cfg_;
  SchurProvider& provider_;
  LinearOperator m_;
  std::map<int, Entry> entries_;
};

}  // namespace

SolveResult run(const ProblemSpec& problem, const Vector& u0, const SolverConfig& cfg, SchurProvider& provider,
                const RunHooks& hooks) {
  cfg.validate();
  problem.validate();
  if (u0.size() != problem.dim) throw DimensionError("u0 has the wrong dimension");
  if (!all_finite(u0)) throw Error("u0 is not finite");
  if (cfg.metric_policy != MetricPolicy::fixed && !problem.metric_builder) {
    throw Error("variable metric policy needs a metric builder");
  }

  SolveResult result;
  result.alpha = resolve_alpha(problem, cfg);
  const double alpha = result.alpha;
  const auto start = std::chrono::steady_clock::now();
  auto elapsed_ms = [&] {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  };

  ProjectionCache cache(problem, cfg, provider);
  Vector u = u0;
  double r0 = 0.0;
  double f_prev = 0.0;
  double r_prev = 0.0;
  int increases = 0;
  int last_n = -1;
  int adaptive_n = 0;
  double rho = std::numeric_limits<double>::quiet_NaN();
  const bool adaptive = cfg.mg_schedule && cfg.mg_schedule->mode == ScheduleMode::adaptive;
  bool step_stop = false;
  int cycles_for_record = 0;

  for (int k = 0;; ++k) {
    const bool rebuild = k == 0 || (cfg.metric_policy == MetricPolicy::every_iteration) ||
                         (cfg.metric_policy == MetricPolicy::every_m && k % cfg.metric_every == 0);
    if (rebuild) {
      cache.set_metric(cfg.metric_policy == MetricPolicy::fixed ? problem.reference_metric
                                                                : problem.metric_builder(u));
      last_n = -1;
    }
    int n = 0;
    if (adaptive) {
      if (std::isnan(rho)) rho = provider.cycles() >= 0 ? cache.one_cycle_inexactness() : 0.0;
      // With relaxation the injected infeasibility decays only like (1 - tau)^j
      // and accumulates to about delta / tau, hence the extra factor tau.
      const double rel = k == 0 ? 1.0 : r_prev / r0;
      adaptive_n = n = cfg.mg_schedule->adaptive_at(rel * cfg.tau, rho, adaptive_n);
    } else if (cfg.mg_schedule) {
      n = cfg.mg_schedule->at(std::min(k, std::max(cfg.max_iters - 1, 0)), cfg.max_iters);
    }
    const auto& entry = cache.get(n);
    const InexactProjector& p = *entry.projector;
    const LinearOperator& m = cache.m();
    if (hooks.metric_observer && n != last_n) hooks.metric_observer(k, p.metric());
    last_n = n;

    const Vector g = problem.eval_grad(u);
    if (!all_finite(g)) throw DivergenceError("non-finite gradient at iteration " + std::to_string(k), result.trace);
    const Vector minv_g = m.solve(g);
    const long long before = provider.cycles();
    const Vector phi = p.project(Vector(u - alpha * minv_g));
    const long long after = provider.cycles();

    IterationRecord rec;
    rec.k = k;
    rec.f = problem.eval_f(u);
    rec.grad_norm_m = norm_m(m, p.project(minv_g));
    rec.fixed_point_res = norm_m(m, Vector(u - phi)) / alpha;
    rec.constraint_res = problem.constraint_b.apply(u).norm();
    if (hooks.lyapunov) {
      const LyapunovValues lv = hooks.lyapunov(u);
      rec.e1 = lv.e1;
      rec.e2 = lv.e2;
      rec.e = lv.e;
    }
    rec.delta_est = entry.delta;
    rec.n_mg = cycles_for_record;
    if (hooks.theta) rec.theta_est = hooks.theta(m, p.metric().schur_tilde_inverse);
    rec.wall_ms = elapsed_ms();
    result.trace.records.push_back(rec);

    if (k == 0) {
      r0 = rec.fixed_point_res;
    } else {
      // Infeasible iterates may legitimately gain energy on their way back to
      // the constraint set, so only a simultaneous rise of f and of the
      // fixed-point residual counts towards divergence.
      const bool up = rec.f > f_prev + 1e-12 * std::max(1.0, std::abs(f_prev)) && rec.fixed_point_res > r_prev;
      increases = up ? increases + 1 : 0;
      if (increases >= cfg.divergence_window) {
        throw DivergenceError("objective increased for " + std::to_string(increases) + " consecutive iterations",
                              result.trace);
      }
    }
    f_prev = rec.f;
    r_prev = rec.fixed_point_res;
    if (rec.fixed_point_res <= cfg.stop.grad_tol * r0) {
      result.status = RunStatus::converged;
      result.stop_reason = "gradient tolerance";
      break;
    }
    if (step_stop) {
      result.status = RunStatus::converged;
      result.stop_reason = "step tolerance";
      break;
    }
    if (k >= cfg.max_iters) {
      result.status = RunStatus::max_iters;
      result.stop_reason = "max_iters";
      break;
    }

    cycles_for_record = before >= 0 ? static_cast<int>(after - before) : n;
    Vector next = relaxed_update(u, phi, cfg.tau);
    if (!all_finite(next)) throw DivergenceError("non-finite iterate at iteration " + std::to_string(k + 1),
                                                  result.trace);
    step_stop = norm_m(m, Vector(next - u)) <= cfg.stop.step_tol;
    u = std::move(next);
  }
  result.u = std::move(u);
  return result;
}

TheoryConstants TheoryConstants::from_mu_l(double mu, double l) {
  TheoryConstants tc;
  tc.mu = tc.mu_star = mu;
  tc.l = l;
  tc.kappa = tc.kappa_star = l / mu;
  return tc;
}

double TheoryConstants::p() const { return (9.0 * kappa_star + 4.0) * delta_star + (1.0 + 2.0 * k_s) * delta; }

double TheoryConstants::k1(double alpha) const {
  return 2.0 * (2.0 * kappa * kappa + alpha * alpha * l * l) + 1.5 * l * tau * alpha;
}

double TheoryConstants::k2(double alpha) const {
  return (1.5 * l * tau * alpha + 2.0 * kappa * kappa) * (1.0 + theta_m) * grad_star_norm * grad_star_norm;
}

double TheoryConstants::k3(double epsilon) const {
  return (1.5 * tau * epsilon + 4.0) * (1.0 + theta_m) * (1.0 + theta_m) * l;
}

double TheoryConstants::k4() const { return 1.5 * (1.0 + theta_m) * grad_star_norm * grad_star_norm; }

double TheoryConstants::k5() const { return 1.5 * (1.0 + 1.5 * (1.0 + theta_m) * (1.0 + theta_m) * delta * delta); }

double TheoryConstants::lambda(double alpha) const { return std::min(1.0 / (16.0 * k1(alpha)), 1e-2); }

double TheoryConstants::omega_k(double alpha) const { return std::min(alpha * mu / (4.0 * kappa), 1.0 / 32.0); }

TheoryBounds theory_bounds(const TheoryConstants& tc, double alpha) {
  if (!(alpha > 0.0)) throw Error("alpha must be positive");
  constexpr double inf = std::numeric_limits<double>::infinity();
  TheoryBounds b;
  b.lambda = tc.lambda(alpha);
  b.omega = tc.omega_k(alpha);
  b.tau_from_step = 1.0 / (36.0 * tc.kappa * tc.kappa * tc.l * alpha);
  b.tau_from_delta = 49.0 / (48.0 * (1.0 + 1.5 * (1.0 + tc.theta_m) * tc.delta * tc.delta));
  b.tau_max = std::min(b.tau_from_step, b.tau_from_delta);
  const double sl = std::sqrt(b.lambda);
  b.delta_max = std::min(sl / (21.0 * (1.0 + tc.theta_m) * tc.kappa), 1.0 / (8.0 * tc.theta_m + 9.0));
  const double kc = tc.k_theta * std::sqrt((1.0 + tc.theta_m) * tc.kappa) * tc.c_star();
  b.delta_star_max = std::min(kc > 0.0 ? sl / (12.0 * std::sqrt(2.0) * kc) : inf, 1.0 / (4.0 * tc.kappa_star));
  b.p_max = kc > 0.0 ? sl / (9.0 * kc) : inf;
  return b;
}

double TheoryConstants::k1_continuous(double alpha) const {
  return 2.0 * (2.0 * kappa * kappa + alpha * alpha * l * l);
}

double TheoryConstants::lambda_continuous(double alpha) const {
  return std::min(1.0 / (4.0 * k1_continuous(alpha)), 1e-2);
}

double TheoryConstants::omega_continuous(double alpha) const {
  return std::min(alpha * mu / (8.0 * kappa), 1.5);
}

ContinuousBounds continuous_bounds(const TheoryConstants& tc, double alpha) {
  if (!(alpha > 0.0)) throw Error("alpha must be positive");
  constexpr double inf = std::numeric_limits<double>::infinity();
  ContinuousBounds b;
  b.lambda = tc.lambda_continuous(alpha);
  b.omega = tc.omega_continuous(alpha);
  const double sl = std::sqrt(b.lambda);
  const double th = 1.0 + tc.theta_m;
  b.delta_max = std::min(sl / (4.0 * std::sqrt(2.0) * th * tc.kappa), 1.0 / (8.0 * tc.theta_m + 9.0));
  const double kc = tc.k_theta * th * std::sqrt(tc.kappa) * tc.c_star();
  b.delta_star_max = std::min(kc > 0.0 ? sl / (8.0 * std::sqrt(6.0) * kc) : inf, 1.0 / (4.0 * tc.kappa_star));
  b.p_max = kc > 0.0 ? std::min(std::sqrt(6.0 * b.lambda), std::sqrt(2.0) / tc.kappa) / (8.0 * kc) : inf;
  return b;
}

double feasible_start_bound(const TheoryConstants& tc, double alpha) {
  if (!(tc.k_theta > 0.0)) return std::numeric_limits<double>::infinity();
  const double q = 9.0 * tc.kappa_star + 4.0;
  return 3.0 * alpha * tc.mu_star / (8.0 * q * q * tc.kappa_star * tc.k_theta * tc.k_theta);
}

double product_bound_factor(double kappa, double tau) {
  return 1.0 - std::min(std::pow(kappa, -4.0) / 9.0, tau / 2.0) / 16.0;
}

}  // namespace ippgd
