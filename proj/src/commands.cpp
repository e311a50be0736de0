#include "ippgd/commands.hpp"

#include "ippgd/io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace ippgd {

namespace {

/// Runs fn and rethrows library validation errors as ConfigErrors naming
/// section.key.
template <class Fn>
auto keyed(const Config& c, const std::string& section, const std::string& key, Fn fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    c.fail(section, key, e.what());
  }
}

void require(const Config& c, const std::string& section, const std::string& key, bool ok, const std::string& what) {
  if (!ok) c.fail(section, key, what);
}

/// Validates cfg and blames the section the values came from.
void validate_in(const Config& c, const std::string& section, const SolverConfig& cfg) {
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    throw ConfigError(c.origin() + ": [" + section + "] " + e.what());
  }
}

std::string num(double v, int digits = 6) {
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

}  // namespace

ProblemSelector parse_problem(const Config& c) {
  const std::string sec = "problem";
  ProblemSelector sel;
  const std::string type = c.get_string(sec, "type", "quadratic");
  if (type == "quadratic") {
    sel.kind = ProblemKind::quadratic;
    sel.instance = c.get_string(sec, "instance", "");
    sel.dim = c.get_int(sec, "dim", 20);
    sel.constraints = c.get_int(sec, "constraints", 5);
    sel.kappa = c.get_double(sec, "kappa", 10.0);
    sel.seed = c.get_seed(sec, "seed", 1);
    sel.delta = c.get_double(sec, "delta", 0.0);
    require(c, sec, "dim", sel.dim >= 1, "must be >= 1");
    require(c, sec, "constraints", sel.constraints >= 1 && sel.constraints < sel.dim, "must be in [1, dim)");
    require(c, sec, "kappa", sel.kappa >= 1.0, "must be >= 1");
    require(c, sec, "delta", sel.delta >= 0.0 && sel.delta < 1.0, "must be in [0,1)");
  } else if (type == "pde") {
    sel.kind = ProblemKind::pde;
    sel.n = c.get_int(sec, "n", 32);
    require(c, sec, "n", sel.n >= 2, "must be >= 2");
    const auto nu = c.get_doubles(sec, "nu", {1.0, 1.0, 5.0});
    require(c, sec, "nu", nu.size() == 3, "expected three values a0, a1, a2");
    sel.nu = NuCoefficient{nu[0], nu[1], nu[2]};
    keyed(c, sec, "nu", [&] { sel.nu.validate(); });
  } else {
    c.fail(sec, "type", "expected quadratic or pde, got '" + type + "'");
  }
  return sel;
}

void apply_solver_keys(const Config& c, const std::string& sec, SolverConfig& cfg) {
  cfg.alpha = c.get_double(sec, "alpha", cfg.alpha);
  cfg.tau = c.get_double(sec, "tau", cfg.tau);
  if (c.has(sec, "metric_policy")) {
    cfg.metric_policy =
        keyed(c, sec, "metric_policy", [&] { return parse_metric_policy(c.get_string(sec, "metric_policy", "")); });
  }
  cfg.metric_every = c.get_int(sec, "metric_every", cfg.metric_every);
  cfg.max_iters = c.get_int(sec, "max_iters", cfg.max_iters);
  cfg.stop.grad_tol = c.get_double(sec, "grad_tol", cfg.stop.grad_tol);
  cfg.stop.step_tol = c.get_double(sec, "step_tol", cfg.stop.step_tol);
  cfg.calibrate = c.get_bool(sec, "calibrate", cfg.calibrate);
  cfg.estimate_delta = c.get_bool(sec, "estimate_delta", cfg.estimate_delta);
  cfg.divergence_window = c.get_int(sec, "divergence_window", cfg.divergence_window);
  if (c.has(sec, "schedule")) {
    const std::string mode = c.get_string(sec, "schedule", "");
    if (mode == "none") {
      cfg.mg_schedule.reset();
    } else if (mode == "ramp" || mode == "adaptive") {
      if (!cfg.mg_schedule) cfg.mg_schedule = MgSchedule{};
      cfg.mg_schedule->mode = mode == "ramp" ? ScheduleMode::ramp : ScheduleMode::adaptive;
    } else {
      c.fail(sec, "schedule", "expected none, ramp or adaptive, got '" + mode + "'");
    }
  }
  for (const char* key : {"n_start", "n_max", "ramp_fraction", "increment", "forcing"}) {
    if (c.has(sec, key) && !cfg.mg_schedule) c.fail(sec, key, "no cycle schedule (schedule = none)");
  }
  if (cfg.mg_schedule) {
    MgSchedule& s = *cfg.mg_schedule;
    s.n_start = c.get_int(sec, "n_start", s.n_start);
    s.n_max = c.get_int(sec, "n_max", s.n_max);
    s.ramp_fraction = c.get_double(sec, "ramp_fraction", s.ramp_fraction);
    s.increment = c.get_int(sec, "increment", s.increment);
    s.forcing = c.get_double(sec, "forcing", s.forcing);
  }
  validate_in(c, sec, cfg);
}

SolverConfig solver_config_for(const Config& c, const ProblemSelector& sel, Method m) {
  const std::string msec = "method." + to_string(m);
  const double tau = c.get_double(msec, "tau", c.get_double("solver", "tau", 1.0));
  SolverConfig cfg = keyed(c, c.has(msec, "tau") ? msec : "solver", "tau", [&] {
    if (!(tau > 0.0 && tau <= 1.0)) throw Error("tau must be in (0,1]");
    return method_defaults(sel, m, tau);
  });
  apply_solver_keys(c, "solver", cfg);
  apply_solver_keys(c, msec, cfg);
  return cfg;
}

SolveJob parse_solve_job(const Config& c) {
  SolveJob job;
  job.problem = parse_problem(c);
  const Method m = keyed(c, "solver", "method", [&] { return parse_method(c.get_string("solver", "method", "IPPGD")); });
  job.solver = solver_config_for(c, job.problem, m);
  job.trace_path = c.get_string("output", "trace", "");
  job.wall_time = c.get_bool("output", "wall_time", true);
  c.reject_unused();
  return job;
}

BenchConfig parse_bench_config(const Config& c) {
  BenchConfig b;
  b.problem = parse_problem(c);
  const std::string sec = "bench";
  for (const auto& name : c.get_list(sec, "methods", {"PGD", "IPPGD", "IPPGDv", "IPPGDv-tau"})) {
    b.methods.push_back(keyed(c, sec, "methods", [&] { return parse_method(name); }));
  }
  const bool pde = b.problem.kind == ProblemKind::pde;
  const std::string gkey = pde ? "grids" : "dims";
  const auto grids = c.get_doubles(sec, gkey, {static_cast<double>(pde ? b.problem.n : b.problem.dim)});
  for (double g : grids) {
    require(c, sec, gkey, g >= 2 && g == std::floor(g), "expected integers >= 2");
    b.grids.push_back(static_cast<Index>(g));
  }
  b.seed = c.get_seed(sec, "seed", b.problem.seed);
  b.output_dir = c.get_string(sec, "output_dir", "");
  for (Method m : b.methods) b.solver.push_back(solver_config_for(c, b.problem, m));
  for (const auto& s : c.sections()) {
    if (s.rfind("method.", 0) == 0) {
      const std::string name = s.substr(7);
      Method m;
      try {
        m = parse_method(name);
      } catch (const std::exception& e) {
        throw ConfigError(c.origin() + ": [" + s + "] " + e.what());
      }
      if (std::find(b.methods.begin(), b.methods.end(), m) == b.methods.end()) {
        throw ConfigError(c.origin() + ": [" + s + "] method not listed in bench.methods");
      }
    }
  }
  c.reject_unused();
  return b;
}

FlowJob parse_flow_job(const Config& c) {
  FlowJob job;
  job.problem = parse_problem(c);
  const std::string sec = "flow";
  FlowConfig& f = job.flow;
  f.integrator =
      keyed(c, sec, "integrator", [&] { return parse_integrator(c.get_string(sec, "integrator", "rk4")); });
  f.dt = c.get_double(sec, "dt", f.dt);
  f.t_end = c.get_double(sec, "t_end", f.t_end);
  f.alpha = c.get_double(sec, "alpha", f.alpha);
  f.record_every = c.get_int(sec, "record_every", f.record_every);
  f.n_mg = c.get_int(sec, "n_mg", f.n_mg);
  f.calibrate = c.get_bool(sec, "calibrate", f.calibrate);
  if (c.has(sec, "metric_policy")) {
    f.metric_policy =
        keyed(c, sec, "metric_policy", [&] { return parse_metric_policy(c.get_string(sec, "metric_policy", "")); });
  }
  job.lambda = c.get_double(sec, "lambda", 0.0);
  job.start_seed = c.get_seed(sec, "start_seed", job.start_seed);
  require(c, sec, "lambda", job.lambda >= 0.0, "must be >= 0 (0 selects the theory value)");
  job.trajectory_path = c.get_string("output", "trajectory", "");
  try {
    f.validate();
  } catch (const std::exception& e) {
    throw ConfigError(c.origin() + ": [flow] " + e.what());
  }
  if (job.problem.kind == ProblemKind::quadratic && f.metric_policy != MetricPolicy::fixed) {
    c.fail(sec, "metric_policy", "quadratic problems have a fixed metric");
  }
  c.reject_unused();
  return job;
}

int cmd_solve(const std::string& config_path, std::ostream& out, std::ostream& err) {
  try {
    const SolveJob job = parse_solve_job(Config::load(config_path));
    BuiltProblem b = build_problem(job.problem, job.solver.method);
    SolveResult r;
    try {
      r = run(b.spec, b.u0, job.solver, *b.provider);
    } catch (const DivergenceError& e) {
      if (!job.trace_path.empty()) e.trace().write_csv(job.trace_path, job.wall_time);
      err << "error: " << e.what() << "\n";
      return exit_error;
    }
    if (!job.trace_path.empty()) r.trace.write_csv(job.trace_path, job.wall_time);
    const IterationRecord& last = r.trace.records.back();
    out << to_string(job.solver.method) << " on " << b.label << ": "
        << (r.status == RunStatus::converged ? "converged" : "iteration limit") << " after " << r.trace.iterations()
        << " iterations (" << r.stop_reason << ")\n";
    out << "  grad_norm_M=" << num(last.grad_norm_m) << " constraint_res=" << num(last.constraint_res)
        << " f=" << num(last.f, 12) << " alpha=" << num(r.alpha) << " tau=" << num(job.solver.tau);
    if (job.solver.mg_schedule) out << " avg_wcycles=" << num(r.trace.average_cycles(), 4);
    out << "\n";
    if (b.quadratic) {
      const Vector u_star = kkt_oracle(*b.quadratic);
      out << "  oracle: |u - u*|/|u*| = " << num((r.u - u_star).norm() / std::max(u_star.norm(), 1e-300), 3);
      if (b.quadratic_metric) {
        const Vector u_phi = quadratic_fixed_point(*b.quadratic, *b.quadratic_metric, r.alpha);
        out << ", |u - u*_phi|/|u*_phi| = " << num((r.u - u_phi).norm() / std::max(u_phi.norm(), 1e-300), 3);
      }
      out << "\n";
    }
    if (b.pde && b.pde->exact_flux) {
      out << "  flux L2 error against the exact solution: " << num(flux_l2_error(*b.pde, b.spec.physical(r.u)), 4)
          << "\n";
    }
    if (!job.trace_path.empty()) out << "  trace: " << job.trace_path << "\n";
    return r.status == RunStatus::converged ? exit_ok : exit_not_converged;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_error;
  }
}

int cmd_bench(const std::string& config_path, std::ostream& out, std::ostream& err) {
  BenchReport rep;
  try {
    const BenchConfig cfg = parse_bench_config(Config::load(config_path));
    const int threads = bench_threads_from_env();
    out << "bench: " << cfg.methods.size() << " methods x " << cfg.grids.size() << " "
        << (cfg.problem.kind == ProblemKind::pde ? "grids" : "dims") << ", " << threads << " thread"
        << (threads == 1 ? "" : "s") << "\n";
    rep = run_bench(cfg, threads);
    rep.print_table(out);
    if (!cfg.output_dir.empty()) out << "report: " << cfg.output_dir << "/bench.csv\n";
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_error;
  }
  for (const auto& r : rep.rows) {
    if (r.status == "FAILED") err << "FAILED " << to_string(r.method) << " grid " << r.grid << ": " << r.error << "\n";
  }
  return rep.all_converged() ? exit_ok : exit_not_converged;
}

int cmd_check(const std::string& scope_name, std::ostream& out, std::ostream& err) {
  CheckScope scope;
  try {
    scope = parse_check_scope(scope_name);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_error;
  }
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<SuiteResult> results;
  try {
    results = run_check_scope(scope, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_error;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::vector<std::string> failing;
  for (const auto& r : results) {
    for (const auto& c : r.report.checks) {
      if (c.max_violation > r.report.tolerance) failing.push_back(r.name + "/" + c.name);
    }
  }
  out << "check " << to_string(scope) << ": " << results.size() << " suites, " << (failing.empty() ? "all passed" : std::to_string(failing.size()) + " failing inequalities")
      << " in " << std::fixed << std::setprecision(1) << secs << " s\n"
      << std::defaultfloat;
  for (const auto& f : failing) err << "FAILED " << f << "\n";
  return failing.empty() ? exit_ok : exit_check_failed;
}

int cmd_flow(const std::string& config_path, std::ostream& out, std::ostream& err) {
  FlowJob job;
  try {
    job = parse_flow_job(Config::load(config_path));
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_error;
  }
  try {
    BuiltProblem b = build_problem(job.problem, Method::ippgd);
    std::optional<FlowLyapunov> lyap;
    double omega = 0.0;
    if (b.quadratic) {
      const auto [mu, l] = *b.spec.mu_l;
      const double alpha = job.flow.alpha > 0.0 ? job.flow.alpha : 1.0 / l;
      const TheoryConstants tc = TheoryConstants::from_mu_l(mu, l);
      const ContinuousBounds cb = continuous_bounds(tc, alpha);
      omega = cb.omega;
      const MetricSet star = b.quadratic_metric
                                 ? *b.quadratic_metric
                                 : prescribed_inexactness_metric(DenseMatrix::Identity(b.spec.dim, b.spec.dim),
                                                                 b.quadratic->bc, 0.0, job.problem.seed);
      lyap = FlowLyapunov{LyapunovAnchors::for_quadratic(*b.quadratic, star, alpha),
                          job.lambda > 0.0 ? job.lambda : cb.lambda};
      b.u0 = random_vector(b.spec.dim, job.start_seed);
    }
    FlowConfig fc = job.flow;
    if (b.quadratic_metric) fc.calibrate = false;
    FlowResult flow;
    try {
      flow = integrate_flow(b.spec, b.u0, fc, *b.provider, lyap);
    } catch (const FlowBlowUp& e) {
      const std::string base = job.trajectory_path.empty() ? std::string("flow") : job.trajectory_path;
      if (!job.trajectory_path.empty()) e.partial().write_csv(job.trajectory_path);
      write_vector_text(base + ".last_state.txt", e.partial().u);
      err << "error: " << e.what() << "; last finite state written to " << base << ".last_state.txt\n";
      return exit_error;
    }
    if (!job.trajectory_path.empty()) flow.write_csv(job.trajectory_path);
    out << to_string(fc.integrator) << " flow on " << b.label << ": " << flow.steps << " steps to t = "
        << num(flow.samples.back().t) << ", alpha = " << num(flow.alpha) << "\n";
    out << "  constraint_res(end) = " << num(flow.samples.back().constraint_res, 3) << "\n";
    if (lyap) {
      const double rate = flow.fitted_rate();
      const CheckReport rep = flow_decay_check(flow, omega, lyap->lambda_weight, flow.alpha);
      out << "  lambda = " << num(lyap->lambda_weight, 4) << ", E(end)/E(0) = "
          << num(flow.samples.back().e / flow.samples.front().e, 3) << "\n";
      out << "  fitted rate " << num(rate, 4) << " vs theoretical omega " << num(omega, 4) << " (ratio "
          << num(rate / omega, 4) << ")\n";
      out << "  exponential bound and monotonicity: " << (rep.passed() ? "hold" : "violated (" + rep.worst() + ")")
          << "\n";
    }
    if (!job.trajectory_path.empty()) out << "  trajectory: " << job.trajectory_path << "\n";
    return exit_ok;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_error;
  }
}

}  // namespace ippgd
