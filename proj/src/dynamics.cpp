#include "ippgd/dynamics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace ippgd {

LyapunovAnchors LyapunovAnchors::for_quadratic(const QuadraticInstance& q, const MetricSet& star, double alpha) {
  return LyapunovAnchors{kkt_oracle(q), quadratic_fixed_point(q, star, alpha),
                         InexactProjector(star, LinearOperator::dense(q.bc))};
}

LyapunovState lyapunov_eval(const ProblemSpec& problem, const Vector& u, const LyapunovAnchors& anchors,
                            double lambda_weight, double alpha) {
  const Index n = u.size();
  if (anchors.u_star.size() != n || anchors.u_phi_star.size() != n || anchors.m_star().rows() != n) {
    throw DimensionError("Lyapunov anchors do not match the iterate dimension");
  }
  LyapunovState s;
  s.lambda_weight = lambda_weight;
  s.alpha = alpha;
  s.e1 = bregman(problem, u, anchors.u_phi_star);
  const Vector d = u - anchors.u_phi_star;
  const double r = norm_m(anchors.m_star(), Vector(d - anchors.projector_star.project(d)));
  s.e2 = 0.5 * r * r;
  s.e_total = lambda_weight * alpha * s.e1 + s.e2;
  return s;
}

std::function<LyapunovValues(const Vector&)> lyapunov_hook(const ProblemSpec& problem, LyapunovAnchors anchors,
                                                           double lambda_weight, double alpha) {
  return [problem, anchors = std::move(anchors), lambda_weight, alpha](const Vector& u) {
    const LyapunovState s = lyapunov_eval(problem, u, anchors, lambda_weight, alpha);
    return LyapunovValues{s.e1, s.e2, s.e_total};
  };
}

std::string to_string(Integrator i) { return i == Integrator::rk4 ? "rk4" : "forward-euler"; }

Integrator parse_integrator(const std::string& s) {
  std::string l = s;
  for (char& c : l) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (l == "rk4") return Integrator::rk4;
  if (l == "forward-euler" || l == "forward_euler" || l == "euler") return Integrator::forward_euler;
  throw Error("unknown integrator '" + s + "' (expected rk4 or forward-euler)");
}

void FlowConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw Error("alpha must be positive (0 selects 1/L)");
  if (!(dt > 0.0)) throw Error("dt must be positive");
  if (integrator == Integrator::rk4 && dt > 0.1) throw Error("dt must be <= 0.1 for rk4");
  if (integrator == Integrator::forward_euler && dt > 1.0) throw Error("dt must be <= 1 for forward-euler");
  if (!(t_end > 0.0)) throw Error("t_end must be positive");
  if (n_mg < 0) throw Error("n_mg must be >= 0");
  if (record_every < 1) throw Error("record_every must be >= 1");
  if (metric_policy == MetricPolicy::every_m) throw Error("flow metric policy must be fixed or every-iteration");
}

void FlowResult::write_csv(std::ostream& out) const {
  out << "t,E1,E2,E,constraint_res\n";
  char buf[256];
  for (const auto& s : samples) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g\n", s.t, s.e1, s.e2, s.e, s.constraint_res);
    out << buf;
  }
}

void FlowResult::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  write_csv(out);
}

double FlowResult::fitted_rate(double floor) const {
  if (samples.empty() || !(samples.front().e > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  const double cut = floor * samples.front().e;
  double n = 0, st = 0, sy = 0, stt = 0, sty = 0;
  for (const auto& s : samples) {
    if (!(s.e >= cut) || !(s.e > 0.0)) continue;
    const double y = std::log(s.e);
    n += 1;
    st += s.t;
    sy += y;
    stt += s.t * s.t;
    sty += s.t * y;
  }
  const double den = n * stt - st * st;
  if (n < 2 || !(den > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return -(n * sty - st * sy) / den;
}

FlowResult integrate_flow(const ProblemSpec& problem, const Vector& u0, const FlowConfig& cfg,
                          SchurProvider& provider, const std::optional<FlowLyapunov>& lyapunov) {
  cfg.validate();
  problem.validate();
  if (u0.size() != problem.dim) throw DimensionError("u0 has the wrong dimension");
  if (!all_finite(u0)) throw Error("u0 is not finite");
  const bool variable = cfg.metric_policy == MetricPolicy::every_iteration;
  if (variable && !problem.metric_builder) throw Error("variable metric policy needs a metric builder");

  FlowResult res;
  if (cfg.alpha > 0.0) {
    res.alpha = cfg.alpha;
  } else {
    if (!problem.mu_l) throw Error("alpha not given and the problem has no Lipschitz constant");
    res.alpha = 1.0 / problem.mu_l->second;
  }
  const double alpha = res.alpha;

  std::optional<InexactProjector> fixed_p;
  if (!variable) {
    provider.set_metric(problem.reference_metric);
    fixed_p = make_projector(problem, problem.reference_metric, provider, cfg.n_mg, cfg.calibrate);
  }
  // phi(u), computed exactly as the solver does.
  auto phi_at = [&](const Vector& u) {
    std::optional<InexactProjector> local;
    if (variable) {
      const LinearOperator m = problem.metric_builder(u);
      provider.set_metric(m);
      local = make_projector(problem, m, provider, cfg.n_mg, cfg.calibrate);
    }
    const InexactProjector& p = variable ? *local : *fixed_p;
    const Vector minv_g = p.metric().m.solve(problem.eval_grad(u));
    return p.project(Vector(u - alpha * minv_g));
  };
  auto record = [&](double t, const Vector& u) {
    FlowSample s;
    s.t = t;
    if (lyapunov) {
      const LyapunovState ls = lyapunov_eval(problem, u, lyapunov->anchors, lyapunov->lambda_weight, alpha);
      s.e1 = ls.e1;
      s.e2 = ls.e2;
      s.e = ls.e_total;
    }
    s.constraint_res = problem.constraint_b.apply(u).norm();
    res.samples.push_back(s);
  };

  long long steps = std::llround(cfg.t_end / cfg.dt);
  if (std::abs(static_cast<double>(steps) * cfg.dt - cfg.t_end) > 1e-9 * cfg.t_end) {
    steps = static_cast<long long>(std::ceil(cfg.t_end / cfg.dt));
  }
  Vector u = u0;
  record(0.0, u);
  if (cfg.keep_states) res.states.push_back(u);
  const double h = cfg.dt;
  for (long long k = 1; k <= steps; ++k) {
    Vector next;
    if (cfg.integrator == Integrator::forward_euler) {
      next = relaxed_update(u, phi_at(u), h);
    } else {
      const Vector k1 = phi_at(u) - u;
      const Vector y2 = u + 0.5 * h * k1;
      const Vector k2 = phi_at(y2) - y2;
      const Vector y3 = u + 0.5 * h * k2;
      const Vector k3 = phi_at(y3) - y3;
      const Vector y4 = u + h * k3;
      const Vector k4 = phi_at(y4) - y4;
      next = u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    if (!all_finite(next) || next.norm() > 1e12) {
      res.u = u;
      res.steps = static_cast<int>(k - 1);
      throw FlowBlowUp("flow blew up at t = " + std::to_string(static_cast<double>(k) * h), std::move(res));
    }
    u = std::move(next);
    res.steps = static_cast<int>(k);
    if (cfg.keep_states) res.states.push_back(u);
    if (k % cfg.record_every == 0 || k == steps) record(static_cast<double>(k) * h, u);
  }
  res.u = std::move(u);
  return res;
}

SlpReport slp_check_discrete(const IterationTrace& trace, const TheoryConstants& tc, const SlpOptions& opts) {
  if (!(opts.tau > 0.0 && opts.tau <= 1.0)) throw Error("tau must be in (0,1]");
  if (!(opts.alpha > 0.0)) throw Error("alpha must be positive");
  if (!(opts.lambda_weight > 0.0)) throw Error("lambda_weight must be positive");
  const auto& r = trace.records;
  if (r.empty() || std::isnan(r.front().e)) throw Error("trace carries no Lyapunov values");
  SlpReport rep;
  rep.omega = tc.omega_k(opts.alpha);
  rep.product_factor = product_bound_factor(tc.kappa, opts.tau);
  const double e0 = r.front().e;
  const double slack = opts.slack_rel * e0;
  const double start = r.front().e1 + r.front().e2 / (opts.lambda_weight * opts.alpha);
  auto& dec = rep.checks.add("slp_decrease");
  auto& prod = rep.checks.add("slp_product");
  auto& nonneg = rep.checks.add("slp_nonneg");
  double factor = 1.0;
  for (std::size_t k = 0; k < r.size(); ++k) {
    const int kk = r[k].k;
    // E1 is a difference of f values and carries rounding of f size.
    nonneg.record(-std::min(r[k].e1, r[k].e2), 1e-14 * e0 + 16.0 * std::numeric_limits<double>::epsilon() * std::abs(r[k].f), kk);
    prod.record(r[k].e, factor * start, kk);
    factor *= rep.product_factor;
    if (k + 1 < r.size()) {
      const double lhs = (r[k + 1].e - r[k].e) / opts.tau;
      const double rhs = -rep.omega * r[k].e + slack;
      dec.record(lhs, rhs, kk);
      if (lhs > rhs && rep.first_violation < 0) rep.first_violation = kk;
    }
  }
  if (opts.feasible_start) {
    rep.checks.add("feasible_start")
        .record(r.front().e2 / (opts.lambda_weight * opts.alpha), feasible_start_bound(tc, opts.alpha), 0);
  }
  return rep;
}

CheckReport flow_decay_check(const FlowResult& flow, double omega, double lambda_weight, double alpha,
                             double slack_rel) {
  if (flow.samples.empty() || std::isnan(flow.samples.front().e)) throw Error("flow carries no Lyapunov values");
  CheckReport rep;
  const FlowSample& s0 = flow.samples.front();
  const double start = s0.e1 + s0.e2 / (lambda_weight * alpha);
  const double slack = slack_rel * s0.e;
  auto& bound = rep.add("flow_exp_bound");
  auto& mono = rep.add("flow_monotone");
  for (std::size_t i = 0; i < flow.samples.size(); ++i) {
    const FlowSample& s = flow.samples[i];
    bound.record(s.e, std::exp(-omega * s.t) * start + slack, static_cast<int>(i));
    if (i > 0) mono.record(s.e, flow.samples[i - 1].e + slack, static_cast<int>(i));
  }
  return rep;
}

RunHooks SnapshotRecorder::hooks(std::function<LyapunovValues(const Vector&)> lyapunov) {
  auto latest = std::make_shared<std::optional<MetricSet>>();
  auto counter = std::make_shared<int>(0);
  RunHooks h;
  h.metric_observer = [latest](int, const MetricSet& m) { *latest = m; };
  h.lyapunov = [latest, counter, store = snapshots_, every = every_, lyapunov](const Vector& u) {
    const int k = (*counter)++;
    if (k % every == 0 && latest->has_value()) store->push_back(MetricSnapshot{k, u, **latest});
    return lyapunov ? lyapunov(u) : LyapunovValues{std::nan(""), std::nan(""), std::nan("")};
  };
  return h;
}

double loewner_deviation(const LinearOperator& q, const LinearOperator& r, double tol) {
  const LoewnerInterval iv = loewner_bounds(q, r, tol);
  return std::max({iv.c2 - 1.0, 1.0 / iv.c1 - 1.0, 0.0});
}

AuditReport assumption_audit(const std::vector<MetricSnapshot>& snapshots, const LyapunovAnchors& anchors,
                             double mu_star, const AuditOptions& opts) {
  if (!(mu_star > 0.0)) throw Error("mu_star must be positive");
  AuditReport rep;
  const MetricSet& star = anchors.projector_star.metric();
  const LinearOperator& b = anchors.projector_star.constraint();
  std::optional<ExactProjector> exact_star;
  if (!opts.metric_only) exact_star.emplace(star.m, b);
  std::vector<double> theta_km;
  for (const auto& s : snapshots) {
    rep.k.push_back(s.k);
    rep.theta.push_back(loewner_deviation(star.m, s.metric.m, opts.tol));
    rep.distance.push_back(norm_m(star.m, Vector(s.u - anchors.u_phi_star)));
    double tk = rep.theta.back();
    if (!opts.metric_only) {
      rep.theta_tilde.push_back(loewner_deviation(star.schur_tilde_inverse, s.metric.schur_tilde_inverse, opts.tol));
      const SpectralEstimate e = schur_ratio_extremes(InexactProjector(s.metric, b), opts.tol);
      rep.delta.push_back(std::max(0.0, 1.0 - e.lambda_min));
      tk = std::max(tk, rep.theta_tilde.back());
    }
    theta_km.push_back(tk);
    rep.theta_m = std::max(rep.theta_m, tk);
  }
  const double dmax = rep.distance.empty() ? 0.0 : *std::max_element(rep.distance.begin(), rep.distance.end());
  for (std::size_t i = 0; i < theta_km.size(); ++i) {
    if (rep.distance[i] > 1e-12 * dmax && rep.distance[i] > 0.0) {
      rep.k_theta = std::max(rep.k_theta, theta_km[i] / (std::sqrt(mu_star) * rep.distance[i]));
    }
  }
  if (opts.metric_only) {
    rep.not_assessed = {"theta_tilde", "delta", "K_S"};
    return rep;
  }
  // (S~_k^{-1} - S_k^{-1}) - (S~*^{-1} - S*^{-1}) against Theta_{k,m} delta_k S*^{-1}.
  const Index rows = b.rows();
  for (std::size_t i = 0; i < snapshots.size(); ++i) {
    const double scale = theta_km[i] * rep.delta[i];
    if (!(scale > 0.0)) continue;
    const ExactProjector exact_k(snapshots[i].metric.m, b);
    for (int j = 0; j < opts.ks_samples; ++j) {
      const Vector x = random_vector(rows, opts.seed + 7919 * i + j);
      const Vector d = snapshots[i].metric.schur_tilde_inverse.apply(x) - exact_k.schur_solve(x) -
                       star.schur_tilde_inverse.apply(x) + exact_star->schur_solve(x);
      const double den = scale * x.dot(exact_star->schur_solve(x));
      if (den > 0.0) rep.k_s_lower = std::max(rep.k_s_lower, std::abs(x.dot(d)) / den);
    }
  }
  return rep;
}

}  // namespace ippgd
