#include "ippgd/problems.hpp"

#include "ippgd/io.hpp"

#include <Eigen/LU>
#include <Eigen/QR>

#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

namespace ippgd {

void ProblemSpec::validate() const {
  if (dim <= 0) throw Error("problem '" + name + "': dimension must be positive");
  if (!eval_f || !eval_grad) throw Error("problem '" + name + "': objective and gradient are required");
  if (constraint_b.cols() != dim) throw DimensionError("problem '" + name + "': constraint has wrong column count");
  if (reference_metric.empty() || reference_metric.rows() != dim)
    throw DimensionError("problem '" + name + "': reference metric missing or wrong size");
  if (!reference_metric.has_inverse()) throw Error("problem '" + name + "': reference metric needs an inverse");
  if (shift.size() != 0 && shift.size() != dim) throw DimensionError("problem '" + name + "': shift has wrong size");
}

double bregman(const ProblemSpec& problem, const Vector& u, const Vector& v) {
  const Vector g = problem.eval_grad(v);
  if (g.size() != u.size()) throw DimensionError("bregman: gradient size mismatch");
  return problem.eval_f(u) - problem.eval_f(v) - g.dot(u - v);
}

CheckReport gradient_consistency(const ProblemSpec& problem, int points, std::uint64_t seed, double tol,
                                 double point_scale) {
  CheckReport rep;
  rep.tolerance = tol;
  auto& c = rep.add("finite_difference");
  for (int k = 0; k < points; ++k) {
    const Vector u = point_scale * random_vector(problem.dim, seed * 31 + 2 * static_cast<std::uint64_t>(k));
    Vector d = random_vector(problem.dim, seed * 31 + 2 * static_cast<std::uint64_t>(k) + 1);
    d /= d.norm();
    const double h = 1e-5 * std::max(1.0, u.norm());
    const double fd = (problem.eval_f(u + h * d) - problem.eval_f(u - h * d)) / (2.0 * h);
    const Vector g = problem.eval_grad(u);
    const double gd = g.dot(d);
    const double scale = std::max(std::abs(gd), 1e-8 * g.norm());
    c.record(std::abs(fd - gd) / std::max(scale, 1e-300), 0.0, k, 1.0);
  }
  return rep;
}

QuadraticInstance gen_quadratic(Index dim, Index constraint_rows, double kappa_target, std::uint64_t seed) {
  if (constraint_rows >= dim) throw Error("gen_quadratic: need fewer constraint rows than unknowns");
  if (kappa_target < 1.0) throw Error("gen_quadratic: kappa_target must be >= 1");
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> dist;
  auto gaussian = [&](Index r, Index c) {
    DenseMatrix m(r, c);
    for (Index j = 0; j < c; ++j)
      for (Index i = 0; i < r; ++i) m(i, j) = dist(gen);
    return m;
  };
  QuadraticInstance q;
  q.seed = seed;
  q.kappa_target = kappa_target;
  if (kappa_target == 1.0) {
    q.a = DenseMatrix::Identity(dim, dim);
    gaussian(dim, dim);  // keep the stream aligned with the general case
  } else {
    const DenseMatrix g = gaussian(dim, dim);
    const DenseMatrix qm = Eigen::HouseholderQR<DenseMatrix>(g).householderQ() * DenseMatrix::Identity(dim, dim);
    Vector lam(dim);
    for (Index i = 0; i < dim; ++i) {
      const double t = dim == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(dim - 1);
      lam[i] = std::pow(kappa_target, t);
    }
    q.a = qm * lam.asDiagonal() * qm.transpose();
    q.a = 0.5 * (q.a + q.a.transpose()).eval();
  }
  q.bc = gaussian(constraint_rows, dim);
  q.b = gaussian(dim, 1).col(0);
  return q;
}

ProblemSpec quadratic_problem(const QuadraticInstance& q, const DenseMatrix& m) {
  auto inst = std::make_shared<const QuadraticInstance>(q);
  ProblemSpec p;
  p.name = "quadratic";
  p.dim = q.dim();
  p.eval_f = [inst](const Vector& u) { return inst->f(u); };
  p.eval_grad = [inst](const Vector& u) { return inst->grad(u); };
  p.constraint_b = LinearOperator::dense(q.bc);
  const LinearOperator metric = m.size() == 0 ? LinearOperator::identity(q.dim()) : LinearOperator::dense_spd(m);
  p.reference_metric = metric;
  p.metric_builder = [metric](const Vector&) { return metric; };
  p.hessian = LinearOperator::dense_spd(q.a);
  const LoewnerInterval iv = quadratic_constants(q, metric);
  p.mu_l = std::make_pair(iv.c1, iv.c2);
  return p;
}

LoewnerInterval quadratic_constants(const QuadraticInstance& q, const LinearOperator& m) {
  return loewner_bounds(m, LinearOperator::dense_spd(q.a), 1e-12);
}

Vector kkt_oracle(const QuadraticInstance& q) {
  const Index n = q.dim(), r = q.bc.rows();
  DenseMatrix k = DenseMatrix::Zero(n + r, n + r);
  k.topLeftCorner(n, n) = q.a;
  k.topRightCorner(n, r) = q.bc.transpose();
  k.bottomLeftCorner(r, n) = q.bc;
  Vector rhs = Vector::Zero(n + r);
  rhs.head(n) = -q.b;
  Eigen::FullPivLU<DenseMatrix> lu(k);
  if (lu.rank() < n + r) throw Error("kkt_oracle: singular KKT matrix");
  return lu.solve(rhs).head(n);
}

void save_instance(const QuadraticInstance& q, const std::string& prefix) {
  write_matrix_market(prefix + "_A.mtx", q.a);
  write_matrix_market(prefix + "_B.mtx", q.bc);
  std::ofstream out(prefix + "_b.txt");
  if (!out) throw Error("cannot write " + prefix + "_b.txt");
  out << "# seed " << q.seed << '\n';
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", q.kappa_target);
  out << "# kappa " << buf << '\n';
  for (Index i = 0; i < q.b.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", q.b[i]);
    out << buf << '\n';
  }
}

QuadraticInstance load_instance(const std::string& prefix) {
  QuadraticInstance q;
  q.a = read_matrix_market_dense(prefix + "_A.mtx");
  q.bc = read_matrix_market_dense(prefix + "_B.mtx");
  const std::string path = prefix + "_b.txt";
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string hash, key;
    ss >> hash >> key;
    if (hash != "#") continue;
    if (key == "seed") ss >> q.seed;
    if (key == "kappa") ss >> q.kappa_target;
  }
  q.b = read_vector_text(path);
  if (q.a.rows() != q.a.cols() || q.b.size() != q.a.rows() || q.bc.cols() != q.a.rows())
    throw DimensionError("load_instance: inconsistent sizes in " + prefix);
  return q;
}

Vector phi(const ProblemSpec& problem, const InexactProjector& p, double alpha, const Vector& u) {
  return p.project(u - alpha * p.metric().m.solve(problem.eval_grad(u)));
}

FixedPointResult fixed_point_solve(const ProblemSpec& problem, const MetricSet& metric, double alpha, double tol,
                                   const FixedPointOptions& opts) {
  double mu = opts.mu.value_or(0.0), l = opts.l.value_or(0.0);
  if (!opts.mu || !opts.l) {
    if (!problem.hessian) throw Error("fixed_point_solve: constants not given and problem has no Hessian");
    const LoewnerInterval iv = loewner_bounds(metric.m, *problem.hessian, 1e-12);
    if (!opts.mu) mu = iv.c1;
    if (!opts.l) l = iv.c2;
  }
  if (!(alpha > 0.0) || !(alpha < 2.0 / l)) {
    throw Error("fixed_point_solve: alpha must lie in (0, 2/L) = (0, " + std::to_string(2.0 / l) + ")");
  }
  const InexactProjector p(metric, problem.constraint_b);
  FixedPointResult res;
  res.contraction_bound = std::max(std::abs(1.0 - alpha * l), std::abs(1.0 - alpha * mu));
  Vector u = opts.u0 ? *opts.u0 : Vector::Zero(problem.dim);
  Vector next = phi(problem, p, alpha, u);
  double step = norm_m(metric.m, next - u);
  const double d0 = std::max(step, tol);
  int cap = opts.max_iterations;
  if (cap <= 0) {
    const double ratio = std::max(res.contraction_bound, 1e-3);
    cap = static_cast<int>(std::ceil(10.0 * std::log(std::max(d0 / tol, 2.0)) / std::log(1.0 / ratio))) + 10;
  }
  u = next;
  res.iterations = 1;
  double prev_step = step;
  while (step > tol) {
    if (res.iterations >= cap) {
      throw NonConvergence("fixed_point_solve: iteration cap " + std::to_string(cap) + " reached", step, step);
    }
    next = phi(problem, p, alpha, u);
    step = norm_m(metric.m, next - u);
    u = next;
    ++res.iterations;
    // Ratios of steps near rounding level carry no information.
    if (prev_step > 1e-13 * std::max(1.0, norm_m(metric.m, u))) {
      res.contraction_ratio_observed = std::max(res.contraction_ratio_observed, step / prev_step);
    }
    prev_step = step;
  }
  res.u_phi_star = u;
  res.final_step = step;
  if (res.contraction_ratio_observed > 1.1 * res.contraction_bound) {
    res.warning = "observed contraction ratio exceeds the theoretical bound by more than 10%";
  }
  return res;
}

Vector quadratic_fixed_point(const QuadraticInstance& q, const MetricSet& metric, double alpha) {
  const Index n = q.dim();
  const DenseMatrix mm = metric.m.to_dense();
  const DenseMatrix mi = mm.inverse();
  DenseMatrix pt = DenseMatrix::Identity(n, n);
  if (q.bc.rows() > 0) pt -= mi * q.bc.transpose() * metric.schur_tilde_inverse.to_dense() * q.bc;
  const DenseMatrix lhs = DenseMatrix::Identity(n, n) - pt * (DenseMatrix::Identity(n, n) - alpha * mi * q.a);
  const Vector rhs = -alpha * pt * mi * q.b;
  return Eigen::FullPivLU<DenseMatrix>(lhs).solve(rhs);
}

UDiffReport u_diff_bound_check(const QuadraticInstance& q, const MetricSet& metric, double alpha, double tol) {
  UDiffReport rep;
  rep.checks.tolerance = tol;
  const LinearOperator& m = metric.m;
  const LoewnerInterval iv = quadratic_constants(q, m);
  rep.mu = iv.c1;
  rep.l = iv.c2;
  rep.kappa = rep.l / rep.mu;
  rep.alpha = alpha;
  const InexactProjector p(metric, LinearOperator::dense(q.bc));
  rep.delta_star = estimate_delta(p, 1e-9, DeltaMethod::dense).delta;
  if (!(alpha > 0.0) || alpha > 2.0 / rep.l) throw Error("u_diff_bound_check: alpha must lie in (0, 2/L]");

  const Vector us = kkt_oracle(q);
  const Vector uphi = quadratic_fixed_point(q, metric, alpha);
  const double g_star = norm_m_inverse(m, q.grad(us));
  const Vector eta = us - uphi;
  rep.distance = norm_m(m, eta);
  // Absolute rounding allowance of the dense solves, relative to the size of
  // the anchors. At delta* = 0 both sides are rounding noise.
  const double floor = 1e-12 * std::max({norm_m(m, us), g_star, 1.0});
  auto slack = [](double lhs, double rhs) { return lhs > 0.0 ? rhs / lhs : std::numeric_limits<double>::infinity(); };

  const double lhs_proj = norm_m(m, eta - p.project(eta));
  const double rhs_proj = 2.0 * alpha * rep.delta_star * g_star;
  rep.checks.add("proj_residual").record(lhs_proj, rhs_proj + floor, 0, floor);
  rep.slack_proj_residual = slack(lhs_proj, rhs_proj);

  rep.preconditions_met = alpha <= (1.0 / rep.l) * (1.0 + 1e-12) && rep.delta_star <= 1.0 / (4.0 * rep.kappa) + 1e-12;
  if (!rep.preconditions_met) return rep;
  const double sa = std::sqrt(alpha);
  const double rhs_dist = 3.0 * std::sqrt(rep.kappa) / std::sqrt(rep.mu) * rep.delta_star * sa * g_star;
  rep.checks.add("distance").record(rep.distance, rhs_dist + floor, 0, floor);
  rep.slack_distance = slack(rep.distance, rhs_dist);
  const Vector gphi = q.grad(uphi);
  const double lhs_gap = norm_m_inverse(m, gphi - q.grad(us));
  const double rhs_gap = 3.0 * std::sqrt(rep.l) * rep.kappa * rep.delta_star * sa * g_star;
  rep.checks.add("gradient_gap").record(lhs_gap, rhs_gap + floor, 0, floor);
  rep.slack_gradient_gap = slack(lhs_gap, rhs_gap);
  const double lhs_size = norm_m_inverse(m, gphi);
  rep.checks.add("gradient_size").record(lhs_size, 2.0 * g_star + floor, 0, floor);
  rep.slack_gradient_size = slack(lhs_size, 2.0 * g_star);
  return rep;
}

}  // namespace ippgd
