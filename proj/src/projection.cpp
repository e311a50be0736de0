#include "ippgd/projection.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>

namespace ippgd {

LinearOperator schur_operator(const LinearOperator& m, const LinearOperator& b) {
  if (b.cols() != m.rows()) throw DimensionError("schur_operator: B and M dimensions differ");
  auto act = [m, b](const Vector& in, Vector& out) { out = b.apply(m.solve(b.apply_transpose(in))); };
  return LinearOperator(b.rows(), b.rows(), act, {true, false});
}

ExactProjector::ExactProjector(LinearOperator m, LinearOperator b, ExactProjectorOptions opts)
    : m_(std::move(m)), b_(std::move(b)), opts_(std::move(opts)) {
  if (b_.cols() != m_.rows()) throw DimensionError("ExactProjector: B and M dimensions differ");
  if (!m_.has_inverse()) throw Error("ExactProjector: metric needs an inverse action");
  s_ = schur_operator(m_, b_);
  const Index r = b_.rows();
  if (r == 0) {
    degenerate_ = true;
    return;
  }
  if (r < opts_.dense_limit) {
    DenseMatrix s = s_.to_dense();
    s = 0.5 * (s + s.transpose()).eval();
    if (s.norm() == 0.0) {
      degenerate_ = true;
      return;
    }
    auto llt = std::make_shared<Eigen::LLT<DenseMatrix>>(s);
    if (llt->info() != Eigen::Success) throw Error("ExactProjector: Schur complement is not SPD (B rank deficient?)");
    dense_ = llt;
  } else if (b_.apply_transpose(random_vector(r, 3)).norm() == 0.0) {
    degenerate_ = true;
  }
}

Vector ExactProjector::schur_solve(const Vector& rhs) const {
  if (degenerate_) return Vector::Zero(rhs.size());
  if (dense_) return dense_->solve(rhs);
  const LinearOperator* pc = opts_.preconditioner.empty() ? nullptr : &opts_.preconditioner;
  return conjugate_gradient(s_, rhs, opts_.cg_tol, opts_.cg_max_iterations, pc).x;
}

Vector ExactProjector::project(const Vector& u) const {
  if (degenerate_) return u;
  return u - m_.solve(b_.apply_transpose(schur_solve(b_.apply(u))));
}

Vector ExactProjector::project_transpose(const Vector& u) const {
  if (degenerate_) return u;
  return u - b_.apply_transpose(schur_solve(b_.apply(m_.solve(u))));
}

LinearOperator ExactProjector::schur_inverse() const {
  ExactProjector self = *this;
  auto act = [self](const Vector& in, Vector& out) { out = self.schur_solve(in); };
  return LinearOperator(b_.rows(), b_.rows(), act, {true, true});
}

InexactProjector::InexactProjector(MetricSet metric, LinearOperator b) : metric_(std::move(metric)), b_(std::move(b)) {
  if (b_.cols() != metric_.m.rows()) throw DimensionError("InexactProjector: B and M dimensions differ");
  if (!metric_.m.has_inverse()) throw Error("InexactProjector: metric needs an inverse action");
  if (metric_.schur_tilde_inverse.rows() != b_.rows())
    throw DimensionError("InexactProjector: S~^{-1} and B dimensions differ");
}

Vector InexactProjector::project(const Vector& u) const {
  if (b_.rows() == 0) return u;
  return u - metric_.m.solve(b_.apply_transpose(metric_.schur_tilde_inverse.apply(b_.apply(u))));
}

Vector InexactProjector::project_transpose(const Vector& u) const {
  if (b_.rows() == 0) return u;
  return u - b_.apply_transpose(metric_.schur_tilde_inverse.apply(b_.apply(metric_.m.solve(u))));
}

InexactProjector InexactProjector::scaled(double c) const {
  MetricSet ms = metric_;
  ms.schur_tilde_inverse = metric_.schur_tilde_inverse.scaled(c);
  return InexactProjector(ms, b_);
}

namespace {

SpectralEstimate dense_ratio(const InexactProjector& p) {
  const LinearOperator s = schur_operator(p.metric().m, p.constraint());
  DenseMatrix sd = s.to_dense();
  sd = 0.5 * (sd + sd.transpose()).eval();
  DenseMatrix ti = p.metric().schur_tilde_inverse.to_dense();
  ti = 0.5 * (ti + ti.transpose()).eval();
  Eigen::LLT<DenseMatrix> llt(sd);
  if (llt.info() != Eigen::Success) throw Error("estimate_delta: Schur complement is not SPD");
  const DenseMatrix l = llt.matrixL();
  const DenseMatrix k = l.transpose() * ti * l;
  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(0.5 * (k + k.transpose()), Eigen::EigenvaluesOnly);
  SpectralEstimate est;
  est.lambda_min = es.eigenvalues()[0];
  est.lambda_max = es.eigenvalues()[es.eigenvalues().size() - 1];
  est.iterations = 1;
  return est;
}

bool trivially_exact(const InexactProjector& p) {
  if (p.constraint().rows() == 0) return true;
  return p.constraint().apply_transpose(random_vector(p.constraint().rows(), 3)).norm() == 0.0;
}

}  // namespace

SpectralEstimate schur_ratio_extremes(const InexactProjector& p, double tol, int max_iterations) {
  const LinearOperator s = schur_operator(p.metric().m, p.constraint());
  const LinearOperator ti = p.metric().schur_tilde_inverse;
  SpectralOptions opts;
  opts.tol = tol;
  opts.max_iterations = max_iterations;
  opts.throw_on_failure = false;
  return generalized_extremes([ti](const Vector& in, Vector& out) { out = ti.apply(in); }, s, opts);
}

namespace {

SpectralEstimate accepted_ratio(const InexactProjector& p, const char* who) {
  const SpectralEstimate est = schur_ratio_extremes(p, 1e-10);
  if (!est.converged && est.residual > kSpectralAcceptance) {
    throw NonConvergence(std::string(who) + ": Lanczos estimate of lambda(S~^{-1}S) did not converge",
                         est.lambda_max, est.residual);
  }
  return est;
}

}  // namespace

InexactnessEstimate estimate_delta(const InexactProjector& p, double tol, DeltaMethod method) {
  InexactnessEstimate out;
  out.method = method;
  if (trivially_exact(p)) return out;
  const SpectralEstimate est = method == DeltaMethod::dense ? dense_ratio(p) : accepted_ratio(p, "estimate_delta");
  out.iterations = est.iterations;
  out.lambda_min = est.lambda_min;
  out.lambda_max = est.lambda_max;
  out.residual = est.residual;
  if (est.lambda_max > 1.0 + tol) {
    throw Error("S~ not dominating; run calibrate_domination first (lambda_max(S~^{-1}S) = " +
                std::to_string(est.lambda_max) + ")");
  }
  if (est.lambda_min <= 0.0) throw Error("estimate_delta: S~^{-1} is not positive definite");
  out.delta = std::max(0.0, 1.0 - est.lambda_min);
  return out;
}

Calibration calibrate_domination(const InexactProjector& p, double tol) {
  if (trivially_exact(p)) return {p, 1.0};
  const SpectralEstimate est = accepted_ratio(p, "calibrate_domination");
  if (!(est.lambda_max > 0.0)) throw Error("calibrate_domination: S~^{-1} S has no positive spectrum");
  const double upper = est.lambda_max * (1.0 + est.residual);
  const double scale = std::min(1.0, (1.0 - tol) / upper);
  if (scale == 1.0) return {p, 1.0};
  return {p.scaled(scale), scale};
}

CheckReport lemma_pi_suite(const InexactProjector& p, const ExactProjector& exact, const PiSuiteOptions& opts) {
  CheckReport rep;
  rep.tolerance = opts.tol;
  const LinearOperator& m = p.metric().m;
  const double eps = opts.epsilon;
  const Index n = m.rows();
  for (const char* name : {"pi_norm", "pi_inner", "pi_contract", "pi_lower", "pi_upper", "pi_transpose",
                           "id_absorb_left", "id_absorb_right", "id_self_adjoint"}) {
    rep.add(name);
  }
  if (opts.gradient) rep.add("id_gradient");
  auto* cn = rep.find("pi_norm");
  auto* ci = rep.find("pi_inner");
  auto* cc = rep.find("pi_contract");
  auto* cl = rep.find("pi_lower");
  auto* cu = rep.find("pi_upper");
  auto* ct = rep.find("pi_transpose");
  auto* cal = rep.find("id_absorb_left");
  auto* car = rep.find("id_absorb_right");
  auto* cad = rep.find("id_self_adjoint");
  auto* cg = rep.find("id_gradient");

  for (int s = 0; s < opts.samples; ++s) {
    const Vector u = random_vector(n, opts.seed * 1000003 + 2 * static_cast<std::uint64_t>(s));
    const Vector v = random_vector(n, opts.seed * 1000003 + 2 * static_cast<std::uint64_t>(s) + 1);
    const Vector pu = exact.project(u);
    const Vector tu = p.project(u);
    const double un2 = inner_m(m, u, u);
    const double pn2 = inner_m(m, pu, pu);
    const double tn2 = inner_m(m, tu, tu);
    const double utu = inner_m(m, u, tu);
    cn->record(pn2, tn2, s);
    ci->record(utu, un2, s);
    cc->record(tn2, utu, s);
    const double res_exact = norm_m(m, u - pu);
    const double res_inexact = norm_m(m, u - tu);
    const double floor = 1e-14 * std::sqrt(un2);
    cl->record((1.0 - eps) * res_exact, res_inexact, s, floor);
    cu->record(res_inexact, res_exact, s, floor);
    const Vector diff_t = p.project_transpose(u) - exact.project_transpose(u);
    const double unorm_inv = norm_m_inverse(m, u);
    ct->record(norm_m_inverse(m, diff_t), eps * unorm_inv, s, 1e-14 * unorm_inv);

    // Identities: measured as |lhs - rhs| against the size of the terms.
    const double absorb_left = (exact.project(tu) - pu).norm();
    const double absorb_right = (p.project(pu) - pu).norm();
    const double scale_p = std::max(pu.norm(), u.norm());
    cal->record(absorb_left / scale_p, 0.0, s, 1.0);
    car->record(absorb_right / scale_p, 0.0, s, 1.0);
    const double lhs_adj = inner_m(m, tu, v);
    const double rhs_adj = inner_m(m, u, p.project(v));
    const double scale_adj = norm_m(m, u) * norm_m(m, v);
    cad->record(std::abs(lhs_adj - rhs_adj) / scale_adj, 0.0, s, 1.0);
    if (cg) {
      const Vector g = opts.gradient(u);
      const Vector dir = p.project(m.solve(g));
      const double lhs = inner_m(m, dir, v);
      const double rhs = g.dot(p.project(v));
      const double scale = norm_m_inverse(m, g) * norm_m(m, v);
      cg->record(std::abs(lhs - rhs) / scale, 0.0, s, 1.0);
    }
  }
  return rep;
}

CheckReport lemma_dproj_check(const InexactProjector& p1, const InexactProjector& p2, double eps1, double eps2,
                              int samples, std::uint64_t seed, double tol) {
  CheckReport rep;
  rep.tolerance = tol;
  const LinearOperator& m1 = p1.metric().m;
  const LinearOperator& m2 = p2.metric().m;
  const LoewnerInterval iv = loewner_bounds(m1, m2, 1e-12);
  // Pad the constant by the eigen-solver accuracy so it is an upper bound.
  const double c = std::max(iv.c2, 1.0 / iv.c1) * (1.0 + 1e-10);
  rep.add("dproj_u_m1");
  rep.add("dproj_u_m2");
  rep.add("dproj_res1");
  rep.add("dproj_res2");
  auto* a = rep.find("dproj_u_m1");
  auto* b = rep.find("dproj_u_m2");
  auto* r1 = rep.find("dproj_res1");
  auto* r2 = rep.find("dproj_res2");
  const double sc = std::sqrt(c);
  for (int s = 0; s < samples; ++s) {
    const Vector u = random_vector(m1.rows(), seed * 7777 + static_cast<std::uint64_t>(s));
    const Vector t1 = p1.project(u);
    const Vector lhs_vec = t1 - p2.project(t1);
    const double lhs = norm_m(m2, lhs_vec);
    const double u1 = norm_m(m1, u);
    const double u2 = norm_m(m2, u);
    const double floor = 1e-14 * u1;
    a->record(lhs, sc * eps1 * u1, s, floor);
    b->record(lhs, c * eps1 * u2, s, floor);
    r1->record(lhs, sc * eps1 / (1.0 - eps1) * norm_m(m1, u - t1), s, floor);
    r2->record(lhs, c * eps1 / (1.0 - eps2) * norm_m(m2, u - p2.project(u)), s, floor);
  }
  return rep;
}

}  // namespace ippgd

namespace ippgd {

MetricSet prescribed_inexactness_metric(const DenseMatrix& m, const DenseMatrix& b, double delta, std::uint64_t seed,
                                        std::string label) {
  if (delta < 0.0 || delta >= 1.0) throw Error("prescribed_inexactness_metric: delta must be in [0,1)");
  const Index r = b.rows();
  MetricSet ms;
  ms.m = LinearOperator::dense_spd(m);
  ms.label = std::move(label);
  if (r == 0) {
    ms.schur_tilde_inverse = LinearOperator::zero(0, 0);
    return ms;
  }
  const DenseMatrix s = b * Eigen::LLT<DenseMatrix>(m).solve(b.transpose());
  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(0.5 * (s + s.transpose()));
  if (es.eigenvalues().minCoeff() <= 0.0) throw Error("prescribed_inexactness_metric: B is rank deficient");
  const DenseMatrix s_inv_half =
      es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  DenseMatrix g(r, r);
  const Vector raw = random_vector(r * r, seed);
  for (Index j = 0; j < r; ++j)
    for (Index i = 0; i < r; ++i) g(i, j) = raw[j * r + i];
  const DenseMatrix q = Eigen::HouseholderQR<DenseMatrix>(g).householderQ() * DenseMatrix::Identity(r, r);
  Vector d(r);
  for (Index i = 0; i < r; ++i) d[i] = r == 1 ? 1.0 : static_cast<double>(i) / static_cast<double>(r - 1);
  const DenseMatrix inner = q * (Vector::Ones(r) - delta * d).asDiagonal() * q.transpose();
  DenseMatrix ti = s_inv_half * inner * s_inv_half;
  ti = 0.5 * (ti + ti.transpose()).eval();
  ms.schur_tilde_inverse = LinearOperator::dense(ti, {true, true});
  return ms;
}

}  // namespace ippgd
