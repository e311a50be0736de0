#include "ippgd/operator.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace ippgd {

bool all_finite(const Vector& v) { return v.allFinite(); }

namespace {

void require_dims(Index expected, Index got, const char* what) {
  if (expected != got) {
    throw DimensionError(std::string(what) + ": dimension mismatch (expected " + std::to_string(expected) +
                         ", got " + std::to_string(got) + ")");
  }
}

}  // namespace

LinearOperator::LinearOperator(Index rows, Index cols, Action apply, OperatorTraits traits, Action apply_transpose,
                               Action apply_inverse)
    : rows_(rows),
      cols_(cols),
      apply_(std::move(apply)),
      apply_transpose_(std::move(apply_transpose)),
      apply_inverse_(std::move(apply_inverse)),
      traits_(traits) {
  if (traits_.spd) traits_.symmetric = true;
}

LinearOperator LinearOperator::identity(Index n) {
  auto copy = [](const Vector& in, Vector& out) { out = in; };
  return LinearOperator(n, n, copy, {true, true}, copy, copy);
}

LinearOperator LinearOperator::zero(Index rows, Index cols) {
  return LinearOperator(
      rows, cols, [rows](const Vector&, Vector& out) { out = Vector::Zero(rows); }, {rows == cols, false},
      [cols](const Vector&, Vector& out) { out = Vector::Zero(cols); });
}

LinearOperator LinearOperator::diagonal(Vector diag) {
  auto d = std::make_shared<const Vector>(std::move(diag));
  const Index n = d->size();
  const bool positive = (d->array() > 0.0).all();
  const bool invertible = (d->array() != 0.0).all();
  Action fwd = [d](const Vector& in, Vector& out) { out = d->cwiseProduct(in); };
  Action inv;
  if (invertible) {
    inv = [d](const Vector& in, Vector& out) { out = in.cwiseQuotient(*d); };
  }
  return LinearOperator(n, n, fwd, {true, positive}, fwd, inv);
}

LinearOperator LinearOperator::dense(DenseMatrix a, OperatorTraits traits) {
  auto m = std::make_shared<const DenseMatrix>(std::move(a));
  return LinearOperator(
      m->rows(), m->cols(), [m](const Vector& in, Vector& out) { out.noalias() = (*m) * in; }, traits,
      [m](const Vector& in, Vector& out) { out.noalias() = m->transpose() * in; });
}

LinearOperator LinearOperator::dense_spd(DenseMatrix a) {
  auto m = std::make_shared<const DenseMatrix>(std::move(a));
  auto llt = std::make_shared<Eigen::LLT<DenseMatrix>>(*m);
  if (llt->info() != Eigen::Success) throw Error("dense_spd: Cholesky factorization failed (matrix not SPD)");
  Action fwd = [m](const Vector& in, Vector& out) { out.noalias() = (*m) * in; };
  Action inv = [llt](const Vector& in, Vector& out) { out = llt->solve(in); };
  return LinearOperator(m->rows(), m->cols(), fwd, {true, true}, fwd, inv);
}

LinearOperator LinearOperator::sparse(SparseMatrix a, OperatorTraits traits) {
  auto m = std::make_shared<const SparseMatrix>(std::move(a));
  return LinearOperator(
      m->rows(), m->cols(), [m](const Vector& in, Vector& out) { out = (*m) * in; }, traits,
      [m](const Vector& in, Vector& out) { out = m->transpose() * in; });
}

Vector LinearOperator::apply(const Vector& x) const {
  if (!apply_) throw Error("apply on an empty operator");
  require_dims(cols_, x.size(), "LinearOperator::apply");
  Vector y;
  apply_(x, y);
  return y;
}

Vector LinearOperator::apply_transpose(const Vector& y) const {
  require_dims(rows_, y.size(), "LinearOperator::apply_transpose");
  Vector x;
  if (apply_transpose_) {
    apply_transpose_(y, x);
  } else if (traits_.symmetric) {
    apply_(y, x);
  } else {
    throw Error("operator has no transpose action");
  }
  return x;
}

Vector LinearOperator::solve(const Vector& b) const {
  if (!apply_inverse_) throw Error("operator has no inverse action");
  require_dims(rows_, b.size(), "LinearOperator::solve");
  Vector x;
  apply_inverse_(b, x);
  if (!x.allFinite()) throw Error("inverse action produced non-finite values");
  return x;
}

LinearOperator LinearOperator::scaled(double c) const {
  LinearOperator out = *this;
  auto fwd = apply_;
  out.apply_ = [fwd, c](const Vector& in, Vector& o) {
    fwd(in, o);
    o *= c;
  };
  if (apply_transpose_) {
    auto tr = apply_transpose_;
    out.apply_transpose_ = [tr, c](const Vector& in, Vector& o) {
      tr(in, o);
      o *= c;
    };
  }
  if (apply_inverse_) {
    auto inv = apply_inverse_;
    out.apply_inverse_ = [inv, c](const Vector& in, Vector& o) {
      inv(in, o);
      o /= c;
    };
  }
  if (c <= 0.0) out.traits_.spd = false;
  return out;
}

LinearOperator LinearOperator::with_inverse(Action inverse) const {
  LinearOperator out = *this;
  out.apply_inverse_ = std::move(inverse);
  return out;
}

DenseMatrix LinearOperator::to_dense() const {
  DenseMatrix a(rows_, cols_);
  Vector e = Vector::Zero(cols_);
  for (Index j = 0; j < cols_; ++j) {
    e[j] = 1.0;
    a.col(j) = apply(e);
    e[j] = 0.0;
  }
  return a;
}

LinearOperator compose(const LinearOperator& a, const LinearOperator& b) {
  require_dims(a.cols(), b.rows(), "compose");
  LinearOperator::Action tr;
  if (a.has_transpose() && b.has_transpose()) {
    tr = [a, b](const Vector& in, Vector& out) { out = b.apply_transpose(a.apply_transpose(in)); };
  }
  return LinearOperator(
      a.rows(), b.cols(), [a, b](const Vector& in, Vector& out) { out = a.apply(b.apply(in)); }, {}, tr);
}

double inner_m(const LinearOperator& m, const Vector& u, const Vector& v) {
  require_dims(m.cols(), v.size(), "inner_m");
  require_dims(m.rows(), u.size(), "inner_m");
  const double r = u.dot(m.apply(v));
  if (!std::isfinite(r)) throw Error("inner_m: non-finite result");
  return r;
}

double norm_m(const LinearOperator& m, const Vector& u) { return std::sqrt(std::max(0.0, inner_m(m, u, u))); }

double norm_m_inverse(const LinearOperator& m, const Vector& u) {
  return std::sqrt(std::max(0.0, u.dot(m.solve(u))));
}

Vector random_vector(Index n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = dist(gen);
  return v;
}

SpectralEstimate generalized_extremes(const LinearOperator::Action& x_action, const LinearOperator& r,
                                      const SpectralOptions& opts) {
  const Index n = r.rows();
  if (n == 0) throw DimensionError("generalized_extremes: empty operator");
  const int max_steps = static_cast<int>(std::min<Index>(opts.max_iterations, n));

  std::vector<Vector> basis;      // R-orthonormal Lanczos vectors
  std::vector<Vector> r_basis;    // R * basis[i]
  std::vector<double> alpha, beta;

  Vector v = random_vector(n, opts.seed);
  Vector rv = r.apply(v);
  double nrm = std::sqrt(v.dot(rv));
  if (!(nrm > 0.0)) throw Error("generalized_extremes: R is not positive on the start vector");
  v /= nrm;
  rv /= nrm;

  SpectralEstimate est;
  const double breakdown = 1e-13;
  for (int j = 0; j < max_steps; ++j) {
    basis.push_back(v);
    r_basis.push_back(rv);

    Vector w;
    x_action(rv, w);
    const double a = rv.dot(w);
    alpha.push_back(a);
    // Two passes of Gram-Schmidt in the R-inner product.
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t i = 0; i < basis.size(); ++i) {
        const double c = r_basis[i].dot(w);
        w -= c * basis[i];
      }
    }
    Vector rw = r.apply(w);
    const double b = std::sqrt(std::max(0.0, w.dot(rw)));

    const Index m = static_cast<Index>(alpha.size());
    Eigen::VectorXd diag = Eigen::Map<const Eigen::VectorXd>(alpha.data(), m);
    Eigen::VectorXd sub(std::max<Index>(m - 1, 0));
    for (Index i = 0; i + 1 < m; ++i) sub[i] = beta[static_cast<std::size_t>(i)];
    Eigen::SelfAdjointEigenSolver<DenseMatrix> tri;
    tri.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    const auto& theta = tri.eigenvalues();
    const auto& y = tri.eigenvectors();
    const double lo = theta[0];
    const double hi = theta[m - 1];
    // Eigenvalue error bound per extreme: min(r, r^2 / gap) (Kato-Temple),
    // with the gap taken to the neighbouring Ritz value.
    auto bound = [&](Index idx, Index nb) {
      const double r = std::abs(b * y(m - 1, idx));
      double e = r;
      if (m > 1) {
        const double gap = std::abs(theta[idx] - theta[nb]);
        if (gap > 0.0) e = std::min(e, r * r / gap);
      }
      return e / std::max(std::abs(theta[idx]), 1e-300);
    };
    const double res_lo = bound(0, std::min<Index>(1, m - 1));
    const double res_hi = bound(m - 1, std::max<Index>(m - 2, 0));
    est.lambda_min = lo;
    est.lambda_max = hi;
    est.iterations = static_cast<int>(m);
    est.residual = std::max(res_lo, res_hi);

    const double scale = std::max(std::abs(lo), std::abs(hi));
    const bool exhausted = b <= breakdown * std::max(scale, 1e-300) || m == n;
    if (exhausted || (est.residual <= opts.tol && m >= 2) || (est.residual <= opts.tol && n == 1)) {
      if (exhausted) est.residual = 0.0;
      return est;
    }
    beta.push_back(b);
    v = w / b;
    rv = rw / b;
  }
  est.converged = false;
  if (!opts.throw_on_failure) return est;
  throw NonConvergence("generalized_extremes: Lanczos did not reach tolerance", est.lambda_max, est.residual);
}

CgResult conjugate_gradient(const LinearOperator& a, const Vector& b, double rel_tol, int max_iterations,
                            const LinearOperator* preconditioner) {
  require_dims(a.rows(), b.size(), "conjugate_gradient");
  CgResult out;
  out.x = Vector::Zero(b.size());
  const double bnorm = b.norm();
  if (bnorm == 0.0) return out;
  Vector r = b;
  Vector z = preconditioner ? preconditioner->apply(r) : r;
  Vector p = z;
  double rz = r.dot(z);
  for (int it = 1; it <= max_iterations; ++it) {
    Vector ap = a.apply(p);
    const double pap = p.dot(ap);
    if (!(pap > 0.0)) throw Error("conjugate_gradient: operator not positive definite");
    const double step = rz / pap;
    out.x += step * p;
    r -= step * ap;
    out.iterations = it;
    out.relative_residual = r.norm() / bnorm;
    if (out.relative_residual <= rel_tol) return out;
    z = preconditioner ? preconditioner->apply(r) : r;
    const double rz_new = r.dot(z);
    p = z + (rz_new / rz) * p;
    rz = rz_new;
  }
  throw NonConvergence("conjugate_gradient: relative residual target not reached", out.relative_residual,
                       out.relative_residual);
}

LoewnerInterval loewner_bounds(const LinearOperator& q, const LinearOperator& r, double tol) {
  require_dims(q.rows(), r.rows(), "loewner_bounds");
  LinearOperator::Action qinv;
  if (q.has_inverse()) {
    qinv = [q](const Vector& in, Vector& out) { out = q.solve(in); };
  } else {
    const double cg_tol = std::min(1e-13, tol * 1e-3);
    qinv = [q, cg_tol](const Vector& in, Vector& out) {
      out = conjugate_gradient(q, in, cg_tol, static_cast<int>(10 * q.rows() + 100)).x;
    };
  }
  SpectralOptions opts;
  opts.tol = tol;
  opts.max_iterations = static_cast<int>(std::max<Index>(200, std::min<Index>(q.rows(), 1000)));
  const SpectralEstimate est = generalized_extremes(qinv, r, opts);
  return {est.lambda_min, est.lambda_max};
}

SpdLemmaReport lemma_spd_check(const LinearOperator& q, const LinearOperator& r, int samples, std::uint64_t seed,
                               double tol) {
  SpdLemmaReport rep;
  rep.bounds = loewner_bounds(q, r, 1e-12);
  rep.samples = samples;
  const double c1 = rep.bounds.c1;
  const double c2 = rep.bounds.c2;
  const double factor = std::max((1.0 - c1) * (1.0 - c1), (1.0 - c2) * (1.0 - c2));
  for (int s = 0; s < samples; ++s) {
    const Vector x = random_vector(q.rows(), seed * 7919 + static_cast<std::uint64_t>(s));
    const Vector d = q.solve(x) - r.solve(x);
    const double lhs = d.dot(r.apply(d));
    const double rhs = factor * x.dot(r.solve(x));
    const double scale = std::max(rhs, 1e-300);
    rep.max_violation = std::max(rep.max_violation, std::max(0.0, lhs - rhs) / scale);
  }
  rep.passed = rep.max_violation <= tol;
  return rep;
}

}  // namespace ippgd
