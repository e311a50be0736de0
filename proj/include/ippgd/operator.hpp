#pragma once

// Vector and linear-operator abstractions shared by every solver component.

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>

namespace ippgd {

using Vector = Eigen::VectorXd;
using DenseMatrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Index = Eigen::Index;

/// Base class of all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An iterative procedure stopped before reaching its tolerance. The best
/// available estimate is carried along so callers can still report it.
class NonConvergence : public Error {
 public:
  NonConvergence(const std::string& what, double best_estimate, double residual)
      : Error(what), best_estimate_(best_estimate), residual_(residual) {}
  double best_estimate() const { return best_estimate_; }
  double residual() const { return residual_; }

 private:
  double best_estimate_;
  double residual_;
};

bool all_finite(const Vector& v);

struct OperatorTraits {
  bool symmetric = false;
  bool spd = false;
};

/// Immutable linear map. The apply/transpose/inverse actions are stored as
/// type-erased callables sharing read-only state, so copies are cheap and
/// concurrent applies are safe.
class LinearOperator {
 public:
  using Action = std::function<void(const Vector& in, Vector& out)>;

  LinearOperator() = default;
  LinearOperator(Index rows, Index cols, Action apply, OperatorTraits traits = {},
                 Action apply_transpose = {}, Action apply_inverse = {});

  static LinearOperator identity(Index n);
  static LinearOperator zero(Index rows, Index cols);
  /// Diagonal operator; carries an exact inverse when all entries are nonzero.
  static LinearOperator diagonal(Vector diag);
  static LinearOperator dense(DenseMatrix a, OperatorTraits traits = {});
  /// Dense SPD operator with a Cholesky-backed inverse.
  static LinearOperator dense_spd(DenseMatrix a);
  static LinearOperator sparse(SparseMatrix a, OperatorTraits traits = {});

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  bool empty() const { return !apply_; }
  const OperatorTraits& traits() const { return traits_; }
  bool symmetric() const { return traits_.symmetric; }
  bool spd() const { return traits_.spd; }
  bool has_transpose() const { return static_cast<bool>(apply_transpose_) || traits_.symmetric; }
  bool has_inverse() const { return static_cast<bool>(apply_inverse_); }

  Vector apply(const Vector& x) const;
  Vector apply_transpose(const Vector& y) const;
  Vector solve(const Vector& b) const;
  Vector operator*(const Vector& x) const { return apply(x); }

  /// c * A (inverse and transpose scaled accordingly).
  LinearOperator scaled(double c) const;
  /// Operator view with the inverse action replaced.
  LinearOperator with_inverse(Action inverse) const;

  /// Materializes the operator column by column. Intended for oracles and
  /// small problems only.
  DenseMatrix to_dense() const;

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  Action apply_;
  Action apply_transpose_;
  Action apply_inverse_;
  OperatorTraits traits_;
};

/// A * B as an operator (no inverse).
LinearOperator compose(const LinearOperator& a, const LinearOperator& b);

/// <u, M v>.
double inner_m(const LinearOperator& m, const Vector& u, const Vector& v);
double norm_m(const LinearOperator& m, const Vector& u);
/// sqrt(<u, M^{-1} u>); requires an inverse action on M.
double norm_m_inverse(const LinearOperator& m, const Vector& u);

/// Extreme generalized eigenvalues: c1 Q <= R <= c2 Q in the Loewner order.
struct LoewnerInterval {
  double c1 = 0.0;
  double c2 = 0.0;
};

struct SpectralOptions {
  double tol = 1e-10;
  int max_iterations = 200;
  std::uint64_t seed = 0x5eed;
  /// When false, an unconverged run returns its best estimate with
  /// converged = false instead of throwing.
  bool throw_on_failure = true;
};

struct SpectralEstimate {
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  int iterations = 0;
  double residual = 0.0;  // largest relative eigenvalue error bound of the two extremes
  bool converged = true;
};

/// Extreme eigenvalues of K = X R where X is an SPD action (typically Q^{-1})
/// and R is SPD. K is self-adjoint in the R-inner product, so a Lanczos
/// process with full reorthogonalization in that inner product is used.
SpectralEstimate generalized_extremes(const LinearOperator::Action& x_action,
                                      const LinearOperator& r, const SpectralOptions& opts = {});

/// Interval [c1, c2] with lambda(Q^{-1} R) in [c1, c2]. Q needs an inverse
/// action; when it has none, Q^{-1} is applied with conjugate gradients.
LoewnerInterval loewner_bounds(const LinearOperator& q, const LinearOperator& r, double tol = 1e-10);

struct SpdLemmaReport {
  LoewnerInterval bounds;
  double max_violation = 0.0;  // relative: max(0, lhs - rhs) / rhs
  int samples = 0;
  bool passed = true;
};

/// Samples x and checks
///   <(Q^{-1}-R^{-1}) R (Q^{-1}-R^{-1}) x, x> <= max{(1-c1)^2, (1-c2)^2} <R^{-1} x, x>.
/// Both operators need inverse actions.
SpdLemmaReport lemma_spd_check(const LinearOperator& q, const LinearOperator& r, int samples,
                               std::uint64_t seed = 1, double tol = 1e-9);

/// Plain conjugate gradients; throws NonConvergence when the relative
/// residual target is not met.
struct CgResult {
  Vector x;
  int iterations = 0;
  double relative_residual = 0.0;
};
CgResult conjugate_gradient(const LinearOperator& a, const Vector& b, double rel_tol, int max_iterations,
                            const LinearOperator* preconditioner = nullptr);

/// Deterministic standard-normal vector.
Vector random_vector(Index n, std::uint64_t seed);

}  // namespace ippgd
