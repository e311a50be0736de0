#pragma once

// Exact and inexact projections onto ker(B) in an M-metric.

#include "ippgd/operator.hpp"
#include "ippgd/report.hpp"

#include <functional>
#include <memory>
#include <string>

namespace ippgd {

/// The pair {M, S~} defining one inexact projection. `m` must carry an
/// inverse action.
struct MetricSet {
  LinearOperator m;
  LinearOperator schur_tilde_inverse;
  std::string label;
};

/// S = B M^{-1} B^T as an action.
LinearOperator schur_operator(const LinearOperator& m, const LinearOperator& b);

struct ExactProjectorOptions {
  /// Below this many constraint rows S is assembled densely and factored.
  Index dense_limit = 500;
  double cg_tol = 1e-12;
  int cg_max_iterations = 20000;
  /// Optional preconditioner for the CG Schur solve.
  LinearOperator preconditioner;
};

/// P = I - M^{-1} B^T S^{-1} B.
class ExactProjector {
 public:
  ExactProjector(LinearOperator m, LinearOperator b, ExactProjectorOptions opts = {});

  Vector project(const Vector& u) const;
  Vector project_transpose(const Vector& u) const;
  /// S^{-1} r.
  Vector schur_solve(const Vector& r) const;
  const LinearOperator& m() const { return m_; }
  const LinearOperator& constraint() const { return b_; }
  const LinearOperator& schur() const { return s_; }
  /// S^{-1} wrapped as an operator (usable as an exact S~^{-1}).
  LinearOperator schur_inverse() const;
  bool degenerate() const { return degenerate_; }

 private:
  LinearOperator m_;
  LinearOperator b_;
  LinearOperator s_;
  ExactProjectorOptions opts_;
  std::shared_ptr<const Eigen::LLT<DenseMatrix>> dense_;
  bool degenerate_ = false;
};

/// P~ = I - M^{-1} B^T S~^{-1} B.
class InexactProjector {
 public:
  InexactProjector(MetricSet metric, LinearOperator b);

  Vector project(const Vector& u) const;
  /// P~^T u = u - B^T S~^{-1} B M^{-1} u.
  Vector project_transpose(const Vector& u) const;
  const MetricSet& metric() const { return metric_; }
  const LinearOperator& constraint() const { return b_; }
  /// Copy with S~^{-1} multiplied by c.
  InexactProjector scaled(double c) const;

 private:
  MetricSet metric_;
  LinearOperator b_;
};

enum class DeltaMethod { lanczos, dense };

struct InexactnessEstimate {
  double delta = 0.0;
  DeltaMethod method = DeltaMethod::lanczos;
  int iterations = 0;
  double lambda_min = 1.0;  // extreme eigenvalues of S~^{-1} S
  double lambda_max = 1.0;
  double residual = 0.0;  // relative eigenvalue error bound of the estimate
};

/// delta = 1 - lambda_min(S~^{-1} S). Throws when lambda_max exceeds 1 + tol,
/// i.e. when S~ does not dominate S.
InexactnessEstimate estimate_delta(const InexactProjector& p, double tol = 1e-10,
                                   DeltaMethod method = DeltaMethod::lanczos);

/// Extreme eigenvalues of S~^{-1} S without the domination requirement.
/// Never throws on slow convergence; check `converged`/`residual`.
SpectralEstimate schur_ratio_extremes(const InexactProjector& p, double tol = 1e-10, int max_iterations = 300);

/// Largest accepted relative error bound for an unconverged spectral
/// estimate in estimate_delta and calibrate_domination.
inline constexpr double kSpectralAcceptance = 1e-6;

struct Calibration {
  InexactProjector projector;
  double scale = 1.0;
};

/// Scales S~^{-1} by min(1, (1 - tol) / lambda_max(S~^{-1} S)) so S <= S~ holds.
/// lambda_max is inflated by its error bound before use.
Calibration calibrate_domination(const InexactProjector& p, double tol = 1e-6);

struct PiSuiteOptions {
  int samples = 20;
  std::uint64_t seed = 11;
  /// Inexactness level used as epsilon in the two-sided bounds.
  double epsilon = 0.0;
  double tol = 1e-8;
  /// When set, also checks <P~ M^{-1} grad f(u), v>_M = <grad f(u), P~ v>.
  std::function<Vector(const Vector&)> gradient;
};

/// Checks on random vectors:
///   pi_norm:      |P u|_M^2 <= |P~ u|_M^2
///   pi_inner:     <u, P~ u>_M <= |u|_M^2
///   pi_contract:  |P~ u|_M^2 <= <u, P~ u>_M
///   pi_lower:     (1-eps)|(I-P)u|_M <= |(I-P~)u|_M
///   pi_upper:     |(I-P~)u|_M <= |(I-P)u|_M
///   pi_transpose: |(P~-P)^T u|_{M^-1} <= eps |u|_{M^-1}
///   id_absorb_left, id_absorb_right: P P~ = P~ P = P
///   id_self_adjoint: <P~u, v>_M = <u, P~v>_M
///   id_gradient (optional)
CheckReport lemma_pi_suite(const InexactProjector& p, const ExactProjector& exact, const PiSuiteOptions& opts);

/// Two-metric bounds for Pi_1 = P~_{M1}, Pi_2 = P~_{M2} with
/// c = max(lambda_max(M1^{-1} M2), lambda_max(M2^{-1} M1)):
///   dproj_u_m1:  |(Pi1 - Pi2 Pi1)u|_{M2} <= sqrt(c) eps1 |u|_{M1}
///   dproj_u_m2:  ... <= c eps1 |u|_{M2}
///   dproj_res1:  ... <= sqrt(c) eps1/(1-eps1) |(I-Pi1)u|_{M1}
///   dproj_res2:  ... <= c eps1/(1-eps2) |(I-Pi2)u|_{M2}
CheckReport lemma_dproj_check(const InexactProjector& p1, const InexactProjector& p2, double eps1, double eps2,
                              int samples, std::uint64_t seed = 13, double tol = 1e-8);

}  // namespace ippgd

namespace ippgd {

/// Dense metric set whose S~^{-1} = S^{-1/2} Q (I - delta D) Q^T S^{-1/2}
/// with D diagonal spanning [0, 1], so lambda(S~^{-1} S) fills [1 - delta, 1]
/// and the inexactness level is exactly delta.
MetricSet prescribed_inexactness_metric(const DenseMatrix& m, const DenseMatrix& b, double delta, std::uint64_t seed,
                                        std::string label = "prescribed");

}  // namespace ippgd
