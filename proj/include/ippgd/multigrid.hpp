#pragma once

// Cell-centered geometric multigrid for variable-coefficient 5-point
// operators on structured nx x ny grids.

#include "ippgd/operator.hpp"

#include <memory>
#include <vector>

namespace ippgd {

/// Face transmissibilities of a cell-centered 5-point operator
///   (A p)_K = sum_{interior f} T_f (p_K - p_L) + sum_{boundary f} T_f p_K.
/// x-faces are indexed i + (nx+1) j, y-faces i + nx j; cells i + nx j.
struct FaceField {
  Index nx = 0;
  Index ny = 0;
  Vector tx;  // (nx+1) * ny
  Vector ty;  // nx * (ny+1)

  static FaceField constant(Index nx, Index ny, double value = 1.0);
  /// Harmonic face averages of a positive cell coefficient; boundary faces
  /// use the half-cell distance (twice the cell value).
  static FaceField from_cell_coefficient(Index nx, Index ny, const Vector& k);

  Index cells() const { return nx * ny; }
  void validate() const;
  Vector apply(const Vector& p) const;
  Vector diagonal() const;
  SparseMatrix matrix() const;
  /// Sum of the two aligned fine faces of each coarse face.
  FaceField coarsen() const;
};

enum class CoarseOperator {
  galerkin,       // P^T A P with piecewise-constant P
  rediscretized,  // arithmetic mean of the aligned fine faces
};

struct MgOptions {
  int pre_sweeps = 1;   // symmetric Gauss-Seidel sweeps
  int post_sweeps = 1;
  Index coarsest_max_dim = 8;
  CoarseOperator coarse = CoarseOperator::rediscretized;
};

struct MgLevel {
  FaceField field;
  Vector diag;
};

class MgHierarchy {
 public:
  MgHierarchy(std::vector<MgLevel> levels, std::shared_ptr<const Eigen::LLT<DenseMatrix>> coarse, MgOptions opts);

  Index size() const { return levels_.front().field.cells(); }
  std::size_t num_levels() const { return levels_.size(); }
  const MgLevel& level(std::size_t l) const { return levels_[l]; }
  const MgOptions& options() const { return opts_; }
  const FaceField& fine() const { return levels_.front().field; }

  /// One W-cycle from a zero initial guess.
  Vector cycle(const Vector& rhs) const;
  /// n_mg cycles x_{i+1} = x_i + cycle(b - A x_i), starting at zero.
  Vector apply(const Vector& rhs, int n_mg) const;

 private:
  void cycle_level(std::size_t l, const Vector& rhs, Vector& x) const;
  void smooth(const FaceField& f, const Vector& diag, const Vector& rhs, Vector& x, int sweeps) const;

  std::vector<MgLevel> levels_;
  std::shared_ptr<const Eigen::LLT<DenseMatrix>> coarse_;
  MgOptions opts_;
};

/// Coarsens while both dimensions are even and the larger exceeds half the
/// coarsest limit. Throws for non-positive coefficients, for grids that
/// cannot be coarsened at least once, or when the coarsest grid exceeds
/// coarsest_max_dim in either direction.
MgHierarchy build_hierarchy(const FaceField& field, const MgOptions& opts = {});

Vector wcycle_apply(const MgHierarchy& h, const Vector& rhs, int n_mg);

/// G(S, n_mg) as a symmetric positive definite operator.
LinearOperator as_schur_tilde_inverse(std::shared_ptr<const MgHierarchy> h, int n_mg);

/// The fine-level operator A.
LinearOperator as_operator(std::shared_ptr<const MgHierarchy> h);

struct MgSolveResult {
  Vector x;
  int cycles = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

/// Cycles until |b - A x| <= rel_tol |b| or max_cycles.
MgSolveResult mg_solve(const MgHierarchy& h, const Vector& rhs, double rel_tol = 1e-8, int max_cycles = 50);

/// Dynamic cycle count: n_start, increased by `increment` each time another
/// `ramp_fraction` of the iteration budget is used, capped at n_max.
/// In adaptive mode the count follows the iteration's progress instead:
/// the smallest n (never decreasing) with rho^n <= forcing * g_k / g_0,
/// rho being the measured one-cycle inexactness.
enum class ScheduleMode { ramp, adaptive };

struct MgSchedule {
  int n_start = 1;
  int n_max = 6;
  double ramp_fraction = 0.1;
  int increment = 1;
  ScheduleMode mode = ScheduleMode::ramp;
  double forcing = 1e-4;

  void validate() const;
  int at(int k, int max_iters) const;
  int adaptive_at(double relative_gradient, double rho, int previous) const;
};

}  // namespace ippgd
