#pragma once

// Quasilinear elliptic benchmark div(nu(|grad u|) grad u) = g in mixed form
// on the unit square: lowest-order face fluxes, cell-wise multipliers and
// vertex (trapezoidal) quadrature, which makes every mass matrix diagonal.

#include "ippgd/multigrid.hpp"
#include "ippgd/operator.hpp"
#include "ippgd/problems.hpp"

#include <functional>
#include <string>

namespace ippgd {

/// nu(s) = a0 + a1 exp(-a2 s) and nu~(s) = nu(s) s.
struct NuCoefficient {
  double a0 = 1.0;
  double a1 = 1.0;
  double a2 = 5.0;

  /// Throws unless a0 > 0, a1 >= 0, a2 >= 0 and nu~ is strongly monotone.
  void validate() const;
  double nu(double s) const;
  double nu_prime(double s) const;
  double nu_tilde(double s) const { return nu(s) * s; }
  double nu_tilde_prime(double s) const;
  /// Lipschitz constant of nu~: sup nu~' = a0 + a1 (also sup nu).
  double nu0() const { return a0 + a1; }
  /// Monotonicity constant of nu~: inf nu~' = a0 - a1 e^{-2}.
  double nu1() const;
  /// sup_s nu(s) / nu~'(s): curvature ratio of the energy relative to the
  /// weighted mass metric at the same flux.
  double variable_metric_ratio() const;
};

/// s >= 0 with |nu~(s) - t| <= 1e-12 (1 + t): bisection on
/// [t/(a0+a1), t/a0], then safeguarded Newton.
double nu_tilde_inverse(const NuCoefficient& nu, double t);

/// Psi(t) = int_0^t nu~^{-1}(s) ds, via the Legendre identity
/// Psi(t) = t r - int_0^r nu~(x) dx with r = nu~^{-1}(t).
double psi(const NuCoefficient& nu, double t);

/// Unknown layout: x-face fluxes (index i + (nx+1) j), then y-face fluxes
/// (index i + nx j); cells i + nx j.
struct MixedGrid {
  Index nx = 0;
  Index ny = 0;

  double hx() const { return 1.0 / static_cast<double>(nx); }
  double hy() const { return 1.0 / static_cast<double>(ny); }
  Index num_x_faces() const { return (nx + 1) * ny; }
  Index num_y_faces() const { return nx * (ny + 1); }
  Index num_faces() const { return num_x_faces() + num_y_faces(); }
  Index num_cells() const { return nx * ny; }
  Index xface(Index i, Index j) const { return i + (nx + 1) * j; }
  Index yface(Index i, Index j) const { return num_x_faces() + i + nx * j; }
  /// Divergence rows: (B sigma)_K = hy (s_right - s_left) + hx (s_top - s_bottom).
  SparseMatrix divergence() const;
};

struct PdeProblem {
  MixedGrid grid;
  NuCoefficient nu;
  std::function<double(double, double)> dirichlet;  // g_D
  std::function<double(double, double)> source;     // g
  /// Optional exact flux for error measurement.
  std::function<void(double, double, double&, double&)> exact_flux;
  std::function<double(double, double)> exact_solution;

  SparseMatrix b;     // divergence
  Vector g_bar;       // cell integrals of g
  Vector b_dirichlet; // boundary term: f contains -b_dirichlet . sigma
};

/// Discrete energy sum over cell corners of (hx hy / 4) Psi(|sigma_c|) minus
/// the boundary term.
double energy(const PdeProblem& p, const Vector& sigma);
/// M(sigma) sigma - b_dirichlet.
Vector gradient(const PdeProblem& p, const Vector& sigma);
/// Diagonal of M(sigma): corner weights 1 / nu(nu~^{-1}(|sigma_c|)).
Vector weighted_mass_diagonal(const PdeProblem& p, const Vector& sigma);
LinearOperator weighted_mass_metric(const PdeProblem& p, const Vector& sigma);
/// M(1): unit corner weights.
Vector mass_diagonal(const MixedGrid& grid);
LinearOperator mass_metric(const MixedGrid& grid);

/// Face transmissibilities of S = B diag(m)^{-1} B^T.
FaceField schur_field_from_mass(const MixedGrid& grid, const Vector& mass_diag);
FaceField assemble_schur_field(const PdeProblem& p, const Vector& sigma);

/// Builds g, g_D and the exact flux from u = sin(x) sin(y). Throws if the
/// hand-derived source disagrees with a finite-difference divergence of
/// the exact flux by more than 1e-8.
PdeProblem manufactured_problem(Index nx, Index ny, const NuCoefficient& nu);

/// Face averages of the exact normal flux.
Vector interpolate_exact_flux(const PdeProblem& p);

/// L2 norm of (reconstructed sigma_h - sigma_exact), 3x3 Gauss per cell.
double flux_l2_error(const PdeProblem& p, const Vector& sigma);

/// Particular solution sigma_p = M0^{-1} B^T S0^{-1} g_bar in the plain mass
/// metric (the M0-projection of zero onto the constraint set).
Vector particular_flux(const PdeProblem& p, double rel_tol = 1e-13);

/// Shifted problem in u = sigma - sigma_p, homogeneous constraint.
ProblemSpec pde_problem_spec(const PdeProblem& p, const Vector& sigma_p);

/// Flat little-endian binary snapshot with a text header.
void write_snapshot(const std::string& path, const MixedGrid& grid, const std::string& field, const Vector& v);
struct Snapshot {
  MixedGrid grid;
  double h = 0.0;
  std::string field;
  Vector values;
};
Snapshot read_snapshot(const std::string& path);

}  // namespace ippgd
