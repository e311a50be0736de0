#pragma once

#include "ippgd/operator.hpp"

#include <Eigen/QR>

#include <cmath>
#include <random>

namespace ippgd::testing {

inline DenseMatrix random_matrix(Index rows, Index cols, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> dist;
  DenseMatrix a(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) a(i, j) = dist(gen);
  return a;
}

inline DenseMatrix random_orthogonal(Index n, std::uint64_t seed) {
  Eigen::HouseholderQR<DenseMatrix> qr(random_matrix(n, n, seed));
  return qr.householderQ() * DenseMatrix::Identity(n, n);
}

/// SPD matrix with eigenvalues log-spaced in [lo, hi].
inline DenseMatrix random_spd(Index n, std::uint64_t seed, double lo = 0.5, double hi = 5.0) {
  const DenseMatrix q = random_orthogonal(n, seed);
  Vector lam(n);
  for (Index i = 0; i < n; ++i) {
    const double t = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
    lam[i] = lo * std::pow(hi / lo, t);
  }
  DenseMatrix a = q * lam.asDiagonal() * q.transpose();
  return 0.5 * (a + a.transpose());
}

inline double rel_diff(const Vector& a, const Vector& b) {
  const double s = std::max({a.norm(), b.norm(), 1e-300});
  return (a - b).norm() / s;
}

}  // namespace ippgd::testing
