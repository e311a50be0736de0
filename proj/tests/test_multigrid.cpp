#include "ippgd/multigrid.hpp"
#include "ippgd/projection.hpp"
#include "testing.hpp"

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include <cmath>

using namespace ippgd;
using ippgd::testing::rel_diff;

namespace {

Vector smooth_coefficient(Index nx, Index ny) {
  Vector k(nx * ny);
  for (Index j = 0; j < ny; ++j)
    for (Index i = 0; i < nx; ++i) {
      const double x = (i + 0.5) / nx, y = (j + 0.5) / ny;
      k[i + nx * j] = 1.0 + 4.0 * std::exp(-10.0 * ((x - 0.4) * (x - 0.4) + (y - 0.6) * (y - 0.6)));
    }
  return k;
}

std::shared_ptr<const MgHierarchy> make(Index n, bool variable = false) {
  const FaceField f = variable ? FaceField::from_cell_coefficient(n, n, smooth_coefficient(n, n)) : FaceField::constant(n, n);
  return std::make_shared<const MgHierarchy>(build_hierarchy(f));
}

// Dense mirror of the same W-cycle for small grids.
struct DenseLevel {
  DenseMatrix a;
  DenseMatrix p;  // prolongation to this level from the next coarser one
};

DenseMatrix prolongation(Index nx, Index ny) {
  DenseMatrix p = DenseMatrix::Zero(nx * ny, (nx / 2) * (ny / 2));
  for (Index j = 0; j < ny; ++j)
    for (Index i = 0; i < nx; ++i) p(i + nx * j, i / 2 + (nx / 2) * (j / 2)) = 1.0;
  return p;
}

Vector dense_cycle(const std::vector<DenseMatrix>& a, const std::vector<DenseMatrix>& p, std::size_t l, const Vector& b) {
  if (l + 1 == a.size()) return a[l].llt().solve(b);
  const DenseMatrix& A = a[l];
  const DenseMatrix lower = A.triangularView<Eigen::Lower>();
  const DenseMatrix upper = A.triangularView<Eigen::Upper>();
  auto sgs = [&](Vector& x) {
    x += lower.triangularView<Eigen::Lower>().solve(Vector(b - A * x));
    x += upper.triangularView<Eigen::Upper>().solve(Vector(b - A * x));
  };
  Vector x = Vector::Zero(b.size());
  sgs(x);
  const Vector rc = p[l].transpose() * (b - A * x);
  Vector ec = dense_cycle(a, p, l + 1, rc);
  if (l + 2 < a.size()) ec += dense_cycle(a, p, l + 1, rc - a[l + 1] * ec);
  x += p[l] * ec;
  sgs(x);
  return x;
}

}  // namespace

TEST(FaceField, CellCoefficientOneIsConstant) {
  const FaceField a = FaceField::constant(6, 4);
  const FaceField b = FaceField::from_cell_coefficient(6, 4, Vector::Ones(24));
  EXPECT_EQ((a.tx - b.tx).norm(), 0.0);
  EXPECT_EQ((a.ty - b.ty).norm(), 0.0);
  const Vector p = random_vector(24, 3);
  EXPECT_LE(rel_diff(a.apply(p), a.matrix() * p), 1e-15);
}

TEST(BuildHierarchy, Errors) {
  Vector k = Vector::Ones(64);
  k[5] = 0.0;
  EXPECT_THROW(FaceField::from_cell_coefficient(8, 8, k), Error);
  FaceField bad = FaceField::constant(8, 8);
  bad.tx[3] = -1.0;
  EXPECT_THROW(build_hierarchy(bad), Error);
  EXPECT_THROW(build_hierarchy(FaceField::constant(9, 9)), Error);    // no coarsening possible
  EXPECT_THROW(build_hierarchy(FaceField::constant(18, 18)), Error);  // coarsest 9x9 too large
  EXPECT_EQ(build_hierarchy(FaceField::constant(8, 8)).num_levels(), 2u);
  EXPECT_EQ(build_hierarchy(FaceField::constant(128, 128)).num_levels(), 6u);
}

TEST(WCycle, ZeroRhs) {
  const auto h = make(32);
  EXPECT_EQ(wcycle_apply(*h, Vector::Zero(h->size()), 3).norm(), 0.0);
}

TEST(WCycle, MatchesDenseMirror) {
  for (Index n : {8, 16}) {
    const FaceField f = FaceField::from_cell_coefficient(n, n, smooth_coefficient(n, n));
    const MgHierarchy h = build_hierarchy(f);
    std::vector<DenseMatrix> a, p;
    DenseMatrix cur = DenseMatrix(f.matrix());
    Index m = n;
    for (std::size_t l = 0; l < h.num_levels(); ++l) {
      a.push_back(cur);
      if (l + 1 < h.num_levels()) {
        p.push_back(prolongation(m, m));
        cur = 0.5 * p.back().transpose() * cur * p.back();
        m /= 2;
      }
    }
    const Vector b = random_vector(n * n, 7);
    EXPECT_LE(rel_diff(h.cycle(b), dense_cycle(a, p, 0, b)), 1e-12) << n;
  }
}

TEST(WCycle, LinearSymmetricPositive) {
  const auto h = make(32, true);
  const auto g = as_schur_tilde_inverse(h, 2);
  const Vector x = random_vector(h->size(), 1), y = random_vector(h->size(), 2);
  EXPECT_LE(rel_diff(g.apply(1.5 * x - 2.0 * y), 1.5 * g.apply(x) - 2.0 * g.apply(y)), 1e-12);
  const double xy = y.dot(g.apply(x)), yx = x.dot(g.apply(y));
  EXPECT_NEAR(xy, yx, 1e-9 * std::abs(xy));
  for (int s = 0; s < 20; ++s) {
    const Vector z = random_vector(h->size(), 100 + s);
    EXPECT_GT(z.dot(g.apply(z)), 0.0);
  }
}

TEST(WCycle, ResidualContracts) {
  const auto h = make(64, true);
  const Vector b = random_vector(h->size(), 4);
  double prev = b.norm();
  // Below this level the residual is rounding noise.
  const double floor = 1e-12 * b.norm();
  for (int n = 1; n <= 20; ++n) {
    const double r = (b - h->fine().apply(h->apply(b, n))).norm();
    if (prev > floor) EXPECT_LE(r, prev) << n;
    if (n == 2) EXPECT_LT(r, prev);
    prev = r;
  }
}

TEST(WCycle, ExactnessThresholdAndMeshRobustness) {
  int lo = 1000, hi = 0;
  for (Index n : {32, 64, 128}) {
    const auto h = make(n);
    const auto res = mg_solve(*h, random_vector(n * n, 5), 1e-8, 20);
    EXPECT_TRUE(res.converged) << n;
    lo = std::min(lo, res.cycles);
    hi = std::max(hi, res.cycles);
  }
  EXPECT_LE(hi - lo, 3);
}

TEST(WCycle, CalibratedInexactnessBelowOne) {
  const Index n = 16;
  const auto h = make(n, true);
  // S = A realised as B M^{-1} B^T with M = I and B = A^{1/2}, dense for the check.
  const DenseMatrix a = DenseMatrix(h->fine().matrix());
  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(a);
  const DenseMatrix root = es.eigenvectors() * es.eigenvalues().cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
  for (int nmg : {1, 2, 3}) {
    InexactProjector ip({LinearOperator::identity(n * n), as_schur_tilde_inverse(h, nmg), "mg"},
                        LinearOperator::dense(root));
    const auto cal = calibrate_domination(ip, 1e-8);
    const auto est = estimate_delta(cal.projector, 1e-8);
    EXPECT_LT(est.delta, 1.0);
    EXPECT_GE(est.delta, 0.0);
    if (nmg % 2 == 0) EXPECT_GE(cal.scale, 1.0 - 2e-8);  // even cycle counts dominate by construction
    if (nmg == 1) EXPECT_LT(cal.scale, 0.99);
  }
}

TEST(MgSchedule, Ramp) {
  MgSchedule s;
  EXPECT_EQ(s.at(0, 100), 1);
  EXPECT_EQ(s.at(9, 100), 1);
  EXPECT_EQ(s.at(10, 100), 2);
  EXPECT_EQ(s.at(55, 100), 6);
  EXPECT_EQ(s.at(99, 100), 6);
  s.n_start = 0;
  EXPECT_THROW(s.validate(), Error);
}
