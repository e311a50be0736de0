#include "ippgd/io.hpp"
#include "ippgd/operator.hpp"
#include "testing.hpp"

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

using namespace ippgd;
using ippgd::testing::random_spd;

TEST(InnerM, IdentityAndDiagonal) {
  Vector u(2), v(2);
  u << 1, 2;
  v << 3, 4;
  EXPECT_DOUBLE_EQ(inner_m(LinearOperator::identity(2), u, v), 11.0);
  Vector d(2);
  d << 2, 3;
  Vector ones = Vector::Ones(2);
  EXPECT_DOUBLE_EQ(inner_m(LinearOperator::diagonal(d), ones, ones), 5.0);
}

TEST(InnerM, SymmetricForSpd) {
  const DenseMatrix a = random_spd(10, 3);
  const auto m = LinearOperator::dense_spd(a);
  const Vector u = random_vector(10, 1), v = random_vector(10, 2);
  const double uv = inner_m(m, u, v), vu = inner_m(m, v, u);
  EXPECT_NEAR(uv, vu, 1e-12 * std::abs(uv));
  EXPECT_NEAR(uv, u.dot(a.transpose() * v), 1e-12 * std::abs(uv));
}

TEST(InnerM, Errors) {
  const auto m = LinearOperator::identity(3);
  EXPECT_THROW(inner_m(m, Vector::Ones(2), Vector::Ones(3)), DimensionError);
  Vector bad = Vector::Ones(3);
  bad[0] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(inner_m(m, bad, Vector::Ones(3)), Error);
}

TEST(LinearOperator, Linearity) {
  const DenseMatrix a = ippgd::testing::random_matrix(7, 5, 9);
  const auto ops = {LinearOperator::dense(a), compose(LinearOperator::dense(a), LinearOperator::identity(5)),
                    compose(LinearOperator::dense(a), LinearOperator::dense_spd(random_spd(5, 4)))};
  for (const auto& op : ops) {
    const Vector x = random_vector(5, 1), y = random_vector(5, 2);
    const Vector lhs = op.apply(2.5 * x - 0.75 * y);
    const Vector rhs = 2.5 * op.apply(x) - 0.75 * op.apply(y);
    EXPECT_LE(ippgd::testing::rel_diff(lhs, rhs), 1e-12);
  }
}

TEST(LinearOperator, SparseTransposeAndInverse) {
  SparseMatrix s(3, 4);
  s.insert(0, 1) = 2.0;
  s.insert(2, 3) = -1.0;
  s.makeCompressed();
  const auto op = LinearOperator::sparse(s);
  const Vector y = random_vector(3, 5);
  const Vector x = random_vector(4, 6);
  EXPECT_NEAR(y.dot(op.apply(x)), x.dot(op.apply_transpose(y)), 1e-14);
  EXPECT_THROW(op.solve(y), Error);

  Vector d(3);
  d << 1, 2, 4;
  const auto dop = LinearOperator::diagonal(d).scaled(2.0);
  EXPECT_LE(ippgd::testing::rel_diff(dop.solve(dop.apply(y)), y), 1e-15);
  EXPECT_TRUE(dop.spd());
}

TEST(LoewnerBounds, Diagonal) {
  Vector d(2);
  d << 2, 3;
  const auto iv = loewner_bounds(LinearOperator::identity(2), LinearOperator::diagonal(d));
  EXPECT_NEAR(iv.c1, 2.0, 1e-12);
  EXPECT_NEAR(iv.c2, 3.0, 1e-12);
}

TEST(LoewnerBounds, EqualOperators) {
  const auto q = LinearOperator::dense_spd(random_spd(15, 21));
  const auto iv = loewner_bounds(q, q, 1e-10);
  EXPECT_NEAR(iv.c1, 1.0, 1e-9);
  EXPECT_NEAR(iv.c2, 1.0, 1e-9);
}

TEST(LoewnerBounds, MatchesDenseGeneralizedEigenvalues) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const DenseMatrix q = random_spd(30, seed, 0.3, 4.0);
    const DenseMatrix r = random_spd(30, seed + 100, 0.2, 7.0);
    Eigen::GeneralizedSelfAdjointEigenSolver<DenseMatrix> ges(r, q, Eigen::EigenvaluesOnly);
    const double lo = ges.eigenvalues().minCoeff(), hi = ges.eigenvalues().maxCoeff();
    const auto iv = loewner_bounds(LinearOperator::dense_spd(q), LinearOperator::dense_spd(r), 1e-12);
    EXPECT_NEAR(iv.c1, lo, 1e-8 * hi);
    EXPECT_NEAR(iv.c2, hi, 1e-8 * hi);
    // Same result when Q^{-1} is applied by CG.
    const auto iv_cg = loewner_bounds(LinearOperator::dense(q, {true, true}), LinearOperator::dense_spd(r), 1e-12);
    EXPECT_NEAR(iv_cg.c1, lo, 1e-8 * hi);
    EXPECT_NEAR(iv_cg.c2, hi, 1e-8 * hi);
  }
}

TEST(LoewnerBounds, RayleighQuotientsInsideInterval) {
  const DenseMatrix q = random_spd(20, 8);
  const DenseMatrix r = random_spd(20, 9);
  const auto iv = loewner_bounds(LinearOperator::dense_spd(q), LinearOperator::dense_spd(r), 1e-12);
  for (int s = 0; s < 200; ++s) {
    const Vector x = random_vector(20, 500 + s);
    const double rq = x.dot(r * x) / x.dot(q * x);
    EXPECT_GE(rq, iv.c1 * (1 - 1e-10));
    EXPECT_LE(rq, iv.c2 * (1 + 1e-10));
  }
}

TEST(GeneralizedExtremes, NonConvergenceCarriesEstimate) {
  const DenseMatrix r = random_spd(60, 2, 1.0, 1000.0);
  SpectralOptions opts;
  opts.max_iterations = 3;
  opts.tol = 1e-14;
  try {
    generalized_extremes([](const Vector& in, Vector& out) { out = in; }, LinearOperator::dense_spd(r), opts);
    FAIL() << "expected NonConvergence";
  } catch (const NonConvergence& e) {
    EXPECT_GT(e.best_estimate(), 1.0);
    EXPECT_LE(e.best_estimate(), 1000.0 * (1 + 1e-12));
    EXPECT_GT(e.residual(), 1e-14);
  }
}

TEST(SpdLemma, EqualOperatorsGiveZero) {
  const auto q = LinearOperator::dense_spd(random_spd(12, 5));
  const auto rep = lemma_spd_check(q, q, 20);
  EXPECT_TRUE(rep.passed);
  EXPECT_LE(rep.max_violation, 1e-9);
}

TEST(SpdLemma, ScaledIdentityEqualityCase) {
  const auto q = LinearOperator::identity(6);
  const auto r = LinearOperator::diagonal(Vector::Constant(6, 2.0));
  const auto rep = lemma_spd_check(q, r, 30);
  EXPECT_NEAR(rep.bounds.c1, 2.0, 1e-12);
  EXPECT_NEAR(rep.bounds.c2, 2.0, 1e-12);
  EXPECT_LE(rep.max_violation, 1e-12);
  // Direct computation: (1 - 1/2)^2 * 2 = 1/2 = (1-2)^2 * (1/2).
  const Vector x = random_vector(6, 4);
  const Vector d = x - 0.5 * x;
  EXPECT_NEAR(d.dot(2.0 * d), 0.5 * x.squaredNorm(), 1e-12);
}

TEST(SpdLemma, RandomPairsWithDenseOracle) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const DenseMatrix q = random_spd(20, 2 * seed + 1, 0.5, 3.0);
    const DenseMatrix r = random_spd(20, 2 * seed + 2, 0.5, 3.0);
    const auto rep = lemma_spd_check(LinearOperator::dense_spd(q), LinearOperator::dense_spd(r), 10, seed);
    ASSERT_TRUE(rep.passed) << "seed " << seed << " violation " << rep.max_violation;
    // Operator form of the inequality via dense inverses.
    const DenseMatrix qi = q.inverse(), ri = r.inverse();
    const double c1 = rep.bounds.c1, c2 = rep.bounds.c2;
    const double f = std::max((1 - c1) * (1 - c1), (1 - c2) * (1 - c2));
    const DenseMatrix gap = f * ri - (qi - ri) * r * (qi - ri);
    Eigen::SelfAdjointEigenSolver<DenseMatrix> es(0.5 * (gap + gap.transpose()), Eigen::EigenvaluesOnly);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-9 * ri.norm());
  }
}

TEST(ConjugateGradient, SolvesSpdSystem) {
  const DenseMatrix a = random_spd(40, 12, 1.0, 50.0);
  const Vector b = random_vector(40, 13);
  const auto res = conjugate_gradient(LinearOperator::dense(a, {true, true}), b, 1e-12, 500);
  EXPECT_LE((a * res.x - b).norm() / b.norm(), 1e-12);
  EXPECT_THROW(conjugate_gradient(LinearOperator::dense(a, {true, true}), b, 1e-14, 2), NonConvergence);
}

TEST(MatrixMarket, RoundTrip) {
  const auto dir = std::filesystem::temp_directory_path();
  SparseMatrix s(4, 3);
  s.insert(0, 0) = 1.0 / 3.0;
  s.insert(3, 2) = -2e-17;
  s.insert(1, 1) = 5.0;
  s.makeCompressed();
  const std::string sp = (dir / "ippgd_rt_sparse.mtx").string();
  write_matrix_market(sp, s);
  const SparseMatrix back = read_matrix_market(sp);
  EXPECT_EQ((DenseMatrix(back) - DenseMatrix(s)).norm(), 0.0);

  const DenseMatrix d = ippgd::testing::random_matrix(3, 5, 4);
  const std::string dp = (dir / "ippgd_rt_dense.mtx").string();
  write_matrix_market(dp, d);
  EXPECT_EQ((read_matrix_market_dense(dp) - d).norm(), 0.0);

  const Vector v = random_vector(9, 2);
  const std::string vp = (dir / "ippgd_rt_vec.txt").string();
  write_vector_text(vp, v);
  EXPECT_EQ((read_vector_text(vp) - v).norm(), 0.0);
  std::remove(sp.c_str());
  std::remove(dp.c_str());
  std::remove(vp.c_str());
}

TEST(MatrixMarket, SymmetricCoordinate) {
  const auto path = (std::filesystem::temp_directory_path() / "ippgd_sym.mtx").string();
  {
    std::FILE* f = std::fopen(path.c_str(), "w");
    std::fputs("%%MatrixMarket matrix coordinate real symmetric\n% comment\n2 2 2\n1 1 4\n2 1 -1\n", f);
    std::fclose(f);
  }
  const DenseMatrix a = read_matrix_market_dense(path);
  EXPECT_EQ(a(0, 1), -1.0);
  EXPECT_EQ(a(1, 0), -1.0);
  EXPECT_EQ(a(0, 0), 4.0);
  std::remove(path.c_str());
  EXPECT_THROW(read_matrix_market("/nonexistent/file.mtx"), Error);
}
