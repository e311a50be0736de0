#include "ippgd/problems.hpp"
#include "testing.hpp"

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include <filesystem>

using namespace ippgd;
using ippgd::testing::random_spd;
using ippgd::testing::rel_diff;

namespace {

double cond(const DenseMatrix& a) {
  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(a, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff() / es.eigenvalues().minCoeff();
}

MetricSet exact_metric(const DenseMatrix& m, const DenseMatrix& b) {
  return prescribed_inexactness_metric(m, b, 0.0, 1, "exact");
}

}  // namespace

TEST(GenQuadratic, IdentityWhenKappaOne) {
  const auto q = gen_quadratic(8, 3, 1.0, 5);
  EXPECT_EQ((q.a - DenseMatrix::Identity(8, 8)).norm(), 0.0);
}

TEST(GenQuadratic, ConditionNumberAndDeterminism) {
  const auto q = gen_quadratic(20, 5, 10.0, 7);
  const double ratio = cond(q.a) / 10.0;
  EXPECT_GE(ratio, 0.9);
  EXPECT_LE(ratio, 1.1);
  const auto r = gen_quadratic(20, 5, 10.0, 7);
  EXPECT_EQ(q.a, r.a);
  EXPECT_EQ(q.b, r.b);
  EXPECT_EQ(q.bc, r.bc);
  EXPECT_EQ(Eigen::FullPivLU<DenseMatrix>(q.bc).rank(), 5);
  EXPECT_THROW(gen_quadratic(5, 5, 2.0, 1), Error);
}

TEST(KktOracle, ZeroLinearTerm) {
  auto q = gen_quadratic(10, 3, 4.0, 2);
  q.b.setZero();
  EXPECT_LE(kkt_oracle(q).norm(), 1e-14);
}

TEST(KktOracle, HandExample) {
  QuadraticInstance q;
  q.a = DenseMatrix::Identity(2, 2);
  q.b = -Vector::Ones(2);
  q.bc = DenseMatrix(1, 2);
  q.bc << 1, -1;
  const Vector u = kkt_oracle(q);
  EXPECT_NEAR(u[0], 1.0, 1e-14);
  EXPECT_NEAR(u[1], 1.0, 1e-14);
}

TEST(KktOracle, FeasibleOptimalAndMinimal) {
  const auto q = gen_quadratic(30, 8, 20.0, 3);
  const Vector u = kkt_oracle(q);
  EXPECT_LE((q.bc * u).norm(), 1e-10 * u.norm());
  ExactProjector p(LinearOperator::identity(30), LinearOperator::dense(q.bc));
  for (int s = 0; s < 100; ++s) {
    const Vector v = p.project(random_vector(30, 40 + s));
    EXPECT_LE(q.f(u), q.f(u + 1e-3 * v));
  }
  // Optimality in any SPD metric: P_M M^{-1} grad f(u*) = 0.
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto m = LinearOperator::dense_spd(random_spd(30, seed + 9));
    ExactProjector pm(m, LinearOperator::dense(q.bc));
    const Vector g = q.grad(u);
    EXPECT_LE(norm_m(m, pm.project(m.solve(g))), 1e-8 * norm_m_inverse(m, g));
  }
}

TEST(Bregman, QuadraticIdentityAndConvexity) {
  const auto q = gen_quadratic(15, 4, 8.0, 4);
  const DenseMatrix m = random_spd(15, 33);
  const auto prob = quadratic_problem(q, m);
  const Vector u = random_vector(15, 1), v = random_vector(15, 2);
  EXPECT_NEAR(bregman(prob, u, v), 0.5 * (u - v).dot(q.a * (u - v)), 1e-12 * (u - v).squaredNorm() * 8.0);
  EXPECT_EQ(bregman(prob, u, u), 0.0);
  const double mu = prob.mu_l->first, l = prob.mu_l->second;
  for (int s = 0; s < 50; ++s) {
    const Vector a = random_vector(15, 100 + s), b = random_vector(15, 200 + s);
    const double d = bregman(prob, a, b);
    const double n2 = (a - b).dot(m * (a - b));
    EXPECT_GE(d, 0.5 * mu * n2 * (1 - 1e-10));
    EXPECT_LE(d, 0.5 * l * n2 * (1 + 1e-10));
  }
}

TEST(ProblemSpec, GradientConsistency) {
  const auto prob = quadratic_problem(gen_quadratic(12, 3, 5.0, 8));
  const auto rep = gradient_consistency(prob, 20);
  EXPECT_TRUE(rep.passed()) << rep.max_violation();
}

TEST(Instance, SaveLoadRoundTrip) {
  const auto q = gen_quadratic(9, 2, 3.0, 77);
  const std::string prefix = (std::filesystem::temp_directory_path() / "ippgd_inst").string();
  save_instance(q, prefix);
  const auto r = load_instance(prefix);
  EXPECT_EQ(q.a, r.a);
  EXPECT_EQ(q.bc, r.bc);
  EXPECT_EQ(q.b, r.b);
  EXPECT_EQ(r.seed, 77u);
  EXPECT_EQ(r.kappa_target, 3.0);
  for (const char* s : {"_A.mtx", "_B.mtx", "_b.txt"}) std::filesystem::remove(prefix + s);
}

TEST(FixedPoint, ExactProjectionGivesMinimizer) {
  const auto q = gen_quadratic(20, 6, 10.0, 9);
  const auto prob = quadratic_problem(q);
  const MetricSet ms = exact_metric(DenseMatrix::Identity(20, 20), q.bc);
  const double l = prob.mu_l->second;
  const auto res = fixed_point_solve(prob, ms, 1.0 / l, 1e-12);
  EXPECT_LE(rel_diff(res.u_phi_star, kkt_oracle(q)), 1e-9);
  EXPECT_LE(res.contraction_ratio_observed, res.contraction_bound + 0.05);
  EXPECT_TRUE(res.warning.empty());
}

TEST(FixedPoint, OriginForUnitQuadratic) {
  QuadraticInstance q;
  q.a = DenseMatrix::Identity(2, 2);
  q.b = Vector::Zero(2);
  q.bc = DenseMatrix::Ones(1, 2);
  const auto prob = quadratic_problem(q);
  const MetricSet ms = exact_metric(DenseMatrix::Identity(2, 2), q.bc);
  for (double alpha : {0.3, 1.0, 1.7}) {
    FixedPointOptions opts;
    opts.u0 = Vector::Ones(2) * 3.0;
    EXPECT_LE(fixed_point_solve(prob, ms, alpha, 1e-13, opts).u_phi_star.norm(), 1e-12);
  }
}

TEST(FixedPoint, ContractionWithinBound) {
  // mu = 1, L = 4, alpha = 1/4: bound max{0, 0.75} = 0.75.
  QuadraticInstance q;
  Vector lam(6);
  lam << 1, 1.5, 2, 2.5, 3, 4;
  const DenseMatrix rot = ippgd::testing::random_orthogonal(6, 4);
  q.a = rot * lam.asDiagonal() * rot.transpose();
  q.b = random_vector(6, 1);
  q.bc = ippgd::testing::random_matrix(2, 6, 3);
  const auto prob = quadratic_problem(q);
  const MetricSet ms = prescribed_inexactness_metric(DenseMatrix::Identity(6, 6), q.bc, 0.2, 2);
  const auto res = fixed_point_solve(prob, ms, 0.25, 1e-12);
  EXPECT_NEAR(res.contraction_bound, 0.75, 1e-10);
  EXPECT_LE(res.contraction_ratio_observed, 0.75 + 0.05);
  EXPECT_THROW(fixed_point_solve(prob, ms, 0.5, 1e-12), Error);  // alpha >= 2/L
}

TEST(FixedPoint, UniqueFromDifferentStarts) {
  const auto q = gen_quadratic(25, 7, 6.0, 12);
  const auto prob = quadratic_problem(q);
  const MetricSet ms = prescribed_inexactness_metric(DenseMatrix::Identity(25, 25), q.bc, 0.1, 3);
  const double l = prob.mu_l->second, tol = 1e-11;
  FixedPointOptions a, b;
  a.u0 = random_vector(25, 1);
  b.u0 = 10.0 * random_vector(25, 2);
  const auto ra = fixed_point_solve(prob, ms, 1.0 / l, tol, a);
  const auto rb = fixed_point_solve(prob, ms, 1.0 / l, tol, b);
  EXPECT_LE((ra.u_phi_star - rb.u_phi_star).norm(), 10 * tol * 10);
  EXPECT_LE(rel_diff(ra.u_phi_star, quadratic_fixed_point(q, ms, 1.0 / l)), 1e-9);
}

TEST(UDiff, ExactProjectionDegenerates) {
  const auto q = gen_quadratic(20, 5, 5.0, 13);
  const MetricSet ms = exact_metric(DenseMatrix::Identity(20, 20), q.bc);
  const auto l = quadratic_constants(q, ms.m).c2;
  const auto rep = u_diff_bound_check(q, ms, 1.0 / l);
  EXPECT_TRUE(rep.preconditions_met);
  EXPECT_TRUE(rep.checks.passed()) << rep.checks.worst();
  EXPECT_LE(rep.distance, 1e-8);
}

TEST(UDiff, InexactInstanceWithSlack) {
  const auto q = gen_quadratic(20, 5, 5.0, 14);
  const MetricSet ms = prescribed_inexactness_metric(DenseMatrix::Identity(20, 20), q.bc, 0.02, 5);
  const auto l = quadratic_constants(q, ms.m).c2;
  const auto rep = u_diff_bound_check(q, ms, 1.0 / l);
  EXPECT_NEAR(rep.delta_star, 0.02, 1e-10);
  ASSERT_TRUE(rep.preconditions_met);
  EXPECT_TRUE(rep.checks.passed()) << rep.checks.worst();
  EXPECT_GE(rep.slack_distance, 1.0);
  EXPECT_GT(rep.distance, 0.0);
}

TEST(UDiff, DistanceGrowsAtMostLinearly) {
  const auto q = gen_quadratic(20, 5, 2.0, 15);
  const DenseMatrix id = DenseMatrix::Identity(20, 20);
  const double l = quadratic_constants(q, LinearOperator::identity(20)).c2;
  std::vector<double> per_delta;
  for (double d : {0.01, 0.02, 0.04}) {
    const auto rep = u_diff_bound_check(q, prescribed_inexactness_metric(id, q.bc, d, 6), 1.0 / l);
    EXPECT_TRUE(rep.checks.passed());
    per_delta.push_back(rep.distance / d);
  }
  EXPECT_LE(per_delta[1], per_delta[0] * 1.1);
  EXPECT_LE(per_delta[2], per_delta[0] * 1.1);
}
