#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "lineqcox/kernel.hpp"

using namespace lineqcox;

TEST(SeKernel, ZeroDistanceReturnsVariance) { EXPECT_DOUBLE_EQ(se_kernel(0.3, 0.3, 1.0, 0.2), 1.0); }

TEST(SeKernel, OneLengthscaleApart) {
  EXPECT_NEAR(se_kernel(0.0, 0.2, 1.0, 0.2), 0.6065306597126334, 1e-15);
  EXPECT_NEAR(se_kernel(0.0, 1.0, 2.0, 0.5), 0.2706705664732254, 1e-15);
}

TEST(SeKernel, RejectsNonPositiveParameters) {
  EXPECT_THROW(se_kernel(0.0, 1.0, 0.0, 0.5), ParameterError);
  EXPECT_THROW(se_kernel(0.0, 1.0, 1.0, -0.5), ParameterError);
}

TEST(SeKernel, StationaryAndDecaying) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int i = 0; i < 200; ++i) {
    const double t = u(rng), t2 = u(rng), c = u(rng);
    EXPECT_NEAR(se_kernel(t + c, t2 + c, 1.3, 0.7), se_kernel(t, t2, 1.3, 0.7), 1e-12);
    EXPECT_DOUBLE_EQ(se_kernel(t, t2, 1.3, 0.7), se_kernel(t2, t, 1.3, 0.7));
  }
  double prev = se_kernel(0.0, 0.0, 1.0, 0.4);
  for (double d = 0.01; d < 3.0; d += 0.01) {
    const double k = se_kernel(0.0, d, 1.0, 0.4);
    EXPECT_LT(k, prev);
    prev = k;
  }
}

TEST(TensorKernel, Examples) {
  const KernelParams p{1.0, {0.2, 0.2}};
  const std::vector<double> o{0.0, 0.0};
  EXPECT_DOUBLE_EQ(tensor_kernel(o, o, p), 1.0);
  EXPECT_NEAR(tensor_kernel(o, std::vector<double>{0.2, 0.0}, p), std::exp(-0.5), 1e-15);
  EXPECT_NEAR(tensor_kernel(o, std::vector<double>{0.2, 0.2}, p), std::exp(-1.0), 1e-15);
  EXPECT_THROW(tensor_kernel(o, std::vector<double>{0.2}, p), ShapeError);
}

TEST(TensorKernel, ProductOfFactorsWithVarianceOnce) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const KernelParams p{0.5 + 3.0 * u(rng), {0.05 + u(rng), 0.05 + u(rng), 0.05 + u(rng)}};
    std::vector<double> x{u(rng), u(rng), u(rng)}, y{u(rng), u(rng), u(rng)};
    double prod = p.variance;
    for (int d = 0; d < 3; ++d) prod *= se_kernel(x[d], y[d], 1.0, p.lengthscales[d]);
    EXPECT_NEAR(tensor_kernel(x, y, p), prod, 1e-13 * p.variance);
  }
  const KernelParams one{2.0, {0.3}};
  EXPECT_DOUBLE_EQ(tensor_kernel(std::vector<double>{0.1}, std::vector<double>{0.5}, one), se_kernel(0.1, 0.5, 2.0, 0.3));
}

TEST(CovarianceMatrix, SingleKnotHasVariancePlusJitter) {
  // The coarsest valid grid has two knots; check the diagonal entry.
  const auto grid = make_grid(Interval{0.0, 1.0}, 2);
  const auto cov = covariance_matrix(grid, KernelParams{1.0, {0.2}}, 1e-3);
  EXPECT_DOUBLE_EQ(cov(0, 0), 1.0 + 1e-3);
}

TEST(CovarianceMatrix, TwoKnotsOneApart) {
  const auto grid = make_grid(Interval{0.0, 1.0}, 2);
  const auto cov = covariance_matrix(grid, KernelParams{1.0, {0.2}}, 0.0);
  EXPECT_NEAR(cov(0, 1), 3.726653172078671e-06, 1e-20);
  EXPECT_DOUBLE_EQ(cov(0, 0), 1.0);
}

TEST(CovarianceMatrix, SymmetricAndFactorisableOnDenseGrids) {
  for (std::size_t m : {10u, 100u, 200u}) {
    const auto grid = make_grid(Interval{0.0, 5.0}, m);
    const KernelParams p{4.0, {0.5}};
    const auto cov = covariance_matrix(grid, p, 0.0);
    EXPECT_EQ(cov, cov.transpose());
    const auto f = factorize_covariance(grid, p);
    EXPECT_GE(f.jitter, 1e-8 * p.variance);
    EXPECT_LE(f.jitter, 1e-4 * p.variance);
    EXPECT_TRUE((f.lower * f.lower.transpose() - f.covariance).cwiseAbs().maxCoeff() < 1e-10);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(f.covariance);
    EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
  }
}

TEST(CovarianceMatrix, TensorGridUsesRowMajorKnots) {
  const auto grid = make_grid({{0.0, 1.0}, {0.0, 1.0}}, {2, 3});
  const KernelParams p{1.0, {0.2, 0.3}};
  const auto cov = covariance_matrix(grid, p, 0.0);
  ASSERT_EQ(cov.rows(), 6);
  // Flat index 1 is knot (0, 0.5); flat index 3 is knot (1, 0).
  EXPECT_DOUBLE_EQ(cov(0, 1), tensor_kernel(std::vector<double>{0, 0}, std::vector<double>{0, 0.5}, p));
  EXPECT_DOUBLE_EQ(cov(0, 3), tensor_kernel(std::vector<double>{0, 0}, std::vector<double>{1, 0}, p));
}

TEST(CovarianceMatrix, QuadraticFormMatchesDirectSolve) {
  const auto grid = make_grid(Interval{0.0, 1.0}, 8);
  const auto f = factorize_covariance(grid, KernelParams{1.0, {0.5}});
  Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(8, 0.1, 0.8);
  const double direct = x.dot(f.covariance.ldlt().solve(x));
  EXPECT_NEAR(f.quadratic_form(x), direct, 1e-6 * std::abs(direct));
}
