#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "lineqcox/tmvn.hpp"

using namespace lineqcox;

namespace {

ConstraintSystem halfspaces(std::initializer_list<std::initializer_list<double>> rows, Eigen::VectorXd offsets,
                            Eigen::VectorXd feasible) {
  Eigen::MatrixXd f(static_cast<Eigen::Index>(rows.size()), feasible.size());
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (double v : row) f(r, c++) = v;
    ++r;
  }
  return ConstraintSystem::from_halfspaces(f, std::move(offsets), std::move(feasible));
}

// Standard error of a chain mean from 50 batch means.
double batch_se(const std::vector<double>& x) {
  const std::size_t b = 50, len = x.size() / b;
  std::vector<double> means(b, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < len; ++j) means[i] += x[i * len + j];
    means[i] /= static_cast<double>(len);
  }
  double mu = 0.0;
  for (double m : means) mu += m;
  mu /= b;
  double v = 0.0;
  for (double m : means) v += (m - mu) * (m - mu);
  return std::sqrt(v / (b - 1) / b);
}

double within(const OrthantEstimate& e, double truth) {
  return std::abs(e.log_probability - std::log(truth)) / std::max(e.std_error, 1e-12);
}

}  // namespace

TEST(ExactHmc, HalfNormalMoments) {
  TmvnProblem p{Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1),
                halfspaces({{1.0}}, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, 0.5))};
  const auto draws = sample_tmvn_hmc(p, Eigen::VectorXd::Constant(1, 0.5), 100000, 7);
  std::vector<double> x;
  for (const auto& d : draws) x.push_back(d[0]);
  double mean = 0.0, m2 = 0.0;
  for (double v : x) mean += v;
  mean /= x.size();
  for (double v : x) m2 += (v - mean) * (v - mean);
  const double var = m2 / (x.size() - 1);
  const double mu = std::sqrt(2.0 / std::numbers::pi);
  EXPECT_NEAR(mean, mu, 3.0 * batch_se(x));
  EXPECT_NEAR(mean, mu, 0.01 * mu);
  EXPECT_NEAR(var, 1.0 - 2.0 / std::numbers::pi, 0.01 * (1.0 - 2.0 / std::numbers::pi));
  for (double v : x) ASSERT_GE(v, -1e-9);
}

TEST(ExactHmc, UnconstrainedLimitRecoversCovariance) {
  const Eigen::Index d = 5;
  Eigen::MatrixXd a = Eigen::MatrixXd::Random(d, d);
  Eigen::MatrixXd cov = a * a.transpose() + 0.5 * Eigen::MatrixXd::Identity(d, d);
  Eigen::VectorXd mean = Eigen::VectorXd::LinSpaced(d, -1.0, 1.0);
  Eigen::MatrixXd f(2 * d, d);
  f << Eigen::MatrixXd::Identity(d, d), -Eigen::MatrixXd::Identity(d, d);
  const auto sys = ConstraintSystem::from_halfspaces(f, Eigen::VectorXd::Constant(2 * d, 1e10), mean);
  const auto draws = sample_tmvn_hmc(TmvnProblem{mean, cov, sys}, mean, 100000, 3);
  Eigen::VectorXd m = Eigen::VectorXd::Zero(d);
  for (const auto& x : draws) m += x;
  m /= static_cast<double>(draws.size());
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(d, d);
  for (const auto& x : draws) s += (x - m) * (x - m).transpose();
  s /= static_cast<double>(draws.size() - 1);
  EXPECT_LT((s - cov).norm() / cov.norm(), 0.05);
  for (Eigen::Index i = 0; i < d; ++i) EXPECT_NEAR(m[i], mean[i], 4.0 * std::sqrt(cov(i, i) / 1e5));
}

TEST(ExactHmc, WedgeAgreesWithRejectionOracle) {
  // x1 ≥ 0 and x1 − x2 ≥ 0 under independent standard normals.
  const auto sys = halfspaces({{1.0, 0.0}, {1.0, -1.0}}, Eigen::VectorXd::Zero(2), Eigen::Vector2d(1.0, 0.0));
  const auto draws = sample_tmvn_hmc(TmvnProblem{Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2), sys},
                                     Eigen::Vector2d(1.0, 0.0), 100000, 11);
  std::vector<double> ind;
  for (const auto& x : draws) ind.push_back(x[1] >= 0.0 ? 1.0 : 0.0);
  double hmc = 0.0;
  for (double v : ind) hmc += v;
  hmc /= ind.size();

  std::mt19937_64 rng(99);
  std::normal_distribution<double> n01;
  std::size_t kept = 0, hit = 0;
  while (kept < 100000) {
    const double x1 = n01(rng), x2 = n01(rng);
    if (x1 < 0.0 || x1 < x2) continue;
    ++kept;
    hit += x2 >= 0.0;
  }
  const double rej = static_cast<double>(hit) / kept;
  const double se = std::hypot(batch_se(ind), std::sqrt(rej * (1 - rej) / kept));
  EXPECT_NEAR(hmc, rej, 3.0 * se);
  // Closed form: the wedge has angle 3π/4, of which the x2 ≥ 0 part is π/4.
  EXPECT_NEAR(rej, 1.0 / 3.0, 0.01);
}

TEST(ExactHmc, SamplesSatisfyComposedConstraints) {
  const auto grid = make_grid(Interval{0.0, 1.0}, 20);
  const auto sys = build_constraint_system(
      {ConstraintSpec::nonnegative(), ConstraintSpec::nonincreasing(), ConstraintSpec::convex()}, grid);
  const KernelParams kp{1.0, {0.2}};
  const auto f = factorize_covariance(grid, kp);
  const auto draws = sample_tmvn_hmc(TmvnProblem{Eigen::VectorXd::Zero(20), f.covariance, sys}, sys.feasible_point(),
                                     2000, 5);
  for (const auto& x : draws) ASSERT_TRUE(check_satisfied(sys, x, 1e-9));
}

TEST(ExactHmc, ShiftedMeanStaysFeasible) {
  const auto grid = make_grid(Interval{0.0, 1.0}, 10);
  const auto sys = build_constraint_system({ConstraintSpec::nonnegative(), ConstraintSpec::nondecreasing()}, grid);
  const auto f = factorize_covariance(grid, KernelParams{2.0, {0.3}});
  const Eigen::VectorXd mean = Eigen::VectorXd::LinSpaced(10, 3.0, -3.0);
  const auto draws = sample_tmvn_hmc(TmvnProblem{mean, f.covariance, sys}, sys.feasible_point(), 1000, 8);
  for (const auto& x : draws) ASSERT_TRUE(check_satisfied(sys, x, 1e-9 * std::sqrt(2.0)));
}

TEST(ExactHmc, DeterministicGivenSeed) {
  const auto grid = make_grid(Interval{0.0, 1.0}, 8);
  const auto sys = build_constraint_system({ConstraintSpec::nonnegative()}, grid);
  const TmvnProblem p{Eigen::VectorXd::Zero(8), factorize_covariance(grid, KernelParams{1.0, {0.2}}).covariance, sys};
  const auto a = sample_tmvn_hmc(p, sys.feasible_point(), 50, 42);
  const auto b = sample_tmvn_hmc(p, sys.feasible_point(), 50, 42);
  const auto c = sample_tmvn_hmc(p, sys.feasible_point(), 50, 43);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
  EXPECT_NE(a.back(), c.back());
}

TEST(ExactHmc, ErrorPaths) {
  const auto sys = halfspaces({{1.0}}, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, 1.0));
  const TmvnProblem p{Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1), sys};
  EXPECT_THROW(sample_tmvn_hmc(p, Eigen::VectorXd::Constant(1, -0.5), 10, 1), InfeasibleError);
  EXPECT_THROW(sample_tmvn_hmc(p, Eigen::VectorXd::Zero(1), 10, 1), InfeasibleError);
  EXPECT_THROW(sample_tmvn_hmc(p, Eigen::VectorXd::Ones(2), 10, 1), ShapeError);

  // Two parallel walls a hair apart force endless bouncing.
  const auto slab = halfspaces({{1.0}, {-1.0}}, Eigen::Vector2d(0.0, 1e-9), Eigen::VectorXd::Constant(1, 5e-10));
  TmvnProblem tight{Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1), slab};
  tight.options.max_bounces = 1000;
  EXPECT_THROW(sample_tmvn_hmc(tight, Eigen::VectorXd::Constant(1, 5e-10), 5, 1), DivergenceError);
}

TEST(Orthant, ClosedFormCases) {
  const auto d1 = orthant_log_probability(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1), 200, 1);
  EXPECT_LE(within(d1, 0.5), 3.0);
  EXPECT_EQ(d1.n_samples, 200u);

  const auto d3 = orthant_log_probability(Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Identity(3, 3), 200, 2);
  EXPECT_LE(within(d3, 0.125), 3.0);

  Eigen::Matrix2d rho;
  rho << 1.0, 0.5, 0.5, 1.0;
  const auto d2 = orthant_log_probability(Eigen::VectorXd::Zero(2), rho, 10000, 3);
  EXPECT_LE(within(d2, 0.25 + std::asin(0.5) / (2.0 * std::numbers::pi)), 3.0);
  EXPECT_NEAR(std::exp(d2.log_probability), 1.0 / 3.0, 0.01);
}

TEST(Orthant, DiagonalMatchesProductOfCdfs) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int rep = 0; rep < 20; ++rep) {
    const int d = 1 + rep % 6;
    Eigen::VectorXd mu(d), sd(d);
    double exact = 0.0;
    for (int i = 0; i < d; ++i) {
      mu[i] = u(rng);
      sd[i] = 0.2 + std::abs(u(rng));
      exact += std::log(0.5 * std::erfc(-mu[i] / sd[i] / std::sqrt(2.0)));
    }
    const Eigen::MatrixXd cov = sd.array().square().matrix().asDiagonal();
    const auto e = orthant_log_probability(mu, cov, 200, rep);
    EXPECT_NEAR(e.log_probability, exact, std::max(3.0 * e.std_error, 1e-10));
  }
}

TEST(Orthant, CorrelatedAgainstMonteCarloOracle) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Random(4, 4);
  Eigen::MatrixXd cov = a * a.transpose() + 0.3 * Eigen::MatrixXd::Identity(4, 4);
  Eigen::Vector4d mu(0.5, -0.2, 0.1, 0.8);
  const auto e = orthant_log_probability(mu, cov, 20000, 5);
  Eigen::MatrixXd l = cov.llt().matrixL();
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n01;
  const int n = 400000;
  int hit = 0;
  for (int s = 0; s < n; ++s) {
    Eigen::Vector4d z;
    for (int i = 0; i < 4; ++i) z[i] = n01(rng);
    hit += ((mu + l * z).array() >= 0.0).all();
  }
  const double p = static_cast<double>(hit) / n;
  const double se = std::hypot(e.std_error, std::sqrt(p * (1 - p) / n) / p);
  EXPECT_NEAR(e.log_probability, std::log(p), 3.0 * se);
}

TEST(Orthant, SingularCovarianceUsesIndicatorRows) {
  // X2 = X1 exactly: P(X ≥ 0) = P(X1 ≥ 0).
  Eigen::Matrix2d cov = Eigen::Matrix2d::Ones();
  const auto e = orthant_log_probability(Eigen::Vector2d(0.3, 0.3), cov, 200, 4);
  EXPECT_NEAR(e.log_probability, std::log(0.5 * std::erfc(-0.3 / std::sqrt(2.0))), 1e-12);
  // X2 = −X1 with zero means: the orthant is a null set.
  Eigen::Matrix2d anti;
  anti << 1.0, -1.0, -1.0, 1.0;
  const auto z = orthant_log_probability(Eigen::Vector2d(0.0, -0.5), anti, 200, 4);
  EXPECT_EQ(z.log_probability, -std::numeric_limits<double>::infinity());
}

TEST(Orthant, DeterministicAndValidated) {
  Eigen::Matrix3d cov;
  cov << 1, 0.3, 0.1, 0.3, 1, 0.2, 0.1, 0.2, 1;
  const Eigen::Vector3d mu(0.1, 0.2, -0.3);
  const auto a = orthant_log_probability(mu, cov, 300, 9);
  const auto b = orthant_log_probability(mu, cov, 300, 9);
  EXPECT_EQ(a.log_probability, b.log_probability);
  EXPECT_EQ(a.std_error, b.std_error);
  EXPECT_LE(a.log_probability, 0.0);
  EXPECT_THROW(orthant_log_probability(mu, cov, 1, 9), ParameterError);
  EXPECT_THROW(orthant_log_probability(Eigen::Vector2d::Zero(), cov, 10, 9), ShapeError);
  Eigen::Matrix3d bad = cov;
  bad(0, 0) = std::nan("");
  EXPECT_THROW(orthant_log_probability(mu, bad, 10, 9), NumericalError);
}

TEST(ProposalLogRatio, Examples) {
  Eigen::Matrix3d sigma;
  sigma << 1, 0.4, 0.1, 0.4, 1, 0.3, 0.1, 0.3, 1;
  const Eigen::Vector3d a(0.2, 0.5, 0.1), b(1.0, 0.1, 0.4);
  EXPECT_EQ(proposal_log_ratio(sigma, a, a, 200, 3), 0.0);
  EXPECT_EQ(proposal_log_ratio(sigma, a, b, 200, 3), -proposal_log_ratio(sigma, b, a, 200, 3));
  EXPECT_THROW(proposal_log_ratio(sigma, Eigen::Vector3d(-0.1, 0, 0), b, 200, 3), DomainError);
  EXPECT_THROW(proposal_log_ratio(sigma, Eigen::Vector2d::Zero(), b, 200, 3), ShapeError);
}

TEST(ProposalLogRatio, DiagonalSigmaFactorises) {
  const Eigen::Vector3d s(0.1, 0.5, 2.0);
  const Eigen::MatrixXd sigma = s.array().square().matrix().asDiagonal();
  const Eigen::Vector3d a(0.05, 0.3, 0.0), b(0.2, 0.0, 1.5);
  double exact = 0.0;
  for (int i = 0; i < 3; ++i) {
    exact += std::log(0.5 * std::erfc(-a[i] / s[i] / std::sqrt(2.0))) - std::log(0.5 * std::erfc(-b[i] / s[i] / std::sqrt(2.0)));
  }
  EXPECT_NEAR(proposal_log_ratio(sigma, a, b, 200, 1), exact, 1e-12);
}

TEST(RegionProbability, NonnegativeReducesToOrthant) {
  const auto grid = make_grid(Interval{0.0, 1.0}, 6);
  const auto sys = build_constraint_system({ConstraintSpec::nonnegative()}, grid);
  const Eigen::MatrixXd sigma = 1e-3 * factorize_covariance(grid, KernelParams{1.0, {0.3}}).covariance;
  const RegionProbability region(sys, sigma);
  const Eigen::VectorXd chi = Eigen::VectorXd::LinSpaced(6, 0.01, 0.06);
  EXPECT_EQ(region.log_probability(chi, 200, 4).log_probability,
            orthant_log_probability(chi, 0.5 * (sigma + sigma.transpose()), 200, 4).log_probability);
}

TEST(RegionProbability, MonotoneRegionAgainstMonteCarlo) {
  const auto grid = make_grid(Interval{0.0, 1.0}, 5);
  const auto sys = build_constraint_system({ConstraintSpec::nonnegative(), ConstraintSpec::nonincreasing()}, grid);
  const Eigen::MatrixXd sigma = 0.05 * factorize_covariance(grid, KernelParams{1.0, {0.5}}).covariance;
  const Eigen::VectorXd chi = Eigen::VectorXd::LinSpaced(5, 0.5, 0.1);
  // More constraints than dimensions: the projected covariance is singular.
  const auto e = RegionProbability(sys, sigma).log_probability(chi, 20000, 8);
  const Eigen::MatrixXd l = sigma.llt().matrixL();
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n01;
  const int n = 200000;
  int hit = 0;
  for (int s = 0; s < n; ++s) {
    Eigen::VectorXd z(5);
    for (int i = 0; i < 5; ++i) z[i] = n01(rng);
    hit += check_satisfied(sys, chi + l * z, 0.0);
  }
  const double p = static_cast<double>(hit) / n;
  const double se = std::hypot(e.std_error, std::sqrt(p * (1 - p) / n) / p);
  EXPECT_NEAR(e.log_probability, std::log(p), 3.0 * se);
}
