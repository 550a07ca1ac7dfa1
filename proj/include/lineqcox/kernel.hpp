#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <concepts>
#include <span>
#include <string>
#include <vector>

#include "lineqcox/errors.hpp"
#include "lineqcox/finite_gp.hpp"

namespace lineqcox {

/// σ² and one lengthscale per input dimension.
struct KernelParams {
  double variance = 1.0;
  std::vector<double> lengthscales{1.0};

  void validate(std::size_t dim) const {
    if (!(variance > 0.0) || !std::isfinite(variance)) {
      throw ParameterError("kernel variance must be positive and finite");
    }
    if (lengthscales.size() != dim) {
      throw ShapeError("expected " + std::to_string(dim) + " lengthscales, got " +
                       std::to_string(lengthscales.size()));
    }
    for (double l : lengthscales) {
      if (!(l > 0.0) || !std::isfinite(l)) throw ParameterError("lengthscales must be positive and finite");
    }
  }
};

/// k(t, t') = σ² exp(−(t − t')² / (2ℓ²)).
inline double se_kernel(double t, double t2, double variance, double lengthscale) {
  if (!(variance > 0.0)) throw ParameterError("se_kernel: variance must be positive");
  if (!(lengthscale > 0.0)) throw ParameterError("se_kernel: lengthscale must be positive");
  const double r = (t - t2) / lengthscale;
  return variance * std::exp(-0.5 * r * r);
}

/// Product of per-dimension SE factors with the variance applied once.
inline double tensor_kernel(std::span<const double> x, std::span<const double> x2, const KernelParams& params) {
  if (x.size() != x2.size() || x.size() != params.lengthscales.size()) {
    throw ShapeError("tensor_kernel: dimension mismatch between points and lengthscales");
  }
  params.validate(x.size());
  double e = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = (x[i] - x2[i]) / params.lengthscales[i];
    e += r * r;
  }
  return params.variance * std::exp(-0.5 * e);
}

/// Anything callable on two points that also reports its marginal variance.
template <class K>
concept CovarianceFunction = requires(const K& k, std::span<const double> x) {
  { k(x, x) } -> std::convertible_to<double>;
  { k.variance() } -> std::convertible_to<double>;
};

class SquaredExponential {
 public:
  explicit SquaredExponential(KernelParams params) : params_(std::move(params)) {
    params_.validate(params_.lengthscales.size());
  }

  double operator()(std::span<const double> x, std::span<const double> x2) const {
    return tensor_kernel(x, x2, params_);
  }
  double variance() const { return params_.variance; }
  const KernelParams& params() const { return params_; }

 private:
  KernelParams params_;
};

/// Γ[p,q] = k(knot_p, knot_q) + jitter·1[p = q] over the flattened knots.
template <CovarianceFunction Kernel>
Eigen::MatrixXd covariance_matrix(const KnotGrid& grid, const Kernel& kernel, double jitter) {
  if (!(jitter >= 0.0)) throw ParameterError("covariance_matrix: jitter must be non-negative");
  const auto n = static_cast<Eigen::Index>(grid.size());
  std::vector<Point> knots;
  knots.reserve(grid.size());
  for (std::size_t p = 0; p < grid.size(); ++p) knots.push_back(grid.knot_point(p));
  Eigen::MatrixXd cov(n, n);
  for (Eigen::Index p = 0; p < n; ++p) {
    cov(p, p) = kernel(knots[p], knots[p]) + jitter;
    for (Eigen::Index q = p + 1; q < n; ++q) {
      const double k = kernel(knots[p], knots[q]);
      cov(p, q) = k;
      cov(q, p) = k;
    }
  }
  return cov;
}

inline Eigen::MatrixXd covariance_matrix(const KnotGrid& grid, const KernelParams& params, double jitter) {
  params.validate(grid.dim());
  return covariance_matrix(grid, SquaredExponential(params), jitter);
}

/// Covariance with its lower Cholesky factor and the jitter that made it factorisable.
struct CovarianceFactor {
  Eigen::MatrixXd covariance;
  Eigen::MatrixXd lower;
  double jitter = 0.0;

  /// χᵀΓ⁻¹χ through one triangular solve.
  double quadratic_form(const Eigen::VectorXd& x) const {
    return lower.triangularView<Eigen::Lower>().solve(x).squaredNorm();
  }
};

inline constexpr double kDefaultRelativeJitter = 1e-8;
inline constexpr double kMaxRelativeJitter = 1e-4;

/// Factorises a covariance matrix, adding jitter from 1e-8·scale upward by ×10
/// until the Cholesky succeeds; gives up beyond 1e-4·scale.
inline CovarianceFactor factorize_with_jitter(Eigen::MatrixXd cov, double scale) {
  const Eigen::Index n = cov.rows();
  for (double rel = kDefaultRelativeJitter; rel <= kMaxRelativeJitter * (1.0 + 1e-9); rel *= 10.0) {
    Eigen::MatrixXd jittered = cov;
    jittered.diagonal().array() += rel * scale;
    Eigen::LLT<Eigen::MatrixXd> llt(jittered);
    if (llt.info() == Eigen::Success) {
      Eigen::MatrixXd lower = llt.matrixL();
      if (lower.allFinite() && (lower.diagonal().array() > 0.0).all()) {
        return {std::move(jittered), std::move(lower), rel * scale};
      }
    }
  }
  throw NumericalError("covariance factorisation failed with jitter up to 1e-4 x variance (n = " +
                       std::to_string(n) + ")");
}

template <CovarianceFunction Kernel>
CovarianceFactor factorize_covariance(const KnotGrid& grid, const Kernel& kernel) {
  return factorize_with_jitter(covariance_matrix(grid, kernel, 0.0), kernel.variance());
}

inline CovarianceFactor factorize_covariance(const KnotGrid& grid, const KernelParams& params) {
  params.validate(grid.dim());
  return factorize_covariance(grid, SquaredExponential(params));
}

}  // namespace lineqcox
