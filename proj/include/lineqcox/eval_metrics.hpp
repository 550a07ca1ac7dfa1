#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "lineqcox/cox_inference.hpp"
#include "lineqcox/errors.hpp"

namespace lineqcox {

struct MetricReport {
  double q2 = 0.0;
  double smse = 0.0;
  double acceptance_rate = std::numeric_limits<double>::quiet_NaN();
  double ess_min = std::numeric_limits<double>::quiet_NaN();
};

/// mean((λ − λ̂)²) / var(λ) with the population (1/N) variance.
inline double smse(std::span<const double> truth, std::span<const double> estimate) {
  if (truth.size() != estimate.size()) throw ShapeError("smse: length mismatch");
  if (truth.size() < 2) throw ParameterError("smse: at least two evaluation points required");
  const double n = static_cast<double>(truth.size());
  double mean = 0.0;
  for (double t : truth) mean += t;
  mean /= n;
  double var = 0.0;
  double mse = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    var += (truth[i] - mean) * (truth[i] - mean);
    mse += (truth[i] - estimate[i]) * (truth[i] - estimate[i]);
  }
  if (!(var > 0.0)) throw DegenerateReferenceError("smse: reference values have zero variance");
  return mse / var;
}

/// Q² = 1 − SMSE.
inline double q_squared(std::span<const double> truth, std::span<const double> estimate) {
  return 1.0 - smse(truth, estimate);
}

enum class AcceptanceWindow { all, post_burn_in };

inline double acceptance_rate(const std::vector<bool>& accepted) {
  if (accepted.empty()) throw StateError("acceptance_rate: empty acceptance log");
  const auto hits = std::count(accepted.begin(), accepted.end(), true);
  return static_cast<double>(hits) / static_cast<double>(accepted.size());
}

inline double acceptance_rate(const PosteriorChain& chain, AcceptanceWindow window = AcceptanceWindow::all) {
  if (window == AcceptanceWindow::all) return acceptance_rate(chain.accepted);
  const std::size_t skip = std::min(chain.config.burn_in, chain.accepted.size());
  return acceptance_rate(std::vector<bool>(chain.accepted.begin() + static_cast<std::ptrdiff_t>(skip), chain.accepted.end()));
}

/// N / (1 + 2 Σ ρ̂ₖ) with autocorrelations summed over Geyer's initial positive
/// sequence of adjacent-lag pairs; clipped to [0, N]. A constant series gives 0.
inline double ess_univariate(std::span<const double> series) {
  const std::size_t n = series.size();
  if (n < 10) throw ParameterError("ess_univariate: at least 10 values required");
  double mean = 0.0;
  for (double v : series) mean += v;
  mean /= static_cast<double>(n);
  std::vector<double> c(series.begin(), series.end());
  for (double& v : c) v -= mean;
  auto autocov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) s += c[i] * c[i + lag];
    return s / static_cast<double>(n);
  };
  const double c0 = autocov(0);
  if (!(c0 > 0.0)) return 0.0;
  double tau = -1.0;  // −1 + 2 Σ_k (ρ_{2k} + ρ_{2k+1}), with ρ₀ = 1
  for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
    const double pair = (k == 0 ? 1.0 : autocov(2 * k) / c0) + autocov(2 * k + 1) / c0;
    if (!(pair > 0.0)) break;
    tau += 2.0 * pair;
  }
  const double ess = static_cast<double>(n) / std::max(tau, 1e-300);
  return std::clamp(ess, 0.0, static_cast<double>(n));
}

/// Smallest univariate ESS over all coefficient traces of the chain.
inline double min_ess(const PosteriorChain& chain) {
  if (chain.samples.rows() < 10) throw StateError("min_ess: need at least 10 retained samples");
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> trace(static_cast<std::size_t>(chain.samples.rows()));
  for (Eigen::Index j = 0; j < chain.samples.cols(); ++j) {
    for (Eigen::Index i = 0; i < chain.samples.rows(); ++i) trace[static_cast<std::size_t>(i)] = chain.samples(i, j);
    best = std::min(best, ess_univariate(trace));
  }
  return best;
}

/// Mean and one (sample) standard deviation across replicates.
struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;
};

inline MeanSd mean_sd(std::span<const double> values) {
  if (values.empty()) throw StateError("mean_sd: no values");
  MeanSd out;
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double s = 0.0;
    for (double v : values) s += (v - out.mean) * (v - out.mean);
    out.sd = std::sqrt(s / static_cast<double>(values.size() - 1));
  }
  return out;
}

}  // namespace lineqcox
