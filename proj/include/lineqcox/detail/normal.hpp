#pragma once

#include <boost/math/special_functions/erf.hpp>

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>

namespace lineqcox::detail {

inline constexpr double kInvSqrt2 = 0.70710678118654752440;

/// Standard normal CDF.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

/// log Φ(x), accurate far into the lower tail.
inline double log_normal_cdf(double x) {
  if (x > -20.0) return std::log(normal_cdf(x));
  // Asymptotic expansion of the Mills ratio.
  const double z2 = 1.0 / (x * x);
  const double series = 1.0 - z2 * (1.0 - 3.0 * z2 * (1.0 - 5.0 * z2 * (1.0 - 7.0 * z2)));
  return -0.5 * x * x - std::log(-x) - 0.5 * std::log(2.0 * std::numbers::pi) + std::log(series);
}

/// Draws z ~ N(0, 1) conditioned on z ≥ lower.
template <class Rng>
double sample_lower_truncated_normal(double lower, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (lower < 8.0) {
    // Invert the upper tail: z = Φ⁻¹(1 − u·Φ(−lower)).
    const double tail = normal_cdf(-lower);
    double u = unif(rng);
    while (u <= 0.0) u = unif(rng);
    const double p = u * tail;
    if (p <= 0.0) return lower;
    const double z = std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p);
    return std::max(z, lower);
  }
  // Robert (1995) exponential rejection for deep tails.
  const double rate = 0.5 * (lower + std::sqrt(lower * lower + 4.0));
  std::exponential_distribution<double> expo(rate);
  for (;;) {
    const double z = lower + expo(rng);
    const double d = z - rate;
    if (unif(rng) <= std::exp(-0.5 * d * d)) return z;
  }
}

/// Independent engine for (seed, stream) pairs.
inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), 0x6c696e71u};
  return std::mt19937_64(seq);
}

/// Box–Muller standard normal; unlike std::normal_distribution it carries no
/// cached state, so streams reproduce across standard libraries.
template <class Rng>
double standard_normal(Rng& rng) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double u1 = 0.0;
  do {
    u1 = std::generate_canonical<double, 53>(rng);
  } while (u1 <= 0.0);
  const double u2 = std::generate_canonical<double, 53>(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

}  // namespace lineqcox::detail
