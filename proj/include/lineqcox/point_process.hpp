#pragma once

// Reference intensities (three toy curves and two renewal hazards) and
// Lewis–Shedler thinning to simulate inhomogeneous Poisson patterns.

#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "lineqcox/cox_inference.hpp"
#include "lineqcox/detail/normal.hpp"
#include "lineqcox/errors.hpp"
#include "lineqcox/finite_gp.hpp"

namespace lineqcox {

/// Domain of toy intensity `id` (1, 2 or 3).
inline Interval toy_domain(int id) {
  switch (id) {
    case 1: return {0.0, 50.0};
    case 2: return {0.0, 5.0};
    case 3: return {0.0, 100.0};
    default: throw ParameterError("toy intensity id must be 1, 2 or 3");
  }
}

inline double toy_intensity(int id, double x) {
  const Interval dom = toy_domain(id);
  if (!dom.contains(x)) throw DomainError("toy" + std::to_string(id) + ": x = " + std::to_string(x) + " outside domain");
  switch (id) {
    case 1: {
      const double z = (x - 25.0) / 10.0;
      return 2.0 * std::exp(-x / 15.0) + std::exp(-z * z);
    }
    case 2: return 5.0 * std::sin(x * x) + 6.0;
    default: {
      static constexpr double xs[] = {0.0, 25.0, 50.0, 75.0, 100.0};
      static constexpr double ys[] = {2.0, 3.0, 1.0, 2.5, 3.0};
      std::size_t j = std::min<std::size_t>(3, static_cast<std::size_t>(x / 25.0));
      const double w = (x - xs[j]) / (xs[j + 1] - xs[j]);
      return (1.0 - w) * ys[j] + w * ys[j + 1];
    }
  }
}

/// αβx^{β−1}; +∞ at x = 0 when β < 1.
inline double weibull_hazard(double x, double alpha, double beta) {
  if (!(alpha > 0.0) || !(beta > 0.0)) throw ParameterError("weibull_hazard: alpha and beta must be positive");
  if (!(x >= 0.0)) throw DomainError("weibull_hazard: x must be non-negative");
  if (x == 0.0) {
    if (beta < 1.0) return std::numeric_limits<double>::infinity();
    return beta == 1.0 ? alpha : 0.0;
  }
  return alpha * beta * std::pow(x, beta - 1.0);
}

/// α x^{β−1} e^{−x} / Γ(β, x), with Γ(β, x) = Γ(β) − γ(β, x) the upper incomplete gamma.
inline double gamma_hazard(double x, double alpha, double beta) {
  if (!(alpha > 0.0) || !(beta > 0.0)) throw ParameterError("gamma_hazard: alpha and beta must be positive");
  if (!(x >= 0.0)) throw DomainError("gamma_hazard: x must be non-negative");
  if (x == 0.0) {
    if (beta < 1.0) return std::numeric_limits<double>::infinity();
    return beta == 1.0 ? alpha : 0.0;
  }
  // x^{β−1}e^{−x}/Γ(β) over Q(β, x).
  const double density = boost::math::gamma_p_derivative(beta, x);
  const double upper = boost::math::gamma_q(beta, x);
  if (upper <= 0.0) return alpha;  // asymptote once the tail underflows
  return alpha * density / upper;
}

struct ToyIntensity {
  int id = 1;
};
struct WeibullIntensity {
  double alpha = 1.0;
  double beta = 0.7;
};
struct GammaIntensity {
  double alpha = 5.0;
  double beta = 1.7;
};
struct ConstantIntensity {
  double rate = 1.0;
};
/// Piecewise-(multi)linear interpolation of non-negative knot values.
struct TableIntensity {
  KnotGrid grid;
  CoefficientSample values;
};

struct IntensitySpec {
  std::variant<ToyIntensity, WeibullIntensity, GammaIntensity, ConstantIntensity, TableIntensity> family;
  std::vector<Interval> domain;

  std::size_t dim() const { return domain.size(); }

  static IntensitySpec toy(int id) { return {ToyIntensity{id}, {toy_domain(id)}}; }
  static IntensitySpec weibull(double alpha, double beta, Interval dom = {0.0, 100.0}) {
    return {WeibullIntensity{alpha, beta}, {dom}};
  }
  static IntensitySpec gamma(double alpha, double beta, Interval dom = {0.0, 5.0}) {
    return {GammaIntensity{alpha, beta}, {dom}};
  }
  static IntensitySpec constant(double rate, std::vector<Interval> dom) { return {ConstantIntensity{rate}, std::move(dom)}; }
  static IntensitySpec table(KnotGrid grid, CoefficientSample values) {
    if (static_cast<std::size_t>(values.size()) != grid.size()) throw ShapeError("table intensity: value count does not match grid");
    if ((values.array() < 0.0).any()) throw ParameterError("table intensity values must be non-negative");
    auto dom = grid.domain();
    return {TableIntensity{std::move(grid), std::move(values)}, std::move(dom)};
  }

  void validate() const {
    std::visit(
        [](const auto& f) {
          using T = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<T, WeibullIntensity> || std::is_same_v<T, GammaIntensity>) {
            if (!(f.alpha > 0.0) || !(f.beta > 0.0)) throw ParameterError("hazard parameters must be positive");
          } else if constexpr (std::is_same_v<T, ConstantIntensity>) {
            if (!(f.rate >= 0.0)) throw ParameterError("constant intensity must be non-negative");
          }
        },
        family);
  }

  double operator()(std::span<const double> x) const {
    if (x.size() != dim()) throw ShapeError("intensity evaluated at a point of wrong dimension");
    for (std::size_t d = 0; d < dim(); ++d) {
      if (!domain[d].contains(x[d])) throw DomainError("intensity evaluated outside its domain");
    }
    return std::visit(
        [&](const auto& f) -> double {
          using T = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<T, ToyIntensity>) return toy_intensity(f.id, x[0]);
          else if constexpr (std::is_same_v<T, WeibullIntensity>) return weibull_hazard(x[0], f.alpha, f.beta);
          else if constexpr (std::is_same_v<T, GammaIntensity>) return gamma_hazard(x[0], f.alpha, f.beta);
          else if constexpr (std::is_same_v<T, ConstantIntensity>) return f.rate;
          else return evaluate_intensity(f.values, f.grid, x);
        },
        family);
  }
  double operator()(double x) const { return (*this)(std::span<const double>(&x, 1)); }
};

/// Lower cut-off for the Weibull/Gamma singularity at 0.
inline constexpr double kHazardEpsilon = 1e-6;

/// Dominating rate used when none is supplied: fixed bounds for the toys, the
/// exact supremum on [ε, b] for the monotone hazards, the maximum knot value
/// for tables.
inline double default_lambda_max(const IntensitySpec& spec) {
  return std::visit(
      [&](const auto& f) -> double {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, ToyIntensity>) {
          return f.id == 1 ? 3.1 : f.id == 2 ? 11.0 : 3.0;
        } else if constexpr (std::is_same_v<T, WeibullIntensity>) {
          const Interval d = spec.domain[0];
          const double lo = std::max(d.lower, kHazardEpsilon);
          return f.beta <= 1.0 ? weibull_hazard(lo, f.alpha, f.beta) : weibull_hazard(d.upper, f.alpha, f.beta);
        } else if constexpr (std::is_same_v<T, GammaIntensity>) {
          const Interval d = spec.domain[0];
          const double lo = std::max(d.lower, kHazardEpsilon);
          // Non-increasing for β ≤ 1, non-decreasing (bounded by α) for β > 1.
          return f.beta <= 1.0 ? gamma_hazard(lo, f.alpha, f.beta) : gamma_hazard(d.upper, f.alpha, f.beta);
        } else if constexpr (std::is_same_v<T, ConstantIntensity>) {
          return f.rate;
        } else {
          return f.values.size() > 0 ? f.values.maxCoeff() : 0.0;
        }
      },
      spec.family);
}

struct SimulationOptions {
  /// Clip λ(x)/λ_max at 1 instead of raising DominatingBoundError.
  bool cap_ratio = false;
};

/// Lewis–Shedler thinning repeated for `n_observations` independent patterns.
inline PointPattern simulate_poisson(const std::function<double(std::span<const double>)>& intensity,
                                     const std::vector<Interval>& domain, double lambda_max,
                                     std::size_t n_observations, std::uint64_t seed, SimulationOptions opts = {}) {
  if (domain.empty()) throw ParameterError("simulate_poisson: empty domain");
  if (!(lambda_max >= 0.0) || !std::isfinite(lambda_max)) throw ParameterError("simulate_poisson: lambda_max must be finite and non-negative");
  double volume = 1.0;
  for (const auto& iv : domain) {
    if (!(iv.lower < iv.upper)) throw ParameterError("simulate_poisson: degenerate domain interval");
    volume *= iv.length();
  }
  PointPattern pattern;
  pattern.dim = domain.size();
  pattern.observations.resize(n_observations);
  auto rng = detail::make_rng(seed, 0x73696d);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (auto& obs : pattern.observations) {
    if (lambda_max == 0.0) continue;
    std::poisson_distribution<std::uint64_t> count(lambda_max * volume);
    const std::uint64_t n = count(rng);
    Point x(domain.size());
    for (std::uint64_t i = 0; i < n; ++i) {
      for (std::size_t d = 0; d < domain.size(); ++d) x[d] = domain[d].lower + unif(rng) * domain[d].length();
      const double lam = intensity(x);
      double ratio = lam / lambda_max;
      if (ratio > 1.0) {
        if (!opts.cap_ratio) {
          throw DominatingBoundError("intensity " + std::to_string(lam) + " exceeds lambda_max " + std::to_string(lambda_max));
        }
        ratio = 1.0;
      }
      if (unif(rng) < ratio) obs.push_back(x);
    }
  }
  return pattern;
}

/// Simulates from an IntensitySpec; hazards are simulated on [max(a, ε), b]
/// with the thinning ratio capped at one.
inline PointPattern simulate_poisson(const IntensitySpec& spec, std::size_t n_observations, std::uint64_t seed,
                                     std::optional<double> lambda_max = std::nullopt) {
  spec.validate();
  std::vector<Interval> dom = spec.domain;
  SimulationOptions opts;
  const bool hazard = std::holds_alternative<WeibullIntensity>(spec.family) ||
                      std::holds_alternative<GammaIntensity>(spec.family);
  if (hazard) {
    dom[0].lower = std::max(dom[0].lower, kHazardEpsilon);
    opts.cap_ratio = true;
  }
  const double lmax = lambda_max ? *lambda_max : default_lambda_max(spec);
  return simulate_poisson([&](std::span<const double> x) { return spec(x); }, dom, lmax, n_observations, seed, opts);
}

}  // namespace lineqcox
