#pragma once

// Cox-process inference on the finite representation: Poisson likelihood with
// closed-form intensity measure, truncated-Gaussian prior, and a
// Metropolis–Hastings chain whose proposals are Gaussians centred at the
// current state and truncated to the constraint region.
//
// Log-likelihoods omit the −log n! term throughout; it is constant in both the
// coefficients and the kernel hyperparameters.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <future>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lineqcox/constraints.hpp"
#include "lineqcox/detail/normal.hpp"
#include "lineqcox/errors.hpp"
#include "lineqcox/finite_gp.hpp"
#include "lineqcox/kernel.hpp"
#include "lineqcox/tmvn.hpp"

namespace lineqcox {

/// One or more independent realisations of a point process on a common domain.
struct PointPattern {
  std::size_t dim = 1;
  std::vector<std::vector<Point>> observations;

  std::size_t n_observations() const { return observations.size(); }

  std::size_t total_events() const {
    std::size_t n = 0;
    for (const auto& o : observations) n += o.size();
    return n;
  }

  void validate(const KnotGrid& grid) const {
    if (observations.empty()) throw ParameterError("point pattern needs at least one observation");
    if (dim != grid.dim()) throw ShapeError("point pattern dimension does not match the grid");
    for (std::size_t o = 0; o < observations.size(); ++o) {
      for (const auto& x : observations[o]) {
        if (x.size() != dim) throw ShapeError("event with wrong number of coordinates");
        if (!grid.contains(x)) {
          throw DomainError("event of observation " + std::to_string(o + 1) + " lies outside the domain");
        }
      }
    }
  }
};

/// −Σ cⱼξⱼ + Σᵢ log Λ_m(xᵢ) for a single observation; −∞ if any Λ_m(xᵢ) = 0.
inline double log_likelihood(const CoefficientSample& coeffs, std::span<const Point> observation,
                             const KnotGrid& grid, const IntegrationWeights& weights) {
  double ll = -intensity_measure(coeffs, weights);
  for (const auto& x : observation) {
    const double lam = evaluate_intensity(coeffs, grid, x);
    if (!(lam > 0.0)) return -std::numeric_limits<double>::infinity();
    ll += std::log(lam);
  }
  return ll;
}

/// −½χᵀΓ⁻¹χ + Σ_ν log_likelihood(χ, obs_ν); −∞ outside `system` when one is given.
/// The truncated prior's normaliser is constant in χ and omitted.
inline double log_unnormalized_posterior(const CoefficientSample& coeffs, const PointPattern& pattern,
                                         const KnotGrid& grid, const IntegrationWeights& weights,
                                         const CovarianceFactor& prior, const ConstraintSystem* system = nullptr,
                                         double tol = 0.0) {
  if (pattern.observations.empty()) throw ParameterError("posterior needs at least one observation");
  if (system != nullptr && !check_satisfied(*system, coeffs, tol)) return -std::numeric_limits<double>::infinity();
  double lp = -0.5 * prior.quadratic_form(coeffs);
  for (const auto& obs : pattern.observations) {
    const double ll = log_likelihood(coeffs, obs, grid, weights);
    if (!std::isfinite(ll)) return ll;
    lp += ll;
  }
  return lp;
}

/// Precomputed evaluator of the log posterior for a fixed pattern and prior.
class CoxPosterior {
 public:
  CoxPosterior(const PointPattern& pattern, const KnotGrid& grid, CovarianceFactor prior,
               const ConstraintSystem* system = nullptr, double tol = 0.0)
      : weights_(integration_weights(grid)),
        prior_(std::move(prior)),
        n_obs_(static_cast<double>(pattern.n_observations())),
        system_(system),
        tol_(tol) {
    pattern.validate(grid);
    if (static_cast<std::size_t>(prior_.lower.rows()) != grid.size()) {
      throw ShapeError("CoxPosterior: prior dimension does not match grid");
    }
    stencils_.reserve(pattern.total_events());
    for (const auto& obs : pattern.observations) {
      for (const auto& x : obs) stencils_.push_back(basis_stencil(grid, x));
    }
  }

  const IntegrationWeights& weights() const { return weights_; }
  const CovarianceFactor& prior() const { return prior_; }

  double log_prior(const CoefficientSample& chi) const { return -0.5 * prior_.quadratic_form(chi); }

  /// Σ over observations of the per-observation log-likelihood.
  double log_likelihood(const CoefficientSample& chi) const {
    double ll = -n_obs_ * weights_.dot(chi);
    for (const auto& st : stencils_) {
      const double lam = st.dot(chi);
      if (!(lam > 0.0)) return -std::numeric_limits<double>::infinity();
      ll += std::log(lam);
    }
    return ll;
  }

  double operator()(const CoefficientSample& chi) const {
    if (system_ != nullptr && !check_satisfied(*system_, chi, tol_)) return -std::numeric_limits<double>::infinity();
    const double ll = log_likelihood(chi);
    if (!std::isfinite(ll)) return ll;
    return ll + log_prior(chi);
  }

 private:
  IntegrationWeights weights_;
  CovarianceFactor prior_;
  double n_obs_;
  const ConstraintSystem* system_;
  double tol_;
  std::vector<BasisStencil> stencils_;
};

struct MhConfig {
  /// Proposal covariance is eta·Γ.
  double eta = 1e-3;
  std::size_t n_samples = 10'000;
  std::size_t burn_in = 1'000;
  /// MC samples per orthant estimate in the proposal ratio.
  std::size_t orthant_mc = 200;
  std::uint64_t seed = 0;
  std::optional<CoefficientSample> init;
  /// HMC trajectories used to draw each truncated proposal, started at its mean.
  std::size_t proposal_hmc_steps = 4;
  HmcOptions hmc{};
};

struct PosteriorChain {
  KnotGrid grid;
  KernelParams params;
  MhConfig config;
  /// Retained samples, one per row.
  Eigen::MatrixXd samples;
  /// Acceptance decision for every step, burn-in included.
  std::vector<bool> accepted;
  double wall_seconds = 0.0;

  std::size_t size() const { return static_cast<std::size_t>(samples.rows()); }
  CoefficientSample sample(std::size_t i) const { return samples.row(static_cast<Eigen::Index>(i)).transpose(); }
};

/// Tolerance used for constraint checks on chain states: 1e-9·σ.
inline double constraint_tolerance(const KernelParams& params) { return 1e-9 * std::sqrt(params.variance); }

/// Metropolis–Hastings with truncated Gaussian proposals.
inline PosteriorChain mh_infer(const PointPattern& pattern, const KnotGrid& grid, const ConstraintSystem& system,
                               const KernelParams& params, const MhConfig& config) {
  params.validate(grid.dim());
  if (!(config.eta > 0.0)) throw ParameterError("MH step scale eta must be positive");
  if (config.n_samples == 0) throw ParameterError("MH needs at least one retained sample");
  if (config.proposal_hmc_steps == 0) throw ParameterError("proposal_hmc_steps must be at least 1");
  if (system.dim() != grid.size()) throw ShapeError("constraint system does not match the grid");
  const auto start_time = std::chrono::steady_clock::now();

  CovarianceFactor prior = factorize_covariance(grid, params);
  const double tol = constraint_tolerance(params);
  const ExactHmcSampler proposal(std::sqrt(config.eta) * prior.lower, system, config.hmc);
  const RegionProbability region(system, config.eta * prior.covariance);
  const CoxPosterior posterior(pattern, grid, std::move(prior), &system, tol);

  CoefficientSample chi = config.init ? *config.init : system.feasible_point();
  if (static_cast<std::size_t>(chi.size()) != grid.size()) throw ShapeError("MH init length does not match grid");
  if (!(system.margins(chi).minCoeff() > 0.0)) throw InfeasibleError("MH init is not strictly feasible");
  double lp = posterior(chi);
  if (!std::isfinite(lp)) {
    throw InfeasibleError("MH init has zero posterior density (an event falls where the intensity is zero)");
  }

  PosteriorChain chain{grid, params, config, Eigen::MatrixXd(config.n_samples, grid.size()), {}, 0.0};
  const std::size_t total = config.burn_in + config.n_samples;
  chain.accepted.reserve(total);
  auto rng = detail::make_rng(config.seed, 0x6d68);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  for (std::size_t it = 0; it < total; ++it) {
    CoefficientSample cand = proposal.advance(chi, chi, config.proposal_hmc_steps, rng);
    const double lp_cand = posterior(cand);
    const std::uint64_t orthant_seed = rng();
    const double u = unif(rng);
    bool accept = false;
    if (std::isfinite(lp_cand)) {
      const double log_beta = proposal_log_ratio(region, chi, cand, config.orthant_mc, orthant_seed);
      const double log_alpha = lp_cand - lp + log_beta;
      accept = std::log(u) <= log_alpha;
    }
    if (accept) {
      chi = std::move(cand);
      lp = lp_cand;
    }
    chain.accepted.push_back(accept);
    if (it >= config.burn_in) chain.samples.row(static_cast<Eigen::Index>(it - config.burn_in)) = chi.transpose();
  }
  chain.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
  return chain;
}

/// Independent chains with seeds derived from `config.seed`, run concurrently.
inline std::vector<PosteriorChain> mh_infer_replicates(const PointPattern& pattern, const KnotGrid& grid,
                                                       const ConstraintSystem& system, const KernelParams& params,
                                                       const MhConfig& config, std::size_t replicates) {
  std::vector<std::future<PosteriorChain>> jobs;
  for (std::size_t r = 0; r < replicates; ++r) {
    MhConfig c = config;
    auto seeder = detail::make_rng(config.seed, 0x7265700000ull + r);
    c.seed = seeder();
    jobs.push_back(std::async(std::launch::async, [&, c] { return mh_infer(pattern, grid, system, params, c); }));
  }
  std::vector<PosteriorChain> out;
  for (auto& j : jobs) out.push_back(j.get());
  return out;
}

struct IntensitySummary {
  std::vector<Point> points;
  std::vector<double> mean;
  std::vector<double> levels;
  /// quantiles[q][i] is the levels[q] quantile at points[i].
  std::vector<std::vector<double>> quantiles;
};

namespace detail {

// Linear interpolation between order statistics (Hyndman–Fan type 7).
inline double sorted_quantile(const std::vector<double>& sorted, double level) {
  if (sorted.size() == 1) return sorted.front();
  const double h = level * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace detail

inline IntensitySummary posterior_intensity(const PosteriorChain& chain, const std::vector<Point>& query,
                                            std::vector<double> levels = {0.05, 0.5, 0.95}) {
  if (chain.samples.rows() == 0) throw StateError("posterior_intensity: empty chain");
  for (double q : levels) {
    if (!(q >= 0.0 && q <= 1.0)) throw ParameterError("quantile levels must lie in [0, 1]");
  }
  IntensitySummary out;
  out.points = query;
  out.levels = levels;
  out.mean.resize(query.size());
  out.quantiles.assign(levels.size(), std::vector<double>(query.size()));
  const Eigen::Index n = chain.samples.rows();
  std::vector<double> values(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < query.size(); ++i) {
    const BasisStencil st = basis_stencil(chain.grid, query[i]);
    double sum = 0.0;
    for (Eigen::Index s = 0; s < n; ++s) {
      double v = 0.0;
      for (std::size_t k = 0; k < st.index.size(); ++k) {
        v += st.weight[k] * chain.samples(s, static_cast<Eigen::Index>(st.index[k]));
      }
      values[static_cast<std::size_t>(s)] = v;
      sum += v;
    }
    out.mean[i] = sum / static_cast<double>(n);
    std::sort(values.begin(), values.end());
    for (std::size_t q = 0; q < levels.size(); ++q) out.quantiles[q][i] = detail::sorted_quantile(values, levels[q]);
  }
  return out;
}

/// Knots per dimension from the rule of thumb m = 10·range/ℓ, clamped to [2, 200].
inline std::size_t default_knot_count(double range, double lengthscale) {
  if (!(range > 0.0) || !(lengthscale > 0.0)) throw ParameterError("default_knot_count: positive inputs required");
  const double m = std::round(10.0 * range / lengthscale);
  return static_cast<std::size_t>(std::clamp(m, 2.0, 200.0));
}

/// Plug-in kernel parameters from the data alone: σ² is the squared mean rate
/// per observation and ℓᵢ = 0.35·rangeᵢ·n^{−1/(d+4)} (a Scott-type bandwidth
/// in the total event count n). Used when no θ is supplied or estimated.
inline KernelParams default_kernel_params(const PointPattern& pattern, const std::vector<Interval>& domain) {
  if (domain.empty() || domain.size() != pattern.dim) throw ShapeError("default_kernel_params: domain dimension mismatch");
  if (pattern.observations.empty()) throw ParameterError("default_kernel_params: no observations");
  double volume = 1.0;
  for (const auto& iv : domain) volume *= iv.length();
  const double n = static_cast<double>(pattern.total_events());
  const double rate = n / (static_cast<double>(pattern.n_observations()) * volume);
  KernelParams p;
  // An empty pattern has no scale of its own; fall back to unit variance.
  p.variance = rate > 0.0 ? rate * rate : 1.0;
  const double shrink = std::pow(std::max(n, 1.0), -1.0 / (static_cast<double>(domain.size()) + 4.0));
  p.lengthscales.clear();
  for (const auto& iv : domain) p.lengthscales.push_back(0.35 * iv.length() * shrink);
  return p;
}

struct MarginalLikelihoodOptions {
  std::size_t prior_samples = 200;
  std::size_t burn_in = 20;
  std::uint64_t seed = 0;
};

/// log of (1/K) Σₖ exp(ℓ(ξₖ)) over K prior draws ξₖ from N(0, Γ_θ) truncated to the
/// constraint region. Draws use a fixed seed, so candidates share random numbers.
inline double mc_log_marginal_likelihood(const PointPattern& pattern, const KnotGrid& grid,
                                         const ConstraintSystem& system, const KernelParams& params,
                                         const MarginalLikelihoodOptions& opts) {
  params.validate(grid.dim());
  if (opts.prior_samples == 0) throw ParameterError("marginal likelihood needs prior samples");
  CovarianceFactor prior = factorize_covariance(grid, params);
  const ExactHmcSampler sampler(prior.lower, system);
  const CoxPosterior post(pattern, grid, std::move(prior));
  auto rng = detail::make_rng(opts.seed, 0x6d6c);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.size()));
  Eigen::VectorXd start = sampler.advance(zero, system.feasible_point(), opts.burn_in, rng, true);
  const auto draws = sampler.sample(zero, start, opts.prior_samples, rng, false);
  std::vector<double> ll;
  ll.reserve(draws.size());
  double top = -std::numeric_limits<double>::infinity();
  for (const auto& d : draws) {
    ll.push_back(post.log_likelihood(d));
    top = std::max(top, ll.back());
  }
  if (!std::isfinite(top)) return -std::numeric_limits<double>::infinity();
  double s = 0.0;
  for (double v : ll) s += std::exp(v - top);
  return top + std::log(s / static_cast<double>(ll.size()));
}

struct HyperparamSearch {
  KernelParams lower;
  KernelParams upper;
  /// Maximum number of objective evaluations.
  std::size_t budget = 60;
  std::size_t starts = 3;
  MarginalLikelihoodOptions marginal{};
};

struct CandidateScore {
  KernelParams params;
  double log_marginal = 0.0;
};

/// Exhaustive choice among explicit candidates.
inline CandidateScore select_hyperparams(const PointPattern& pattern, const KnotGrid& grid,
                                         const ConstraintSystem& system, const std::vector<KernelParams>& candidates,
                                         const MarginalLikelihoodOptions& opts) {
  if (candidates.empty()) throw ParameterError("select_hyperparams: no candidates");
  CandidateScore best{candidates.front(), -std::numeric_limits<double>::infinity()};
  bool found = false;
  for (const auto& c : candidates) {
    const double v = mc_log_marginal_likelihood(pattern, grid, system, c, opts);
    if (std::isfinite(v) && (!found || v > best.log_marginal)) {
      best = {c, v};
      found = true;
    }
  }
  if (!found) throw EstimationError("every hyperparameter candidate has zero marginal likelihood");
  return best;
}

namespace detail {

inline std::vector<double> pack_log(const KernelParams& p) {
  std::vector<double> v{std::log(p.variance)};
  for (double l : p.lengthscales) v.push_back(std::log(l));
  return v;
}

inline KernelParams unpack_log(const std::vector<double>& v) {
  KernelParams p;
  p.variance = std::exp(v[0]);
  p.lengthscales.assign(v.begin() + 1, v.end());
  for (double& l : p.lengthscales) l = std::exp(l);
  return p;
}

}  // namespace detail

/// Maximises the MC marginal likelihood over log-parameters inside the bounds
/// with multi-start Nelder–Mead. The first start is the geometric centre of
/// the box, so a budget of one returns that centre.
inline KernelParams estimate_hyperparams(const PointPattern& pattern, const KnotGrid& grid,
                                         const ConstraintSystem& system, const HyperparamSearch& search,
                                         std::uint64_t seed) {
  search.lower.validate(grid.dim());
  search.upper.validate(grid.dim());
  if (search.budget == 0) throw ParameterError("estimate_hyperparams: budget must be at least 1");
  const std::vector<double> lo = detail::pack_log(search.lower);
  const std::vector<double> hi = detail::pack_log(search.upper);
  const std::size_t n = lo.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (lo[i] > hi[i]) throw ParameterError("estimate_hyperparams: lower bound exceeds upper bound");
  }
  MarginalLikelihoodOptions mopts = search.marginal;
  mopts.seed = seed;

  std::size_t evals = 0;
  std::vector<double> best_x;
  double best_f = std::numeric_limits<double>::infinity();
  auto clamp_box = [&](std::vector<double> x) {
    for (std::size_t i = 0; i < n; ++i) x[i] = std::clamp(x[i], lo[i], hi[i]);
    return x;
  };
  auto objective = [&](const std::vector<double>& x) {
    ++evals;
    const double v = mc_log_marginal_likelihood(pattern, grid, system, detail::unpack_log(x), mopts);
    const double f = std::isfinite(v) ? -v : std::numeric_limits<double>::infinity();
    if (f < best_f || best_x.empty()) {
      best_f = f;
      best_x = x;
    }
    return f;
  };

  auto start_rng = detail::make_rng(seed, 0x6e6d);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t s = 0; s < std::max<std::size_t>(1, search.starts) && evals < search.budget; ++s) {
    std::vector<double> x0(n);
    for (std::size_t i = 0; i < n; ++i) x0[i] = s == 0 ? 0.5 * (lo[i] + hi[i]) : lo[i] + unif(start_rng) * (hi[i] - lo[i]);
    // Simplex with steps of a quarter box width (or 0.1 in log space for flat boxes).
    std::vector<std::vector<double>> simplex{x0};
    std::vector<double> fv{objective(x0)};
    for (std::size_t i = 0; i < n && evals < search.budget; ++i) {
      if (hi[i] - lo[i] <= 0.0) continue;
      std::vector<double> xi = x0;
      const double step = 0.25 * (hi[i] - lo[i]);
      xi[i] = x0[i] + step <= hi[i] ? x0[i] + step : x0[i] - step;
      simplex.push_back(clamp_box(xi));
      fv.push_back(objective(simplex.back()));
    }
    const std::size_t pts = simplex.size();
    if (pts < 2) continue;
    while (evals < search.budget) {
      std::vector<std::size_t> ord(pts);
      for (std::size_t i = 0; i < pts; ++i) ord[i] = i;
      std::sort(ord.begin(), ord.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
      const std::size_t worst = ord.back();
      const std::size_t second = ord[pts - 2];
      const std::size_t bestv = ord.front();
      if (std::abs(fv[worst] - fv[bestv]) < 1e-6 * (1.0 + std::abs(fv[bestv]))) break;
      std::vector<double> centroid(n, 0.0);
      for (std::size_t i = 0; i < pts; ++i) {
        if (i == worst) continue;
        for (std::size_t d = 0; d < n; ++d) centroid[d] += simplex[i][d] / static_cast<double>(pts - 1);
      }
      auto along = [&](double t) {
        std::vector<double> x(n);
        for (std::size_t d = 0; d < n; ++d) x[d] = centroid[d] + t * (simplex[worst][d] - centroid[d]);
        return clamp_box(x);
      };
      const auto xr = along(-1.0);
      const double fr = objective(xr);
      if (fr < fv[bestv] && evals < search.budget) {
        const auto xe = along(-2.0);
        const double fe = objective(xe);
        if (fe < fr) {
          simplex[worst] = xe;
          fv[worst] = fe;
        } else {
          simplex[worst] = xr;
          fv[worst] = fr;
        }
      } else if (fr < fv[second]) {
        simplex[worst] = xr;
        fv[worst] = fr;
      } else if (evals < search.budget) {
        const auto xc = along(0.5);
        const double fc = objective(xc);
        if (fc < fv[worst]) {
          simplex[worst] = xc;
          fv[worst] = fc;
        } else {
          for (std::size_t i = 0; i < pts && evals < search.budget; ++i) {
            if (i == bestv) continue;
            for (std::size_t d = 0; d < n; ++d) simplex[i][d] = 0.5 * (simplex[i][d] + simplex[bestv][d]);
            fv[i] = objective(simplex[i]);
          }
        }
      }
    }
  }
  if (!std::isfinite(best_f)) throw EstimationError("hyperparameter search found no candidate with finite likelihood");
  return detail::unpack_log(best_x);
}

}  // namespace lineqcox
