#pragma once

// Gaussians restricted to polyhedra {ξ : Fξ + g ≥ 0}.
//
// ExactHmcSampler follows Pakman & Paninski's exact HMC: in whitened
// coordinates x = L⁻¹(ξ − μ) the Hamiltonian flow is x(t) = x₀ cos t + v₀ sin t,
// so each halfspace crossing time solves a cos t + b sin t + g̃ = 0 in closed
// form and the velocity is reflected about the wall normal on impact.
//
// orthant_log_probability estimates log P(Y ≥ 0), Y ~ N(μ, S), with a
// separation-of-variables importance sampler (Genz): coordinates are ordered
// smallest-conditional-mass first, each is drawn from its conditional
// truncated normal and the weight accumulates the conditional masses.
// Singular S is allowed; rows with no residual variance become indicators.

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "lineqcox/constraints.hpp"
#include "lineqcox/detail/normal.hpp"
#include "lineqcox/errors.hpp"
#include "lineqcox/finite_gp.hpp"
#include "lineqcox/kernel.hpp"

namespace lineqcox {

struct HmcOptions {
  double travel_time = std::numbers::pi / 2.0;
  std::size_t max_bounces = 1'000'000;
  /// Roots closer than this to t = 0 on the wall just left are ignored.
  double exclusion_window = 1e-12;
};

struct TmvnProblem {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  ConstraintSystem system;
  HmcOptions options{};
};

/// Lower Cholesky factor of a covariance supplied by the caller; jitter is
/// only added when the plain factorisation fails.
inline Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd& cov) {
  if (cov.rows() != cov.cols()) throw ShapeError("covariance must be square");
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() == Eigen::Success) {
    Eigen::MatrixXd l = llt.matrixL();
    if ((l.diagonal().array() > 0.0).all() && l.allFinite()) return l;
  }
  const double scale = cov.diagonal().cwiseAbs().maxCoeff();
  return factorize_with_jitter(cov, scale > 0.0 ? scale : 1.0).lower;
}

class ExactHmcSampler {
 public:
  /// `lower` is the Cholesky factor of the target covariance.
  ExactHmcSampler(Eigen::MatrixXd lower, const ConstraintSystem& system, HmcOptions options = {})
      : lower_(std::move(lower)), normals_(system.normals()), offsets_(system.offsets()), options_(options) {
    if (lower_.rows() != lower_.cols() || static_cast<std::size_t>(lower_.rows()) != system.dim()) {
      throw ShapeError("ExactHmcSampler: covariance factor does not match constraint dimension");
    }
    if (!(options_.travel_time > 0.0)) throw ParameterError("HMC travel time must be positive");
    whitened_ = normals_ * lower_.triangularView<Eigen::Lower>();
    gram_ = whitened_ * whitened_.transpose();
    norm2_ = gram_.diagonal();
  }

  std::size_t dim() const { return static_cast<std::size_t>(lower_.rows()); }
  const Eigen::MatrixXd& lower() const { return lower_; }
  /// Bounces in the most recent trajectory.
  std::size_t last_bounces() const { return last_bounces_; }

  /// Runs `n` trajectories from `start` targeting N(mean, LLᵀ) on the region
  /// and returns every end point. `start` must be strictly feasible when
  /// `require_strict` is set; otherwise boundary points are accepted.
  template <class Rng>
  std::vector<CoefficientSample> sample(const Eigen::VectorXd& mean, const Eigen::VectorXd& start, std::size_t n,
                                        Rng& rng, bool require_strict = true) const {
    check_start(mean, start, require_strict);
    const Eigen::VectorXd shifted = normals_ * mean + offsets_;
    Eigen::VectorXd x = lower_.triangularView<Eigen::Lower>().solve(start - mean);
    std::vector<CoefficientSample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      trajectory(x, shifted, rng);
      out.emplace_back(mean + lower_.triangularView<Eigen::Lower>() * x);
    }
    return out;
  }

  /// `steps` trajectories from `start`; returns only the final point.
  template <class Rng>
  CoefficientSample advance(const Eigen::VectorXd& mean, const Eigen::VectorXd& start, std::size_t steps, Rng& rng,
                            bool require_strict = false) const {
    check_start(mean, start, require_strict);
    const Eigen::VectorXd shifted = normals_ * mean + offsets_;
    Eigen::VectorXd x = lower_.triangularView<Eigen::Lower>().solve(start - mean);
    for (std::size_t i = 0; i < steps; ++i) trajectory(x, shifted, rng);
    return mean + lower_.triangularView<Eigen::Lower>() * x;
  }

 private:
  void check_start(const Eigen::VectorXd& mean, const Eigen::VectorXd& start, bool strict) const {
    if (mean.size() != lower_.rows() || start.size() != lower_.rows()) {
      throw ShapeError("ExactHmcSampler: mean/start length does not match dimension");
    }
    if (normals_.rows() == 0) return;
    const Eigen::VectorXd m = normals_ * start + offsets_;
    const double scale = std::max(1.0, start.cwiseAbs().maxCoeff());
    const double worst = m.minCoeff();
    if (strict ? !(worst > 0.0) : !(worst >= -1e-9 * scale)) {
      throw InfeasibleError("HMC start point violates the constraints (min margin " + std::to_string(worst) + ")");
    }
  }

  // Earliest time in (0, 2π) at which a cos t + b sin t + c crosses zero downward.
  double hit_time(double a, double b, double c, bool just_left) const {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    if (!just_left && a + c <= 0.0 && b < 0.0) return 0.0;
    const double u2 = a * a + b * b;
    if (c * c >= u2) return std::numeric_limits<double>::infinity();
    const double u = std::sqrt(u2);
    double t = std::atan2(b, a) + std::acos(std::clamp(-c / u, -1.0, 1.0));
    t = std::fmod(t, two_pi);
    if (t < 0.0) t += two_pi;
    if (just_left && (t < options_.exclusion_window || t > two_pi - options_.exclusion_window)) {
      return std::numeric_limits<double>::infinity();
    }
    return t;
  }

  template <class Rng>
  void trajectory(Eigen::VectorXd& x, const Eigen::VectorXd& shifted, Rng& rng) const {
    const Eigen::Index n = x.size();
    const Eigen::Index k_count = whitened_.rows();
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = detail::standard_normal(rng);
    Eigen::VectorXd a = whitened_ * x;
    Eigen::VectorXd b = whitened_ * v;
    double remaining = options_.travel_time;
    Eigen::Index last = -1;
    std::size_t bounces = 0;
    for (;;) {
      double t_hit = remaining;
      Eigen::Index wall = -1;
      for (Eigen::Index k = 0; k < k_count; ++k) {
        const double t = hit_time(a[k], b[k], shifted[k], k == last);
        if (t < t_hit) {
          t_hit = t;
          wall = k;
        }
      }
      const double c = std::cos(t_hit);
      const double s = std::sin(t_hit);
      Eigen::VectorXd x_new = c * x + s * v;
      v = c * v - s * x;
      x = std::move(x_new);
      if (wall < 0) break;
      Eigen::VectorXd a_new = c * a + s * b;
      b = c * b - s * a;
      a = std::move(a_new);
      remaining -= t_hit;
      const double coef = 2.0 * b[wall] / norm2_[wall];
      v.noalias() -= coef * whitened_.row(wall).transpose();
      b.noalias() -= coef * gram_.col(wall);
      last = wall;
      if (++bounces > options_.max_bounces) {
        throw DivergenceError("exact HMC exceeded " + std::to_string(options_.max_bounces) +
                              " wall bounces in one trajectory");
      }
    }
    last_bounces_ = bounces;
  }

  Eigen::MatrixXd lower_;
  Eigen::MatrixXd normals_;
  Eigen::VectorXd offsets_;
  HmcOptions options_;
  Eigen::MatrixXd whitened_;
  Eigen::MatrixXd gram_;
  Eigen::VectorXd norm2_;
  mutable std::size_t last_bounces_ = 0;
};

/// n states of an exact-HMC chain for N(mean, covariance) restricted to the
/// problem's constraint region, started at `init`.
inline std::vector<CoefficientSample> sample_tmvn_hmc(const TmvnProblem& problem, const Eigen::VectorXd& init,
                                                      std::size_t n, std::uint64_t seed) {
  if (problem.mean.size() != problem.covariance.rows()) throw ShapeError("TmvnProblem: mean/covariance mismatch");
  ExactHmcSampler sampler(cholesky_lower(problem.covariance), problem.system, problem.options);
  auto rng = detail::make_rng(seed, 0x686d63);
  return sampler.sample(problem.mean, init, n, rng, true);
}

struct OrthantEstimate {
  double log_probability = 0.0;
  /// Standard error of log_probability (delta method on the weight mean).
  double std_error = 0.0;
  std::size_t n_samples = 0;
};

namespace detail {

// Reordered, possibly rank-deficient Cholesky factor for the sequential sampler.
struct SequentialFactor {
  Eigen::MatrixXd lower;  // K × rank, rows in pivot order
  Eigen::VectorXd mean;   // permuted
  Eigen::VectorXd det_tol;
  Eigen::Index rank = 0;
};

inline SequentialFactor sequential_factor(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  const Eigen::Index k = mean.size();
  SequentialFactor f;
  Eigen::MatrixXd s = cov;
  f.mean = mean;
  f.lower = Eigen::MatrixXd::Zero(k, k);
  Eigen::VectorXd resid = cov.diagonal();
  Eigen::VectorXd orig_diag = cov.diagonal();
  Eigen::VectorXd shift = Eigen::VectorXd::Zero(k);  // Σ_{c<i} L(j,c) E[z_c]
  const double max_diag = k > 0 ? orig_diag.cwiseAbs().maxCoeff() : 0.0;

  auto swap = [&](Eigen::Index i, Eigen::Index j) {
    if (i == j) return;
    s.row(i).swap(s.row(j));
    s.col(i).swap(s.col(j));
    std::swap(f.mean[i], f.mean[j]);
    std::swap(resid[i], resid[j]);
    std::swap(orig_diag[i], orig_diag[j]);
    std::swap(shift[i], shift[j]);
    f.lower.row(i).swap(f.lower.row(j));
  };

  Eigen::Index i = 0;
  for (; i < k; ++i) {
    Eigen::Index best = -1;
    double best_mass = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = i; j < k; ++j) {
      if (!(resid[j] > 1e-10 * orig_diag[j]) || !(resid[j] > 1e-14 * max_diag)) continue;
      const double l = (-f.mean[j] - shift[j]) / std::sqrt(resid[j]);
      const double mass = log_normal_cdf(-l);
      if (mass < best_mass) {
        best_mass = mass;
        best = j;
      }
    }
    if (best < 0) break;
    swap(i, best);
    const double piv = std::sqrt(resid[i]);
    f.lower(i, i) = piv;
    if (i + 1 < k) {
      const Eigen::Index rest = k - i - 1;
      Eigen::VectorXd col = s.col(i).tail(rest);
      if (i > 0) col.noalias() -= f.lower.block(i + 1, 0, rest, i) * f.lower.row(i).head(i).transpose();
      f.lower.col(i).tail(rest) = col / piv;
    }
    const double l = (-f.mean[i] - shift[i]) / piv;
    const double tail = std::exp(log_normal_cdf(-l));
    const double expect = tail > 1e-300 ? normal_pdf(l) / tail : l;
    for (Eigen::Index j = i + 1; j < k; ++j) {
      resid[j] -= f.lower(j, i) * f.lower(j, i);
      shift[j] += f.lower(j, i) * expect;
    }
  }
  f.rank = i;
  f.lower.conservativeResize(k, f.rank);
  f.det_tol = (1e-9 * orig_diag.cwiseMax(0.0).cwiseSqrt().array()).matrix();
  return f;
}

}  // namespace detail

/// log P(X ≥ 0 componentwise) for X ~ N(mean, covariance), deterministic in `seed`.
inline OrthantEstimate orthant_log_probability(const Eigen::VectorXd& mean, const Eigen::MatrixXd& covariance,
                                               std::size_t n_mc, std::uint64_t seed) {
  if (covariance.rows() != covariance.cols() || covariance.rows() != mean.size()) {
    throw ShapeError("orthant_log_probability: mean/covariance shapes disagree");
  }
  if (n_mc < 2) throw ParameterError("orthant_log_probability: at least 2 MC samples required");
  if (!covariance.allFinite() || !mean.allFinite()) {
    throw NumericalError("orthant_log_probability: non-finite input");
  }
  if ((covariance.diagonal().array() < 0.0).any()) {
    throw NumericalError("orthant_log_probability: covariance has negative variances");
  }
  const auto f = detail::sequential_factor(mean, covariance);
  const Eigen::Index k = mean.size();
  const Eigen::Index r = f.rank;
  auto rng = detail::make_rng(seed, 0x6f7274);

  std::vector<double> logw(n_mc, 0.0);
  Eigen::VectorXd z(r);
  for (std::size_t sidx = 0; sidx < n_mc; ++sidx) {
    double lw = 0.0;
    for (Eigen::Index i = 0; i < r; ++i) {
      const double partial = i > 0 ? f.lower.row(i).head(i).dot(z.head(i)) : 0.0;
      const double l = (-f.mean[i] - partial) / f.lower(i, i);
      lw += detail::log_normal_cdf(-l);
      z[i] = detail::sample_lower_truncated_normal(l, rng);
    }
    if (r < k) {
      const Eigen::VectorXd det = f.mean.tail(k - r) + f.lower.bottomRows(k - r) * z;
      for (Eigen::Index j = 0; j < k - r; ++j) {
        if (det[j] < -f.det_tol[r + j]) {
          lw = -std::numeric_limits<double>::infinity();
          break;
        }
      }
    }
    logw[sidx] = lw;
  }

  double top = -std::numeric_limits<double>::infinity();
  for (double v : logw) top = std::max(top, v);
  OrthantEstimate est;
  est.n_samples = n_mc;
  if (!std::isfinite(top)) {
    est.log_probability = -std::numeric_limits<double>::infinity();
    est.std_error = std::numeric_limits<double>::infinity();
    return est;
  }
  double sum = 0.0;
  double sum2 = 0.0;
  for (double v : logw) {
    const double w = std::exp(v - top);
    sum += w;
    sum2 += w * w;
  }
  const double n = static_cast<double>(n_mc);
  const double mean_w = sum / n;
  const double var_w = std::max(0.0, (sum2 - n * mean_w * mean_w) / (n - 1.0));
  est.log_probability = std::min(0.0, top + std::log(mean_w));
  est.std_error = std::sqrt(var_w / n) / mean_w;
  return est;
}

/// Probabilities of the constraint region under N(μ, Σ) for varying μ; caches FΣFᵀ.
class RegionProbability {
 public:
  RegionProbability(const ConstraintSystem& system, const Eigen::MatrixXd& sigma)
      : normals_(system.normals()), offsets_(system.offsets()) {
    if (static_cast<std::size_t>(sigma.rows()) != system.dim() || sigma.rows() != sigma.cols()) {
      throw ShapeError("RegionProbability: covariance does not match constraint dimension");
    }
    projected_ = normals_ * sigma * normals_.transpose();
    projected_ = 0.5 * (projected_ + projected_.transpose()).eval();
  }

  OrthantEstimate log_probability(const Eigen::VectorXd& mean, std::size_t n_mc, std::uint64_t seed) const {
    return orthant_log_probability(normals_ * mean + offsets_, projected_, n_mc, seed);
  }

 private:
  Eigen::MatrixXd normals_;
  Eigen::VectorXd offsets_;
  Eigen::MatrixXd projected_;
};

/// log β = log P_{χᵏ}(region) − log P_{χᵏ⁺¹}(region) with common random numbers,
/// so swapping the arguments negates the result exactly.
inline double proposal_log_ratio(const RegionProbability& region, const Eigen::VectorXd& chi_k,
                                 const Eigen::VectorXd& chi_next, std::size_t n_mc, std::uint64_t seed) {
  const double from = region.log_probability(chi_k, n_mc, seed).log_probability;
  const double to = region.log_probability(chi_next, n_mc, seed).log_probability;
  return from - to;
}

/// Orthant form: proposals centred at χ with covariance Σ truncated to ξ ≥ 0.
inline double proposal_log_ratio(const Eigen::MatrixXd& sigma, const Eigen::VectorXd& chi_k,
                                 const Eigen::VectorXd& chi_next, std::size_t n_mc, std::uint64_t seed) {
  if (chi_k.size() != sigma.rows() || chi_next.size() != sigma.rows()) {
    throw ShapeError("proposal_log_ratio: sample lengths do not match sigma");
  }
  if ((chi_k.array() < 0.0).any() || (chi_next.array() < 0.0).any()) {
    throw DomainError("proposal_log_ratio: samples must be non-negative");
  }
  const double from = orthant_log_probability(chi_k, sigma, n_mc, seed).log_probability;
  const double to = orthant_log_probability(chi_next, sigma, n_mc, seed).log_probability;
  return from - to;
}

}  // namespace lineqcox
