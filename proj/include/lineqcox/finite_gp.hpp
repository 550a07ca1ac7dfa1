#pragma once

// Finite-dimensional piecewise-linear representation of a random intensity:
// equispaced knot grids, hat basis functions, the interpolated intensity and
// its exact integral over the domain. Multi-dimensional grids are tensor
// products of 1D grids, flattened row-major (last dimension fastest).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lineqcox/errors.hpp"

namespace lineqcox {

using Point = std::vector<double>;

/// Knot values ξ over the flattened grid (intensity units).
using CoefficientSample = Eigen::VectorXd;

/// Per-knot integration weights c (domain-volume units).
using IntegrationWeights = Eigen::VectorXd;

struct Interval {
  double lower = 0.0;
  double upper = 1.0;

  double length() const { return upper - lower; }
  bool contains(double x) const { return x >= lower && x <= upper; }
};

class KnotGrid {
 public:
  KnotGrid(std::vector<Interval> domain, std::vector<std::size_t> counts)
      : domain_(std::move(domain)), counts_(std::move(counts)) {
    if (domain_.empty() || domain_.size() != counts_.size()) {
      throw ShapeError("KnotGrid: domain and knot counts must be non-empty and of equal dimension");
    }
    for (std::size_t i = 0; i < domain_.size(); ++i) {
      if (counts_[i] < 2) {
        throw ParameterError("KnotGrid: at least 2 knots per dimension required, got " +
                             std::to_string(counts_[i]) + " in dimension " + std::to_string(i));
      }
      if (!(domain_[i].lower < domain_[i].upper) || !std::isfinite(domain_[i].lower) ||
          !std::isfinite(domain_[i].upper)) {
        throw ParameterError("KnotGrid: degenerate interval in dimension " + std::to_string(i));
      }
    }
    strides_.assign(dim(), 1);
    for (std::size_t i = dim() - 1; i > 0; --i) strides_[i - 1] = strides_[i] * counts_[i];
    size_ = strides_[0] * counts_[0];
  }

  std::size_t dim() const { return domain_.size(); }
  /// Number of flattened knots, ∏ mᵢ.
  std::size_t size() const { return size_; }
  std::size_t count(std::size_t d) const { return counts_.at(d); }
  const std::vector<std::size_t>& counts() const { return counts_; }
  const Interval& interval(std::size_t d) const { return domain_.at(d); }
  const std::vector<Interval>& domain() const { return domain_; }
  std::size_t stride(std::size_t d) const { return strides_.at(d); }

  double delta(std::size_t d) const {
    return domain_[d].length() / static_cast<double>(counts_[d] - 1);
  }

  /// j-th knot (0-based) along dimension d. The last knot is exactly the upper bound.
  double knot(std::size_t d, std::size_t j) const {
    if (j + 1 == counts_[d]) return domain_[d].upper;
    return domain_[d].lower + static_cast<double>(j) * delta(d);
  }

  std::vector<double> knots(std::size_t d) const {
    std::vector<double> out(counts_.at(d));
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = knot(d, j);
    return out;
  }

  std::vector<std::size_t> unflatten(std::size_t p) const {
    std::vector<std::size_t> idx(dim());
    for (std::size_t d = 0; d < dim(); ++d) {
      idx[d] = p / strides_[d];
      p %= strides_[d];
    }
    return idx;
  }

  std::size_t flatten(std::span<const std::size_t> idx) const {
    std::size_t p = 0;
    for (std::size_t d = 0; d < dim(); ++d) p += idx[d] * strides_[d];
    return p;
  }

  Point knot_point(std::size_t p) const {
    const auto idx = unflatten(p);
    Point x(dim());
    for (std::size_t d = 0; d < dim(); ++d) x[d] = knot(d, idx[d]);
    return x;
  }

  bool contains(std::span<const double> x) const {
    if (x.size() != dim()) return false;
    for (std::size_t d = 0; d < dim(); ++d) {
      if (!domain_[d].contains(x[d])) return false;
    }
    return true;
  }

  double volume() const {
    double v = 1.0;
    for (const auto& iv : domain_) v *= iv.length();
    return v;
  }

 private:
  std::vector<Interval> domain_;
  std::vector<std::size_t> counts_;
  std::vector<std::size_t> strides_;
  std::size_t size_ = 0;
};

inline KnotGrid make_grid(std::vector<Interval> domain, std::vector<std::size_t> counts) {
  return KnotGrid(std::move(domain), std::move(counts));
}

inline KnotGrid make_grid(Interval domain, std::size_t m) { return KnotGrid({domain}, {m}); }

/// φⱼ(x) along dimension `d`: 1 − |x − tⱼ|/Δ inside one spacing of the knot, else 0.
inline double hat_basis(double x, std::size_t j, const KnotGrid& grid, std::size_t d) {
  if (d >= grid.dim()) throw ShapeError("hat_basis: dimension index out of range");
  if (j >= grid.count(d)) throw ShapeError("hat_basis: knot index out of range");
  if (!grid.interval(d).contains(x)) {
    throw DomainError("hat_basis: x = " + std::to_string(x) + " outside the grid domain");
  }
  const double r = std::abs((x - grid.knot(d, j)) / grid.delta(d));
  return r <= 1.0 ? 1.0 - r : 0.0;
}

/// The non-zero basis products at one location: at most 2^d (knot, weight) pairs.
struct BasisStencil {
  std::vector<std::size_t> index;
  std::vector<double> weight;

  template <class Vec>
  double dot(const Vec& coeffs) const {
    double s = 0.0;
    for (std::size_t k = 0; k < index.size(); ++k) s += weight[k] * coeffs[static_cast<Eigen::Index>(index[k])];
    return s;
  }
};

namespace detail {

// Cell index and the weight of its right knot; the left hat carries 1 − w.
inline std::pair<std::size_t, double> locate(double x, const KnotGrid& grid, std::size_t d) {
  const Interval& iv = grid.interval(d);
  const double h = grid.delta(d);
  const std::size_t last_cell = grid.count(d) - 2;
  double s = (x - iv.lower) / h;
  auto j = static_cast<std::size_t>(std::max(0.0, std::floor(s)));
  j = std::min(j, last_cell);
  double w = (x - grid.knot(d, j)) / h;
  w = std::clamp(w, 0.0, 1.0);
  return {j, w};
}

}  // namespace detail

inline BasisStencil basis_stencil(const KnotGrid& grid, std::span<const double> x) {
  if (x.size() != grid.dim()) throw ShapeError("basis_stencil: point dimension does not match grid");
  if (!grid.contains(x)) throw DomainError("basis_stencil: point outside the grid domain");
  BasisStencil st;
  st.index.push_back(0);
  st.weight.push_back(1.0);
  for (std::size_t d = 0; d < grid.dim(); ++d) {
    const auto [j, w] = detail::locate(x[d], grid, d);
    const std::size_t n = st.index.size();
    for (std::size_t k = 0; k < n; ++k) {
      st.index.push_back(st.index[k] + (j + 1) * grid.stride(d));
      st.weight.push_back(st.weight[k] * w);
      st.index[k] += j * grid.stride(d);
      st.weight[k] *= 1.0 - w;
    }
  }
  return st;
}

/// Λ_m(x) = Σ_p [∏ᵢ φ(xᵢ)] ξ_p.
inline double evaluate_intensity(const CoefficientSample& coeffs, const KnotGrid& grid,
                                 std::span<const double> x) {
  if (static_cast<std::size_t>(coeffs.size()) != grid.size()) {
    throw ShapeError("evaluate_intensity: coefficient length does not match grid");
  }
  return basis_stencil(grid, x).dot(coeffs);
}

inline double evaluate_intensity(const CoefficientSample& coeffs, const KnotGrid& grid, double x) {
  return evaluate_intensity(coeffs, grid, std::span<const double>(&x, 1));
}

/// Per-dimension trapezoid weights (Δ/2, Δ, …, Δ, Δ/2), tensorised.
inline IntegrationWeights integration_weights(const KnotGrid& grid) {
  IntegrationWeights w = IntegrationWeights::Ones(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t p = 0; p < grid.size(); ++p) {
    const auto idx = grid.unflatten(p);
    for (std::size_t d = 0; d < grid.dim(); ++d) {
      const bool edge = idx[d] == 0 || idx[d] + 1 == grid.count(d);
      w[static_cast<Eigen::Index>(p)] *= edge ? 0.5 * grid.delta(d) : grid.delta(d);
    }
  }
  return w;
}

/// μ_m = Σ cⱼ ξⱼ, the exact integral of Λ_m over the domain.
inline double intensity_measure(const CoefficientSample& coeffs, const IntegrationWeights& weights) {
  if (coeffs.size() != weights.size()) {
    throw ShapeError("intensity_measure: coefficient and weight lengths differ");
  }
  return weights.dot(coeffs);
}

/// Equispaced evaluation points covering the domain (n per dimension, tensorised row-major).
inline std::vector<Point> regular_points(const std::vector<Interval>& domain, std::size_t n_per_dim) {
  if (n_per_dim < 2) throw ParameterError("regular_points: need at least 2 points per dimension");
  std::vector<Point> out;
  std::size_t total = 1;
  for (std::size_t d = 0; d < domain.size(); ++d) total *= n_per_dim;
  out.reserve(total);
  for (std::size_t p = 0; p < total; ++p) {
    Point x(domain.size());
    std::size_t rem = p;
    for (std::size_t d = domain.size(); d-- > 0;) {
      const std::size_t j = rem % n_per_dim;
      rem /= n_per_dim;
      x[d] = j + 1 == n_per_dim
                 ? domain[d].upper
                 : domain[d].lower + domain[d].length() * static_cast<double>(j) /
                                         static_cast<double>(n_per_dim - 1);
    }
    out.push_back(std::move(x));
  }
  return out;
}

}  // namespace lineqcox
