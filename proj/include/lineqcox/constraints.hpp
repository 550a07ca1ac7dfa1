#pragma once

// Linear inequality systems on knot coefficients. Every constraint is stored
// as a closed halfspace f·ξ + g ≥ 0. Because Λ_m is piecewise (multi)linear,
// a constraint that holds at the knots holds everywhere in the domain.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lineqcox/errors.hpp"
#include "lineqcox/finite_gp.hpp"

namespace lineqcox {

enum class ConstraintKind { nonnegative, nonincreasing, nondecreasing, convex, concave, bounded };

struct ConstraintSpec {
  ConstraintKind kind = ConstraintKind::nonnegative;
  /// Dimensions a shape constraint applies to; empty means every dimension.
  std::vector<std::size_t> dims;
  double lower = 0.0;
  double upper = 0.0;

  static ConstraintSpec nonnegative() { return {ConstraintKind::nonnegative, {}, 0.0, 0.0}; }
  static ConstraintSpec nonincreasing(std::vector<std::size_t> dims = {}) {
    return {ConstraintKind::nonincreasing, std::move(dims), 0.0, 0.0};
  }
  static ConstraintSpec nondecreasing(std::vector<std::size_t> dims = {}) {
    return {ConstraintKind::nondecreasing, std::move(dims), 0.0, 0.0};
  }
  static ConstraintSpec convex(std::vector<std::size_t> dims = {}) {
    return {ConstraintKind::convex, std::move(dims), 0.0, 0.0};
  }
  static ConstraintSpec concave(std::vector<std::size_t> dims = {}) {
    return {ConstraintKind::concave, std::move(dims), 0.0, 0.0};
  }
  static ConstraintSpec bounded(double lower, double upper) {
    if (!(lower <= upper)) throw ParameterError("bounded constraint requires lower <= upper");
    return {ConstraintKind::bounded, {}, lower, upper};
  }

  bool applies_to(std::size_t d) const {
    return dims.empty() || std::find(dims.begin(), dims.end(), d) != dims.end();
  }
};

inline std::string_view to_string(ConstraintKind kind) {
  switch (kind) {
    case ConstraintKind::nonnegative: return "nonnegative";
    case ConstraintKind::nonincreasing: return "nonincreasing";
    case ConstraintKind::nondecreasing: return "nondecreasing";
    case ConstraintKind::convex: return "convex";
    case ConstraintKind::concave: return "concave";
    case ConstraintKind::bounded: return "bounded";
  }
  return "unknown";
}

/// Parses the CLI names: nonnegative, nonincreasing, nondecreasing, convex,
/// concave, and bounded(lower:upper). Shape kinds accept an optional
/// `@i` suffix restricting them to dimension i (1-based).
inline ConstraintSpec parse_constraint(std::string_view text) {
  std::string s(text);
  std::vector<std::size_t> dims;
  if (const auto at = s.find('@'); at != std::string::npos) {
    const std::string dim_text = s.substr(at + 1);
    s.resize(at);
    std::size_t consumed = 0;
    long d = -1;
    try {
      d = std::stol(dim_text, &consumed);
    } catch (const std::exception&) {
      consumed = 0;
    }
    if (consumed != dim_text.size() || d < 1) {
      throw ParameterError("constraint dimension suffix must be a positive integer: '" + std::string(text) + "'");
    }
    dims.push_back(static_cast<std::size_t>(d - 1));
  }
  if (s == "nonnegative") return {ConstraintKind::nonnegative, {}, 0.0, 0.0};
  if (s == "nonincreasing") return ConstraintSpec::nonincreasing(dims);
  if (s == "nondecreasing") return ConstraintSpec::nondecreasing(dims);
  if (s == "convex") return ConstraintSpec::convex(dims);
  if (s == "concave") return ConstraintSpec::concave(dims);
  if (s.rfind("bounded(", 0) == 0 && s.back() == ')') {
    const std::string body = s.substr(8, s.size() - 9);
    const auto colon = body.find(':');
    if (colon == std::string::npos) {
      throw ParameterError("bounded constraint must be written bounded(lower:upper)");
    }
    try {
      return ConstraintSpec::bounded(std::stod(body.substr(0, colon)), std::stod(body.substr(colon + 1)));
    } catch (const std::invalid_argument&) {
      throw ParameterError("bounded constraint has non-numeric limits: '" + std::string(text) + "'");
    }
  }
  throw ParameterError("unknown constraint kind '" + std::string(text) + "'");
}

/// Halfspaces F ξ + g ≥ 0 with the spec that produced each row and a strictly
/// feasible point.
class ConstraintSystem {
 public:
  ConstraintSystem(Eigen::MatrixXd normals, Eigen::VectorXd offsets, std::vector<std::size_t> provenance,
                   std::vector<ConstraintSpec> specs, Eigen::VectorXd feasible_point)
      : normals_(std::move(normals)),
        offsets_(std::move(offsets)),
        provenance_(std::move(provenance)),
        specs_(std::move(specs)),
        feasible_(std::move(feasible_point)) {
    if (normals_.rows() != offsets_.size() || static_cast<std::size_t>(normals_.rows()) != provenance_.size()) {
      throw ShapeError("ConstraintSystem: normals, offsets and provenance disagree in length");
    }
    if (feasible_.size() != normals_.cols()) {
      throw ShapeError("ConstraintSystem: feasible point length does not match normals");
    }
    for (Eigen::Index k = 0; k < normals_.rows(); ++k) {
      if (normals_.row(k).squaredNorm() == 0.0) throw ParameterError("ConstraintSystem: zero normal in row " + std::to_string(k));
    }
    const Eigen::VectorXd margin = margins(feasible_);
    if (margin.size() > 0 && !(margin.minCoeff() > 0.0)) {
      throw InfeasibleError("ConstraintSystem: stored point is not strictly feasible (min margin " +
                            std::to_string(margin.minCoeff()) + ")");
    }
  }

  /// Builds a system from raw halfspaces; the caller supplies a strictly feasible point.
  static ConstraintSystem from_halfspaces(Eigen::MatrixXd normals, Eigen::VectorXd offsets,
                                          Eigen::VectorXd feasible_point) {
    std::vector<std::size_t> prov(static_cast<std::size_t>(normals.rows()), 0);
    return ConstraintSystem(std::move(normals), std::move(offsets), std::move(prov), {}, std::move(feasible_point));
  }

  /// Converts band form l ≤ Aξ ≤ u; infinite limits produce no row.
  static ConstraintSystem from_band(const Eigen::MatrixXd& a, const Eigen::VectorXd& lower,
                                    const Eigen::VectorXd& upper, Eigen::VectorXd feasible_point) {
    std::vector<Eigen::RowVectorXd> rows;
    std::vector<double> offs;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      if (std::isfinite(lower[i])) {
        rows.push_back(a.row(i));
        offs.push_back(-lower[i]);
      }
      if (std::isfinite(upper[i])) {
        rows.push_back(-a.row(i));
        offs.push_back(upper[i]);
      }
    }
    Eigen::MatrixXd f(static_cast<Eigen::Index>(rows.size()), a.cols());
    Eigen::VectorXd g(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
      f.row(static_cast<Eigen::Index>(k)) = rows[k];
      g[static_cast<Eigen::Index>(k)] = offs[k];
    }
    return from_halfspaces(std::move(f), std::move(g), std::move(feasible_point));
  }

  std::size_t size() const { return static_cast<std::size_t>(normals_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(normals_.cols()); }
  const Eigen::MatrixXd& normals() const { return normals_; }
  const Eigen::VectorXd& offsets() const { return offsets_; }
  const std::vector<std::size_t>& provenance() const { return provenance_; }
  const std::vector<ConstraintSpec>& specs() const { return specs_; }
  const Eigen::VectorXd& feasible_point() const { return feasible_; }

  /// F ξ + g, one entry per halfspace.
  Eigen::VectorXd margins(const Eigen::VectorXd& coeffs) const {
    if (static_cast<std::size_t>(coeffs.size()) != dim()) {
      throw ShapeError("ConstraintSystem: coefficient length does not match system");
    }
    return normals_ * coeffs + offsets_;
  }

 private:
  Eigen::MatrixXd normals_;
  Eigen::VectorXd offsets_;
  std::vector<std::size_t> provenance_;
  std::vector<ConstraintSpec> specs_;
  Eigen::VectorXd feasible_;
};

namespace detail {

struct HalfspaceBuilder {
  std::size_t n = 0;
  std::vector<std::vector<std::pair<std::size_t, double>>> rows;
  std::vector<double> offsets;
  std::vector<std::size_t> provenance;

  void add(std::vector<std::pair<std::size_t, double>> row, double offset, std::size_t spec) {
    rows.push_back(std::move(row));
    offsets.push_back(offset);
    provenance.push_back(spec);
  }
};

// Per-dimension shape of the strictly feasible point.
struct DimShape {
  int slope = 0;      // −1 non-increasing, +1 non-decreasing
  int curvature = 0;  // +1 convex, −1 concave
};

}  // namespace detail

/// Strictly feasible point: a base level of 0.1·scale plus, per constrained
/// dimension, a strictly monotone ramp and/or strictly convex/concave bend,
/// affinely mapped into the admissible value range.
inline Eigen::VectorXd default_feasible_point(const std::vector<ConstraintSpec>& specs, const KnotGrid& grid,
                                              double scale) {
  std::vector<detail::DimShape> shape(grid.dim());
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  for (const auto& s : specs) {
    switch (s.kind) {
      case ConstraintKind::nonnegative: lo = std::max(lo, 0.0); break;
      case ConstraintKind::bounded:
        lo = std::max(lo, s.lower);
        hi = std::min(hi, s.upper);
        break;
      default:
        for (std::size_t d = 0; d < grid.dim(); ++d) {
          if (!s.applies_to(d)) continue;
          auto& sh = shape[d];
          const int slope = s.kind == ConstraintKind::nonincreasing ? -1 : s.kind == ConstraintKind::nondecreasing ? 1 : 0;
          const int curv = s.kind == ConstraintKind::convex ? 1 : s.kind == ConstraintKind::concave ? -1 : 0;
          if (slope != 0) {
            if (sh.slope == -slope) {
              throw InfeasibleError("nonincreasing and nondecreasing requested on dimension " + std::to_string(d + 1));
            }
            sh.slope = slope;
          }
          if (curv != 0) {
            if (sh.curvature == -curv) {
              throw InfeasibleError("convex and concave requested on dimension " + std::to_string(d + 1) +
                                    " admit no strictly feasible point");
            }
            sh.curvature = curv;
          }
        }
    }
  }
  if (!(lo < hi)) {
    throw InfeasibleError("bounds leave no open interval of admissible values");
  }

  // f(τ) = Σ_d slope·τ + curvature·τ²/4 over normalised knot positions τ ∈ [0, 1];
  // |df/dτ| ≥ 1/2 so monotone shapes stay strict under the bend.
  const auto n = static_cast<Eigen::Index>(grid.size());
  Eigen::VectorXd f = Eigen::VectorXd::Zero(n);
  for (Eigen::Index p = 0; p < n; ++p) {
    const auto idx = grid.unflatten(static_cast<std::size_t>(p));
    for (std::size_t d = 0; d < grid.dim(); ++d) {
      const double tau = static_cast<double>(idx[d]) / static_cast<double>(grid.count(d) - 1);
      f[p] += shape[d].slope * tau + 0.25 * shape[d].curvature * tau * tau;
    }
  }
  double target_lo = 0.1 * scale;
  double target_hi = 0.2 * scale;
  if (std::isfinite(lo) && std::isfinite(hi)) {
    target_lo = lo + 0.25 * (hi - lo);
    target_hi = lo + 0.75 * (hi - lo);
  } else if (std::isfinite(lo)) {
    target_lo = lo + 0.1 * scale;
    target_hi = lo + 0.2 * scale;
  } else if (std::isfinite(hi)) {
    target_lo = hi - 0.2 * scale;
    target_hi = hi - 0.1 * scale;
  }
  const double fmin = f.minCoeff();
  const double fmax = f.maxCoeff();
  if (fmax - fmin <= 0.0) return Eigen::VectorXd::Constant(n, 0.5 * (target_lo + target_hi));
  return (target_lo + (f.array() - fmin) * (target_hi - target_lo) / (fmax - fmin)).matrix();
}

/// Halfspaces for a composition of constraint kinds on `grid`. `scale` sets the
/// magnitude of the stored feasible point (typically σ).
inline ConstraintSystem build_constraint_system(const std::vector<ConstraintSpec>& specs, const KnotGrid& grid,
                                                double scale = 1.0) {
  if (specs.empty()) throw ParameterError("build_constraint_system: at least one constraint required");
  if (!(scale > 0.0)) throw ParameterError("build_constraint_system: scale must be positive");
  for (const auto& s : specs) {
    for (std::size_t d : s.dims) {
      if (d >= grid.dim()) throw ShapeError("constraint refers to dimension " + std::to_string(d + 1) + " beyond the grid");
    }
  }
  detail::HalfspaceBuilder b;
  b.n = grid.size();
  for (std::size_t si = 0; si < specs.size(); ++si) {
    const auto& s = specs[si];
    switch (s.kind) {
      case ConstraintKind::nonnegative:
        for (std::size_t p = 0; p < grid.size(); ++p) b.add({{p, 1.0}}, 0.0, si);
        break;
      case ConstraintKind::bounded:
        for (std::size_t p = 0; p < grid.size(); ++p) b.add({{p, 1.0}}, -s.lower, si);
        for (std::size_t p = 0; p < grid.size(); ++p) b.add({{p, -1.0}}, s.upper, si);
        break;
      case ConstraintKind::nonincreasing:
      case ConstraintKind::nondecreasing: {
        const double sign = s.kind == ConstraintKind::nonincreasing ? 1.0 : -1.0;
        for (std::size_t d = 0; d < grid.dim(); ++d) {
          if (!s.applies_to(d)) continue;
          for (std::size_t p = 0; p < grid.size(); ++p) {
            if (grid.unflatten(p)[d] + 1 >= grid.count(d)) continue;
            b.add({{p, sign}, {p + grid.stride(d), -sign}}, 0.0, si);
          }
        }
        break;
      }
      case ConstraintKind::convex:
      case ConstraintKind::concave: {
        const double sign = s.kind == ConstraintKind::convex ? 1.0 : -1.0;
        for (std::size_t d = 0; d < grid.dim(); ++d) {
          if (!s.applies_to(d) || grid.count(d) < 3) continue;
          for (std::size_t p = 0; p < grid.size(); ++p) {
            const std::size_t j = grid.unflatten(p)[d];
            if (j == 0 || j + 1 >= grid.count(d)) continue;
            const std::size_t st = grid.stride(d);
            b.add({{p - st, sign}, {p, -2.0 * sign}, {p + st, sign}}, 0.0, si);
          }
        }
        break;
      }
    }
  }
  const auto k = static_cast<Eigen::Index>(b.rows.size());
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(k, static_cast<Eigen::Index>(grid.size()));
  Eigen::VectorXd g(k);
  for (Eigen::Index r = 0; r < k; ++r) {
    for (const auto& [col, v] : b.rows[static_cast<std::size_t>(r)]) f(r, static_cast<Eigen::Index>(col)) = v;
    g[r] = b.offsets[static_cast<std::size_t>(r)];
  }
  Eigen::VectorXd feasible = default_feasible_point(specs, grid, scale);
  return ConstraintSystem(std::move(f), std::move(g), std::move(b.provenance), specs, std::move(feasible));
}

/// True iff every halfspace satisfies f·ξ + g ≥ −tol.
inline bool check_satisfied(const ConstraintSystem& system, const CoefficientSample& coeffs, double tol) {
  if (!(tol >= 0.0)) throw ParameterError("check_satisfied: tolerance must be non-negative");
  const Eigen::VectorXd m = system.margins(coeffs);
  return m.size() == 0 || m.minCoeff() >= -tol;
}

}  // namespace lineqcox
