#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "qibf/error.hpp"

namespace qibf {

/// Uniformly spaced nodes lower, lower + h, ..., lower + (count - 1) h.
struct Axis {
  double lower = 0.0;
  double spacing = 1.0;
  std::size_t count = 3;

  static Axis from_bounds(double lower, double upper, std::size_t count) {
    require(count >= 3, ErrorKind::kInvalidArgument, "grid axis needs at least 3 points");
    require(lower < upper, ErrorKind::kInvalidArgument, "grid axis needs lower < upper");
    return Axis{lower, (upper - lower) / static_cast<double>(count - 1), count};
  }

  double node(std::size_t i) const { return lower + static_cast<double>(i) * spacing; }
  double upper() const { return node(count - 1); }

  /// Trapezoid weight of node i (spacing included).
  double weight(std::size_t i) const {
    return (i == 0 || i + 1 == count) ? 0.5 * spacing : spacing;
  }
};

/// Tensor-product grid over one or two axes; values are stored row-major with
/// the last axis varying fastest.
struct UniformGrid {
  std::vector<Axis> axes;

  std::size_t dims() const { return axes.size(); }
  std::size_t size() const {
    std::size_t n = 1;
    for (const auto& a : axes) n *= a.count;
    return n;
  }
  void validate() const {
    require(dims() == 1 || dims() == 2, ErrorKind::kInvalidArgument,
            "grids must have one or two axes");
    for (const auto& a : axes) {
      require(a.count >= 3 && a.spacing > 0.0 && std::isfinite(a.spacing),
              ErrorKind::kInvalidArgument, "grid axis needs >= 3 points and positive spacing");
    }
  }
};

/// Nonnegative density sampled at the nodes of a UniformGrid.
struct GridDensity {
  UniformGrid grid;
  std::vector<double> values;

  double at(std::size_t i) const { return values[i]; }
  double at(std::size_t i, std::size_t j) const { return values[i * grid.axes[1].count + j]; }
  double& at(std::size_t i, std::size_t j) { return values[i * grid.axes[1].count + j]; }
};

/// Pairwise summation: fixed reduction tree, so results are bit-stable and
/// the rounding error grows as O(log n).
inline double pairwise_sum(std::span<const double> xs) {
  if (xs.size() <= 16) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

namespace detail {

inline void check_density(const GridDensity& d) {
  d.grid.validate();
  require(d.values.size() == d.grid.size(), ErrorKind::kDimensionMismatch,
          "density has " + std::to_string(d.values.size()) + " values for a grid of " +
              std::to_string(d.grid.size()) + " nodes");
}

/// Trapezoid-weighted sum of f(node index, value) over the grid.
template <class F>
double weighted_sum(const GridDensity& d, F&& f) {
  std::vector<double> terms(d.values.size());
  if (d.grid.dims() == 1) {
    const Axis& ax = d.grid.axes[0];
    for (std::size_t i = 0; i < ax.count; ++i) terms[i] = ax.weight(i) * f(i, d.values[i]);
  } else {
    const Axis& ax = d.grid.axes[0];
    const Axis& ay = d.grid.axes[1];
    for (std::size_t i = 0; i < ax.count; ++i) {
      const double wi = ax.weight(i);
      for (std::size_t j = 0; j < ay.count; ++j) {
        const std::size_t idx = i * ay.count + j;
        terms[idx] = wi * ay.weight(j) * f(idx, d.values[idx]);
      }
    }
  }
  return pairwise_sum(terms);
}

}  // namespace detail

/// Tensor-product trapezoidal quadrature of the density values.
inline double trapezoid_mass(const GridDensity& d) {
  detail::check_density(d);
  return detail::weighted_sum(d, [](std::size_t, double v) { return v; });
}

inline GridDensity normalize(GridDensity d) {
  const double mass = trapezoid_mass(d);
  require(mass > 0.0 && std::isfinite(mass), ErrorKind::kDegenerateDensity,
          "density has zero or non-finite mass; the grid no longer covers the support "
          "(widen the grid)");
  for (double& v : d.values) v /= mass;
  return d;
}

struct Moments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Trapezoidal mean and central second moments. Assumes unit mass.
inline Moments mean_cov(const GridDensity& d) {
  detail::check_density(d);
  const std::size_t dims = d.grid.dims();
  const std::size_t ny = dims == 2 ? d.grid.axes[1].count : 1;
  auto coord = [&](std::size_t idx, std::size_t axis) {
    if (dims == 1) return d.grid.axes[0].node(idx);
    return axis == 0 ? d.grid.axes[0].node(idx / ny) : d.grid.axes[1].node(idx % ny);
  };
  Moments m;
  m.mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dims));
  m.cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dims), static_cast<Eigen::Index>(dims));
  for (std::size_t a = 0; a < dims; ++a) {
    m.mean(static_cast<Eigen::Index>(a)) =
        detail::weighted_sum(d, [&](std::size_t idx, double v) { return coord(idx, a) * v; });
  }
  for (std::size_t a = 0; a < dims; ++a) {
    for (std::size_t b = a; b < dims; ++b) {
      const double ma = m.mean(static_cast<Eigen::Index>(a));
      const double mb = m.mean(static_cast<Eigen::Index>(b));
      const double c = detail::weighted_sum(d, [&](std::size_t idx, double v) {
        return (coord(idx, a) - ma) * (coord(idx, b) - mb) * v;
      });
      m.cov(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = c;
      m.cov(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = c;
    }
  }
  return m;
}

/// Integrates a 2-D density over the other axis, keeping `keep_axis`.
inline GridDensity marginal(const GridDensity& d, std::size_t keep_axis) {
  detail::check_density(d);
  require(d.grid.dims() == 2, ErrorKind::kInvalidArgument, "marginal needs a 2-D density");
  require(keep_axis < 2, ErrorKind::kInvalidArgument, "axis must be 0 or 1");
  const Axis& ax = d.grid.axes[0];
  const Axis& ay = d.grid.axes[1];
  GridDensity out;
  out.grid.axes = {d.grid.axes[keep_axis]};
  out.values.assign(d.grid.axes[keep_axis].count, 0.0);
  std::vector<double> terms;
  if (keep_axis == 0) {
    terms.resize(ay.count);
    for (std::size_t i = 0; i < ax.count; ++i) {
      for (std::size_t j = 0; j < ay.count; ++j) terms[j] = ay.weight(j) * d.at(i, j);
      out.values[i] = pairwise_sum(terms);
    }
  } else {
    terms.resize(ax.count);
    for (std::size_t j = 0; j < ay.count; ++j) {
      for (std::size_t i = 0; i < ax.count; ++i) terms[i] = ax.weight(i) * d.at(i, j);
      out.values[j] = pairwise_sum(terms);
    }
  }
  return out;
}

/// Total-variation distance between two densities on the same grid.
inline double total_variation(const GridDensity& p, const GridDensity& q) {
  detail::check_density(p);
  detail::check_density(q);
  require(p.values.size() == q.values.size(), ErrorKind::kDimensionMismatch,
          "total_variation needs densities on the same grid");
  return 0.5 * detail::weighted_sum(
                   p, [&](std::size_t idx, double v) { return std::abs(v - q.values[idx]); });
}

/// CSV with one row per node: axis coordinates then the density value.
inline void write_csv(std::ostream& os, const GridDensity& d,
                      const std::vector<std::string>& axis_names) {
  detail::check_density(d);
  require(axis_names.size() == d.grid.dims(), ErrorKind::kInvalidArgument,
          "need one name per grid axis");
  const auto old_precision = os.precision(12);
  for (const auto& name : axis_names) os << name << ',';
  os << "density\n";
  if (d.grid.dims() == 1) {
    for (std::size_t i = 0; i < d.grid.axes[0].count; ++i) {
      os << d.grid.axes[0].node(i) << ',' << d.values[i] << '\n';
    }
  } else {
    for (std::size_t i = 0; i < d.grid.axes[0].count; ++i) {
      for (std::size_t j = 0; j < d.grid.axes[1].count; ++j) {
        os << d.grid.axes[0].node(i) << ',' << d.grid.axes[1].node(j) << ',' << d.at(i, j)
           << '\n';
      }
    }
  }
  os.precision(old_precision);
}

}  // namespace qibf
