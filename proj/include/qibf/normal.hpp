#pragma once

// Standard normal primitives. All tail quantities go through std::erfc, whose
// glibc implementation is accurate to a few ulp over the whole real line.

#include <algorithm>
#include <cmath>
#include <numbers>

namespace qibf {

inline constexpr double kInvSqrt2Pi = 0.3989422804014326779399460599343818684758586311649;

/// Standard normal density; phi(+-inf) = 0.
inline double phi(double x) {
  if (std::isinf(x)) return 0.0;
  return kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

/// Upper tail mass of the standard normal beyond z.
inline double upper_tail(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// P(lo < Z <= hi) for standard normal Z, evaluated on the tail that keeps
/// the subtraction well conditioned.
inline double standard_interval_probability(double lo, double hi) {
  if (!(lo < hi)) return 0.0;
  double p;
  if (lo >= 0.0) {
    p = upper_tail(lo) - upper_tail(hi);
  } else if (hi <= 0.0) {
    p = normal_cdf(hi) - normal_cdf(lo);
  } else {
    p = 1.0 - upper_tail(hi) - normal_cdf(lo);
  }
  return std::max(p, 0.0);
}

inline double gaussian_density(double x, double mean, double variance) {
  const double z = (x - mean) / std::sqrt(variance);
  return phi(z) / std::sqrt(variance);
}

}  // namespace qibf
