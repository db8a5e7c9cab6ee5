#pragma once

#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <vector>

#include "qibf.hpp"

namespace qibf::test {

// Independent normal CDF for oracles (not the library's erfc path).
inline double Phi(double z) {
  if (std::isinf(z)) return z > 0 ? 1.0 : 0.0;
  return boost::math::cdf(boost::math::normal_distribution<double>(), z);
}

inline double npdf(double x, double mean, double var) {
  return boost::math::pdf(boost::math::normal_distribution<double>(mean, std::sqrt(var)), x);
}

inline LinearGaussianModel case2_model(int horizon = 5) {
  return LinearGaussianModel::scalar(0.95, 1.0, 0.01, 0.01, 0.0, 0.02, horizon);
}

inline LinearGaussianModel case1_model(int horizon = 5) {
  return LinearGaussianModel::scalar(1.0, 1.0, 1e-4, 1e-5, 0.0, 0.02, horizon);
}

inline NoiseRealization case2_noise() {
  NoiseRealization n;
  n.x0 = VectorXd::Constant(1, -0.0319);
  for (double w : {-0.1089, 0.0553, 0.1544, -0.1492, 0.0}) n.w.push_back(VectorXd::Constant(1, w));
  for (double v : {0.1117, 0.0033, 0.1101, 0.0086, -0.0742}) n.v.push_back(VectorXd::Constant(1, v));
  return n;
}

inline Quantizer fig2_quantizer() { return build_uniform_midrise(3, 0.6222); }

inline GridDensity sampled_1d(const Axis& ax, double mean, double var) {
  GridDensity d;
  d.grid = UniformGrid{{ax}};
  for (std::size_t i = 0; i < ax.count; ++i) d.values.push_back(npdf(ax.node(i), mean, var));
  return d;
}

}  // namespace qibf::test
