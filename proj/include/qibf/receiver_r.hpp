#pragma once

// Method R: Bayesian filter over the plant state driven by the quantized
// innovation iota_k = y_k - C x^R_{k|k-1}, where x^R_{k|k-1} is the mean of
// the receiver's own predicted density. The transmitter runs an identical
// copy of this recursion to form iota_k.

#include <cmath>
#include <string>
#include <vector>

#include "qibf/error.hpp"
#include "qibf/grid.hpp"
#include "qibf/model.hpp"
#include "qibf/normal.hpp"
#include "qibf/quantizer.hpp"
#include "qibf/schedule.hpp"

namespace qibf {

struct StateBelief {
  GridDensity density;
  int k = 0;
  BeliefKind kind = BeliefKind::kPredicted;
};

/// Prior N(x0_mean, x0_cov) as the predicted belief at k = 0.
inline StateBelief r_init(const LinearGaussianModel& model, const UniformGrid& grid) {
  require(model.is_scalar(), ErrorKind::kUnsupportedDimension,
          "Method R grid receiver supports n = p = 1 only");
  grid.validate();
  require(grid.dims() == 1, ErrorKind::kInvalidArgument, "Method R needs a 1-D grid");
  const double m = model.x0_mean(0);
  const double v = model.x0_cov(0, 0);
  require(v > 0.0, ErrorKind::kDegenerateDensity,
          "zero prior variance cannot be represented on a grid");
  StateBelief b;
  b.density.grid = grid;
  b.density.values.resize(grid.size());
  for (std::size_t i = 0; i < grid.axes[0].count; ++i) {
    b.density.values[i] = gaussian_density(grid.axes[0].node(i), m, v);
  }
  b.density = normalize(std::move(b.density));
  return b;
}

inline StateBelief r_init(const LinearGaussianModel& model, const GridPolicy& policy = {}) {
  return r_init(model, make_r_grid(model, policy));
}

/// Chapman-Kolmogorov with kernel N(x_k - A x_{k-1} - B u; 0, Q).
inline StateBelief r_predict(const StateBelief& filtered, const LinearGaussianModel& model,
                             double u, TransitionQuadrature kernel = TransitionQuadrature::kPoint,
                             double truncation_sigmas = 8.0) {
  require(filtered.kind == BeliefKind::kFiltered, ErrorKind::kInvalidArgument,
          "r_predict expects a filtered belief");
  const int km = filtered.k;
  const double a = model.A(km)(0, 0);
  const double b = model.B(km).size() ? model.B(km)(0, 0) : 0.0;
  const double q = model.Q(km)(0, 0);
  require(q > 0.0, ErrorKind::kInvalidArgument, "process noise variance must be positive");
  const Axis& ax = filtered.density.grid.axes[0];
  const detail::KernelEval kw(std::sqrt(q), ax.spacing, kernel, truncation_sigmas);

  std::vector<double> out(ax.count, 0.0);
  for (std::size_t i = 0; i < ax.count; ++i) {
    const double f = filtered.density.values[i];
    if (f == 0.0) continue;
    const double wf = ax.weight(i) * f;
    const double mean = a * ax.node(i) + b * u;
    for (std::size_t t = 0; t < ax.count; ++t) out[t] += wf * kw(ax.node(t) - mean);
  }
  StateBelief pred;
  pred.density.grid = filtered.density.grid;
  pred.density.values = std::move(out);
  pred.density = normalize(std::move(pred.density));
  pred.k = km + 1;
  pred.kind = BeliefKind::kPredicted;
  return pred;
}

/// Conditional mean x^R of the belief.
inline double r_mean(const StateBelief& belief) { return mean_cov(belief.density).mean(0); }

inline Symbol r_transmit(const LinearGaussianModel& model, int k, const Quantizer& q, double y,
                         double x_pred_mean) {
  return q.quantize(y - model.C(k)(0, 0) * x_pred_mean);
}

/// Bayes update with likelihood P(C (x - x^R_pred) + v in cell), evaluated in
/// closed form at each node, then renormalized by quadrature mass.
inline StateBelief r_update(const StateBelief& predicted, const LinearGaussianModel& model,
                            const QuantCell& cell, double x_pred_mean) {
  require(predicted.kind == BeliefKind::kPredicted, ErrorKind::kInvalidArgument,
          "r_update expects a predicted belief");
  const int k = predicted.k;
  const double c = model.C(k)(0, 0);
  const double r = model.R(k)(0, 0);
  const Axis& ax = predicted.density.grid.axes[0];
  StateBelief out;
  out.density.grid = predicted.density.grid;
  out.density.values.resize(ax.count);
  for (std::size_t i = 0; i < ax.count; ++i) {
    out.density.values[i] =
        predicted.density.values[i] * cell_probability(cell, c * (ax.node(i) - x_pred_mean), r);
  }
  const double mass = trapezoid_mass(out.density);
  if (!(mass >= 1e-300)) {
    throw Error(ErrorKind::kDegenerateDensity,
                "received cell (" + std::to_string(cell.lower) + ", " + std::to_string(cell.upper) +
                    "] is incompatible with the grid support at k=" + std::to_string(k));
  }
  out.density = normalize(std::move(out.density));
  out.k = k;
  out.kind = BeliefKind::kFiltered;
  return out;
}

}  // namespace qibf
