#pragma once

// Method K receiver: exact Bayesian filter over the augmented state
// Z_k = [x_k; x~_{k|k-1}] of plant state and transmitter Kalman prediction
// error, driven by quantized Kalman innovations.
//
//   x_{k+1}        = A x_k + B u_k + w_k
//   x~_{k+1|k}     = (A - K C) x~_{k|k-1} + w_k - K v_k
//   eps_k          = C x~_{k|k-1} + v_k
//
// The same v_k drives the measurement and the next prediction error, so once
// eps_k is known to lie in the received cell, v_k is no longer N(0, R) given
// Z_k. The prediction step therefore propagates with v_k truncated to
// {v : C x~ + v in cell}; with an uninformative cell this is the plain
// product kernel p_w(w*) p_{Kv}(c*).

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "qibf/error.hpp"
#include "qibf/grid.hpp"
#include "qibf/kalman.hpp"
#include "qibf/model.hpp"
#include "qibf/normal.hpp"
#include "qibf/quantizer.hpp"
#include "qibf/schedule.hpp"

namespace qibf {

/// Density over (x, x~) on a 2-D grid. `health` is the quadrature mass before
/// the final renormalization divided by the analytic evidence; it sits near 1
/// when the grid resolves the belief.
struct AugmentedBelief {
  GridDensity density;
  int k = 0;
  BeliefKind kind = BeliefKind::kPredicted;
  double health = 1.0;
  std::optional<QuantCell> cell;  // cell of eps_k behind a filtered belief
};

/// Relative diagonal loading applied to the rank-one initial covariance.
inline constexpr double kInitialRegularization = 1e-6;

/// Method-K transmitter: quantized Kalman innovation for the current prediction.
inline Symbol k_transmit(const LinearGaussianModel& model, const KalmanState& state,
                         const Quantizer& q, const VectorXd& y) {
  const VectorXd eps = y - model.C(state.k) * state.x_pred;
  require(eps.size() == 1, ErrorKind::kUnsupportedDimension,
          "scalar quantizer needs a scalar innovation");
  return q.quantize(eps(0));
}

/// Joint prior of x_0 and x~_{0|-1} = x_0 - x0_mean: N((x0_mean, 0),
/// Sigma0 [[1,1],[1,1]]) with Sigma0 * 1e-6 added to the diagonal.
inline AugmentedBelief k_init(const LinearGaussianModel& model, const UniformGrid& grid) {
  require(model.is_scalar(), ErrorKind::kUnsupportedDimension,
          "Method K grid receiver supports n = p = 1 only");
  grid.validate();
  require(grid.dims() == 2, ErrorKind::kInvalidArgument, "Method K needs a 2-D grid");
  const double m = model.x0_mean(0);
  const double s0 = model.x0_cov(0, 0);
  require(s0 > 0.0, ErrorKind::kDegenerateDensity,
          "zero prior variance cannot be represented on a grid");
  const double v = s0 * (1.0 + kInitialRegularization);
  const double det = v * v - s0 * s0;
  const double norm = 1.0 / (2.0 * std::numbers::pi * std::sqrt(det));
  const Axis& ax = grid.axes[0];
  const Axis& ay = grid.axes[1];
  AugmentedBelief b;
  b.density.grid = grid;
  b.density.values.assign(grid.size(), 0.0);
  for (std::size_t i = 0; i < ax.count; ++i) {
    const double dx = ax.node(i) - m;
    for (std::size_t j = 0; j < ay.count; ++j) {
      const double dy = ay.node(j);
      const double quad = (v * dx * dx - 2.0 * s0 * dx * dy + v * dy * dy) / det;
      b.density.at(i, j) = norm * std::exp(-0.5 * quad);
    }
  }
  b.density = normalize(std::move(b.density));
  b.k = 0;
  b.kind = BeliefKind::kPredicted;
  return b;
}

inline AugmentedBelief k_init(const LinearGaussianModel& model, const GainSchedule& schedule,
                              const GridPolicy& policy = {}) {
  return k_init(model, make_k_grid(model, schedule, policy));
}

/// p(Z_k | Z_{k-1}) = p_w(w*) * p_{Kv}(c*) with
///   w* = x_k - A x_{k-1} - B u,
///   c* = w* + (A - K C) x~_{k-1} - x~_k,
/// all coefficients taken at time k-1 and K v ~ N(0, K^2 R).
///
/// When `cell` (the received cell of eps_{k-1}) is given, v is restricted to
/// C x~_{k-1} + v in cell and renormalized, which gives p(Z_k | Z_{k-1}, cell).
inline double k_transition_density(const LinearGaussianModel& model, const GainSchedule& schedule,
                                   int k, std::array<double, 2> z_next,
                                   std::array<double, 2> z_prev, double u,
                                   const std::optional<QuantCell>& cell = std::nullopt) {
  require(k >= 1, ErrorKind::kInvalidArgument, "transition density needs k >= 1");
  schedule.check_index(k - 1);
  const int km = k - 1;
  const double a = model.A(km)(0, 0);
  const double b = model.B(km).size() ? model.B(km)(0, 0) : 0.0;
  const double c = model.C(km)(0, 0);
  const double q = model.Q(km)(0, 0);
  const double r = model.R(km)(0, 0);
  const double gain = schedule.K[static_cast<std::size_t>(km)];
  require(std::abs(gain) >= 1e-12, ErrorKind::kSingularGain,
          "predictor gain K_" + std::to_string(km) + " is zero; the transition density is degenerate");
  require(q > 0.0, ErrorKind::kInvalidArgument, "process noise variance must be positive");
  const double w_star = z_next[0] - a * z_prev[0] - b * u;
  const double c_star = w_star + (a - gain * c) * z_prev[1] - z_next[1];
  double value =
      gaussian_density(w_star, 0.0, q) * gaussian_density(c_star, 0.0, gain * gain * r);
  if (cell) {
    const double mean = c * z_prev[1];
    if (!cell->contains(mean + c_star / gain)) return 0.0;
    const double lik = cell_probability(*cell, mean, r);
    value = lik > 0.0 ? value / lik : 0.0;
  }
  return value < 1e-300 ? 0.0 : value;
}

/// Discretized Chapman-Kolmogorov step p(Z_k | E_{k-1}) from p(Z_{k-1} | E_{k-1}).
///
/// Kernel: p_w(w*) times the density of c* = K v with v ~ N(0, R) restricted
/// to C x~_{k-1} + v in the received cell (renormalized per source node),
///   w* = X_a - A x_i - B u,   c* = w* + a2 y_j - Y_b.
/// The w factor follows `kernel`. The v factor is always integrated against
/// the linear-interpolation hat of the target node: the cell restriction makes
/// it discontinuous, and for fine quantizers it is much narrower than h. Hat
/// weights conserve both its mass and its mean.
/// With equal spacing on both axes X_a - Y_b takes only Nx + Ny - 1 distinct
/// values, so the inner sum over y_j is tabulated once per (source row,
/// target diagonal) instead of once per target node.
inline AugmentedBelief k_predict(const AugmentedBelief& filtered, const LinearGaussianModel& model,
                                 const GainSchedule& schedule, double u,
                                 TransitionQuadrature kernel = TransitionQuadrature::kPoint,
                                 double truncation_sigmas = 8.0) {
  require(filtered.kind == BeliefKind::kFiltered, ErrorKind::kInvalidArgument,
          "k_predict expects a filtered belief");
  const int km = filtered.k;
  schedule.check_index(km);
  const GridDensity& src = filtered.density;
  detail::check_density(src);
  const Axis& ax = src.grid.axes[0];
  const Axis& ay = src.grid.axes[1];
  const double h = ay.spacing;
  require(std::abs(ax.spacing - h) <= 1e-9 * h, ErrorKind::kInvalidArgument,
          "Method K prediction needs equal spacing on both grid axes");

  const double a = model.A(km)(0, 0);
  const double b = model.B(km).size() ? model.B(km)(0, 0) : 0.0;
  const double c = model.C(km)(0, 0);
  const double q = model.Q(km)(0, 0);
  const double r = model.R(km)(0, 0);
  const double gain = schedule.K[static_cast<std::size_t>(km)];
  require(std::abs(gain) >= 1e-12, ErrorKind::kSingularGain,
          "predictor gain K_" + std::to_string(km) + " is zero; the transition density is degenerate");
  require(q > 0.0, ErrorKind::kInvalidArgument, "process noise variance must be positive");
  const double a2 = a - gain * c;
  const double shift = b * u;
  const detail::KernelEval kw(std::sqrt(q), h, kernel, truncation_sigmas);
  const double sv = std::abs(gain) * std::sqrt(r);
  const double v_radius = truncation_sigmas * sv + h;
  constexpr double inf = std::numeric_limits<double>::infinity();
  const QuantCell cell = filtered.cell.value_or(QuantCell{});

  const std::size_t nx = ax.count;
  const std::size_t ny = ay.count;
  const std::size_t nd = nx + ny - 1;
  const double diag0 = ax.lower - ay.lower - static_cast<double>(ny - 1) * h;

  // Per source column: admissible range of c* = K v and the weight that
  // undoes the likelihood factor already folded into the filtered density.
  std::vector<double> e_lo(ny), e_hi(ny), col_w(ny);
  for (std::size_t j = 0; j < ny; ++j) {
    const double cy = c * ay.node(j);
    double lo = gain * (cell.lower - cy);
    double hi = gain * (cell.upper - cy);
    if (gain < 0.0) std::swap(lo, hi);
    if (std::isnan(lo)) lo = -inf;
    if (std::isnan(hi)) hi = inf;
    e_lo[j] = lo;
    e_hi[j] = hi;
    const double lik = filtered.cell ? cell_probability(cell, cy, r) : 1.0;
    col_w[j] = lik > 0.0 ? ay.weight(j) / lik : 0.0;
  }
  // Integral of (e - m) p(e) over [lo, hi] for p = N(0, sv^2).
  auto partial = [&](double lo, double hi, double m) {
    if (!(lo < hi)) return 0.0;
    const double zl = lo / sv;
    const double zh = hi / sv;
    return sv * (phi(zl) - phi(zh)) - m * standard_interval_probability(zl, zh);
  };
  auto v_kernel = [&](double cstar, std::size_t j) {
    const double rise = partial(std::max(cstar - h, e_lo[j]), std::min(cstar, e_hi[j]), cstar - h);
    const double fall = -partial(std::max(cstar, e_lo[j]), std::min(cstar + h, e_hi[j]), cstar + h);
    return std::max(0.0, rise + fall) / (h * h);
  };

  std::vector<double> out(nx * ny, 0.0);
  std::vector<double> w_col(nx);
  std::vector<double> g(nd);
  for (std::size_t i = 0; i < nx; ++i) {
    std::size_t j_lo = ny;
    std::size_t j_hi = 0;
    for (std::size_t j = 0; j < ny; ++j) {
      if (src.at(i, j) > 0.0 && col_w[j] > 0.0) {
        j_lo = std::min(j_lo, j);
        j_hi = j;
      }
    }
    if (j_lo == ny) continue;

    const double mean_x = a * ax.node(i) + shift;
    std::size_t a_lo = nx;
    std::size_t a_hi = 0;
    for (std::size_t t = 0; t < nx; ++t) {
      w_col[t] = ax.weight(i) * kw(ax.node(t) - mean_x);
      if (w_col[t] > 0.0) {
        a_lo = std::min(a_lo, t);
        a_hi = t;
      }
    }
    if (a_lo == nx) continue;

    const std::size_t d_lo = a_lo;
    const std::size_t d_hi = a_hi + ny - 1;
    for (std::size_t d = d_lo; d <= d_hi; ++d) {
      const double offset = diag0 + static_cast<double>(d) * h - mean_x;
      std::size_t lo = j_lo;
      std::size_t hi = j_hi;
      if (a2 != 0.0) {
        // |offset + a2 y_j| <= v_radius restricts j to an interval.
        double y1 = (-v_radius - offset) / a2;
        double y2 = (v_radius - offset) / a2;
        if (y1 > y2) std::swap(y1, y2);
        const double f1 = std::ceil((y1 - ay.lower) / h);
        const double f2 = std::floor((y2 - ay.lower) / h);
        if (f2 < static_cast<double>(lo) || f1 > static_cast<double>(hi)) {
          g[d] = 0.0;
          continue;
        }
        lo = std::max(lo, static_cast<std::size_t>(std::max(f1, 0.0)));
        hi = std::min(hi, static_cast<std::size_t>(f2));
      } else if (std::abs(offset) > v_radius) {
        g[d] = 0.0;
        continue;
      }
      double sum = 0.0;
      for (std::size_t j = lo; j <= hi; ++j) {
        const double f = src.at(i, j);
        if (f == 0.0) continue;
        sum += col_w[j] * f * v_kernel(offset + a2 * ay.node(j), j);
      }
      g[d] = sum;
    }

    for (std::size_t t = a_lo; t <= a_hi; ++t) {
      const double wt = w_col[t];
      if (wt == 0.0) continue;
      double* row = out.data() + t * ny;
      const double* gd = g.data() + t + ny - 1;  // g[t - bb + ny - 1]
      for (std::size_t bb = 0; bb < ny; ++bb) row[bb] += wt * gd[-static_cast<std::ptrdiff_t>(bb)];
    }
  }

  AugmentedBelief pred;
  pred.density.grid = src.grid;
  pred.density.values = std::move(out);
  pred.density = normalize(std::move(pred.density));
  pred.k = km + 1;
  pred.kind = BeliefKind::kPredicted;
  return pred;
}

/// Probability of the received cell given the past symbols: by whiteness of
/// the innovations this is the prior cell mass under N(0, S_k).
inline double k_evidence(const GainSchedule& schedule, int k, const QuantCell& cell) {
  schedule.check_index(k);
  return cell_probability(cell, 0.0, schedule.S[static_cast<std::size_t>(k)]);
}

/// P(eps_k in cell | x~_{k|k-1}) with eps_k ~ N(C x~, R).
inline double k_likelihood(const LinearGaussianModel& model, int k, const QuantCell& cell,
                           double xerr) {
  return cell_probability(cell, model.C(k)(0, 0) * xerr, model.R(k)(0, 0));
}

/// Bayes update with the received cell. Multiplies by the likelihood along the
/// x~ axis, divides by the analytic evidence and renormalizes.
inline AugmentedBelief k_update(const AugmentedBelief& predicted, const LinearGaussianModel& model,
                                const GainSchedule& schedule, const QuantCell& cell) {
  require(predicted.kind == BeliefKind::kPredicted, ErrorKind::kInvalidArgument,
          "k_update expects a predicted belief");
  const int k = predicted.k;
  const double evidence = k_evidence(schedule, k, cell);
  const Axis& ax = predicted.density.grid.axes[0];
  const Axis& ay = predicted.density.grid.axes[1];
  std::vector<double> lik(ay.count);
  for (std::size_t j = 0; j < ay.count; ++j) lik[j] = k_likelihood(model, k, cell, ay.node(j));

  AugmentedBelief out;
  out.density.grid = predicted.density.grid;
  out.density.values.resize(predicted.density.values.size());
  for (std::size_t i = 0; i < ax.count; ++i) {
    for (std::size_t j = 0; j < ay.count; ++j) {
      out.density.at(i, j) = predicted.density.at(i, j) * lik[j];
    }
  }
  const double cell_mass = trapezoid_mass(out.density);
  if (!(cell_mass >= 1e-12) || !(evidence > 0.0)) {
    throw Error(ErrorKind::kDegenerateDensity,
                "received cell (" + std::to_string(cell.lower) + ", " + std::to_string(cell.upper) +
                    "] has predicted probability " + std::to_string(cell_mass) + " at k=" +
                    std::to_string(k) + " (desynchronized receiver or channel error)");
  }
  for (double& v : out.density.values) v /= evidence;
  out.health = cell_mass / evidence;
  out.cell = cell;
  out.density = normalize(std::move(out.density));
  out.k = k;
  out.kind = BeliefKind::kFiltered;
  return out;
}

/// x-marginal of the augmented belief, normalized.
inline GridDensity k_state_marginal(const AugmentedBelief& belief) {
  return normalize(marginal(belief.density, 0));
}

}  // namespace qibf
