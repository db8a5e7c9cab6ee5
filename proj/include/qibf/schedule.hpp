#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "qibf/error.hpp"
#include "qibf/grid.hpp"
#include "qibf/kalman.hpp"
#include "qibf/model.hpp"
#include "qibf/normal.hpp"

namespace qibf {

/// Realization-independent quantities of the transmitter Kalman filter,
/// computed offline at the receiver from the model alone. Entry k holds
/// Sigma^K_{k|k-1}, S_k = C Sigma C^T + R, L_k and K_k = A_k L_k.
struct GainSchedule {
  std::vector<double> P_pred;
  std::vector<double> S;
  std::vector<double> L;
  std::vector<double> K;

  std::size_t size() const { return P_pred.size(); }

  /// Scalar models only; covers k = 0..horizon.
  static GainSchedule compute(const LinearGaussianModel& model) {
    require(model.is_scalar(), ErrorKind::kUnsupportedDimension,
            "gain schedule for the grid receivers needs a scalar model (n = p = 1)");
    GainSchedule g;
    KalmanState state = kf_init(model);
    const VectorXd y0 = VectorXd::Zero(1);
    const VectorXd u0 = VectorXd::Zero(model.input_dim());
    for (int k = 0; k <= model.horizon; ++k) {
      const KalmanUpdate upd = kf_measurement_update(model, state, y0);
      g.P_pred.push_back(state.P_pred(0, 0));
      g.S.push_back(innovation_variance(model, k, state)(0, 0));
      g.L.push_back(upd.gain(0, 0));
      g.K.push_back(predictor_gain(model, k, upd.gain)(0, 0));
      state = kf_time_update(model, upd.state, u0);
    }
    return g;
  }

  void check_index(int k) const {
    require(k >= 0 && static_cast<std::size_t>(k) < size(), ErrorKind::kInvalidArgument,
            "gain schedule has no entry for k=" + std::to_string(k));
  }
};

enum class TransitionQuadrature {
  kPoint,        // kernel sampled at target nodes
  kCellAverage,  // kernel averaged over each target node's cell
};

/// Fixed grid layout for the Bayesian receivers.
///
/// The prediction-error axis spans half_width_sigmas * max_k sqrt(Sigma^K_{k|k-1})
/// around zero with `points` nodes. The state axis uses the same spacing and
/// covers half_width_sigmas prior standard deviations of x_k around the prior
/// mean for every k up to the horizon. Its nodes sit at x0_mean plus
/// prediction-error nodes, so the rank-one initial density x~ = x - x0_mean
/// falls on grid nodes.
struct GridPolicy {
  std::size_t points = 201;
  double half_width_sigmas = 6.0;
  std::optional<double> x_half_width;
  std::optional<double> xerr_half_width;
  TransitionQuadrature kernel = TransitionQuadrature::kPoint;
  double truncation_sigmas = 8.0;
};

namespace detail {

inline Axis make_error_axis(const GainSchedule& schedule, const GridPolicy& policy) {
  require(policy.points >= 3, ErrorKind::kInvalidArgument, "grid needs at least 3 points");
  require(policy.half_width_sigmas > 0.0, ErrorKind::kInvalidArgument,
          "half_width_sigmas must be positive");
  double half_width = 0.0;
  if (policy.xerr_half_width) {
    half_width = *policy.xerr_half_width;
  } else {
    const double max_var = *std::max_element(schedule.P_pred.begin(), schedule.P_pred.end());
    half_width = policy.half_width_sigmas * std::sqrt(max_var);
  }
  require(half_width > 0.0 && std::isfinite(half_width), ErrorKind::kInvalidArgument,
          "prediction-error axis has zero width (is x0_cov zero?)");
  return Axis::from_bounds(-half_width, half_width, policy.points);
}

inline Axis make_state_axis(const LinearGaussianModel& model, const Axis& error_axis,
                            const GridPolicy& policy) {
  const double h = error_axis.spacing;
  const double anchor = model.x0_mean(0) + error_axis.lower;
  double lo = model.x0_mean(0);
  double hi = lo;
  if (policy.x_half_width) {
    lo -= *policy.x_half_width;
    hi += *policy.x_half_width;
  } else {
    double mean = model.x0_mean(0);
    double var = model.x0_cov(0, 0);
    for (int k = 0; k <= model.horizon; ++k) {
      const double hw = policy.half_width_sigmas * std::sqrt(var);
      lo = std::min(lo, mean - hw);
      hi = std::max(hi, mean + hw);
      const double a = model.A(k)(0, 0);
      mean = a * mean;
      var = a * a * var + model.Q(k)(0, 0);
    }
  }
  const auto i_lo = static_cast<long>(std::floor((lo - anchor) / h + 1e-9));
  const auto i_hi = static_cast<long>(std::ceil((hi - anchor) / h - 1e-9));
  require(i_hi - i_lo + 1 >= 3, ErrorKind::kInvalidArgument, "state axis needs >= 3 points");
  return Axis{anchor + static_cast<double>(i_lo) * h, h, static_cast<std::size_t>(i_hi - i_lo + 1)};
}

}  // namespace detail

/// 2-D grid over (x, x~) for the Method-K receiver.
inline UniformGrid make_k_grid(const LinearGaussianModel& model, const GainSchedule& schedule,
                               const GridPolicy& policy = {}) {
  require(model.is_scalar(), ErrorKind::kUnsupportedDimension,
          "grid receivers support scalar models only");
  const Axis err = detail::make_error_axis(schedule, policy);
  return UniformGrid{{detail::make_state_axis(model, err, policy), err}};
}

/// 1-D grid over x for the Method-R receiver; same nodes as the state axis of
/// make_k_grid so that both receivers can be compared node by node.
inline UniformGrid make_r_grid(const LinearGaussianModel& model, const GridPolicy& policy = {}) {
  const GainSchedule schedule = GainSchedule::compute(model);
  const Axis err = detail::make_error_axis(schedule, policy);
  return UniformGrid{{detail::make_state_axis(model, err, policy)}};
}

enum class BeliefKind { kPredicted, kFiltered };

namespace detail {

/// One-dimensional transition kernel evaluated at offset `arg` for a
/// Gaussian of standard deviation `sd`; zero beyond the truncation radius.
struct KernelEval {
  double sd;
  double spacing;
  TransitionQuadrature mode;
  double radius;

  KernelEval(double sd_, double spacing_, TransitionQuadrature mode_, double truncation)
      : sd(sd_), spacing(spacing_), mode(mode_),
        radius(truncation * sd_ + (mode_ == TransitionQuadrature::kCellAverage ? 0.5 * spacing_ : 0.0)) {}

  double operator()(double arg) const {
    if (std::abs(arg) > radius) return 0.0;
    if (mode == TransitionQuadrature::kPoint) return phi(arg / sd) / sd;
    return standard_interval_probability((arg - 0.5 * spacing) / sd, (arg + 0.5 * spacing) / sd) /
           spacing;
  }
};

}  // namespace detail

}  // namespace qibf
