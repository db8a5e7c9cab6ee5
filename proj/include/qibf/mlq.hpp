#pragma once

// Method S: the multi-level quantized innovations Kalman filter (MLQ-KF),
// run identically at transmitter and receiver. Assumes a Gaussian predicted
// density and replaces the Kalman measurement update by a moment update
// driven by the received cell of a symmetric mid-rise quantizer.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "qibf/error.hpp"
#include "qibf/kalman.hpp"
#include "qibf/model.hpp"
#include "qibf/normal.hpp"
#include "qibf/quantizer.hpp"

namespace qibf {

struct MlqState {
  VectorXd x_pred;
  MatrixXd P_pred;
  VectorXd x_filt;
  MatrixXd P_filt;
  int k = 0;
};

/// How the covariance update sums over quantizer levels.
enum class MlqCovarianceSum {
  kMirrored,      // all 2N cells (twice the positive-level sum); N = 1 gives the 2/pi factor
  kPositiveOnly,  // the N positive levels only
};

/// Positive half of a symmetric mid-rise quantizer: levels
/// (z_l^n, z_u^n], n = 1..N, with z_l^1 = 0 and z_u^N = +inf.
struct SymmetricLevels {
  std::vector<double> lower;
  std::vector<double> upper;

  std::size_t count() const { return lower.size(); }

  static SymmetricLevels from_quantizer(const Quantizer& q) {
    const auto& bps = q.breakpoints();
    const std::size_t m = q.size();
    require(m >= 2 && m % 2 == 0, ErrorKind::kInvalidQuantizer,
            "MLQ-KF needs a symmetric quantizer with an even number of cells");
    const std::size_t n = m / 2;
    const double scale = std::max(1.0, std::abs(bps.back()));
    require(std::abs(bps[n - 1]) <= 1e-12 * scale, ErrorKind::kInvalidQuantizer,
            "MLQ-KF needs a mid-rise quantizer (breakpoint at zero)");
    for (std::size_t i = 1; i < n; ++i) {
      require(std::abs(bps[n - 1 + i] + bps[n - 1 - i]) <= 1e-9 * scale,
              ErrorKind::kInvalidQuantizer, "MLQ-KF needs a symmetric quantizer");
    }
    SymmetricLevels lv;
    for (std::size_t i = 0; i < n; ++i) {
      lv.lower.push_back(i == 0 ? 0.0 : bps[n - 1 + i]);
      lv.upper.push_back(i + 1 == n ? std::numeric_limits<double>::infinity() : bps[n + i]);
    }
    return lv;
  }

  /// Zero-based level index n-1 of the cell containing |value|.
  std::size_t level_of(double value) const {
    const double mag = std::abs(value);
    for (std::size_t i = 0; i < count(); ++i) {
      if (lower[i] < mag && mag <= upper[i]) return i;
    }
    throw Error(ErrorKind::kInvalidArgument,
                "value " + std::to_string(value) + " does not fall in a positive level");
  }
};

/// phi(z_l) - phi(z_u) for one level; thresholds in raw innovation units.
inline double level_density_gap(const SymmetricLevels& lv, std::size_t n) {
  return phi(lv.lower[n]) - phi(lv.upper[n]);
}

/// alpha_{z_l} - alpha_{z_u}, where alpha_z is the standard normal upper tail.
inline double level_tail_gap(const SymmetricLevels& lv, std::size_t n) {
  return upper_tail(lv.lower[n]) - upper_tail(lv.upper[n]);
}

/// Covariance shrink factor sum_n (phi_l - phi_u)^2 / |alpha_l - alpha_u|,
/// doubled in the mirrored reading.
inline double mlq_shrink_factor(const SymmetricLevels& lv,
                                MlqCovarianceSum mode = MlqCovarianceSum::kMirrored) {
  double sum = 0.0;
  for (std::size_t n = 0; n < lv.count(); ++n) {
    const double den = std::abs(level_tail_gap(lv, n));
    require(den > 0.0, ErrorKind::kInvalidQuantizer,
            "quantizer level " + std::to_string(n + 1) + " has zero probability");
    const double gap = level_density_gap(lv, n);
    sum += gap * gap / den;
  }
  return mode == MlqCovarianceSum::kMirrored ? 2.0 * sum : sum;
}

inline MlqState s_init(const LinearGaussianModel& model) {
  return MlqState{model.x0_mean, model.x0_cov, model.x0_mean, model.x0_cov, 0};
}

/// x_pred = A x_filt + B u, P_pred = A P_filt A^T + Q.
inline MlqState s_time_update(const LinearGaussianModel& model, const MlqState& state,
                              const VectorXd& u) {
  const int k = state.k;
  detail::check_vector(u, model.input_dim(), "u", k);
  const MatrixXd& A = model.A(k);
  MlqState next = state;
  next.x_pred = A * state.x_filt + model.B(k) * u;
  const MatrixXd P = A * state.P_filt * A.transpose() + model.Q(k);
  next.P_pred = 0.5 * (P + P.transpose());
  next.k = k + 1;
  return next;
}

inline MlqState s_time_update(const LinearGaussianModel& model, const MlqState& state) {
  return s_time_update(model, state, VectorXd::Zero(model.input_dim()));
}

/// Moment update from the dequantized innovation `received`:
///   x_filt = x_pred + sgn(received) * (phi_l - phi_u)/(alpha_l - alpha_u)
///                     * P C^T / sqrt(C P C^T + R)
///   P_filt = P_pred - shrink * P C^T C P / (C P C^T + R)
inline MlqState s_measurement_update(const LinearGaussianModel& model, const MlqState& state,
                                     const SymmetricLevels& levels, double received,
                                     MlqCovarianceSum mode = MlqCovarianceSum::kMirrored) {
  const int k = state.k;
  const MatrixXd& C = model.C(k);
  require(C.rows() == 1, ErrorKind::kUnsupportedDimension, "MLQ-KF needs a scalar output");
  const std::size_t n = levels.level_of(received);
  const double tail_gap = level_tail_gap(levels, n);
  require(tail_gap != 0.0, ErrorKind::kInvalidQuantizer,
          "received level " + std::to_string(n + 1) + " has zero probability");
  const double ratio = level_density_gap(levels, n) / tail_gap;
  const double sign = received >= 0.0 ? 1.0 : -1.0;

  const VectorXd PCt = state.P_pred * C.transpose();
  const double s = (C * PCt)(0, 0) + model.R(k)(0, 0);
  MlqState out = state;
  out.x_filt = state.x_pred + sign * ratio * PCt / std::sqrt(s);
  const MatrixXd P = state.P_pred - mlq_shrink_factor(levels, mode) * (PCt * PCt.transpose()) / s;
  out.P_filt = 0.5 * (P + P.transpose());
  return out;
}

inline Symbol s_transmit(const LinearGaussianModel& model, const Quantizer& q, const VectorXd& y,
                         const MlqState& state) {
  const VectorXd iota = y - model.C(state.k) * state.x_pred;
  require(iota.size() == 1, ErrorKind::kUnsupportedDimension,
          "scalar quantizer needs a scalar innovation");
  return q.quantize(iota(0));
}

}  // namespace qibf
