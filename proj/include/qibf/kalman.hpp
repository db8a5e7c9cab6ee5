#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "qibf/error.hpp"
#include "qibf/model.hpp"

namespace qibf {

/// Transmitter-side Kalman filter state at time k. After a time update the
/// filtered fields still describe step k-1.
struct KalmanState {
  VectorXd x_pred;
  MatrixXd P_pred;
  VectorXd x_filt;
  MatrixXd P_filt;
  int k = 0;
};

struct KalmanUpdate {
  KalmanState state;
  VectorXd innovation;  // epsilon_k = y_k - C_k x_pred
  MatrixXd gain;        // L_k
};

inline KalmanState kf_init(const LinearGaussianModel& model) {
  return KalmanState{model.x0_mean, model.x0_cov, model.x0_mean, model.x0_cov, 0};
}

/// S_k = C_k P_pred C_k^T + R_k.
inline MatrixXd innovation_variance(const LinearGaussianModel& model, int k,
                                    const KalmanState& state) {
  const MatrixXd& C = model.C(k);
  return C * state.P_pred * C.transpose() + model.R(k);
}

inline KalmanUpdate kf_measurement_update(const LinearGaussianModel& model,
                                          const KalmanState& state, const VectorXd& y) {
  const int k = state.k;
  detail::check_vector(y, model.output_dim(), "y", k);
  const MatrixXd& C = model.C(k);
  const MatrixXd& R = model.R(k);
  const MatrixXd S = innovation_variance(model, k, state);
  const Eigen::LLT<MatrixXd> llt(S);
  require(llt.info() == Eigen::Success, ErrorKind::kNumerical,
          "innovation covariance is not positive definite at k=" + std::to_string(k));
  // L = P C^T S^{-1}, via the Cholesky factor of S.
  const MatrixXd L = llt.solve(C * state.P_pred).transpose();

  KalmanUpdate out;
  out.gain = L;
  out.innovation = y - C * state.x_pred;
  out.state = state;
  out.state.x_filt = state.x_pred + L * out.innovation;
  // Joseph form keeps P_filt symmetric PSD over long horizons.
  const auto n = model.state_dim();
  const MatrixXd I_LC = MatrixXd::Identity(n, n) - L * C;
  MatrixXd P = I_LC * state.P_pred * I_LC.transpose() + L * R * L.transpose();
  out.state.P_filt = 0.5 * (P + P.transpose());
  return out;
}

inline KalmanState kf_time_update(const LinearGaussianModel& model, const KalmanState& state,
                                  const VectorXd& u) {
  const int k = state.k;
  detail::check_vector(u, model.input_dim(), "u", k);
  const MatrixXd& A = model.A(k);
  KalmanState next = state;
  next.x_pred = A * state.x_filt + model.B(k) * u;
  MatrixXd P = A * state.P_filt * A.transpose() + model.Q(k);
  next.P_pred = 0.5 * (P + P.transpose());
  next.k = k + 1;
  return next;
}

/// One-step predictor gain K_k = A_k L_k, driving the prediction error
/// x~_{k+1|k} = (A_k - K_k C_k) x~_{k|k-1} + w_k - K_k v_k.
inline MatrixXd predictor_gain(const LinearGaussianModel& model, int k, const MatrixXd& L) {
  return model.A(k) * L;
}

/// Sample autocorrelations rho(1..max_lag) of the standardized scalar
/// innovations e_k = eps_k / sqrt(S_k). No mean removal, so rho(0) = 1 and
/// a constant sequence gives rho(j) = (T - j) / T.
inline std::vector<double> whiteness_statistic(const std::vector<double>& eps,
                                               const std::vector<double>& S, int max_lag) {
  require(max_lag >= 1, ErrorKind::kInvalidArgument, "max_lag must be >= 1");
  require(eps.size() == S.size(), ErrorKind::kDimensionMismatch,
          "innovation and variance sequences differ in length");
  const std::size_t T = eps.size();
  require(T > 10 * static_cast<std::size_t>(max_lag), ErrorKind::kInvalidArgument,
          "sequence length " + std::to_string(T) + " must exceed 10*max_lag");
  std::vector<double> e(T);
  for (std::size_t k = 0; k < T; ++k) {
    require(S[k] > 0.0, ErrorKind::kInvalidArgument, "innovation variance must be positive");
    e[k] = eps[k] / std::sqrt(S[k]);
  }
  double c0 = 0.0;
  for (double x : e) c0 += x * x;
  require(c0 > 0.0, ErrorKind::kInvalidArgument, "innovation sequence is identically zero");
  std::vector<double> rho(static_cast<std::size_t>(max_lag));
  for (int j = 1; j <= max_lag; ++j) {
    double cj = 0.0;
    for (std::size_t k = 0; k + static_cast<std::size_t>(j) < T; ++k) cj += e[k] * e[k + j];
    rho[static_cast<std::size_t>(j - 1)] = cj / c0;
  }
  return rho;
}

/// Per-step record of a full transmitter Kalman run.
struct KalmanStep {
  int k = 0;
  VectorXd x_pred;
  MatrixXd P_pred;
  VectorXd x_filt;
  MatrixXd P_filt;
  VectorXd innovation;
  MatrixXd S;
  MatrixXd L;
  MatrixXd K;
};

/// Runs the filter over y_0..y_{T-1}.
inline std::vector<KalmanStep> kalman_run(const LinearGaussianModel& model,
                                          const std::vector<VectorXd>& y,
                                          const std::vector<VectorXd>& u) {
  require(u.size() >= y.size(), ErrorKind::kDimensionMismatch, "fewer inputs than measurements");
  std::vector<KalmanStep> steps;
  steps.reserve(y.size());
  KalmanState state = kf_init(model);
  for (std::size_t k = 0; k < y.size(); ++k) {
    KalmanStep step;
    step.k = state.k;
    step.x_pred = state.x_pred;
    step.P_pred = state.P_pred;
    step.S = innovation_variance(model, state.k, state);
    const KalmanUpdate upd = kf_measurement_update(model, state, y[k]);
    step.x_filt = upd.state.x_filt;
    step.P_filt = upd.state.P_filt;
    step.innovation = upd.innovation;
    step.L = upd.gain;
    step.K = predictor_gain(model, state.k, upd.gain);
    steps.push_back(std::move(step));
    state = kf_time_update(model, upd.state, u[k]);
  }
  return steps;
}

/// Measurement-independent covariance recursion: P_{k|k-1} for k = 0..steps.
inline std::vector<MatrixXd> riccati_predicted_covariances(const LinearGaussianModel& model,
                                                           int steps) {
  std::vector<MatrixXd> out;
  KalmanState state = kf_init(model);
  const VectorXd y0 = VectorXd::Zero(model.output_dim());
  const VectorXd u0 = VectorXd::Zero(model.input_dim());
  for (int k = 0; k <= steps; ++k) {
    out.push_back(state.P_pred);
    if (k == steps) break;
    state = kf_time_update(model, kf_measurement_update(model, state, y0).state, u0);
  }
  return out;
}

}  // namespace qibf
