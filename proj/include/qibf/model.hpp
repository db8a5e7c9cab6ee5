#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "qibf/error.hpp"
#include "qibf/rng.hpp"

namespace qibf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Linear Gaussian plant
///   x_{k+1} = A_k x_k + B_k u_k + w_k,   w_k ~ N(0, Q_k)
///   y_k     = C_k x_k + v_k,             v_k ~ N(0, R_k)
///   x_0 ~ N(x0_mean, x0_cov)
///
/// Each *_seq holds either one matrix (time-invariant) or one per step; a
/// sequence shorter than the horizon repeats its last entry.
struct LinearGaussianModel {
  std::vector<MatrixXd> a_seq;
  std::vector<MatrixXd> b_seq;
  std::vector<MatrixXd> c_seq;
  std::vector<MatrixXd> q_seq;
  std::vector<MatrixXd> r_seq;
  VectorXd x0_mean;
  MatrixXd x0_cov;
  int horizon = 0;

  const MatrixXd& A(int k) const { return at(a_seq, k); }
  const MatrixXd& B(int k) const { return at(b_seq, k); }
  const MatrixXd& C(int k) const { return at(c_seq, k); }
  const MatrixXd& Q(int k) const { return at(q_seq, k); }
  const MatrixXd& R(int k) const { return at(r_seq, k); }

  Eigen::Index state_dim() const { return x0_mean.size(); }
  Eigen::Index input_dim() const { return b_seq.empty() ? 0 : b_seq.front().cols(); }
  Eigen::Index output_dim() const { return c_seq.empty() ? 0 : c_seq.front().rows(); }
  bool is_scalar() const { return state_dim() == 1 && output_dim() == 1; }

  /// Scalar time-invariant model with a single scalar input.
  static LinearGaussianModel scalar(double a, double c, double q, double r, double x0_mean,
                                    double x0_var, int horizon, double b = 0.0) {
    LinearGaussianModel m;
    m.a_seq = {MatrixXd::Constant(1, 1, a)};
    m.b_seq = {MatrixXd::Constant(1, 1, b)};
    m.c_seq = {MatrixXd::Constant(1, 1, c)};
    m.q_seq = {MatrixXd::Constant(1, 1, q)};
    m.r_seq = {MatrixXd::Constant(1, 1, r)};
    m.x0_mean = VectorXd::Constant(1, x0_mean);
    m.x0_cov = MatrixXd::Constant(1, 1, x0_var);
    m.horizon = horizon;
    m.validate();
    return m;
  }

  /// Checks dimensions and the covariance invariants (Q PSD, R PD, x0_cov PSD).
  void validate() const {
    require(horizon >= 0, ErrorKind::kInvalidArgument, "horizon must be nonnegative");
    for (const auto* seq : {&a_seq, &b_seq, &c_seq, &q_seq, &r_seq}) {
      require(!seq->empty(), ErrorKind::kInvalidArgument, "model matrix sequence is empty");
    }
    const auto n = state_dim();
    const auto m = input_dim();
    const auto p = output_dim();
    require(n >= 1, ErrorKind::kDimensionMismatch, "x0_mean must have at least one entry");
    require(x0_cov.rows() == n && x0_cov.cols() == n, ErrorKind::kDimensionMismatch,
            "x0_cov must be n x n");
    check_psd(x0_cov, "x0_cov", false);
    for (const auto& a : a_seq) check_shape(a, n, n, "A");
    for (const auto& b : b_seq) check_shape(b, n, m, "B");
    for (const auto& c : c_seq) check_shape(c, p, n, "C");
    for (const auto& q : q_seq) {
      check_shape(q, n, n, "Q");
      check_psd(q, "Q", false);
    }
    for (const auto& r : r_seq) {
      check_shape(r, p, p, "R");
      check_psd(r, "R", true);
    }
  }

 private:
  static const MatrixXd& at(const std::vector<MatrixXd>& seq, int k) {
    require(!seq.empty(), ErrorKind::kInvalidArgument, "model matrix sequence is empty");
    const auto idx = std::min<std::size_t>(static_cast<std::size_t>(std::max(k, 0)), seq.size() - 1);
    return seq[idx];
  }

  static void check_shape(const MatrixXd& mat, Eigen::Index rows, Eigen::Index cols,
                          const char* name) {
    if (mat.rows() != rows || mat.cols() != cols) {
      throw Error(ErrorKind::kDimensionMismatch,
                  std::string(name) + " is " + std::to_string(mat.rows()) + "x" +
                      std::to_string(mat.cols()) + ", expected " + std::to_string(rows) + "x" +
                      std::to_string(cols));
    }
  }

  static void check_psd(const MatrixXd& mat, const char* name, bool strictly_positive) {
    const double scale = std::max(1.0, mat.cwiseAbs().maxCoeff());
    require((mat - mat.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale,
            ErrorKind::kInvalidArgument, std::string(name) + " is not symmetric");
    const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(mat, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    if (strictly_positive) {
      require(lo > 0.0, ErrorKind::kInvalidArgument, std::string(name) + " is not positive definite");
    } else {
      require(lo >= -1e-12 * scale, ErrorKind::kInvalidArgument,
              std::string(name) + " is not positive semidefinite");
    }
  }
};

struct NoiseRealization {
  VectorXd x0;
  std::vector<VectorXd> w;
  std::vector<VectorXd> v;
};

struct TrajectoryLog {
  std::vector<VectorXd> x;  // horizon + 1 entries
  std::vector<VectorXd> y;  // horizon entries
  std::vector<VectorXd> u;  // horizon entries
};

namespace detail {

inline void check_vector(const VectorXd& vec, Eigen::Index expected, const char* operand, int k) {
  if (vec.size() != expected) {
    throw Error(ErrorKind::kDimensionMismatch,
                std::string(operand) + " at k=" + std::to_string(k) + " has size " +
                    std::to_string(vec.size()) + ", expected " + std::to_string(expected));
  }
}

/// Input sequence padded with zeros when the caller passes none.
inline std::vector<VectorXd> inputs_or_zero(const LinearGaussianModel& model,
                                            const std::vector<VectorXd>& u_seq) {
  if (!u_seq.empty()) {
    require(static_cast<int>(u_seq.size()) == model.horizon, ErrorKind::kDimensionMismatch,
            "input sequence length " + std::to_string(u_seq.size()) + " != horizon " +
                std::to_string(model.horizon));
    return u_seq;
  }
  return std::vector<VectorXd>(static_cast<std::size_t>(model.horizon),
                               VectorXd::Zero(model.input_dim()));
}

}  // namespace detail

inline VectorXd step_truth(const LinearGaussianModel& model, int k, const VectorXd& x,
                           const VectorXd& u, const VectorXd& w) {
  detail::check_vector(x, model.state_dim(), "x", k);
  detail::check_vector(u, model.input_dim(), "u", k);
  detail::check_vector(w, model.state_dim(), "w", k);
  return model.A(k) * x + model.B(k) * u + w;
}

inline VectorXd measure(const LinearGaussianModel& model, int k, const VectorXd& x,
                        const VectorXd& v) {
  detail::check_vector(x, model.state_dim(), "x", k);
  detail::check_vector(v, model.output_dim(), "v", k);
  return model.C(k) * x + v;
}

/// Draws from N(mean, cov). Cholesky when cov is positive definite, otherwise
/// a symmetric eigendecomposition with eigenvalues down to -1e-12 clamped to
/// zero. Always consumes exactly mean.size() normals so streams stay aligned.
inline VectorXd sample_gaussian(const VectorXd& mean, const MatrixXd& cov, Rng& rng) {
  const auto n = mean.size();
  VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z(i) = rng.normal();
  const Eigen::LLT<MatrixXd> llt(cov);
  if (llt.info() == Eigen::Success) return mean + llt.matrixL() * z;
  const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(cov);
  VectorXd values = eig.eigenvalues();
  for (Eigen::Index i = 0; i < n; ++i) {
    require(values(i) >= -1e-12, ErrorKind::kNumerical,
            "covariance has eigenvalue " + std::to_string(values(i)) + " below -1e-12");
    values(i) = std::max(values(i), 0.0);
  }
  return mean + eig.eigenvectors() * values.cwiseSqrt().asDiagonal() * z;
}

inline TrajectoryLog replay(const LinearGaussianModel& model, const std::vector<VectorXd>& u_seq,
                            const NoiseRealization& noise) {
  const auto horizon = static_cast<std::size_t>(model.horizon);
  require(noise.w.size() == horizon && noise.v.size() == horizon, ErrorKind::kDimensionMismatch,
          "realization lengths (w=" + std::to_string(noise.w.size()) +
              ", v=" + std::to_string(noise.v.size()) + ") must equal horizon " +
              std::to_string(horizon));
  detail::check_vector(noise.x0, model.state_dim(), "x0", 0);
  TrajectoryLog log;
  log.u = detail::inputs_or_zero(model, u_seq);
  log.x.reserve(horizon + 1);
  log.y.reserve(horizon);
  log.x.push_back(noise.x0);
  for (std::size_t k = 0; k < horizon; ++k) {
    const int ki = static_cast<int>(k);
    log.y.push_back(measure(model, ki, log.x.back(), noise.v[k]));
    log.x.push_back(step_truth(model, ki, log.x.back(), log.u[k], noise.w[k]));
  }
  return log;
}

/// Draw order: x0, then w_k followed by v_k for k = 0..horizon-1.
inline std::pair<NoiseRealization, TrajectoryLog> simulate(const LinearGaussianModel& model,
                                                           const std::vector<VectorXd>& u_seq,
                                                           Rng& rng) {
  model.validate();
  NoiseRealization noise;
  noise.x0 = sample_gaussian(model.x0_mean, model.x0_cov, rng);
  const VectorXd zero_n = VectorXd::Zero(model.state_dim());
  const VectorXd zero_p = VectorXd::Zero(model.output_dim());
  for (int k = 0; k < model.horizon; ++k) {
    noise.w.push_back(sample_gaussian(zero_n, model.Q(k), rng));
    noise.v.push_back(sample_gaussian(zero_p, model.R(k), rng));
  }
  auto log = replay(model, u_seq, noise);
  return {std::move(noise), std::move(log)};
}

inline std::pair<NoiseRealization, TrajectoryLog> simulate(const LinearGaussianModel& model,
                                                           const std::vector<VectorXd>& u_seq,
                                                           std::uint64_t seed) {
  Rng rng(seed);
  return simulate(model, u_seq, rng);
}

}  // namespace qibf
