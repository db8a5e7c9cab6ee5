#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "qibf/error.hpp"
#include "qibf/rng.hpp"

namespace qibf {

/// Bootstrap particle filter over an arbitrary particle type with
/// systematic resampling. Propagation and likelihood are supplied per step.
template <class Particle>
class BootstrapFilter {
 public:
  template <class Sampler>
  BootstrapFilter(std::size_t n, Rng rng, Sampler&& sample_prior)
      : particles_(n), weights_(n, 1.0 / static_cast<double>(n)), rng_(std::move(rng)) {
    require(n >= 1, ErrorKind::kInvalidArgument, "need at least one particle");
    for (auto& p : particles_) p = sample_prior(rng_);
    ess_ = static_cast<double>(n);
  }

  std::size_t size() const { return particles_.size(); }
  const std::vector<Particle>& particles() const { return particles_; }
  const std::vector<double>& weights() const { return weights_; }

  /// move(particle&, Rng&) draws the next state in place.
  template <class Move>
  void predict(Move&& move) {
    for (auto& p : particles_) move(p, rng_);
  }

  /// Multiplies weights by likelihood(particle) and renormalizes; returns the
  /// effective sample size 1 / sum w^2.
  template <class Likelihood>
  double update(Likelihood&& likelihood) {
    double total = 0.0;
    for (std::size_t i = 0; i < particles_.size(); ++i) {
      weights_[i] *= likelihood(particles_[i]);
      total += weights_[i];
    }
    if (!(total > 0.0) || !std::isfinite(total)) {
      throw Error(ErrorKind::kOracleDegenerate, "all particle weights vanished");
    }
    double sum_sq = 0.0;
    for (double& w : weights_) {
      w /= total;
      sum_sq += w * w;
    }
    ess_ = 1.0 / sum_sq;
    if (ess_ < 10.0) {
      throw Error(ErrorKind::kOracleDegenerate,
                  "effective sample size " + std::to_string(ess_) + " below 10");
    }
    return ess_;
  }

  double effective_sample_size() const { return ess_; }

  template <class F>
  double expectation(F&& f) const {
    double s = 0.0;
    for (std::size_t i = 0; i < particles_.size(); ++i) s += weights_[i] * f(particles_[i]);
    return s;
  }

  /// Systematic resampling when ESS drops below threshold * n.
  bool resample_if_needed(double threshold = 0.5) {
    if (ess_ >= threshold * static_cast<double>(particles_.size())) return false;
    resample();
    return true;
  }

  void resample() {
    const std::size_t n = particles_.size();
    std::vector<Particle> next;
    next.reserve(n);
    const double step = 1.0 / static_cast<double>(n);
    const double start = rng_.uniform() * step;
    double cumulative = weights_[0];
    std::size_t i = 0;
    for (std::size_t m = 0; m < n; ++m) {
      const double u = start + static_cast<double>(m) * step;
      while (u > cumulative && i + 1 < n) cumulative += weights_[++i];
      next.push_back(particles_[i]);
    }
    particles_ = std::move(next);
    std::fill(weights_.begin(), weights_.end(), step);
    ess_ = static_cast<double>(n);
  }

 private:
  std::vector<Particle> particles_;
  std::vector<double> weights_;
  Rng rng_;
  double ess_ = 0.0;
};

}  // namespace qibf
