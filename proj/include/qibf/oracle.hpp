#pragma once

// Particle-filter verification oracles for the grid receivers. Each oracle
// runs `replicates` independent bootstrap filters of `particles` particles on
// the same symbol stream. Means are replicate averages; `*_se` is the
// Monte-Carlo standard error of a single `particles`-sized run, estimated from
// the between-replicate spread, and `*_pooled_se` that of the average.

#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "qibf/error.hpp"
#include "qibf/model.hpp"
#include "qibf/normal.hpp"
#include "qibf/particle.hpp"
#include "qibf/quantizer.hpp"
#include "qibf/rng.hpp"
#include "qibf/schedule.hpp"

namespace qibf {

struct OracleOptions {
  std::size_t particles = 100000;
  std::size_t replicates = 10;
  std::uint64_t seed = 0;
  double resample_threshold = 0.5;
};

struct OracleStep {
  int k = 0;
  double pred_mean = 0.0;
  double pred_var = 0.0;
  double pred_se = 0.0;
  double filt_mean = 0.0;
  double filt_var = 0.0;
  double filt_se = 0.0;
  double pred_pooled_se = 0.0;
  double filt_pooled_se = 0.0;
  double min_ess = 0.0;
};

using OracleTrace = std::vector<OracleStep>;

namespace detail {

struct ReplicateStep {
  double pred_mean, pred_var, filt_mean, filt_var, ess;
};

template <class Particle, class Prior, class Move, class Likelihood, class Project>
std::vector<ReplicateStep> run_replicate(std::size_t n, Rng rng, int steps, double threshold,
                                         Prior&& prior, Move&& move, Likelihood&& likelihood,
                                         Project&& project) {
  BootstrapFilter<Particle> pf(n, std::move(rng), prior);
  std::vector<ReplicateStep> out;
  out.reserve(static_cast<std::size_t>(steps));
  auto moments = [&](double& mean, double& var) {
    mean = pf.expectation([&](const Particle& p) { return project(p); });
    var = pf.expectation([&](const Particle& p) {
      const double d = project(p) - mean;
      return d * d;
    });
  };
  for (int k = 0; k < steps; ++k) {
    ReplicateStep s{};
    moments(s.pred_mean, s.pred_var);
    s.ess = pf.update([&](const Particle& p) { return likelihood(k, p); });
    moments(s.filt_mean, s.filt_var);
    out.push_back(s);
    if (k + 1 < steps) {
      pf.resample_if_needed(threshold);
      pf.predict([&](Particle& p, Rng& r) { move(k, p, r); });
    }
  }
  return out;
}

template <class Particle, class Prior, class Move, class Likelihood, class Project>
OracleTrace run_oracle(const OracleOptions& opt, int steps, Prior&& prior, Move&& move,
                       Likelihood&& likelihood, Project&& project) {
  require(opt.particles >= 1 && opt.replicates >= 1, ErrorKind::kInvalidArgument,
          "oracle needs particles and replicates");
  const std::size_t reps = opt.replicates;
  std::vector<std::vector<ReplicateStep>> runs;
  runs.reserve(reps);
  for (std::size_t r = 0; r < reps; ++r) {
    runs.push_back(run_replicate<Particle>(opt.particles, Rng::stream(opt.seed, r), steps,
                                           opt.resample_threshold, prior, move, likelihood,
                                           project));
  }
  OracleTrace trace(static_cast<std::size_t>(steps));
  const double rd = static_cast<double>(reps);
  for (int k = 0; k < steps; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    OracleStep& o = trace[ks];
    o.k = k;
    o.min_ess = runs[0][ks].ess;
    for (const auto& run : runs) {
      o.pred_mean += run[ks].pred_mean / rd;
      o.pred_var += run[ks].pred_var / rd;
      o.filt_mean += run[ks].filt_mean / rd;
      o.filt_var += run[ks].filt_var / rd;
      o.min_ess = std::min(o.min_ess, run[ks].ess);
    }
    if (reps >= 2) {
      double sp = 0.0;
      double sf = 0.0;
      for (const auto& run : runs) {
        sp += (run[ks].pred_mean - o.pred_mean) * (run[ks].pred_mean - o.pred_mean);
        sf += (run[ks].filt_mean - o.filt_mean) * (run[ks].filt_mean - o.filt_mean);
      }
      o.pred_se = std::sqrt(sp / (rd - 1.0));
      o.filt_se = std::sqrt(sf / (rd - 1.0));
    } else {
      // Single replicate: i.i.d. approximation from the weighted spread.
      o.pred_se = std::sqrt(o.pred_var / static_cast<double>(opt.particles));
      o.filt_se = std::sqrt(o.filt_var / runs[0][ks].ess);
    }
    o.pred_pooled_se = o.pred_se / std::sqrt(rd);
    o.filt_pooled_se = o.filt_se / std::sqrt(rd);
  }
  return trace;
}

/// Standard normal restricted to (lo, hi] by inverse-CDF sampling, working in
/// whichever tail keeps the interval probabilities away from cancellation.
inline double truncated_standard_normal(Rng& rng, double lo, double hi) {
  const double u = rng.uniform();
  // erfc_inv is finite only on the open interval (0, 2).
  auto inv = [](double two_p) {
    return boost::math::erfc_inv(std::clamp(two_p, std::numeric_limits<double>::min(),
                                            std::nextafter(2.0, 0.0)));
  };
  if (lo >= 0.0 || hi <= 0.0) {
    // Map to the upper tail: z in (a, b] with a >= 0.
    const bool flip = hi <= 0.0 && lo < 0.0;
    const double a = flip ? -hi : lo;
    const double b = flip ? -lo : hi;
    const double ta = upper_tail(a);
    const double tb = upper_tail(b);
    double z = a;
    if (ta > tb) z = std::sqrt(2.0) * inv(2.0 * (tb + u * (ta - tb)));
    if (!std::isfinite(b)) z = std::max(z, a);
    z = std::clamp(z, a, b);
    return flip ? -z : z;
  }
  const double pl = normal_cdf(lo);
  const double ph = normal_cdf(hi);
  const double z = -std::sqrt(2.0) * inv(2.0 * (pl + u * (ph - pl)));
  return std::clamp(z, lo, hi);
}

inline double input_at(const std::vector<double>& u, int k) {
  return u.empty() ? 0.0 : u[static_cast<std::size_t>(k)];
}

}  // namespace detail

/// Oracle for Method K on the augmented state (x, x~): likelihood
/// P(C x~ + v in cell), then x' = A x + B u + w, x~' = (A - K C) x~ + w - K v
/// with v drawn from N(0, R) restricted to C x~ + v in the received cell.
inline OracleTrace k_oracle_run(const LinearGaussianModel& model, const GainSchedule& schedule,
                                const std::vector<QuantCell>& cells, const std::vector<double>& u,
                                const OracleOptions& opt) {
  require(model.is_scalar(), ErrorKind::kUnsupportedDimension, "scalar models only");
  using P = std::array<double, 2>;
  const double m0 = model.x0_mean(0);
  const double sd0 = std::sqrt(model.x0_cov(0, 0));
  return detail::run_oracle<P>(
      opt, static_cast<int>(cells.size()),
      [&](Rng& rng) {
        const double x = rng.normal(m0, sd0);
        return P{x, x - m0};
      },
      [&](int k, P& p, Rng& rng) {
        const double a = model.A(k)(0, 0);
        const double b = model.B(k).size() ? model.B(k)(0, 0) : 0.0;
        const double c = model.C(k)(0, 0);
        const double gain = schedule.K[static_cast<std::size_t>(k)];
        const double w = rng.normal(0.0, std::sqrt(model.Q(k)(0, 0)));
        const double sr = std::sqrt(model.R(k)(0, 0));
        const QuantCell& cell = cells[static_cast<std::size_t>(k)];
        const double v = sr * detail::truncated_standard_normal(rng, (cell.lower - c * p[1]) / sr,
                                                                (cell.upper - c * p[1]) / sr);
        p[0] = a * p[0] + b * detail::input_at(u, k) + w;
        p[1] = (a - gain * c) * p[1] + w - gain * v;
      },
      [&](int k, const P& p) {
        return cell_probability(cells[static_cast<std::size_t>(k)], model.C(k)(0, 0) * p[1],
                                model.R(k)(0, 0));
      },
      [](const P& p) { return p[0]; });
}

/// Oracle for Method R: plain state particles, likelihood
/// P(C (x - x^R_pred) + v in cell) with the receiver's predicted means.
inline OracleTrace r_oracle_run(const LinearGaussianModel& model,
                                const std::vector<QuantCell>& cells,
                                const std::vector<double>& x_pred_means,
                                const std::vector<double>& u, const OracleOptions& opt) {
  require(model.is_scalar(), ErrorKind::kUnsupportedDimension, "scalar models only");
  require(x_pred_means.size() == cells.size(), ErrorKind::kDimensionMismatch,
          "need one predicted mean per received cell");
  const double m0 = model.x0_mean(0);
  const double sd0 = std::sqrt(model.x0_cov(0, 0));
  return detail::run_oracle<double>(
      opt, static_cast<int>(cells.size()), [&](Rng& rng) { return rng.normal(m0, sd0); },
      [&](int k, double& x, Rng& rng) {
        const double b = model.B(k).size() ? model.B(k)(0, 0) : 0.0;
        x = model.A(k)(0, 0) * x + b * detail::input_at(u, k) +
            rng.normal(0.0, std::sqrt(model.Q(k)(0, 0)));
      },
      [&](int k, const double& x) {
        const auto ks = static_cast<std::size_t>(k);
        return cell_probability(cells[ks], model.C(k)(0, 0) * (x - x_pred_means[ks]),
                                model.R(k)(0, 0));
      },
      [](const double& x) { return x; });
}

/// Oracle on unquantized scalar measurements y_k ~ N(C x, R); its exact
/// answer is the Kalman filter.
inline OracleTrace linear_oracle_run(const LinearGaussianModel& model, const std::vector<double>& y,
                                     const std::vector<double>& u, const OracleOptions& opt) {
  require(model.is_scalar(), ErrorKind::kUnsupportedDimension, "scalar models only");
  const double m0 = model.x0_mean(0);
  const double sd0 = std::sqrt(model.x0_cov(0, 0));
  return detail::run_oracle<double>(
      opt, static_cast<int>(y.size()), [&](Rng& rng) { return rng.normal(m0, sd0); },
      [&](int k, double& x, Rng& rng) {
        const double b = model.B(k).size() ? model.B(k)(0, 0) : 0.0;
        x = model.A(k)(0, 0) * x + b * detail::input_at(u, k) +
            rng.normal(0.0, std::sqrt(model.Q(k)(0, 0)));
      },
      [&](int k, const double& x) {
        return gaussian_density(y[static_cast<std::size_t>(k)], model.C(k)(0, 0) * x,
                                model.R(k)(0, 0));
      },
      [](const double& x) { return x; });
}

}  // namespace qibf
