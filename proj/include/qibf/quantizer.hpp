#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "qibf/error.hpp"
#include "qibf/normal.hpp"

namespace qibf {

/// Index of a quantizer cell, 0..m-1 in increasing cell order. This is the
/// only thing that travels over the channel.
struct Symbol {
  std::uint32_t index = 0;
  auto operator<=>(const Symbol&) const = default;
};

/// Half-open cell (lower, upper] with its dequantized representative.
struct QuantCell {
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
  double representative = 0.0;
  Symbol symbol;

  bool contains(double value) const { return lower < value && value <= upper; }
};

/// Scalar quantizer-dequantizer pair. Breakpoints b_1 < ... < b_{m-1} split
/// the real line into m right-closed cells (b_i, b_{i+1}] with b_0 = -inf and
/// b_m = +inf; each cell owns one representative.
class Quantizer {
 public:
  Quantizer() : Quantizer({}, {0.0}) {}

  Quantizer(std::vector<double> breakpoints, std::vector<double> representatives)
      : breakpoints_(std::move(breakpoints)), representatives_(std::move(representatives)) {
    require(representatives_.size() == breakpoints_.size() + 1, ErrorKind::kInvalidQuantizer,
            "need exactly one more representative than breakpoints");
    for (std::size_t i = 0; i < breakpoints_.size(); ++i) {
      require(std::isfinite(breakpoints_[i]), ErrorKind::kInvalidQuantizer,
              "breakpoints must be finite");
      if (i > 0) {
        require(breakpoints_[i - 1] < breakpoints_[i], ErrorKind::kInvalidQuantizer,
                "breakpoints must be strictly increasing");
      }
    }
    for (std::size_t i = 0; i < representatives_.size(); ++i) {
      require(std::isfinite(representatives_[i]), ErrorKind::kInvalidQuantizer,
              "representatives must be finite");
      if (i > 0) {
        require(representatives_[i - 1] < representatives_[i], ErrorKind::kInvalidQuantizer,
                "representatives must be strictly increasing");
      }
      const QuantCell c = cell(Symbol{static_cast<std::uint32_t>(i)});
      require(c.contains(representatives_[i]), ErrorKind::kInvalidQuantizer,
              "representative " + std::to_string(i) + " lies outside its cell");
    }
  }

  std::size_t size() const { return representatives_.size(); }
  const std::vector<double>& breakpoints() const { return breakpoints_; }
  const std::vector<double>& representatives() const { return representatives_; }

  Symbol quantize(double value) const {
    require(!std::isnan(value), ErrorKind::kInvalidArgument, "cannot quantize NaN");
    // Number of breakpoints strictly below value == index of the cell (b_i, b_{i+1}].
    const auto it = std::lower_bound(breakpoints_.begin(), breakpoints_.end(), value);
    return Symbol{static_cast<std::uint32_t>(it - breakpoints_.begin())};
  }

  double dequantize(Symbol s) const {
    check(s);
    return representatives_[s.index];
  }

  QuantCell cell(Symbol s) const {
    check(s);
    constexpr double inf = std::numeric_limits<double>::infinity();
    QuantCell c;
    c.symbol = s;
    c.lower = s.index == 0 ? -inf : breakpoints_[s.index - 1];
    c.upper = s.index == breakpoints_.size() ? inf : breakpoints_[s.index];
    c.representative = representatives_[s.index];
    return c;
  }

  std::vector<QuantCell> cells() const {
    std::vector<QuantCell> out;
    out.reserve(size());
    for (std::uint32_t i = 0; i < size(); ++i) out.push_back(cell(Symbol{i}));
    return out;
  }

 private:
  void check(Symbol s) const {
    require(s.index < size(), ErrorKind::kInvalidArgument,
            "symbol " + std::to_string(s.index) + " out of range [0, " + std::to_string(size()) +
                ")");
  }

  std::vector<double> breakpoints_;
  std::vector<double> representatives_;
};

inline Symbol quantize(const Quantizer& q, double value) { return q.quantize(value); }
inline double dequantize(const Quantizer& q, Symbol s) { return q.dequantize(s); }
inline QuantCell cell_of(const Quantizer& q, Symbol s) { return q.cell(s); }

/// Symmetric uniform mid-rise quantizer with m = 2^bits cells of width
/// L = 2 zeta / m. Interior cells dequantize to their midpoints; the two
/// saturation cells dequantize to -+(zeta - L/2).
inline Quantizer build_uniform_midrise(int bits, double zeta) {
  require(bits >= 1 && bits <= 24, ErrorKind::kInvalidArgument, "bits must lie in [1, 24]");
  require(zeta > 0.0 && std::isfinite(zeta), ErrorKind::kInvalidArgument, "zeta must be positive");
  const std::int64_t m = std::int64_t{1} << bits;
  const std::int64_t half = m / 2;
  const double step = 2.0 * zeta / static_cast<double>(m);
  std::vector<double> breakpoints;
  std::vector<double> representatives;
  breakpoints.reserve(static_cast<std::size_t>(m - 1));
  representatives.reserve(static_cast<std::size_t>(m));
  for (std::int64_t i = 1; i < m; ++i) breakpoints.push_back(static_cast<double>(i - half) * step);
  for (std::int64_t i = 0; i < m; ++i) {
    representatives.push_back((static_cast<double>(i - half) + 0.5) * step);
  }
  return Quantizer(std::move(breakpoints), std::move(representatives));
}

/// P(lower < X <= upper) for X ~ N(mean, variance).
inline double cell_probability(const QuantCell& cell, double mean, double variance) {
  require(variance > 0.0, ErrorKind::kInvalidArgument, "cell_probability needs variance > 0");
  const double sd = std::sqrt(variance);
  return standard_interval_probability((cell.lower - mean) / sd, (cell.upper - mean) / sd);
}

/// Mean squared quantization error under N(0, sigma^2), closed form via the
/// truncated first and second moments of each cell.
inline double expected_distortion(const Quantizer& q, double sigma) {
  require(sigma > 0.0, ErrorKind::kInvalidArgument, "sigma must be positive");
  double total = 0.0;
  for (const auto& c : q.cells()) {
    const double a = c.lower / sigma;
    const double b = c.upper / sigma;
    const double p = standard_interval_probability(a, b);
    const double m1 = phi(a) - phi(b);
    const double a_phi = std::isinf(a) ? 0.0 : a * phi(a);
    const double b_phi = std::isinf(b) ? 0.0 : b * phi(b);
    const double m2 = p + a_phi - b_phi;
    const double r = c.representative / sigma;
    total += m2 - 2.0 * r * m1 + r * r * p;
  }
  return total * sigma * sigma;
}

/// Raised when the Lloyd iteration exhausts its budget; keeps the last iterate.
class LloydMaxNonConvergence : public Error {
 public:
  LloydMaxNonConvergence(Quantizer last, double last_change)
      : Error(ErrorKind::kNonConvergence,
              "Lloyd-Max iteration did not converge (last breakpoint change " +
                  std::to_string(last_change) + ")"),
        last_iterate(std::move(last)) {}

  Quantizer last_iterate;
};

/// Lloyd-Max quantizer for N(0, sigma^2): alternate conditional-mean
/// representatives and midpoint breakpoints until the largest breakpoint
/// move drops below tol. Starts from the uniform quantizer spanning +-3 sigma.
inline Quantizer lloyd_max_design(double sigma, int levels, double tol = 1e-12,
                                  int max_iter = 100000) {
  require(sigma > 0.0 && std::isfinite(sigma), ErrorKind::kInvalidArgument,
          "sigma must be positive");
  require(levels >= 2, ErrorKind::kInvalidArgument, "need at least two levels");
  require(tol > 0.0, ErrorKind::kInvalidArgument, "tol must be positive");
  const auto m = static_cast<std::size_t>(levels);
  constexpr double inf = std::numeric_limits<double>::infinity();

  std::vector<double> bps(m - 1);
  for (std::size_t i = 0; i + 1 < m; ++i) {
    bps[i] = (-3.0 + 6.0 * static_cast<double>(i + 1) / static_cast<double>(m)) * sigma;
  }
  std::vector<double> reps(m);
  auto centroids = [&] {
    for (std::size_t i = 0; i < m; ++i) {
      const double a = i == 0 ? -inf : bps[i - 1] / sigma;
      const double b = i + 1 == m ? inf : bps[i] / sigma;
      reps[i] = sigma * (phi(a) - phi(b)) / standard_interval_probability(a, b);
    }
  };

  double change = inf;
  for (int iter = 0; iter < max_iter; ++iter) {
    centroids();
    change = 0.0;
    for (std::size_t i = 0; i + 1 < m; ++i) {
      const double next = 0.5 * (reps[i] + reps[i + 1]);
      change = std::max(change, std::abs(next - bps[i]));
      bps[i] = next;
    }
    if (change < tol) {
      centroids();
      return Quantizer(bps, reps);
    }
  }
  centroids();
  throw LloydMaxNonConvergence(Quantizer(bps, reps), change);
}

/// Per-step quantizers Q_k; a schedule shorter than the run repeats its last entry.
class QuantizerSchedule {
 public:
  QuantizerSchedule() = default;
  explicit QuantizerSchedule(Quantizer q) : steps_{std::move(q)} {}
  explicit QuantizerSchedule(std::vector<Quantizer> steps) : steps_(std::move(steps)) {
    require(!steps_.empty(), ErrorKind::kInvalidArgument, "empty quantizer schedule");
  }

  const Quantizer& at(int k) const {
    require(!steps_.empty(), ErrorKind::kInvalidArgument, "empty quantizer schedule");
    return steps_[std::min<std::size_t>(static_cast<std::size_t>(std::max(k, 0)),
                                        steps_.size() - 1)];
  }
  std::size_t size() const { return steps_.size(); }
  const std::vector<Quantizer>& steps() const { return steps_; }

 private:
  std::vector<Quantizer> steps_;
};

}  // namespace qibf
