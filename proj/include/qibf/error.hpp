#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qibf {

enum class ErrorKind {
  kInvalidArgument,
  kDimensionMismatch,
  kUnsupportedDimension,
  kInvalidQuantizer,
  kNonConvergence,
  kSingularGain,
  kDegenerateDensity,
  kNumerical,
  kOracleDegenerate,
  kConfig,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid-argument";
    case ErrorKind::kDimensionMismatch: return "dimension-mismatch";
    case ErrorKind::kUnsupportedDimension: return "unsupported-dimension";
    case ErrorKind::kInvalidQuantizer: return "invalid-quantizer";
    case ErrorKind::kNonConvergence: return "non-convergence";
    case ErrorKind::kSingularGain: return "singular-gain";
    case ErrorKind::kDegenerateDensity: return "degenerate-density";
    case ErrorKind::kNumerical: return "numerical";
    case ErrorKind::kOracleDegenerate: return "oracle-degenerate";
    case ErrorKind::kConfig: return "config";
  }
  return "unknown";
}

/// Every failure raised by the library carries a machine-readable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// True for failures that mean the numerics broke down rather than bad input.
  bool is_numerical() const noexcept {
    return kind_ == ErrorKind::kDegenerateDensity || kind_ == ErrorKind::kNumerical ||
           kind_ == ErrorKind::kSingularGain || kind_ == ErrorKind::kOracleDegenerate ||
           kind_ == ErrorKind::kNonConvergence;
  }

 private:
  ErrorKind kind_;
};

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) throw Error(kind, message);
}

}  // namespace qibf
