#pragma once

// JSON experiment configuration. See README.md for the schema.

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "qibf/error.hpp"
#include "qibf/kalman.hpp"
#include "qibf/mlq.hpp"
#include "qibf/model.hpp"
#include "qibf/quantizer.hpp"
#include "qibf/schedule.hpp"

namespace qibf {

using Json = nlohmann::ordered_json;

enum class Method { kKalman, kK, kR, kS };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::kKalman: return "kalman";
    case Method::kK: return "K";
    case Method::kR: return "R";
    case Method::kS: return "S";
  }
  return "?";
}

/// How the per-step quantizer Q_k is built.
struct QuantizerSpec {
  enum class Kind { kUniform, kLloydMax, kExplicit };
  Kind kind = Kind::kUniform;
  int bits = 3;
  std::optional<double> zeta;         // fixed saturation limit
  std::optional<double> zeta_sigmas;  // zeta_k = zeta_sigmas * sqrt(S_k)
  int levels = 4;
  std::optional<double> sigma;  // Lloyd-Max source sd; sqrt(S_k) when absent
  double tol = 1e-12;
  std::vector<double> breakpoints;
  std::vector<double> representatives;

  bool time_varying() const {
    return (kind == Kind::kUniform && !zeta) || (kind == Kind::kLloydMax && !sigma);
  }

  /// Q_0..Q_{horizon-1}; `S` is the Kalman innovation variance schedule.
  QuantizerSchedule build(const std::vector<double>& S, int horizon) const {
    auto one = [&](double s_k) {
      switch (kind) {
        case Kind::kUniform:
          return build_uniform_midrise(bits, zeta ? *zeta : *zeta_sigmas * std::sqrt(s_k));
        case Kind::kLloydMax:
          return lloyd_max_design(sigma ? *sigma : std::sqrt(s_k), levels, tol);
        case Kind::kExplicit:
          return Quantizer(breakpoints, representatives);
      }
      return Quantizer();
    };
    if (!time_varying()) return QuantizerSchedule(one(S.empty() ? 1.0 : S.front()));
    std::vector<Quantizer> steps;
    for (int k = 0; k < horizon; ++k) steps.push_back(one(S[static_cast<std::size_t>(k)]));
    return QuantizerSchedule(std::move(steps));
  }
};

struct ChannelError {
  int time = 0;
  std::uint32_t symbol = 0;
};

struct ExperimentConfig {
  std::string name = "experiment";
  LinearGaussianModel model;
  std::optional<NoiseRealization> realization;
  std::vector<VectorXd> inputs;  // empty: u = 0
  QuantizerSpec quantizer;
  std::vector<Method> methods;
  std::vector<std::uint64_t> seeds{0};
  GridPolicy grid;
  std::vector<ChannelError> channel_errors;
  MlqCovarianceSum mlq_sum = MlqCovarianceSum::kMirrored;
  bool write_densities = false;
  std::string output_dir;
  Json source;  // the parsed document, echoed into manifests

  bool has(Method m) const {
    for (Method x : methods) {
      if (x == m) return true;
    }
    return false;
  }

  void validate() const {
    require(!methods.empty(), ErrorKind::kConfig, "at least one method is required");
    require(model.horizon >= 1, ErrorKind::kConfig, "horizon must be >= 1");
    require(!seeds.empty(), ErrorKind::kConfig, "at least one seed is required");
    for (const auto& e : channel_errors) {
      require(e.time >= 0 && e.time < model.horizon, ErrorKind::kConfig,
              "channel error time " + std::to_string(e.time) + " outside the horizon");
    }
    const bool scalar_methods = has(Method::kK) || has(Method::kR) || has(Method::kS);
    if (scalar_methods) {
      require(model.output_dim() == 1, ErrorKind::kConfig,
              "methods K, R and S need a scalar measurement");
    }
    if (has(Method::kK) || has(Method::kR)) {
      require(model.is_scalar(), ErrorKind::kConfig, "grid methods K and R need a scalar state");
    }
  }
};

namespace detail {

[[noreturn]] inline void config_fail(const std::string& path, const std::string& what) {
  throw Error(ErrorKind::kConfig, path + ": " + what);
}

inline double json_number(const Json& j, const std::string& path) {
  if (!j.is_number()) config_fail(path, "expected a number");
  return j.get<double>();
}

/// A bare number is a 1x1 matrix, a flat array a column vector, nested arrays
/// are row-major matrices.
inline MatrixXd json_matrix(const Json& j, const std::string& path) {
  if (j.is_number()) return MatrixXd::Constant(1, 1, j.get<double>());
  if (!j.is_array() || j.empty()) config_fail(path, "expected a number or a non-empty array");
  if (!j.front().is_array()) {
    MatrixXd m(static_cast<Eigen::Index>(j.size()), 1);
    for (std::size_t i = 0; i < j.size(); ++i) {
      m(static_cast<Eigen::Index>(i), 0) = json_number(j[i], path + "[" + std::to_string(i) + "]");
    }
    return m;
  }
  const std::size_t rows = j.size();
  const std::size_t cols = j.front().size();
  MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    const std::string rp = path + "[" + std::to_string(r) + "]";
    if (!j[r].is_array() || j[r].size() != cols) config_fail(rp, "ragged matrix row");
    for (std::size_t c = 0; c < cols; ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          json_number(j[r][c], rp + "[" + std::to_string(c) + "]");
    }
  }
  return m;
}

inline VectorXd json_vector(const Json& j, const std::string& path) {
  const MatrixXd m = json_matrix(j, path);
  if (m.cols() != 1) config_fail(path, "expected a vector");
  return m.col(0);
}

/// `key` (constant) or `key_seq` (per-step list, last entry repeats).
inline std::vector<MatrixXd> json_matrix_seq(const Json& model, const std::string& key,
                                             const std::string& path, bool required) {
  const std::string seq_key = key + "_seq";
  if (model.contains(seq_key)) {
    const Json& s = model.at(seq_key);
    if (!s.is_array() || s.empty()) config_fail(path + "." + seq_key, "expected a non-empty list");
    std::vector<MatrixXd> out;
    for (std::size_t i = 0; i < s.size(); ++i) {
      out.push_back(json_matrix(s[i], path + "." + seq_key + "[" + std::to_string(i) + "]"));
    }
    return out;
  }
  if (model.contains(key)) return {json_matrix(model.at(key), path + "." + key)};
  if (required) config_fail(path + "." + key, "missing");
  return {};
}

inline std::vector<VectorXd> json_vector_list(const Json& j, const std::string& path) {
  if (!j.is_array()) config_fail(path, "expected a list");
  std::vector<VectorXd> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(json_vector(j[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

inline LinearGaussianModel parse_model(const Json& j) {
  if (!j.is_object()) config_fail("model", "expected an object");
  LinearGaussianModel m;
  m.a_seq = json_matrix_seq(j, "A", "model", true);
  m.c_seq = json_matrix_seq(j, "C", "model", true);
  m.q_seq = json_matrix_seq(j, "Q", "model", true);
  m.r_seq = json_matrix_seq(j, "R", "model", true);
  m.b_seq = json_matrix_seq(j, "B", "model", false);
  const Eigen::Index n = m.a_seq.front().rows();
  if (m.b_seq.empty()) m.b_seq = {MatrixXd::Zero(n, 1)};
  m.x0_mean = j.contains("x0_mean") ? json_vector(j.at("x0_mean"), "model.x0_mean")
                                    : VectorXd::Zero(n);
  if (!j.contains("x0_cov")) config_fail("model.x0_cov", "missing");
  m.x0_cov = json_matrix(j.at("x0_cov"), "model.x0_cov");
  if (!j.contains("horizon") || !j.at("horizon").is_number_integer()) {
    config_fail("model.horizon", "expected an integer");
  }
  m.horizon = j.at("horizon").get<int>();
  try {
    m.validate();
  } catch (const Error& e) {
    config_fail("model", e.what());
  }
  return m;
}

inline std::vector<double> json_doubles(const Json& j, const std::string& path) {
  if (!j.is_array()) config_fail(path, "expected a list of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(json_number(j[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

inline QuantizerSpec parse_quantizer(const Json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object() || !j.contains("type")) config_fail("quantizer", "expected {\"type\": ...}");
  const std::string type = j.at("type").get<std::string>();
  QuantizerSpec q;
  if (type == "uniform") {
    q.kind = QuantizerSpec::Kind::kUniform;
    if (!j.contains("bits") || !j.at("bits").is_number_integer()) {
      config_fail("quantizer.bits", "expected an integer");
    }
    q.bits = j.at("bits").get<int>();
    if (q.bits < 1 || q.bits > 16) config_fail("quantizer.bits", "must be in 1..16");
    if (j.contains("zeta")) q.zeta = json_number(j.at("zeta"), "quantizer.zeta");
    if (j.contains("zeta_sigmas")) {
      q.zeta_sigmas = json_number(j.at("zeta_sigmas"), "quantizer.zeta_sigmas");
    }
    if (q.zeta.has_value() == q.zeta_sigmas.has_value()) {
      config_fail("quantizer", "give exactly one of zeta and zeta_sigmas");
    }
    if (!(q.zeta.value_or(1.0) > 0.0) || !(q.zeta_sigmas.value_or(1.0) > 0.0)) {
      config_fail("quantizer", "saturation limit must be positive");
    }
  } else if (type == "lloyd-max") {
    q.kind = QuantizerSpec::Kind::kLloydMax;
    if (!j.contains("levels") || !j.at("levels").is_number_integer()) {
      config_fail("quantizer.levels", "expected an integer");
    }
    q.levels = j.at("levels").get<int>();
    if (q.levels < 2) config_fail("quantizer.levels", "must be >= 2");
    if (j.contains("sigma")) q.sigma = json_number(j.at("sigma"), "quantizer.sigma");
    if (j.contains("tol")) q.tol = json_number(j.at("tol"), "quantizer.tol");
  } else if (type == "explicit" || type == "file") {
    Json body = j;
    if (type == "file") {
      if (!j.contains("path")) config_fail("quantizer.path", "missing");
      std::filesystem::path p = j.at("path").get<std::string>();
      if (p.is_relative()) p = base_dir / p;
      std::ifstream in(p);
      if (!in) config_fail("quantizer.path", "cannot open " + p.string());
      try {
        body = Json::parse(in);
      } catch (const std::exception& e) {
        config_fail("quantizer.path", std::string("invalid JSON: ") + e.what());
      }
    }
    q.kind = QuantizerSpec::Kind::kExplicit;
    if (!body.contains("breakpoints") || !body.contains("representatives")) {
      config_fail("quantizer", "needs breakpoints and representatives");
    }
    q.breakpoints = json_doubles(body.at("breakpoints"), "quantizer.breakpoints");
    q.representatives = json_doubles(body.at("representatives"), "quantizer.representatives");
    try {
      Quantizer(q.breakpoints, q.representatives);
    } catch (const Error& e) {
      config_fail("quantizer", e.what());
    }
  } else {
    config_fail("quantizer.type", "unknown type '" + type + "'");
  }
  return q;
}

inline GridPolicy parse_grid(const Json& j) {
  GridPolicy g;
  if (!j.is_object()) config_fail("grid", "expected an object");
  if (j.contains("points")) {
    if (!j.at("points").is_number_integer() || j.at("points").get<long>() < 3) {
      config_fail("grid.points", "expected an integer >= 3");
    }
    g.points = j.at("points").get<std::size_t>();
  }
  if (j.contains("half_width_sigmas")) {
    g.half_width_sigmas = json_number(j.at("half_width_sigmas"), "grid.half_width_sigmas");
  }
  if (j.contains("x_half_width")) g.x_half_width = json_number(j.at("x_half_width"), "grid.x_half_width");
  if (j.contains("xerr_half_width")) {
    g.xerr_half_width = json_number(j.at("xerr_half_width"), "grid.xerr_half_width");
  }
  if (j.contains("truncation_sigmas")) {
    g.truncation_sigmas = json_number(j.at("truncation_sigmas"), "grid.truncation_sigmas");
  }
  if (j.contains("kernel")) {
    const std::string k = j.at("kernel").get<std::string>();
    if (k == "point") {
      g.kernel = TransitionQuadrature::kPoint;
    } else if (k == "cell-average") {
      g.kernel = TransitionQuadrature::kCellAverage;
    } else {
      config_fail("grid.kernel", "expected 'point' or 'cell-average'");
    }
  }
  if (!(g.half_width_sigmas > 0.0) || !(g.truncation_sigmas > 0.0)) {
    config_fail("grid", "widths must be positive");
  }
  return g;
}

}  // namespace detail

/// Parses a configuration document. `base_dir` resolves relative file paths.
inline ExperimentConfig parse_config(const Json& doc, const std::filesystem::path& base_dir = ".") {
  using detail::config_fail;
  if (!doc.is_object()) config_fail("<root>", "expected an object");
  ExperimentConfig cfg;
  try {
    cfg.source = doc;
    if (doc.contains("name")) cfg.name = doc.at("name").get<std::string>();
    if (!doc.contains("model")) config_fail("model", "missing");
    cfg.model = detail::parse_model(doc.at("model"));
    const auto horizon = static_cast<std::size_t>(cfg.model.horizon);

    if (doc.contains("realization")) {
      const Json& r = doc.at("realization");
      NoiseRealization n;
      if (!r.contains("x0") || !r.contains("w") || !r.contains("v")) {
        config_fail("realization", "needs x0, w and v");
      }
      n.x0 = detail::json_vector(r.at("x0"), "realization.x0");
      n.w = detail::json_vector_list(r.at("w"), "realization.w");
      n.v = detail::json_vector_list(r.at("v"), "realization.v");
      if (n.w.size() != horizon || n.v.size() != horizon) {
        config_fail("realization", "w and v need exactly horizon entries");
      }
      cfg.realization = std::move(n);
    }
    if (doc.contains("inputs")) {
      cfg.inputs = detail::json_vector_list(doc.at("inputs"), "inputs");
      if (cfg.inputs.size() != horizon) config_fail("inputs", "needs exactly horizon entries");
    }
    if (!doc.contains("quantizer")) config_fail("quantizer", "missing");
    cfg.quantizer = detail::parse_quantizer(doc.at("quantizer"), base_dir);

    if (!doc.contains("methods") || !doc.at("methods").is_array()) {
      config_fail("methods", "expected a list");
    }
    for (const auto& m : doc.at("methods")) {
      const std::string s = m.get<std::string>();
      Method method{};
      if (s == "K") {
        method = Method::kK;
      } else if (s == "R") {
        method = Method::kR;
      } else if (s == "S") {
        method = Method::kS;
      } else if (s == "kalman") {
        method = Method::kKalman;
      } else {
        config_fail("methods", "unknown method '" + s + "'");
      }
      if (!cfg.has(method)) cfg.methods.push_back(method);
    }
    if (doc.contains("seeds")) {
      cfg.seeds.clear();
      for (const auto& s : doc.at("seeds")) cfg.seeds.push_back(s.get<std::uint64_t>());
    } else if (doc.contains("seed")) {
      cfg.seeds = {doc.at("seed").get<std::uint64_t>()};
    }
    if (doc.contains("grid")) cfg.grid = detail::parse_grid(doc.at("grid"));
    if (doc.contains("channel_errors")) {
      for (const auto& e : doc.at("channel_errors")) {
        cfg.channel_errors.push_back(
            ChannelError{e.at("time").get<int>(), e.at("symbol").get<std::uint32_t>()});
      }
    }
    if (doc.contains("mlq_covariance_sum")) {
      const std::string s = doc.at("mlq_covariance_sum").get<std::string>();
      if (s == "mirrored") {
        cfg.mlq_sum = MlqCovarianceSum::kMirrored;
      } else if (s == "positive-only") {
        cfg.mlq_sum = MlqCovarianceSum::kPositiveOnly;
      } else {
        config_fail("mlq_covariance_sum", "expected 'mirrored' or 'positive-only'");
      }
    }
    if (doc.contains("write_densities")) cfg.write_densities = doc.at("write_densities").get<bool>();
    if (doc.contains("output_dir")) cfg.output_dir = doc.at("output_dir").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    config_fail("<document>", e.what());
  }
  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kConfig, "cannot open config " + path.string());
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const std::exception& e) {
    throw Error(ErrorKind::kConfig, path.string() + ": invalid JSON: " + e.what());
  }
  return parse_config(doc, path.parent_path());
}

}  // namespace qibf
