#pragma once

// Experiment orchestration: simulate or replay the plant, run the selected
// transmitter/receiver pairs, and persist CSV traces plus a JSON manifest.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "qibf/config.hpp"
#include "qibf/error.hpp"
#include "qibf/grid.hpp"
#include "qibf/kalman.hpp"
#include "qibf/mlq.hpp"
#include "qibf/model.hpp"
#include "qibf/oracle.hpp"
#include "qibf/quantizer.hpp"
#include "qibf/receiver_k.hpp"
#include "qibf/receiver_r.hpp"
#include "qibf/rng.hpp"
#include "qibf/schedule.hpp"

#ifndef QIBF_VERSION
#define QIBF_VERSION "0.0.0"
#endif

namespace qibf {

inline constexpr const char* kVersion = QIBF_VERSION;

/// Per-step record of one transmitter/receiver pair.
struct ReceiverStep {
  int k = 0;
  double tx_value = 0.0;          // innovation fed to the quantizer
  std::uint32_t sent = 0;         // transmitted symbol
  std::uint32_t received = 0;     // symbol after channel errors
  double cell_lower = 0.0;
  double cell_upper = 0.0;
  double pred_mean = 0.0;         // receiver x_{k|k-1}
  double pred_var = 0.0;
  double filt_mean = 0.0;         // receiver x_{k|k}
  double filt_var = 0.0;
  double xerr_pred_mean = 0.0;    // Method K only
  double xerr_pred_var = 0.0;
  double health = 1.0;            // Method K only
};

/// Where a run stopped.
struct RunFailure {
  std::string method;
  int step = 0;
  ErrorKind kind = ErrorKind::kNumerical;
  std::string message;
};

struct InvariantLog {
  double max_mass_deviation = 0.0;      // |trapezoid mass - 1| after predict/update
  double max_evidence_deviation = 0.0;  // |sum of K evidences - 1| per step
  void mass(const GridDensity& d) {
    max_mass_deviation = std::max(max_mass_deviation, std::abs(trapezoid_mass(d) - 1.0));
  }
};

/// Callback receiving density snapshots: (file stem, density, axis names).
using DensitySink =
    std::function<void(const std::string&, const GridDensity&, const std::vector<std::string>&)>;

struct SeedRun {
  std::uint64_t seed = 0;
  NoiseRealization noise;
  TrajectoryLog trajectory;
  std::vector<KalmanStep> kalman;
  std::optional<GainSchedule> schedule;
  QuantizerSchedule quantizers;
  std::optional<UniformGrid> k_grid;
  std::optional<UniformGrid> r_grid;
  std::map<Method, std::vector<ReceiverStep>> receivers;
  InvariantLog invariants;
  std::optional<RunFailure> failure;
};

namespace detail {

inline double scalar_input(const TrajectoryLog& t, int k) {
  const VectorXd& u = t.u[static_cast<std::size_t>(k)];
  return u.size() ? u(0) : 0.0;
}

inline std::map<int, std::uint32_t> channel_error_map(const ExperimentConfig& cfg) {
  std::map<int, std::uint32_t> m;
  for (const auto& e : cfg.channel_errors) m[e.time] = e.symbol;
  return m;
}

inline std::string step_name(const char* prefix, int k) {
  std::ostringstream os;
  os << prefix << '_';
  os.width(4);
  os.fill('0');
  os << k;
  return os.str();
}

inline void run_method_k(const ExperimentConfig& cfg, SeedRun& run, const DensitySink& sink) {
  const auto& model = cfg.model;
  const GainSchedule& sch = *run.schedule;
  const auto errors = channel_error_map(cfg);
  auto& rows = run.receivers[Method::kK];
  AugmentedBelief belief = k_init(model, *run.k_grid);
  for (int k = 0; k < model.horizon; ++k) {
    try {
      const Quantizer& q = run.quantizers.at(k);
      const KalmanStep& ks = run.kalman[static_cast<std::size_t>(k)];
      ReceiverStep row;
      row.k = k;
      row.tx_value = ks.innovation(0);
      row.sent = q.quantize(row.tx_value).index;
      row.received = errors.count(k) ? errors.at(k) : row.sent;
      const QuantCell cell = q.cell(Symbol{row.received});
      row.cell_lower = cell.lower;
      row.cell_upper = cell.upper;
      double ev = 0.0;
      for (const auto& c : q.cells()) ev += k_evidence(sch, k, c);
      run.invariants.max_evidence_deviation =
          std::max(run.invariants.max_evidence_deviation, std::abs(ev - 1.0));

      run.invariants.mass(belief.density);
      const GridDensity xpm = k_state_marginal(belief);
      const Moments xp = mean_cov(xpm);
      const Moments ep = mean_cov(normalize(marginal(belief.density, 1)));
      row.pred_mean = xp.mean(0);
      row.pred_var = xp.cov(0, 0);
      row.xerr_pred_mean = ep.mean(0);
      row.xerr_pred_var = ep.cov(0, 0);
      if (sink) {
        sink(step_name("K_pred", k), belief.density, {"x", "xerr"});
        sink(step_name("K_pred_x", k), xpm, {"x"});
      }

      belief = k_update(belief, model, sch, cell);
      run.invariants.mass(belief.density);
      const GridDensity xfm = k_state_marginal(belief);
      const Moments xf = mean_cov(xfm);
      row.filt_mean = xf.mean(0);
      row.filt_var = xf.cov(0, 0);
      row.health = belief.health;
      if (sink) {
        sink(step_name("K_filt", k), belief.density, {"x", "xerr"});
        sink(step_name("K_filt_x", k), xfm, {"x"});
      }
      rows.push_back(row);
      if (k + 1 < model.horizon) {
        belief = k_predict(belief, model, sch, scalar_input(run.trajectory, k), cfg.grid.kernel,
                           cfg.grid.truncation_sigmas);
      }
    } catch (const Error& e) {
      run.failure = RunFailure{"K", k, e.kind(), e.what()};
      return;
    }
  }
}

inline void run_method_r(const ExperimentConfig& cfg, SeedRun& run, const DensitySink& sink) {
  const auto& model = cfg.model;
  const auto errors = channel_error_map(cfg);
  auto& rows = run.receivers[Method::kR];
  // The transmitter mirrors the receiver; the copies differ only after a
  // channel error.
  StateBelief rx = r_init(model, *run.r_grid);
  std::optional<StateBelief> tx;
  if (!errors.empty()) tx = rx;
  for (int k = 0; k < model.horizon; ++k) {
    try {
      const Quantizer& q = run.quantizers.at(k);
      const double y = run.trajectory.y[static_cast<std::size_t>(k)](0);
      ReceiverStep row;
      row.k = k;
      const double tx_mean = r_mean(tx ? *tx : rx);
      row.tx_value = y - model.C(k)(0, 0) * tx_mean;
      row.sent = r_transmit(model, k, q, y, tx_mean).index;
      row.received = errors.count(k) ? errors.at(k) : row.sent;
      const QuantCell cell = q.cell(Symbol{row.received});
      row.cell_lower = cell.lower;
      row.cell_upper = cell.upper;

      run.invariants.mass(rx.density);
      const Moments p = mean_cov(rx.density);
      row.pred_mean = p.mean(0);
      row.pred_var = p.cov(0, 0);
      if (sink) sink(step_name("R_pred", k), rx.density, {"x"});
      rx = r_update(rx, model, cell, row.pred_mean);
      run.invariants.mass(rx.density);
      const Moments f = mean_cov(rx.density);
      row.filt_mean = f.mean(0);
      row.filt_var = f.cov(0, 0);
      if (sink) sink(step_name("R_filt", k), rx.density, {"x"});
      if (tx) *tx = r_update(*tx, model, q.cell(Symbol{row.sent}), tx_mean);
      rows.push_back(row);
      if (k + 1 < model.horizon) {
        const double u = scalar_input(run.trajectory, k);
        rx = r_predict(rx, model, u, cfg.grid.kernel, cfg.grid.truncation_sigmas);
        if (tx) *tx = r_predict(*tx, model, u, cfg.grid.kernel, cfg.grid.truncation_sigmas);
      }
    } catch (const Error& e) {
      run.failure = RunFailure{"R", k, e.kind(), e.what()};
      return;
    }
  }
}

inline void run_method_s(const ExperimentConfig& cfg, SeedRun& run) {
  const auto& model = cfg.model;
  const auto errors = channel_error_map(cfg);
  auto& rows = run.receivers[Method::kS];
  MlqState tx = s_init(model);
  MlqState rx = tx;
  for (int k = 0; k < model.horizon; ++k) {
    try {
      const Quantizer& q = run.quantizers.at(k);
      const SymmetricLevels levels = SymmetricLevels::from_quantizer(q);
      const VectorXd& y = run.trajectory.y[static_cast<std::size_t>(k)];
      ReceiverStep row;
      row.k = k;
      row.tx_value = (y - model.C(k) * tx.x_pred)(0);
      row.sent = s_transmit(model, q, y, tx).index;
      row.received = errors.count(k) ? errors.at(k) : row.sent;
      const QuantCell cell = q.cell(Symbol{row.received});
      row.cell_lower = cell.lower;
      row.cell_upper = cell.upper;
      row.pred_mean = rx.x_pred(0);
      row.pred_var = rx.P_pred(0, 0);
      rx = s_measurement_update(model, rx, levels, cell.representative, cfg.mlq_sum);
      tx = s_measurement_update(model, tx, levels, q.dequantize(Symbol{row.sent}), cfg.mlq_sum);
      row.filt_mean = rx.x_filt(0);
      row.filt_var = rx.P_filt(0, 0);
      rows.push_back(row);
      const VectorXd& u = run.trajectory.u[static_cast<std::size_t>(k)];
      rx = s_time_update(model, rx, u);
      tx = s_time_update(model, tx, u);
    } catch (const Error& e) {
      run.failure = RunFailure{"S", k, e.kind(), e.what()};
      return;
    }
  }
}

}  // namespace detail

/// Runs every configured method for one seed, in memory. Module errors are
/// caught and recorded in `failure` with the method tag and step index; the
/// steps completed before the failure are kept.
inline SeedRun run_seed(const ExperimentConfig& cfg, std::uint64_t seed,
                        const DensitySink& sink = nullptr) {
  cfg.validate();
  SeedRun run;
  run.seed = seed;
  const auto& model = cfg.model;
  if (cfg.realization) {
    run.noise = *cfg.realization;
    run.trajectory = replay(model, cfg.inputs, run.noise);
  } else {
    Rng rng = Rng::stream(seed, 0);
    auto [noise, traj] = simulate(model, cfg.inputs, rng);
    run.noise = std::move(noise);
    run.trajectory = std::move(traj);
  }
  try {
    run.kalman = kalman_run(model, run.trajectory.y, run.trajectory.u);
  } catch (const Error& e) {
    run.failure = RunFailure{"kalman", 0, e.kind(), e.what()};
    return run;
  }
  const bool scalar_methods = cfg.has(Method::kK) || cfg.has(Method::kR) || cfg.has(Method::kS);
  if (!scalar_methods) return run;

  try {
    std::vector<double> S;
    for (const auto& ks : run.kalman) S.push_back(ks.S(0, 0));
    run.quantizers = cfg.quantizer.build(S, model.horizon);
    if (cfg.has(Method::kK) || cfg.has(Method::kR)) {
      run.schedule = GainSchedule::compute(model);
      const UniformGrid grid = make_k_grid(model, *run.schedule, cfg.grid);
      run.k_grid = grid;
      run.r_grid = UniformGrid{{grid.axes[0]}};
    }
  } catch (const Error& e) {
    run.failure = RunFailure{"setup", 0, e.kind(), e.what()};
    return run;
  }
  if (cfg.has(Method::kK)) detail::run_method_k(cfg, run, sink);
  if (!run.failure && cfg.has(Method::kR)) detail::run_method_r(cfg, run, sink);
  if (!run.failure && cfg.has(Method::kS)) detail::run_method_s(cfg, run);
  return run;
}

// ---------------------------------------------------------------------------
// Persistence

/// Writes `content` to `path` through a temporary file and a rename, so a
/// reader never sees a half-written file.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::kInvalidArgument, "cannot write " + tmp.string());
    out << content;
    out.flush();
    require(static_cast<bool>(out), ErrorKind::kInvalidArgument, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

namespace detail {

class CsvWriter {
 public:
  explicit CsvWriter(const std::vector<std::string>& header) {
    os_.precision(12);
    for (std::size_t i = 0; i < header.size(); ++i) os_ << (i ? "," : "") << header[i];
    os_ << '\n';
  }
  template <class... T>
  void row(const T&... values) {
    bool first = true;
    ((os_ << (first ? "" : ",") << values, first = false), ...);
    os_ << '\n';
  }
  std::string str() const { return os_.str(); }

 private:
  std::ostringstream os_;
};

inline std::string trajectory_csv(const SeedRun& run) {
  CsvWriter w({"k", "x", "y", "u", "w", "v"});
  const auto& t = run.trajectory;
  for (std::size_t k = 0; k < t.y.size(); ++k) {
    w.row(k, t.x[k](0), t.y[k](0), t.u[k].size() ? t.u[k](0) : 0.0, run.noise.w[k](0),
          run.noise.v[k](0));
  }
  return w.str();
}

inline std::string kalman_csv(const SeedRun& run) {
  CsvWriter w({"k", "x_pred", "P_pred", "x_filt", "P_filt", "innovation", "S", "L", "K"});
  for (const auto& s : run.kalman) {
    w.row(s.k, s.x_pred(0), s.P_pred(0, 0), s.x_filt(0), s.P_filt(0, 0), s.innovation(0),
          s.S(0, 0), s.L(0, 0), s.K(0, 0));
  }
  return w.str();
}

inline std::string receiver_csv(const std::vector<ReceiverStep>& rows, bool with_k_columns) {
  std::vector<std::string> header{"k",          "tx_value",   "sent",      "received",
                                  "cell_lower", "cell_upper", "pred_mean", "pred_var",
                                  "filt_mean",  "filt_var"};
  if (with_k_columns) {
    header.insert(header.end(), {"xerr_pred_mean", "xerr_pred_var", "health"});
  }
  CsvWriter w(header);
  for (const auto& r : rows) {
    if (with_k_columns) {
      w.row(r.k, r.tx_value, r.sent, r.received, r.cell_lower, r.cell_upper, r.pred_mean,
            r.pred_var, r.filt_mean, r.filt_var, r.xerr_pred_mean, r.xerr_pred_var, r.health);
    } else {
      w.row(r.k, r.tx_value, r.sent, r.received, r.cell_lower, r.cell_upper, r.pred_mean,
            r.pred_var, r.filt_mean, r.filt_var);
    }
  }
  return w.str();
}

inline Json steps_json(const std::vector<ReceiverStep>& rows) {
  Json a = Json::array();
  for (const auto& r : rows) {
    a.push_back({{"k", r.k},
                 {"innovation", r.tx_value},
                 {"sent", r.sent},
                 {"received", r.received},
                 {"cell", {r.cell_lower, r.cell_upper}},
                 {"pred_mean", r.pred_mean},
                 {"pred_var", r.pred_var},
                 {"filt_mean", r.filt_mean},
                 {"filt_var", r.filt_var}});
  }
  return a;
}

inline Json failure_json(const std::optional<RunFailure>& f) {
  if (!f) return nullptr;
  return {{"method", f->method},
          {"step", f->step},
          {"kind", std::string(to_string(f->kind))},
          {"message", f->message}};
}

}  // namespace detail

/// Run manifest: config echo, code version, per-step summaries, artifacts,
/// invariant log and wall-clock.
struct RunManifest {
  Json doc;
  bool ok() const { return doc.value("status", "") == "complete"; }
};

inline RunManifest build_manifest(const ExperimentConfig& cfg, const SeedRun& run,
                                  const std::vector<std::string>& artifacts, double seconds,
                                  const std::string& command) {
  Json m;
  m["name"] = cfg.name;
  m["command"] = command;
  m["seed"] = run.seed;
  m["version"] = kVersion;
  m["status"] = run.failure ? "failed" : "complete";
  m["partial"] = run.failure.has_value();
  m["error"] = detail::failure_json(run.failure);
  m["config"] = cfg.source;
  if (run.k_grid) {
    const Axis& ax = run.k_grid->axes[0];
    const Axis& ay = run.k_grid->axes[1];
    m["grid"] = {{"x", {{"lower", ax.lower}, {"spacing", ax.spacing}, {"count", ax.count}}},
                 {"xerr", {{"lower", ay.lower}, {"spacing", ay.spacing}, {"count", ay.count}}}};
  }
  Json steps;
  if (!run.kalman.empty() && run.kalman.front().x_pred.size() == 1) {
    Json kal = Json::array();
    for (const auto& s : run.kalman) {
      kal.push_back({{"k", s.k},
                     {"innovation", s.innovation(0)},
                     {"S", s.S(0, 0)},
                     {"x_pred", s.x_pred(0)},
                     {"P_pred", s.P_pred(0, 0)},
                     {"x_filt", s.x_filt(0)},
                     {"P_filt", s.P_filt(0, 0)}});
    }
    steps["kalman"] = kal;
  }
  for (const auto& [method, rows] : run.receivers) steps[to_string(method)] = detail::steps_json(rows);
  m["steps"] = steps;
  m["invariants"] = {{"max_mass_deviation", run.invariants.max_mass_deviation},
                     {"max_evidence_deviation", run.invariants.max_evidence_deviation}};
  m["artifacts"] = artifacts;
  m["wall_clock_seconds"] = seconds;
  return RunManifest{m};
}

/// Runs one seed and writes its artifacts under `dir`:
/// trajectory.csv, kalman.csv, method_<M>.csv, densities/*.csv (optional)
/// and manifest.json (written last, atomically).
inline RunManifest run_experiment(const ExperimentConfig& cfg, std::uint64_t seed,
                                  const std::filesystem::path& dir,
                                  const std::string& command = "simulate") {
  const auto t0 = std::chrono::steady_clock::now();
  std::filesystem::create_directories(dir);
  std::vector<std::string> artifacts;
  DensitySink sink;
  if (cfg.write_densities) {
    sink = [&](const std::string& stem, const GridDensity& d, const std::vector<std::string>& axes) {
      std::ostringstream os;
      write_csv(os, d, axes);
      const std::string rel = "densities/" + stem + ".csv";
      write_atomic(dir / rel, os.str());
      artifacts.push_back(rel);
    };
  }
  const SeedRun run = run_seed(cfg, seed, sink);
  auto emit = [&](const std::string& rel, const std::string& body) {
    write_atomic(dir / rel, body);
    artifacts.push_back(rel);
  };
  if (run.trajectory.x.front().size() == 1) emit("trajectory.csv", detail::trajectory_csv(run));
  if (!run.kalman.empty() && run.kalman.front().x_pred.size() == 1) {
    emit("kalman.csv", detail::kalman_csv(run));
  }
  for (const auto& [method, rows] : run.receivers) {
    emit("method_" + to_string(method) + ".csv", detail::receiver_csv(rows, method == Method::kK));
  }
  std::sort(artifacts.begin(), artifacts.end());
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  RunManifest manifest = build_manifest(cfg, run, artifacts, secs, command);
  write_atomic(dir / "manifest.json", manifest.doc.dump(2) + "\n");
  return manifest;
}

// ---------------------------------------------------------------------------
// Resynchronization after an isolated channel error

struct ResyncStep {
  int k = 0;
  double clean_mean = 0.0;
  double corrupt_mean = 0.0;
  double mean_gap = 0.0;  // |difference of x-marginal means|
  double tv = 0.0;        // total variation between x-marginals
  bool degenerate = false;
};

struct ResyncTrace {
  std::vector<ResyncStep> steps;
  int flip_time = 0;
  double peak = 0.0;
  int peak_time = -1;
  /// Steps after the flip until the gap falls below 10% of its peak; -1 if never.
  int decay_steps = -1;
  int degenerate_events = 0;
};

/// Clean and corrupted Method-K receivers on identical transmitter output;
/// the corrupted one receives `flip_symbol` at `flip_time`. A degenerate
/// update in the corrupted receiver is recorded and the symbol skipped
/// (filtered = predicted) instead of aborting.
inline ResyncTrace resync_experiment(const ExperimentConfig& cfg, std::uint64_t seed, int flip_time,
                                     std::uint32_t flip_symbol) {
  require(cfg.has(Method::kK), ErrorKind::kConfig, "resync needs method K in the config");
  require(flip_time >= 0 && flip_time < cfg.model.horizon, ErrorKind::kConfig,
          "flip time outside the horizon");
  ExperimentConfig clean_cfg = cfg;
  clean_cfg.methods = {Method::kKalman};
  clean_cfg.channel_errors.clear();
  SeedRun base = run_seed(clean_cfg, seed);
  if (base.failure) throw Error(base.failure->kind, base.failure->message);
  const auto& model = cfg.model;
  const GainSchedule sch = GainSchedule::compute(model);
  std::vector<double> S;
  for (const auto& ks : base.kalman) S.push_back(ks.S(0, 0));
  const QuantizerSchedule qs = cfg.quantizer.build(S, model.horizon);
  const UniformGrid grid = make_k_grid(model, sch, cfg.grid);

  ResyncTrace trace;
  trace.flip_time = flip_time;
  AugmentedBelief clean = k_init(model, grid);
  AugmentedBelief corrupt = clean;
  for (int k = 0; k < model.horizon; ++k) {
    const Quantizer& q = qs.at(k);
    const Symbol sent = q.quantize(base.kalman[static_cast<std::size_t>(k)].innovation(0));
    const Symbol got = k == flip_time ? Symbol{flip_symbol} : sent;
    clean = k_update(clean, model, sch, q.cell(sent));
    ResyncStep st;
    st.k = k;
    try {
      corrupt = k_update(corrupt, model, sch, q.cell(got));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kDegenerateDensity) throw;
      st.degenerate = true;
      ++trace.degenerate_events;
      corrupt.kind = BeliefKind::kFiltered;
      corrupt.cell.reset();
    }
    const GridDensity mc = k_state_marginal(clean);
    const GridDensity mk = k_state_marginal(corrupt);
    st.clean_mean = mean_cov(mc).mean(0);
    st.corrupt_mean = mean_cov(mk).mean(0);
    st.mean_gap = std::abs(st.clean_mean - st.corrupt_mean);
    st.tv = total_variation(mc, mk);
    trace.steps.push_back(st);
    if (k + 1 < model.horizon) {
      const double u = detail::scalar_input(base.trajectory, k);
      clean = k_predict(clean, model, sch, u, cfg.grid.kernel, cfg.grid.truncation_sigmas);
      corrupt = k_predict(corrupt, model, sch, u, cfg.grid.kernel, cfg.grid.truncation_sigmas);
    }
  }
  for (const auto& st : trace.steps) {
    if (st.k >= flip_time && st.mean_gap > trace.peak) {
      trace.peak = st.mean_gap;
      trace.peak_time = st.k;
    }
  }
  if (trace.peak == 0.0) {
    trace.decay_steps = 0;
  } else {
    for (const auto& st : trace.steps) {
      if (st.k > trace.peak_time && st.mean_gap < 0.1 * trace.peak) {
        trace.decay_steps = st.k - flip_time;
        break;
      }
    }
  }
  return trace;
}

inline std::string resync_csv(const ResyncTrace& t) {
  detail::CsvWriter w({"k", "clean_mean", "corrupt_mean", "mean_gap", "tv", "degenerate"});
  for (const auto& s : t.steps) {
    w.row(s.k, s.clean_mean, s.corrupt_mean, s.mean_gap, s.tv, s.degenerate ? 1 : 0);
  }
  return w.str();
}

// ---------------------------------------------------------------------------
// Innovation whiteness

struct WhitenessResult {
  std::uint64_t seed = 0;
  std::size_t length = 0;
  double band = 0.0;                 // 3 / sqrt(T)
  std::vector<double> rho;           // standardized innovations, lags 1..max_lag
  std::vector<double> rho_quantized; // dequantized symbols scaled by sqrt(S_k)
  bool within_band = true;
};

/// Autocorrelations of the transmitter Kalman innovations for one seed.
/// `gain_scale` != 1 runs a deliberately mis-specified filter (gain L * scale)
/// whose innovations are no longer white; its nominal S_k is kept.
inline WhitenessResult whiteness_report(const ExperimentConfig& cfg, std::uint64_t seed,
                                        int max_lag = 10, double gain_scale = 1.0) {
  require(cfg.model.horizon >= 500, ErrorKind::kConfig, "whiteness needs horizon >= 500");
  require(cfg.model.output_dim() == 1, ErrorKind::kConfig, "whiteness needs a scalar output");
  const auto& model = cfg.model;
  Rng rng = Rng::stream(seed, 0);
  const auto [noise, traj] = simulate(model, cfg.inputs, rng);

  std::vector<double> eps;
  std::vector<double> S;
  KalmanState st = kf_init(model);
  for (int k = 0; k < model.horizon; ++k) {
    KalmanUpdate upd = kf_measurement_update(model, st, traj.y[static_cast<std::size_t>(k)]);
    eps.push_back(upd.innovation(0));
    S.push_back(innovation_variance(model, k, st)(0, 0));
    if (gain_scale != 1.0) {
      upd.state.x_filt = st.x_pred + gain_scale * upd.gain * upd.innovation;
    }
    st = kf_time_update(model, upd.state, traj.u[static_cast<std::size_t>(k)]);
  }
  const QuantizerSchedule qs = cfg.quantizer.build(S, model.horizon);
  std::vector<double> eps_q;
  for (int k = 0; k < model.horizon; ++k) {
    const Quantizer& q = qs.at(k);
    const auto ks = static_cast<std::size_t>(k);
    eps_q.push_back(q.dequantize(q.quantize(eps[ks])));
  }
  WhitenessResult r;
  r.seed = seed;
  r.length = eps.size();
  r.band = 3.0 / std::sqrt(static_cast<double>(r.length));
  r.rho = whiteness_statistic(eps, S, max_lag);
  r.rho_quantized = whiteness_statistic(eps_q, S, max_lag);
  for (double v : r.rho) r.within_band = r.within_band && std::abs(v) <= r.band;
  return r;
}

inline std::string whiteness_csv(const std::vector<WhitenessResult>& results) {
  detail::CsvWriter w({"seed", "lag", "rho", "rho_quantized", "band"});
  for (const auto& r : results) {
    w.row(r.seed, 0, 1.0, 1.0, r.band);
    for (std::size_t j = 0; j < r.rho.size(); ++j) {
      w.row(r.seed, j + 1, r.rho[j], r.rho_quantized[j], r.band);
    }
  }
  return w.str();
}

// ---------------------------------------------------------------------------
// Particle-oracle comparison

struct OracleComparisonStep {
  int k = 0;
  double grid_mean = 0.0;
  double oracle_mean = 0.0;
  double oracle_se = 0.0;  // standard error of one `particles`-sized oracle run
  double z = 0.0;
};

struct OracleComparison {
  std::vector<OracleComparisonStep> k_steps;
  std::vector<OracleComparisonStep> r_steps;
  double max_abs_z_k = 0.0;
  double max_abs_z_r = 0.0;
};

/// Feeds the symbols received by the grid receivers of `run` to bootstrap
/// oracles and compares filtered x means step by step.
inline OracleComparison compare_with_oracle(const ExperimentConfig& cfg, const SeedRun& run,
                                            const OracleOptions& opt) {
  require(!run.failure, ErrorKind::kInvalidArgument, "cannot compare a failed run");
  OracleComparison out;
  std::vector<double> u;
  for (const auto& v : run.trajectory.u) u.push_back(v.size() ? v(0) : 0.0);
  auto cells_of = [&](const std::vector<ReceiverStep>& rows) {
    std::vector<QuantCell> cells;
    for (const auto& r : rows) cells.push_back(run.quantizers.at(r.k).cell(Symbol{r.received}));
    return cells;
  };
  auto fill = [](const std::vector<ReceiverStep>& rows, const OracleTrace& tr,
                 std::vector<OracleComparisonStep>& dst, double& worst) {
    for (std::size_t k = 0; k < rows.size(); ++k) {
      OracleComparisonStep s;
      s.k = rows[k].k;
      s.grid_mean = rows[k].filt_mean;
      s.oracle_mean = tr[k].filt_mean;
      s.oracle_se = tr[k].filt_se;
      s.z = s.oracle_se > 0.0 ? (s.grid_mean - s.oracle_mean) / s.oracle_se : 0.0;
      worst = std::max(worst, std::abs(s.z));
      dst.push_back(s);
    }
  };
  if (run.receivers.count(Method::kK)) {
    const auto& rows = run.receivers.at(Method::kK);
    OracleOptions o = opt;
    o.seed = Rng::splitmix64(opt.seed ^ 0x4B);
    const OracleTrace tr = k_oracle_run(cfg.model, *run.schedule, cells_of(rows), u, o);
    fill(rows, tr, out.k_steps, out.max_abs_z_k);
  }
  if (run.receivers.count(Method::kR)) {
    const auto& rows = run.receivers.at(Method::kR);
    std::vector<double> xpred;
    for (const auto& r : rows) xpred.push_back(r.pred_mean);
    OracleOptions o = opt;
    o.seed = Rng::splitmix64(opt.seed ^ 0x52);
    const OracleTrace tr = r_oracle_run(cfg.model, cells_of(rows), xpred, u, o);
    fill(rows, tr, out.r_steps, out.max_abs_z_r);
  }
  return out;
}

inline std::string oracle_csv(const std::vector<OracleComparisonStep>& steps) {
  detail::CsvWriter w({"k", "grid_mean", "oracle_mean", "oracle_se", "z"});
  for (const auto& s : steps) w.row(s.k, s.grid_mean, s.oracle_mean, s.oracle_se, s.z);
  return w.str();
}

}  // namespace qibf
