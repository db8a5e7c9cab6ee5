// qibf command-line driver.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical degeneration,
// 4 acceptance failure.

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "qibf.hpp"

namespace fs = std::filesystem;
using qibf::Json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitAcceptance = 4;

struct CommonArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> horizon;
  std::vector<std::string> methods;
  std::optional<int> bits;
  std::optional<double> zeta;
  std::optional<std::size_t> grid_points;
  std::optional<std::string> kernel;
  bool densities = false;
  bool no_densities = false;
  unsigned jobs = 0;
};

void add_common(CLI::App* app, CommonArgs& a, bool config_required) {
  auto* c = app->add_option("--config", a.config, "Experiment config (JSON)");
  if (config_required) c->required();
  c->check(CLI::ExistingFile);
  app->add_option("--out", a.out, "Output root (default: $QIBF_OUT_ROOT or ./qibf-out)");
  app->add_option("--seed", a.seed, "Run this single seed instead of the config's seeds");
  app->add_option("--horizon", a.horizon, "Override model.horizon");
  app->add_option("--methods", a.methods, "Override methods (K R S kalman)")->delimiter(',');
  app->add_option("--bits", a.bits, "Override quantizer with a uniform quantizer of this many bits");
  app->add_option("--zeta", a.zeta, "Saturation limit for --bits (default: config zeta)");
  app->add_option("--grid-points", a.grid_points, "Override grid.points");
  app->add_option("--kernel", a.kernel, "Override grid.kernel (point|cell-average)");
  app->add_flag("--densities", a.densities, "Write per-step density CSVs");
  app->add_flag("--no-densities", a.no_densities, "Do not write density CSVs");
  app->add_option("--jobs", a.jobs, "Seeds run concurrently (default: hardware threads)");
}

Json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw qibf::Error(qibf::ErrorKind::kConfig, "cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const std::exception& e) {
    throw qibf::Error(qibf::ErrorKind::kConfig, path + ": invalid JSON: " + e.what());
  }
}

/// Applies flag overrides to the config document, then parses it.
qibf::ExperimentConfig load(const CommonArgs& a) {
  Json doc = read_json(a.config);
  if (a.horizon) doc["model"]["horizon"] = *a.horizon;
  if (!a.methods.empty()) doc["methods"] = a.methods;
  if (a.bits) {
    Json q = {{"type", "uniform"}, {"bits", *a.bits}};
    if (a.zeta) {
      q["zeta"] = *a.zeta;
    } else if (doc.contains("quantizer") && doc["quantizer"].contains("zeta")) {
      q["zeta"] = doc["quantizer"]["zeta"];
    } else if (doc.contains("quantizer") && doc["quantizer"].contains("zeta_sigmas")) {
      q["zeta_sigmas"] = doc["quantizer"]["zeta_sigmas"];
    } else {
      q["zeta_sigmas"] = 4.0;
    }
    doc["quantizer"] = q;
  } else if (a.zeta) {
    doc["quantizer"]["zeta"] = *a.zeta;
    doc["quantizer"].erase("zeta_sigmas");
  }
  if (a.grid_points) doc["grid"]["points"] = *a.grid_points;
  if (a.kernel) doc["grid"]["kernel"] = *a.kernel;
  if (a.densities) doc["write_densities"] = true;
  if (a.no_densities) doc["write_densities"] = false;
  if (a.seed) {
    doc.erase("seeds");
    doc["seed"] = *a.seed;
  }
  return qibf::parse_config(doc, fs::path(a.config).parent_path());
}

fs::path out_root(const CommonArgs& a, const qibf::ExperimentConfig& cfg) {
  if (!a.out.empty()) return a.out;
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  if (const char* env = std::getenv("QIBF_OUT_ROOT"); env && *env) return env;
  return "qibf-out";
}

fs::path seed_dir(const fs::path& root, const qibf::ExperimentConfig& cfg, std::uint64_t seed) {
  return root / cfg.name / ("seed-" + std::to_string(seed));
}

/// Runs fn(seed_index) for every seed on up to `jobs` threads.
template <class Fn>
void for_each_seed(std::size_t count, unsigned jobs, Fn&& fn) {
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = static_cast<unsigned>(std::min<std::size_t>(jobs, count));
  if (jobs <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < jobs; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

int exit_for(const qibf::Error& e) {
  return e.is_numerical() ? kExitNumerical : kExitConfig;
}

int exit_for_failure(const Json& manifest) {
  if (manifest.value("status", "") == "complete") return kExitOk;
  const std::string kind = manifest["error"].value("kind", "");
  for (auto k : {qibf::ErrorKind::kDegenerateDensity, qibf::ErrorKind::kNumerical,
                 qibf::ErrorKind::kSingularGain, qibf::ErrorKind::kOracleDegenerate,
                 qibf::ErrorKind::kNonConvergence}) {
    if (kind == qibf::to_string(k)) return kExitNumerical;
  }
  return kExitConfig;
}

int cmd_run(const CommonArgs& a, const std::string& command) {
  const qibf::ExperimentConfig cfg = load(a);
  if (command == "replay" && !cfg.realization) {
    throw qibf::Error(qibf::ErrorKind::kConfig, "replay needs a 'realization' block in the config");
  }
  qibf::ExperimentConfig run_cfg = cfg;
  if (command == "simulate") run_cfg.realization.reset();
  const fs::path root = out_root(a, cfg);
  std::vector<Json> manifests(cfg.seeds.size());
  for_each_seed(cfg.seeds.size(), a.jobs, [&](std::size_t i) {
    manifests[i] =
        qibf::run_experiment(run_cfg, cfg.seeds[i], seed_dir(root, cfg, cfg.seeds[i]), command).doc;
  });
  int code = kExitOk;
  for (std::size_t i = 0; i < manifests.size(); ++i) {
    const Json& m = manifests[i];
    const fs::path dir = seed_dir(root, cfg, cfg.seeds[i]);
    if (m["status"] == "complete") {
      std::cout << "seed " << cfg.seeds[i] << ": complete -> " << dir.string() << "\n";
    } else {
      std::cerr << "seed " << cfg.seeds[i] << ": FAILED in method " << m["error"]["method"].get<std::string>()
                << " at step " << m["error"]["step"] << ": " << m["error"]["message"].get<std::string>()
                << " (partial artifacts in " << dir.string() << ")\n";
      code = std::max(code, exit_for_failure(m));
    }
  }
  return code;
}

int cmd_compare(const CommonArgs& a, std::size_t particles, std::size_t replicates) {
  qibf::ExperimentConfig cfg = load(a);
  const fs::path root = out_root(a, cfg);
  qibf::OracleOptions oo;
  oo.particles = particles;
  oo.replicates = replicates;
  int code = kExitOk;
  std::mutex io;
  for_each_seed(cfg.seeds.size(), a.jobs, [&](std::size_t i) {
    const std::uint64_t seed = cfg.seeds[i];
    const fs::path dir = seed_dir(root, cfg, seed);
    const qibf::RunManifest man = qibf::run_experiment(cfg, seed, dir, "compare");
    std::lock_guard lock(io);
    if (!man.ok()) {
      std::cerr << "seed " << seed << ": run failed: " << man.doc["error"]["message"].get<std::string>() << "\n";
      code = std::max(code, exit_for_failure(man.doc));
      return;
    }
    const qibf::SeedRun run = qibf::run_seed(cfg, seed);
    qibf::OracleOptions o = oo;
    o.seed = qibf::Rng::splitmix64(seed);
    try {
      const qibf::OracleComparison cmp = qibf::compare_with_oracle(cfg, run, o);
      if (!cmp.k_steps.empty()) qibf::write_atomic(dir / "oracle_K.csv", qibf::oracle_csv(cmp.k_steps));
      if (!cmp.r_steps.empty()) qibf::write_atomic(dir / "oracle_R.csv", qibf::oracle_csv(cmp.r_steps));
      std::cout << "seed " << seed << ": max |z| K=" << cmp.max_abs_z_k << " R=" << cmp.max_abs_z_r
                << " -> " << dir.string() << "\n";
    } catch (const qibf::Error& e) {
      std::cerr << "seed " << seed << ": oracle failed: " << e.what() << "\n";
      code = std::max(code, exit_for(e));
    }
  });
  return code;
}

int cmd_resync(const CommonArgs& a, int flip_time, std::uint32_t flip_symbol) {
  const qibf::ExperimentConfig cfg = load(a);
  const fs::path root = out_root(a, cfg);
  std::vector<qibf::ResyncTrace> traces(cfg.seeds.size());
  for_each_seed(cfg.seeds.size(), a.jobs, [&](std::size_t i) {
    traces[i] = qibf::resync_experiment(cfg, cfg.seeds[i], flip_time, flip_symbol);
    qibf::write_atomic(seed_dir(root, cfg, cfg.seeds[i]) / "resync.csv", qibf::resync_csv(traces[i]));
  });
  Json summary = Json::array();
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto& t = traces[i];
    summary.push_back({{"seed", cfg.seeds[i]},
                       {"peak", t.peak},
                       {"peak_time", t.peak_time},
                       {"decay_steps", t.decay_steps},
                       {"degenerate_events", t.degenerate_events}});
    std::cout << "seed " << cfg.seeds[i] << ": peak " << t.peak << " at k=" << t.peak_time
              << ", below 10% after " << t.decay_steps << " steps (exploratory threshold)\n";
  }
  qibf::write_atomic(root / cfg.name / "resync_summary.json",
                     Json{{"flip_time", flip_time}, {"flip_symbol", flip_symbol}, {"seeds", summary}}.dump(2) + "\n");
  return kExitOk;
}

int cmd_whiteness(const CommonArgs& a, int max_lag, double gain_scale) {
  const qibf::ExperimentConfig cfg = load(a);
  const fs::path root = out_root(a, cfg);
  std::vector<qibf::WhitenessResult> res(cfg.seeds.size());
  for_each_seed(cfg.seeds.size(), a.jobs,
                [&](std::size_t i) { res[i] = qibf::whiteness_report(cfg, cfg.seeds[i], max_lag, gain_scale); });
  const auto pass = std::count_if(res.begin(), res.end(), [](const auto& r) { return r.within_band; });
  qibf::write_atomic(root / cfg.name / "whiteness.csv", qibf::whiteness_csv(res));
  std::cout << pass << "/" << res.size() << " seeds have all |rho(j)| within 3/sqrt(T) for j=1.."
            << max_lag << " -> " << (root / cfg.name / "whiteness.csv").string() << "\n";
  return kExitOk;
}

int cmd_design(const std::string& out, double sigma, int levels, double tol) {
  const qibf::Quantizer q = qibf::lloyd_max_design(sigma, levels, tol);
  const Json doc = {{"type", "explicit"},
                    {"sigma", sigma},
                    {"levels", levels},
                    {"breakpoints", q.breakpoints()},
                    {"representatives", q.representatives()},
                    {"distortion", qibf::expected_distortion(q, sigma)}};
  std::cout << doc.dump(2) << "\n";
  if (!out.empty()) {
    qibf::write_atomic(fs::path(out) / "quantizer.json", doc.dump(2) + "\n");
  }
  return kExitOk;
}

int cmd_acceptance(const std::string& fixtures, const std::vector<int>& only, std::size_t particles,
                   const std::string& out) {
  qibf::AcceptanceOptions opt;
  if (!fixtures.empty()) opt.fixture_dir = fixtures;
  opt.only.insert(only.begin(), only.end());
  opt.oracle_particles = particles;
  const auto results = qibf::run_acceptance(opt, &std::cout);
  const bool ok = std::all_of(results.begin(), results.end(), qibf::result_ok);
  if (!out.empty()) {
    std::ostringstream os;
    for (const auto& r : results) os << qibf::format_result(r) << "\n";
    qibf::write_atomic(fs::path(out) / "acceptance.txt", os.str());
  }
  std::cout << (ok ? "acceptance: all criteria passed" : "acceptance: FAILED") << std::endl;
  return ok ? kExitOk : kExitAcceptance;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantized-innovations Bayesian filtering experiments"};
  app.set_version_flag("--version", std::string(qibf::kVersion));
  app.require_subcommand(1);

  CommonArgs sim_args, replay_args, cmp_args, resync_args, white_args, design_args, acc_args;
  auto* sim = app.add_subcommand("simulate", "Simulate the plant and run the configured methods");
  add_common(sim, sim_args, true);
  auto* rep = app.add_subcommand("replay", "Replay the config's recorded noise realization");
  add_common(rep, replay_args, true);

  auto* cmp = app.add_subcommand("compare", "Compare grid receivers with particle oracles");
  add_common(cmp, cmp_args, true);
  std::size_t particles = 100000;
  std::size_t replicates = 10;
  cmp->add_option("--particles", particles, "Particles per oracle run")->check(CLI::PositiveNumber);
  cmp->add_option("--replicates", replicates, "Independent oracle runs for the standard error")
      ->check(CLI::Range(std::size_t{2}, std::size_t{1000}));

  auto* rs = app.add_subcommand("resync", "Isolated channel error: clean vs corrupted Method-K receiver");
  add_common(rs, resync_args, true);
  int flip_time = 10;
  std::uint32_t flip_symbol = 0;
  rs->add_option("--flip-time", flip_time, "Step of the corrupted symbol");
  rs->add_option("--flip-symbol", flip_symbol, "Symbol delivered instead");

  auto* wh = app.add_subcommand("whiteness", "Innovation autocorrelation report");
  add_common(wh, white_args, true);
  int max_lag = 10;
  double gain_scale = 1.0;
  wh->add_option("--max-lag", max_lag, "Largest lag")->check(CLI::PositiveNumber);
  wh->add_option("--gain-scale", gain_scale, "Scale the Kalman gain (mis-specified filter)");

  auto* dq = app.add_subcommand("design-quantizer", "Lloyd-Max quantizer for N(0, sigma^2)");
  add_common(dq, design_args, false);
  double sigma = 1.0;
  int levels = 4;
  double tol = 1e-12;
  dq->add_option("--sigma", sigma, "Source standard deviation")->check(CLI::PositiveNumber);
  dq->add_option("--levels", levels, "Number of cells")->check(CLI::Range(2, 1 << 16));
  dq->add_option("--tol", tol, "Breakpoint convergence tolerance")->check(CLI::PositiveNumber);

  auto* acc = app.add_subcommand("test-acceptance", "Run the acceptance criteria");
  add_common(acc, acc_args, false);
  std::string fixtures;
  std::vector<int> only;
  std::size_t acc_particles = 100000;
  acc->add_option("--fixtures", fixtures, "Fixture directory")->check(CLI::ExistingDirectory);
  acc->add_option("--criteria", only, "Run only these criteria")->delimiter(',');
  acc->add_option("--particles", acc_particles, "Particles per oracle run")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*sim) return cmd_run(sim_args, "simulate");
    if (*rep) return cmd_run(replay_args, "replay");
    if (*cmp) return cmd_compare(cmp_args, particles, replicates);
    if (*rs) return cmd_resync(resync_args, flip_time, flip_symbol);
    if (*wh) return cmd_whiteness(white_args, max_lag, gain_scale);
    if (*dq) {
      if (!design_args.config.empty()) {
        const Json doc = read_json(design_args.config);
        if (doc.contains("quantizer")) {
          const Json& q = doc["quantizer"];
          if (q.contains("sigma") && dq->count("--sigma") == 0) sigma = q["sigma"].get<double>();
          if (q.contains("levels") && dq->count("--levels") == 0) levels = q["levels"].get<int>();
          if (q.contains("tol") && dq->count("--tol") == 0) tol = q["tol"].get<double>();
        }
      }
      std::string out = design_args.out;
      if (out.empty()) {
        if (const char* env = std::getenv("QIBF_OUT_ROOT"); env && *env) out = env;
      }
      return cmd_design(out, sigma, levels, tol);
    }
    if (*acc) {
      std::string out = acc_args.out;
      if (out.empty()) {
        if (const char* env = std::getenv("QIBF_OUT_ROOT"); env && *env) out = env;
      }
      return cmd_acceptance(fixtures, only, acc_particles, out);
    }
  } catch (const qibf::LloydMaxNonConvergence& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const qibf::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_for(e);
  } catch (const Json::exception& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return kExitConfig;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}
