#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "support.hpp"

using namespace qibf;
namespace fs = std::filesystem;

namespace {

ExperimentConfig fixture(const char* name) { return load_config(fs::path(QIBF_FIXTURE_DIR) / name); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("qibf_test_" + name);
  fs::remove_all(p);
  return p;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TEST(Experiment, Case2ReplayManifestValues) {
  const ExperimentConfig cfg = fixture("case2.json");
  const fs::path dir = scratch("case2");
  const RunManifest m = run_experiment(cfg, 0, dir, "replay");
  ASSERT_TRUE(m.ok()) << m.doc["error"].dump();
  const Json& steps = m.doc["steps"];
  EXPECT_NEAR(steps["kalman"][0]["innovation"].get<double>(), 0.0798, 1e-9);
  EXPECT_NEAR(steps["kalman"][2]["P_pred"].get<double>(), 0.0156, 1e-4);
  EXPECT_NEAR(steps["S"][1]["pred_var"].get<double>(), 0.0181, 1e-4);
  EXPECT_NEAR(steps["S"][1]["pred_mean"].get<double>(), 0.0085, 1e-4);
  EXPECT_NEAR(steps["R"][0]["innovation"].get<double>(), 0.0798, 1e-9);
  fs::remove_all(dir);
}

TEST(Experiment, ArtifactsExistAndParse) {
  const ExperimentConfig cfg = fixture("case2.json");
  const fs::path dir = scratch("artifacts");
  const RunManifest m = run_experiment(cfg, 0, dir, "replay");
  ASSERT_TRUE(m.ok());
  const Json disk = Json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(disk, m.doc);
  ASSERT_FALSE(disk["artifacts"].empty());
  for (const auto& a : disk["artifacts"]) {
    const fs::path p = dir / a.get<std::string>();
    ASSERT_TRUE(fs::exists(p)) << p;
    std::ifstream in(p);
    std::string header;
    std::getline(in, header);
    const auto cols = std::count(header.begin(), header.end(), ',') + 1;
    std::string line;
    int rows = 0;
    while (std::getline(in, line)) {
      ASSERT_EQ(std::count(line.begin(), line.end(), ',') + 1, cols) << p;
      ++rows;
    }
    EXPECT_GT(rows, 0) << p;
    const std::string stem = p.stem().string();
    if (stem.rfind("K_pred_0", 0) == 0 || stem.rfind("K_filt_0", 0) == 0) {
      EXPECT_EQ(header, "x,xerr,density") << p;
    } else if (p.parent_path().filename() == "densities") {
      EXPECT_EQ(header, "x,density") << p;
    }
  }
  // No temporary files are left behind.
  for (const auto& e : fs::recursive_directory_iterator(dir)) EXPECT_NE(e.path().extension(), ".tmp");
  fs::remove_all(dir);
}

TEST(Experiment, ManifestRoundTripsThroughConfigSchema) {
  const ExperimentConfig cfg = fixture("case2.json");
  const fs::path dir = scratch("roundtrip");
  run_experiment(cfg, 0, dir, "replay");
  const Json disk = Json::parse(slurp(dir / "manifest.json"));
  const ExperimentConfig again = parse_config(disk["config"]);
  EXPECT_EQ(again.source, cfg.source);
  EXPECT_EQ(again.model.horizon, cfg.model.horizon);
  EXPECT_EQ(again.methods, cfg.methods);
  fs::remove_all(dir);
}

TEST(Experiment, CsvsAreByteIdenticalPerSeed) {
  ExperimentConfig cfg = fixture("case2_sim.json");
  cfg.model.horizon = 8;
  cfg.grid.points = 81;
  cfg.write_densities = true;
  cfg.validate();
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  run_experiment(cfg, 3, a);
  run_experiment(cfg, 3, b);
  int files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (e.path().extension() != ".csv") continue;
    const fs::path rel = fs::relative(e.path(), a);
    EXPECT_EQ(slurp(e.path()), slurp(b / rel)) << rel;
    ++files;
  }
  EXPECT_GT(files, 10);
  // A different seed changes the trajectory.
  const fs::path c = scratch("det_c");
  run_experiment(cfg, 4, c);
  EXPECT_NE(slurp(a / "trajectory.csv"), slurp(c / "trajectory.csv"));
  for (const auto& p : {a, b, c}) fs::remove_all(p);
}

TEST(Experiment, Case1DensitiesAreTruncatedGaussians) {
  const ExperimentConfig cfg = fixture("case1.json");
  const SeedRun run = run_seed(cfg, cfg.seeds.front());
  ASSERT_FALSE(run.failure) << run.failure->message;
  const auto& rows = run.receivers.at(Method::kK);
  ASSERT_EQ(rows.size(), 5u);
  for (const auto& r : rows) {
    EXPECT_NEAR(r.health, 1.0, 0.1) << r.k;
  }
  EXPECT_LE(run.invariants.max_mass_deviation, 1e-9);
  EXPECT_LE(run.invariants.max_evidence_deviation, 1e-12);
}

TEST(Experiment, FailureIsReportedWithStepAndMethod) {
  ExperimentConfig cfg = fixture("case2.json");
  cfg.methods = {Method::kKalman, Method::kR};
  cfg.model.r_seq = {MatrixXd::Constant(1, 1, 1e-12)};
  // A saturating measurement with a narrow grid: no node can explain it.
  cfg.realization->v[0] = VectorXd::Constant(1, 5.0);
  cfg.grid.points = 11;
  cfg.grid.x_half_width = 0.01;
  const fs::path dir = scratch("failure");
  const RunManifest m = run_experiment(cfg, 0, dir, "replay");
  ASSERT_FALSE(m.ok());
  EXPECT_EQ(m.doc["partial"], true);
  EXPECT_EQ(m.doc["error"]["method"], "R");
  EXPECT_EQ(m.doc["error"]["kind"], "degenerate-density");
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
  fs::remove_all(dir);
}

TEST(Experiment, ChannelErrorOnlyAffectsReceiver) {
  ExperimentConfig cfg = fixture("case2_sim.json");
  cfg.model.horizon = 10;
  cfg.methods = {Method::kKalman, Method::kS};
  const SeedRun clean = run_seed(cfg, 1);
  cfg.channel_errors = {ChannelError{4, 0}};
  const SeedRun bad = run_seed(cfg, 1);
  const auto& c = clean.receivers.at(Method::kS);
  const auto& b = bad.receivers.at(Method::kS);
  for (int k = 0; k < 10; ++k) EXPECT_EQ(c[k].sent, b[k].sent) << k;
  EXPECT_EQ(b[4].received, 0u);
  for (int k = 0; k <= 4; ++k) EXPECT_EQ(c[k].pred_mean, b[k].pred_mean);
}

TEST(Resync, TrueSymbolGivesZeroDivergence) {
  ExperimentConfig cfg = fixture("case2_resync.json");
  cfg.model.horizon = 20;
  const SeedRun run = run_seed(cfg, 1);
  const Quantizer& q = run.quantizers.at(10);
  const Symbol sent = q.quantize(run.kalman[10].innovation(0));
  const ResyncTrace t = resync_experiment(cfg, 1, 10, sent.index);
  for (const auto& s : t.steps) {
    EXPECT_EQ(s.mean_gap, 0.0);
    EXPECT_EQ(s.tv, 0.0);
  }
}

TEST(Resync, DivergencePeaksAfterFlipAndDecays) {
  const ExperimentConfig cfg = fixture("case2_resync.json");
  std::vector<double> decay;
  for (std::uint64_t seed : cfg.seeds) {
    const SeedRun run = run_seed(cfg, seed);
    const Quantizer& q = run.quantizers.at(10);
    const std::uint32_t sent = q.quantize(run.kalman[10].innovation(0)).index;
    // Move the symbol two cells, staying in range.
    const std::uint32_t flip = sent >= 2 ? sent - 2 : sent + 2;
    const ResyncTrace t = resync_experiment(cfg, seed, 10, flip);
    EXPECT_GE(t.peak_time, 10) << seed;
    EXPECT_GT(t.peak, 0.0) << seed;
    decay.push_back(t.decay_steps < 0 ? 1e9 : t.decay_steps);
  }
  EXPECT_LE(median(decay), 40.0);
}

TEST(Whiteness, Case2KalmanIsWhite) {
  const ExperimentConfig cfg = fixture("case2_whiteness.json");
  int pass = 0;
  for (std::uint64_t seed : cfg.seeds) {
    const WhitenessResult r = whiteness_report(cfg, seed);
    EXPECT_NEAR(r.band, 3.0 / std::sqrt(2000.0), 1e-15);
    pass += r.within_band;
  }
  EXPECT_GE(pass, 95);
}

TEST(Whiteness, MisSpecifiedGainViolatesBandAtLagOne) {
  const ExperimentConfig cfg = fixture("case2_whiteness.json");
  int violated = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const WhitenessResult r = whiteness_report(cfg, seed, 10, 0.2);
    violated += std::abs(r.rho[0]) > r.band;
  }
  EXPECT_EQ(violated, 20);
}

TEST(Whiteness, RejectsShortHorizon) {
  ExperimentConfig cfg = fixture("case2_whiteness.json");
  cfg.model.horizon = 100;
  EXPECT_THROW(whiteness_report(cfg, 1), Error);
}

TEST(Acceptance, FormatsOneLinePerCriterion) {
  CriterionResult r{3, "title", true, "detail", 0.5, 1.0};
  const std::string s = format_result(r);
  EXPECT_EQ(s.rfind("[PASS] 3.", 0), 0u);
  EXPECT_EQ(s.find('\n'), std::string::npos);
  r.seconds = 2.0;
  EXPECT_FALSE(result_ok(r));
}
