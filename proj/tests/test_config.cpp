#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "support.hpp"

using namespace qibf;

namespace {

Json minimal() {
  return Json::parse(R"({
    "model": {"A": 0.95, "C": 1.0, "Q": 0.01, "R": 0.01, "x0_mean": 0.0, "x0_cov": 0.02, "horizon": 4},
    "quantizer": {"type": "uniform", "bits": 3, "zeta": 0.6222},
    "methods": ["K"]
  })");
}

ErrorKind kind_of(const Json& doc) {
  try {
    parse_config(doc);
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::kInvalidArgument;  // sentinel: no error
}

}  // namespace

TEST(Config, MinimalDefaults) {
  const ExperimentConfig c = parse_config(minimal());
  EXPECT_EQ(c.model.horizon, 4);
  EXPECT_EQ(c.seeds, std::vector<std::uint64_t>{0});
  EXPECT_EQ(c.grid.points, 201u);
  EXPECT_EQ(c.grid.half_width_sigmas, 6.0);
  EXPECT_FALSE(c.quantizer.time_varying());
  EXPECT_EQ(c.mlq_sum, MlqCovarianceSum::kMirrored);
}

TEST(Config, FixturesLoad) {
  for (const char* f : {"case1.json", "case2.json", "case2_sim.json", "case2_fine.json",
                        "case2_whiteness.json", "case2_resync.json"}) {
    EXPECT_NO_THROW(load_config(std::filesystem::path(QIBF_FIXTURE_DIR) / f)) << f;
  }
  const ExperimentConfig c2 = load_config(std::filesystem::path(QIBF_FIXTURE_DIR) / "case2.json");
  ASSERT_TRUE(c2.realization);
  EXPECT_EQ(c2.realization->w.size(), 5u);
  EXPECT_EQ(c2.methods.size(), 4u);
}

TEST(Config, MissingSectionsAreConfigErrors) {
  for (const char* key : {"model", "quantizer", "methods"}) {
    Json d = minimal();
    d.erase(key);
    EXPECT_EQ(kind_of(d), ErrorKind::kConfig) << key;
  }
}

TEST(Config, BadValuesAreConfigErrors) {
  auto with = [](const char* path, Json v) {
    Json d = minimal();
    d[Json::json_pointer(path)] = v;
    return d;
  };
  EXPECT_EQ(kind_of(with("/methods", Json::array({"Q"}))), ErrorKind::kConfig);
  EXPECT_EQ(kind_of(with("/quantizer/type", "mystery")), ErrorKind::kConfig);
  EXPECT_EQ(kind_of(with("/quantizer/bits", 0)), ErrorKind::kConfig);
  EXPECT_EQ(kind_of(with("/quantizer/zeta_sigmas", 4.0)), ErrorKind::kConfig);  // both zeta forms
  EXPECT_EQ(kind_of(with("/grid", Json{{"points", 2}})), ErrorKind::kConfig);
  EXPECT_EQ(kind_of(with("/grid", Json{{"kernel", "spline"}})), ErrorKind::kConfig);
  EXPECT_EQ(kind_of(with("/model/horizon", 0)), ErrorKind::kConfig);
  EXPECT_EQ(kind_of(with("/model/R", -1.0)), ErrorKind::kConfig);
  EXPECT_EQ(kind_of(with("/model/A", "fast")), ErrorKind::kConfig);
  EXPECT_EQ(kind_of(with("/channel_errors", Json::parse(R"([{"time": 9, "symbol": 1}])"))), ErrorKind::kConfig);
  EXPECT_EQ(kind_of(with("/realization", Json::parse(R"({"x0": 0, "w": [0], "v": [0]})"))), ErrorKind::kConfig);
  EXPECT_EQ(kind_of(with("/mlq_covariance_sum", "both")), ErrorKind::kConfig);
}

TEST(Config, VectorModelRejectedForGridMethods) {
  Json d = minimal();
  d["model"]["A"] = Json::parse("[[1, 0], [0, 1]]");
  d["model"]["C"] = Json::parse("[[1, 0]]");
  d["model"]["Q"] = Json::parse("[[0.01, 0], [0, 0.01]]");
  d["model"]["x0_mean"] = Json::parse("[0, 0]");
  d["model"]["x0_cov"] = Json::parse("[[1, 0], [0, 1]]");
  d["model"]["B"] = Json::parse("[[0], [0]]");
  EXPECT_EQ(kind_of(d), ErrorKind::kConfig);
  d["methods"] = Json::array({"kalman"});
  EXPECT_NO_THROW(parse_config(d));
}

TEST(Config, TimeVaryingQuantizerFollowsInnovationVariance) {
  Json d = minimal();
  d["quantizer"] = Json::parse(R"({"type": "uniform", "bits": 4, "zeta_sigmas": 4})");
  const ExperimentConfig c = parse_config(d);
  ASSERT_TRUE(c.quantizer.time_varying());
  const GainSchedule s = GainSchedule::compute(c.model);
  const QuantizerSchedule qs = c.quantizer.build(s.S, c.model.horizon);
  ASSERT_EQ(qs.size(), 4u);
  for (int k = 0; k < 4; ++k) {
    const Quantizer& q = qs.at(k);
    const double zeta = 4.0 * std::sqrt(s.S[k]);
    EXPECT_NEAR(q.breakpoints().back(), zeta - 2 * zeta / 16, 1e-12);
  }
}

TEST(Config, LloydMaxAndFileQuantizers) {
  const auto dir = std::filesystem::temp_directory_path() / "qibf_cfg_test";
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "q.json") << R"({"breakpoints": [0.0], "representatives": [-0.5, 0.5]})";
  }
  Json d = minimal();
  d["quantizer"] = Json::parse(R"({"type": "file", "path": "q.json"})");
  const ExperimentConfig c = parse_config(d, dir);
  EXPECT_EQ(c.quantizer.build({}, 4).at(0).representatives()[1], 0.5);
  d["quantizer"] = Json::parse(R"({"type": "file", "path": "missing.json"})");
  EXPECT_THROW(parse_config(d, dir), Error);
  d["quantizer"] = Json::parse(R"({"type": "lloyd-max", "levels": 2, "sigma": 1.0})");
  EXPECT_NEAR(parse_config(d).quantizer.build({}, 4).at(0).representatives()[1], 0.7978845608, 1e-9);
  std::filesystem::remove_all(dir);
}

TEST(Config, UnreadableFile) {
  try {
    load_config("/nonexistent/config.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
  }
}

TEST(Config, TimeVaryingModelSequence) {
  Json d = minimal();
  d["model"].erase("A");
  d["model"]["A_seq"] = Json::parse("[0.9, 0.8]");
  const ExperimentConfig c = parse_config(d);
  EXPECT_EQ(c.model.A(0)(0, 0), 0.9);
  EXPECT_EQ(c.model.A(3)(0, 0), 0.8);
}
