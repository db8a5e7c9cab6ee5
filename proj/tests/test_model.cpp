#include <gtest/gtest.h>

#include "support.hpp"

using namespace qibf;
using qibf::test::case2_model;
using qibf::test::case2_noise;

namespace {

VectorXd v1(double x) { return VectorXd::Constant(1, x); }

}  // namespace

TEST(Model, StepTruthCase2FirstStep) {
  const auto m = case2_model();
  EXPECT_NEAR(step_truth(m, 0, v1(-0.0319), v1(0.0), v1(-0.1089))(0), -0.1392, 1e-4);
}

TEST(Model, StepTruthCase2ThirdStep) {
  const auto m = case2_model();
  EXPECT_NEAR(step_truth(m, 2, v1(-0.0770), v1(0.0), v1(0.1544))(0), 0.0813, 1e-4);
}

TEST(Model, StepTruthIdentityKeepsState) {
  LinearGaussianModel m;
  m.a_seq = {MatrixXd::Identity(2, 2)};
  m.b_seq = {MatrixXd::Zero(2, 1)};
  m.c_seq = {MatrixXd::Identity(2, 2)};
  m.q_seq = {MatrixXd::Identity(2, 2)};
  m.r_seq = {MatrixXd::Identity(2, 2)};
  m.x0_mean = VectorXd::Zero(2);
  m.x0_cov = MatrixXd::Identity(2, 2);
  m.horizon = 3;
  m.validate();
  const VectorXd x = (VectorXd(2) << 1.5, -2.0).finished();
  EXPECT_EQ(step_truth(m, 0, x, v1(0.0), VectorXd::Zero(2)), x);
}

TEST(Model, StepTruthDimensionMismatchNamesOperand) {
  const auto m = case2_model();
  try {
    step_truth(m, 0, VectorXd::Zero(2), v1(0.0), v1(0.0));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDimensionMismatch);
    EXPECT_NE(std::string(e.what()).find("x at k=0"), std::string::npos);
  }
}

TEST(Model, MeasureCase2FirstInnovation) {
  EXPECT_NEAR(measure(case2_model(), 0, v1(-0.0319), v1(0.1117))(0), 0.0798, 1e-12);
}

TEST(Model, MeasureRowSelector) {
  LinearGaussianModel m;
  m.a_seq = {MatrixXd::Identity(2, 2)};
  m.b_seq = {MatrixXd::Zero(2, 1)};
  m.c_seq = {(MatrixXd(1, 2) << 1.0, 0.0).finished()};
  m.q_seq = {MatrixXd::Identity(2, 2)};
  m.r_seq = {MatrixXd::Identity(1, 1)};
  m.x0_mean = VectorXd::Zero(2);
  m.x0_cov = MatrixXd::Identity(2, 2);
  m.horizon = 1;
  m.validate();
  EXPECT_DOUBLE_EQ(measure(m, 0, (VectorXd(2) << 3.0, 7.0).finished(), v1(0.5))(0), 3.5);
}

TEST(Model, ReplayCase2Trajectory) {
  const auto log = replay(case2_model(), {}, case2_noise());
  const double want[] = {-0.0319, -0.1392, -0.0770, 0.0813, -0.0720};
  ASSERT_EQ(log.x.size(), 6u);
  for (int k = 0; k < 5; ++k) EXPECT_NEAR(log.x[k](0), want[k], 1e-4) << "k=" << k;
}

TEST(Model, ReplayZeroRealizationGivesZeroTrajectory) {
  NoiseRealization n;
  n.x0 = v1(0.0);
  n.w.assign(5, v1(0.0));
  n.v.assign(5, v1(0.0));
  const auto log = replay(case2_model(), {}, n);
  for (const auto& x : log.x) EXPECT_EQ(x(0), 0.0);
  for (const auto& y : log.y) EXPECT_EQ(y(0), 0.0);
}

TEST(Model, ReplayRejectsShortRealization) {
  NoiseRealization n = case2_noise();
  n.w.pop_back();
  EXPECT_THROW(replay(case2_model(), {}, n), Error);
}

TEST(Model, SimulateIsDeterministicPerSeed) {
  const auto m = case2_model(50);
  const auto a = simulate(m, {}, std::uint64_t{17});
  const auto b = simulate(m, {}, std::uint64_t{17});
  for (std::size_t k = 0; k < a.second.x.size(); ++k) EXPECT_EQ(a.second.x[k](0), b.second.x[k](0));
  for (std::size_t k = 0; k < a.second.y.size(); ++k) EXPECT_EQ(a.second.y[k](0), b.second.y[k](0));
}

TEST(Model, SimulateNoiselessIsDeterministicPower) {
  LinearGaussianModel m = LinearGaussianModel::scalar(0.9, 1.0, 0.0, 0.01, 2.0, 0.0, 6);
  const auto out = simulate(m, {}, std::uint64_t{3});
  for (int k = 0; k <= 6; ++k) EXPECT_NEAR(out.second.x[k](0), 2.0 * std::pow(0.9, k), 1e-12);
}

TEST(Model, SimulatedMeasurementNoiseVariance) {
  const auto out = simulate(case2_model(2000), {}, std::uint64_t{5});
  double s = 0.0;
  for (const auto& v : out.first.v) s += v(0) * v(0);
  EXPECT_NEAR(s / 2000.0, 0.01, 0.001);
}

TEST(Model, ValidateRejectsNegativeR) {
  EXPECT_THROW(LinearGaussianModel::scalar(1.0, 1.0, 0.01, -0.01, 0.0, 0.02, 5), Error);
}

TEST(Model, TimeVaryingSequenceRepeatsLastEntry) {
  LinearGaussianModel m = case2_model(4);
  m.a_seq = {MatrixXd::Constant(1, 1, 0.5), MatrixXd::Constant(1, 1, 0.7)};
  m.validate();
  EXPECT_EQ(m.A(0)(0, 0), 0.5);
  EXPECT_EQ(m.A(1)(0, 0), 0.7);
  EXPECT_EQ(m.A(3)(0, 0), 0.7);
}

TEST(Rng, StreamsDifferAndRepeat) {
  Rng a = Rng::stream(1, 0);
  Rng b = Rng::stream(1, 1);
  Rng c = Rng::stream(1, 0);
  const double xa = a.uniform();
  EXPECT_NE(xa, b.uniform());
  EXPECT_EQ(xa, c.uniform());
}

TEST(Rng, UniformOpenInterval) {
  Rng r(9);
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Rng, NormalMoments) {
  Rng r(11);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 5.0 / std::sqrt(n));
  EXPECT_NEAR(s2 / n, 1.0, 5.0 * std::sqrt(2.0 / n));
}
