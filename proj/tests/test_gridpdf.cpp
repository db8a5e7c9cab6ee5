#include <gtest/gtest.h>

#include <sstream>

#include "support.hpp"

using namespace qibf;
using qibf::test::npdf;
using qibf::test::sampled_1d;

TEST(Axis, SpacingAndNodes) {
  const Axis a = Axis::from_bounds(-1.0, 1.0, 201);
  EXPECT_DOUBLE_EQ(a.spacing, 0.01);
  EXPECT_DOUBLE_EQ(a.node(0), -1.0);
  EXPECT_NEAR(a.upper(), 1.0, 1e-14);
  EXPECT_THROW(Axis::from_bounds(1.0, 1.0, 10), Error);
  EXPECT_THROW(Axis::from_bounds(0.0, 1.0, 2), Error);
}

TEST(GridPdf, ConstantHasUnitMass) {
  GridDensity d;
  d.grid = UniformGrid{{Axis::from_bounds(0.0, 1.0, 101)}};
  d.values.assign(101, 1.0);
  EXPECT_NEAR(trapezoid_mass(d), 1.0, 1e-12);
}

TEST(GridPdf, StandardNormalMass) {
  const GridDensity d = sampled_1d(Axis::from_bounds(-8.0, 8.0, 401), 0.0, 1.0);
  EXPECT_NEAR(trapezoid_mass(d), 1.0, 1e-6);
}

TEST(GridPdf, ZeroDensity) {
  GridDensity d;
  d.grid = UniformGrid{{Axis::from_bounds(0.0, 1.0, 11)}};
  d.values.assign(11, 0.0);
  EXPECT_EQ(trapezoid_mass(d), 0.0);
  try {
    normalize(d);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDegenerateDensity);
  }
}

TEST(GridPdf, SizeMismatchRejected) {
  GridDensity d;
  d.grid = UniformGrid{{Axis::from_bounds(0.0, 1.0, 11)}};
  d.values.assign(10, 1.0);
  EXPECT_THROW(trapezoid_mass(d), Error);
}

TEST(GridPdf, MomentsOfSampledGaussians) {
  const auto s = normalize(sampled_1d(Axis::from_bounds(-8.0, 8.0, 401), 0.0, 1.0));
  EXPECT_NEAR(mean_cov(s).mean(0), 0.0, 1e-8);
  const auto n = normalize(sampled_1d(Axis::from_bounds(-1.0, 1.0, 401), 0.0, 0.02));
  EXPECT_NEAR(mean_cov(n).cov(0, 0), 0.02, 1e-5);
}

TEST(GridPdf, MarginalOfProductRecoversFactor) {
  const Axis ax = Axis::from_bounds(-1.0, 2.0, 61);
  const Axis ay = Axis::from_bounds(-0.5, 0.5, 41);
  GridDensity d;
  d.grid = UniformGrid{{ax, ay}};
  d.values.resize(d.grid.size());
  for (std::size_t i = 0; i < ax.count; ++i) {
    for (std::size_t j = 0; j < ay.count; ++j) {
      d.at(i, j) = npdf(ax.node(i), 0.5, 0.2) * (1.0 + ay.node(j) * ay.node(j));
    }
  }
  const GridDensity mx = normalize(marginal(normalize(d), 0));
  const GridDensity fx = normalize(sampled_1d(ax, 0.5, 0.2));
  double sup = 0.0;
  for (std::size_t i = 0; i < ax.count; ++i) sup = std::max(sup, std::abs(mx.values[i] - fx.values[i]));
  EXPECT_LE(sup, 1e-10);
}

TEST(GridPdf, TwoDimensionalCovariance) {
  const Axis ax = Axis::from_bounds(-7.0, 7.0, 141);
  GridDensity d;
  d.grid = UniformGrid{{ax, ax}};
  d.values.resize(d.grid.size());
  // Bivariate normal, unit variances, correlation 0.5.
  const double rho = 0.5;
  for (std::size_t i = 0; i < ax.count; ++i) {
    for (std::size_t j = 0; j < ax.count; ++j) {
      const double x = ax.node(i), y = ax.node(j);
      d.at(i, j) = std::exp(-(x * x - 2 * rho * x * y + y * y) / (2 * (1 - rho * rho)));
    }
  }
  const Moments m = mean_cov(normalize(d));
  EXPECT_NEAR(m.cov(0, 1), rho, 2e-2);
  EXPECT_NEAR(m.cov(0, 1), m.cov(1, 0), 0.0);
}

TEST(GridPdf, TotalVariation) {
  const Axis ax = Axis::from_bounds(-10.0, 10.0, 2001);
  const auto p = normalize(sampled_1d(ax, 0.0, 1.0));
  EXPECT_NEAR(total_variation(p, p), 0.0, 0.0);
  // TV between N(0,1) and N(1,1) is 2 Phi(1/2) - 1.
  const auto q = normalize(sampled_1d(ax, 1.0, 1.0));
  EXPECT_NEAR(total_variation(p, q), 2.0 * qibf::test::Phi(0.5) - 1.0, 1e-4);
}

TEST(GridPdf, CsvHeader) {
  const auto p = sampled_1d(Axis::from_bounds(-1.0, 1.0, 3), 0.0, 1.0);
  std::ostringstream os;
  write_csv(os, p, {"x"});
  EXPECT_EQ(os.str().substr(0, 10), "x,density\n");
}

TEST(GridPdf, NormalizeIsIdempotentProperty) {
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    GridDensity d;
    d.grid = UniformGrid{{Axis::from_bounds(-1.0, 1.0, 3 + rng.next_u64() % 60)}};
    for (std::size_t i = 0; i < d.grid.size(); ++i) d.values.push_back(rng.uniform());
    const GridDensity n = normalize(d);
    EXPECT_NEAR(trapezoid_mass(n), 1.0, 1e-12);
    for (double v : n.values) EXPECT_GE(v, 0.0);
  }
}

TEST(GridPolicy, DefaultSpansSixSigma) {
  const auto m = qibf::test::case2_model(20);
  const GainSchedule s = GainSchedule::compute(m);
  const UniformGrid g = make_k_grid(m, s);
  EXPECT_EQ(g.axes[1].count, 201u);
  EXPECT_NEAR(g.axes[1].upper(), 6.0 * std::sqrt(0.02), 1e-12);
  EXPECT_NEAR(g.axes[0].spacing, g.axes[1].spacing, 1e-15);
  // State axis covers +-6 prior sd at the widest step.
  EXPECT_LE(g.axes[0].lower, -6.0 * std::sqrt(0.02) + 1e-12);
  // Prior-mean offset nodes coincide with error-axis nodes.
  const double offset = (g.axes[0].lower - g.axes[1].lower) / g.axes[1].spacing;
  EXPECT_NEAR(offset, std::round(offset), 1e-9);
}
