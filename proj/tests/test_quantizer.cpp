#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "support.hpp"

using namespace qibf;
using qibf::test::fig2_quantizer;
using qibf::test::Phi;

TEST(Quantizer, Fig2Breakpoints) {
  const Quantizer q = fig2_quantizer();
  ASSERT_EQ(q.size(), 8u);
  const auto& b = q.breakpoints();
  const double want[] = {-0.4666, -0.3111, -0.1555, 0.0, 0.1555, 0.3111, 0.4666};
  for (int i = 0; i < 7; ++i) EXPECT_NEAR(b[i], want[i], 1e-4);
  EXPECT_NEAR(b[4] - b[3], 0.1555, 1e-4);
}

TEST(Quantizer, Fig2MidpointRepresentative) {
  const Quantizer q = fig2_quantizer();
  // Exact midpoint is zeta / 8; the published figure is rounded to 4 places.
  EXPECT_NEAR(q.dequantize(q.quantize(0.05)), 0.6222 / 8.0, 1e-15);
  EXPECT_NEAR(q.dequantize(q.quantize(0.05)), 0.07775, 1e-4);
}

TEST(Quantizer, OneBitMidRise) {
  const Quantizer q = build_uniform_midrise(1, 0.8);
  ASSERT_EQ(q.breakpoints().size(), 1u);
  EXPECT_EQ(q.breakpoints()[0], 0.0);
  EXPECT_DOUBLE_EQ(q.representatives()[0], -0.4);
  EXPECT_DOUBLE_EQ(q.representatives()[1], 0.4);
}

TEST(Quantizer, RejectsBadParameters) {
  EXPECT_THROW(build_uniform_midrise(0, 1.0), Error);
  EXPECT_THROW(build_uniform_midrise(3, 0.0), Error);
  EXPECT_THROW(build_uniform_midrise(3, -1.0), Error);
}

TEST(Quantizer, CaseInnovationsLandInListedCells) {
  const Quantizer q = fig2_quantizer();
  const QuantCell c1 = q.cell(q.quantize(0.1160));
  EXPECT_EQ(c1.lower, 0.0);
  EXPECT_NEAR(c1.upper, 0.1555, 1e-4);
  const QuantCell c2 = q.cell(q.quantize(0.0798));
  EXPECT_EQ(c2.lower, 0.0);
  const QuantCell c3 = q.cell(q.quantize(-0.1853));
  EXPECT_NEAR(c3.lower, -0.3111, 1e-4);
  EXPECT_NEAR(c3.upper, -0.1555, 1e-4);
}

TEST(Quantizer, SaturationCell) {
  const Quantizer q = fig2_quantizer();
  const QuantCell c = q.cell(q.quantize(10.0));
  EXPECT_NEAR(c.lower, 0.4666, 1e-4);
  EXPECT_TRUE(std::isinf(c.upper));
  EXPECT_EQ(q.quantize(10.0).index, 7u);
  EXPECT_EQ(q.quantize(-1e300).index, 0u);
}

TEST(Quantizer, RightClosedBoundary) {
  const Quantizer q = fig2_quantizer();
  const QuantCell c = q.cell(q.quantize(0.0));
  EXPECT_EQ(c.upper, 0.0);
  EXPECT_NEAR(c.lower, -0.1555, 1e-4);
  for (double b : q.breakpoints()) EXPECT_EQ(q.cell(q.quantize(b)).upper, b);
}

TEST(Quantizer, NanAndBadSymbolRejected) {
  const Quantizer q = fig2_quantizer();
  EXPECT_THROW(q.quantize(std::numeric_limits<double>::quiet_NaN()), Error);
  EXPECT_THROW(q.dequantize(Symbol{8}), Error);
  EXPECT_THROW(q.cell(Symbol{100}), Error);
}

TEST(Quantizer, ConstructorInvariants) {
  EXPECT_THROW(Quantizer({0.0, 0.0}, {-1.0, 0.0, 1.0}), Error);
  EXPECT_THROW(Quantizer({0.0}, {-1.0}), Error);
  EXPECT_THROW(Quantizer({0.0}, {0.5, 1.0}), Error);  // representative outside its cell
  EXPECT_NO_THROW(Quantizer({0.0}, {-1.0, 1.0}));
}

TEST(Quantizer, CellsCoverLineDisjointly) {
  for (int bits = 1; bits <= 8; ++bits) {
    const Quantizer q = build_uniform_midrise(bits, 1.7);
    const auto cells = q.cells();
    EXPECT_TRUE(std::isinf(cells.front().lower) && cells.front().lower < 0);
    EXPECT_TRUE(std::isinf(cells.back().upper) && cells.back().upper > 0);
    for (std::size_t i = 1; i < cells.size(); ++i) {
      EXPECT_EQ(cells[i - 1].upper, cells[i].lower);
      EXPECT_LT(cells[i - 1].representative, cells[i].representative);
    }
  }
}

TEST(Quantizer, QuantizeIsMonotoneAndConsistentProperty) {
  const Quantizer q = build_uniform_midrise(5, 2.0);
  Rng rng(42);
  for (int i = 0; i < 20000; ++i) {
    const double a = rng.normal(0.0, 3.0);
    const double b = rng.normal(0.0, 3.0);
    const Symbol sa = q.quantize(a);
    EXPECT_TRUE(q.cell(sa).contains(a));
    if (a <= b) {
      EXPECT_LE(sa.index, q.quantize(b).index);
    }
  }
}

TEST(CellProbability, HalfLine) {
  const QuantCell c{0.0, std::numeric_limits<double>::infinity(), 1.0, Symbol{}};
  for (double var : {1e-6, 0.03, 5.0}) EXPECT_DOUBLE_EQ(cell_probability(c, 0.0, var), 0.5);
}

TEST(CellProbability, Fig2FirstPositiveCell) {
  const Quantizer q = fig2_quantizer();
  const QuantCell c = q.cell(q.quantize(0.01));
  const double oracle = Phi(c.upper / std::sqrt(0.03)) - 0.5;
  EXPECT_NEAR(cell_probability(c, 0.0, 0.03), oracle, 1e-12);
  EXPECT_NEAR(cell_probability(c, 0.0, 0.03), 0.3153, 1e-3);
}

TEST(CellProbability, SumsToOne) {
  const Quantizer q = fig2_quantizer();
  for (double mean : {0.0, 0.2, -3.0}) {
    double s = 0.0;
    for (const auto& c : q.cells()) s += cell_probability(c, mean, 0.03);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(CellProbability, RejectsNonPositiveVariance) {
  const QuantCell c{0.0, 1.0, 0.5, Symbol{}};
  EXPECT_THROW(cell_probability(c, 0.0, 0.0), Error);
}

TEST(CellProbability, FarTailStaysAccurate) {
  // Both bounds 20 sd into the tail: naive CDF differences would cancel to 0.
  const QuantCell c{20.0, 21.0, 20.5, Symbol{}};
  const double p = cell_probability(c, 0.0, 1.0);
  const double oracle = boost::math::cdf(boost::math::complement(boost::math::normal_distribution<double>(), 20.0)) -
                        boost::math::cdf(boost::math::complement(boost::math::normal_distribution<double>(), 21.0));
  EXPECT_GT(p, 0.0);
  EXPECT_NEAR(p / oracle, 1.0, 1e-10);
}

TEST(Normal, PhiAndTail) {
  EXPECT_NEAR(phi(0.0), 0.398942, 1e-6);
  EXPECT_EQ(upper_tail(0.0), 0.5);
  EXPECT_NEAR(upper_tail(0.8979), 0.1847, 5e-4);
  EXPECT_EQ(phi(std::numeric_limits<double>::infinity()), 0.0);
  EXPECT_EQ(upper_tail(-std::numeric_limits<double>::infinity()), 1.0);
  EXPECT_EQ(upper_tail(std::numeric_limits<double>::infinity()), 0.0);
}

namespace {

// Lloyd iteration written against Boost's normal distribution, as an
// independent check on the library's design routine.
std::vector<double> reference_lloyd(double sigma, int m) {
  const boost::math::normal_distribution<double> nd(0.0, sigma);
  std::vector<double> b(static_cast<std::size_t>(m - 1));
  for (int i = 0; i < m - 1; ++i) b[i] = sigma * (-2.0 + 4.0 * (i + 1) / m);
  std::vector<double> r(static_cast<std::size_t>(m));
  for (int it = 0; it < 20000; ++it) {
    for (int i = 0; i < m; ++i) {
      const double lo = i == 0 ? -40.0 * sigma : b[i - 1];
      const double hi = i == m - 1 ? 40.0 * sigma : b[i];
      const double mass = boost::math::cdf(nd, hi) - boost::math::cdf(nd, lo);
      r[i] = sigma * sigma * (boost::math::pdf(nd, lo) - boost::math::pdf(nd, hi)) / mass;
    }
    for (int i = 0; i < m - 1; ++i) b[i] = 0.5 * (r[i] + r[i + 1]);
  }
  std::vector<double> out = b;
  out.insert(out.end(), r.begin(), r.end());
  return out;
}

}  // namespace

TEST(LloydMax, TwoLevelsHalfNormalMean) {
  const Quantizer q = lloyd_max_design(1.0, 2);
  ASSERT_EQ(q.breakpoints().size(), 1u);
  EXPECT_NEAR(q.breakpoints()[0], 0.0, 1e-12);
  EXPECT_NEAR(q.representatives()[1], std::sqrt(2.0 / std::numbers::pi), 1e-9);
  EXPECT_NEAR(q.representatives()[0], -std::sqrt(2.0 / std::numbers::pi), 1e-9);
}

TEST(LloydMax, FourLevelsMatchReferenceIteration) {
  const Quantizer q = lloyd_max_design(1.0, 4);
  const auto ref = reference_lloyd(1.0, 4);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(q.breakpoints()[i], ref[i], 1e-8);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(q.representatives()[i], ref[3 + i], 1e-8);
  EXPECT_NEAR(q.breakpoints()[2], 0.9816, 1e-4);
  EXPECT_NEAR(q.representatives()[3], 1.5104, 1e-4);
  EXPECT_NEAR(q.representatives()[2], 0.4528, 1e-4);
}

TEST(LloydMax, NecessaryConditionsHold) {
  const double sigma = 0.7;
  const Quantizer q = lloyd_max_design(sigma, 8, 1e-13);
  const auto& b = q.breakpoints();
  const auto& r = q.representatives();
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_NEAR(b[i], 0.5 * (r[i] + r[i + 1]), 1e-10);
  for (const auto& c : q.cells()) {
    const double a = c.lower / sigma, z = c.upper / sigma;
    const double centroid = sigma * (phi(a) - phi(z)) / (Phi(z) - Phi(a));
    EXPECT_NEAR(c.representative, centroid, 1e-9);
  }
}

TEST(LloydMax, DistortionBeatsUniform) {
  // Monte-Carlo distortion comparison, independent of the closed form.
  const double sigma = 1.0;
  const Quantizer lm = lloyd_max_design(sigma, 4);
  Rng rng(7);
  double best_uniform = std::numeric_limits<double>::infinity();
  for (double zeta = 1.0; zeta <= 3.0; zeta += 0.25) {
    best_uniform = std::min(best_uniform, expected_distortion(build_uniform_midrise(2, zeta), sigma));
  }
  double mc = 0.0;
  const int n = 400000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal(0.0, sigma);
    const double e = x - lm.dequantize(lm.quantize(x));
    mc += e * e;
  }
  mc /= n;
  EXPECT_NEAR(mc, expected_distortion(lm, sigma), 3e-3);
  EXPECT_LE(expected_distortion(lm, sigma), best_uniform + 1e-12);
}

TEST(LloydMax, NonConvergenceCarriesLastIterate) {
  try {
    lloyd_max_design(1.0, 16, 1e-15, 2);
    FAIL() << "expected non-convergence";
  } catch (const LloydMaxNonConvergence& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNonConvergence);
    EXPECT_EQ(e.last_iterate.size(), 16u);
  }
}

TEST(LloydMax, RejectsBadArguments) {
  EXPECT_THROW(lloyd_max_design(0.0, 4), Error);
  EXPECT_THROW(lloyd_max_design(1.0, 1), Error);
  EXPECT_THROW(lloyd_max_design(1.0, 4, 0.0), Error);
}

TEST(ExpectedDistortion, MatchesSimpsonQuadrature) {
  const Quantizer q = fig2_quantizer();
  const double sigma = std::sqrt(0.03);
  EXPECT_NEAR(expected_distortion(q, sigma), acceptance::simpson_distortion(q, sigma), 1e-9);
}
