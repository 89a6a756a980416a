#include <gtest/gtest.h>

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <numeric>
#include <random>

#include "wdl/distributions.hpp"
#include "wdl/errors.hpp"

using namespace wdl;

namespace {

double boost_quantile(double mean, double sd, double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(mean, sd), p);
}

GaussianMixtureParams random_mixture(std::mt19937_64& rng, std::size_t k) {
  std::uniform_real_distribution<double> mean(-5.0, 5.0);
  std::uniform_real_distribution<double> sd(0.2, 3.0);
  std::uniform_real_distribution<double> w(0.05, 1.0);
  std::vector<GaussianComponent> comps;
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    comps.push_back({w(rng), mean(rng), sd(rng)});
    total += comps.back().weight;
  }
  for (auto& c : comps) c.weight /= total;
  // Renormalize so the weights sum to 1 to the last bit that matters.
  comps.back().weight = 1.0;
  for (std::size_t i = 0; i + 1 < k; ++i) comps.back().weight -= comps[i].weight;
  return GaussianMixtureParams(comps);
}

QuantileFunction random_monotone(std::mt19937_64& rng, const LevelGrid& grid) {
  std::exponential_distribution<double> step(1.0);
  std::vector<double> v(grid.size());
  double x = std::normal_distribution<double>(0.0, 3.0)(rng);
  for (auto& e : v) {
    x += step(rng);
    e = x;
  }
  return QuantileFunction(grid, v);
}

}  // namespace

TEST(LevelGrid, DefaultGridIsHundredths) {
  const LevelGrid g = default_grid();
  ASSERT_EQ(g.size(), 99u);
  EXPECT_DOUBLE_EQ(g[0], 0.01);
  EXPECT_DOUBLE_EQ(g[98], 0.99);
}

TEST(LevelGrid, RejectsNonIncreasingAndOutOfRange) {
  EXPECT_THROW(LevelGrid({0.2, 0.2}), InvalidInputError);
  EXPECT_THROW(LevelGrid({0.0, 0.5}), InvalidInputError);
  EXPECT_THROW(LevelGrid({0.5, 1.0}), InvalidInputError);
  EXPECT_THROW(LevelGrid({}), InvalidInputError);
}

TEST(QuantileFunction, RejectsDecreasingValues) {
  EXPECT_THROW(QuantileFunction(LevelGrid({0.25, 0.75}), {1.0, 0.0}), InvalidInputError);
  EXPECT_THROW(QuantileFunction(LevelGrid({0.25, 0.75}), {1.0}), InvalidInputError);
  EXPECT_THROW(QuantileFunction(LevelGrid({0.25, 0.75}), {0.0, INFINITY}), InvalidInputError);
}

TEST(EmpiricalQuantiles, MedianOfFourPointsIsLeftContinuous) {
  const EmpiricalDistribution d({4.0, 1.0, 3.0, 2.0});
  EXPECT_EQ(empirical_quantiles(d, LevelGrid({0.5}))[0], 2.0);
}

TEST(EmpiricalQuantiles, SinglePointIsRejected) {
  EXPECT_THROW(EmpiricalDistribution({5.0}), InvalidInputError);
}

TEST(EmpiricalQuantiles, WeightsMustSumToOne) {
  EXPECT_THROW(EmpiricalDistribution({1.0, 2.0}, {0.5, 0.6}), InvalidInputError);
  EXPECT_THROW(EmpiricalDistribution({1.0, 2.0}, {-0.1, 1.1}), InvalidInputError);
}

TEST(EmpiricalQuantiles, StandardNormalMedianFromDraws) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> pts(10000);
  for (auto& p : pts) p = n(rng);
  EXPECT_NEAR(empirical_quantiles(EmpiricalDistribution(pts), LevelGrid({0.5}))[0], 0.0, 0.05);
}

TEST(EmpiricalQuantiles, WeightedMatchesReplicatedSample) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> count(1, 4);
  std::uniform_real_distribution<double> value(-3.0, 3.0);
  const LevelGrid grid = default_grid();
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> pts;
    std::vector<int> reps;
    int total = 0;
    for (int i = 0; i < 7; ++i) {
      // Some repeated values exercise tie handling.
      pts.push_back(i % 3 == 0 && i > 0 ? pts[i - 1] : std::round(value(rng) * 4.0) / 4.0);
      reps.push_back(count(rng));
      total += reps.back();
    }
    std::vector<double> weights;
    std::vector<double> replicated;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      weights.push_back(static_cast<double>(reps[i]) / total);
      for (int r = 0; r < reps[i]; ++r) replicated.push_back(pts[i]);
    }
    const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
    weights.back() += 1.0 - sum;
    const auto a = empirical_quantiles(EmpiricalDistribution(pts, weights), grid);
    const auto b = empirical_quantiles(EmpiricalDistribution(replicated), grid);
    for (std::size_t l = 0; l < grid.size(); ++l) ASSERT_EQ(a[l], b[l]) << "trial " << trial << " level " << grid[l];
  }
}

TEST(NormalQuantile, MatchesBoost) {
  for (double p : {1e-10, 1e-4, 0.01, 0.2, 0.5, 0.77, 0.99, 1 - 1e-6}) {
    EXPECT_NEAR(normal_quantile(p), boost_quantile(0.0, 1.0, p), 1e-9 * std::max(1.0, std::abs(normal_quantile(p))));
  }
  EXPECT_THROW(normal_quantile(0.0), InvalidInputError);
}

TEST(GmmCdf, SymmetricCases) {
  EXPECT_NEAR(gmm_cdf(GaussianMixtureParams::single(0.0, 1.0), 0.0), 0.5, 1e-15);
  const GaussianMixtureParams sym({{0.5, -1.0, 1.0}, {0.5, 1.0, 1.0}});
  EXPECT_NEAR(gmm_cdf(sym, 0.0), 0.5, 1e-15);
}

TEST(GmmCdf, MatchesQuadratureOfPdf) {
  const GaussianMixtureParams theta({{0.3, 0.0, 1.0}, {0.7, 2.0, 0.5}});
  auto pdf = [&](double x) { return gmm_pdf(theta, x); };
  double err = 0.0;
  const double integral = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(pdf, -40.0, 1.0, 15, 1e-14, &err);
  EXPECT_NEAR(gmm_cdf(theta, 1.0), integral, 1e-8);
}

TEST(GmmCdf, MonotoneAndBoundedOnRandomPoints) {
  std::mt19937_64 rng(3);
  const GaussianMixtureParams theta = random_mixture(rng, 3);
  std::uniform_real_distribution<double> x(-30.0, 30.0);
  std::vector<double> xs(1000);
  for (auto& v : xs) v = x(rng);
  std::sort(xs.begin(), xs.end());
  double prev = 0.0;
  for (double v : xs) {
    const double c = gmm_cdf(theta, v);
    ASSERT_GE(c, 0.0);
    ASSERT_LE(c, 1.0);
    ASSERT_GE(c, prev);
    prev = c;
  }
}

TEST(GmmQuantile, SingleGaussianClosedForm) {
  const auto theta = GaussianMixtureParams::single(1.5, 2.5);
  for (double s : {0.01, 0.3, 0.5, 0.9, 0.99}) {
    EXPECT_NEAR(gmm_quantile(theta, s), boost_quantile(1.5, 2.5, s), 1e-8);
  }
}

TEST(GmmQuantile, SymmetricMixtureMedianIsZero) {
  const GaussianMixtureParams sym({{0.5, -1.0, 1.0}, {0.5, 1.0, 1.0}});
  EXPECT_NEAR(gmm_quantile(sym, 0.5), 0.0, 1e-8);
}

TEST(GmmQuantile, RoundTripOnRandomMixtures) {
  std::mt19937_64 rng(4);
  const LevelGrid grid = default_grid();
  for (int trial = 0; trial < 20; ++trial) {
    const auto theta = random_mixture(rng, 1 + trial % 4);
    for (double s : grid.levels()) ASSERT_NEAR(gmm_cdf(theta, gmm_quantile(theta, s)), s, 1e-10);
  }
}

TEST(GmmQuantile, RejectsLevelsOutsideOpenInterval) {
  const auto theta = GaussianMixtureParams::single(0.0, 1.0);
  EXPECT_THROW(gmm_quantile(theta, 0.0), InvalidInputError);
  EXPECT_THROW(gmm_quantile(theta, 1.0), InvalidInputError);
  EXPECT_THROW(gmm_quantile(theta, -0.2), InvalidInputError);
}

TEST(GmmQuantileFunction, MatchesPerLevelAndIsMonotone) {
  std::mt19937_64 rng(5);
  const LevelGrid grid = default_grid();
  for (int trial = 0; trial < 20; ++trial) {
    const auto theta = random_mixture(rng, 3);
    const auto q = gmm_quantile_function(theta, grid);
    for (std::size_t l = 0; l < grid.size(); ++l) {
      ASSERT_EQ(q[l], gmm_quantile(theta, grid[l]));
      if (l > 0) {
        ASSERT_GE(q[l], q[l - 1]);
      }
    }
  }
}

TEST(GmmQuantileFunction, StandardNormalOnDefaultGrid) {
  const auto q = gmm_quantile_function(GaussianMixtureParams::single(0.0, 1.0), default_grid());
  for (std::size_t l = 0; l < q.size(); ++l) EXPECT_NEAR(q[l], boost_quantile(0.0, 1.0, q.grid()[l]), 1e-8);
}

TEST(GaussianMixtureParams, SortsByMeanAndFloorsSd) {
  const GaussianMixtureParams theta({{0.4, 3.0, 0.0}, {0.6, -1.0, 1.0}});
  EXPECT_EQ(theta[0].mean, -1.0);
  EXPECT_EQ(theta[1].sd, kSdFloor);
  EXPECT_THROW(GaussianMixtureParams({{0.5, 0.0, 1.0}, {0.6, 1.0, 1.0}}), InvalidInputError);
  EXPECT_THROW(GaussianMixtureParams({{1.0, 0.0, -1.0}}), InvalidInputError);
}

TEST(W2Squared, IdentityIsZero) {
  const auto q = gaussian_quantile_function(0.3, 1.2, default_grid());
  EXPECT_EQ(w2_squared(q, q), 0.0);
}

TEST(W2Squared, LocationShiftMatchesClosedForm) {
  const auto a = gaussian_quantile_function(0.0, 1.0, default_grid());
  const auto b = gaussian_quantile_function(1.0, 1.0, default_grid());
  EXPECT_NEAR(w2_squared(a, b), 1.0, 2e-2);
}

TEST(W2Squared, ScaleChangeMatchesClosedForm) {
  const auto a = gaussian_quantile_function(0.0, 1.0, default_grid());
  const auto b = gaussian_quantile_function(0.0, 2.0, default_grid());
  // Closed form is 1 for both the distance and its square. The 1% tails are
  // cut off, so the squared grid value is the truncated second moment of Z.
  const LevelGrid grid = default_grid();
  double truncated = 0.0;
  for (double s : grid.levels()) truncated += std::pow(boost_quantile(0.0, 1.0, s), 2) / 100.0;
  EXPECT_NEAR(w2_squared(a, b), truncated, 1e-12);
  EXPECT_NEAR(std::sqrt(w2_squared(a, b)), 1.0, 8e-2);
}

TEST(W2Squared, GridMismatchIsRejected) {
  const auto a = gaussian_quantile_function(0.0, 1.0, default_grid());
  const auto b = gaussian_quantile_function(0.0, 1.0, LevelGrid::uniform(9));
  EXPECT_THROW(w2_squared(a, b), InvalidInputError);
}

TEST(W2Squared, MetricAxiomsOnRandomTriples) {
  std::mt19937_64 rng(6);
  const LevelGrid grid = default_grid();
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = random_monotone(rng, grid);
    const auto b = random_monotone(rng, grid);
    const auto c = random_monotone(rng, grid);
    const double ab = std::sqrt(w2_squared(a, b));
    ASSERT_EQ(ab, std::sqrt(w2_squared(b, a)));
    ASSERT_LE(std::sqrt(w2_squared(a, c)), ab + std::sqrt(w2_squared(b, c)) + 1e-10);
  }
}

TEST(W2Squared, AgreesWithClosedFormForGaussians) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> mu(-5.0, 5.0);
  std::uniform_real_distribution<double> sd(0.2, 5.0);
  const LevelGrid grid = default_grid();
  for (int trial = 0; trial < 200; ++trial) {
    const double m1 = mu(rng), s1 = sd(rng), m2 = mu(rng), s2 = sd(rng);
    const double grid_w2 =
        std::sqrt(w2_squared(gaussian_quantile_function(m1, s1, grid), gaussian_quantile_function(m2, s2, grid)));
    const double exact = gaussian_w2(m1, s1, m2, s2);
    ASSERT_LE(std::abs(grid_w2 - exact), 0.05 * exact);
  }
}

TEST(GaussianW2, SimpleCases) {
  EXPECT_EQ(gaussian_w2(0, 1, 0, 1), 0.0);
  EXPECT_DOUBLE_EQ(gaussian_w2(0, 1, 3, 1), 3.0);
  EXPECT_THROW(gaussian_w2(0, 0, 1, 1), InvalidInputError);
}

TEST(GaussianW2, MatchesFineQuantileIntegral) {
  // Midpoint rule over a fine level grid using an independent inverse cdf.
  const int n = 200000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double s = (i + 0.5) / n;
    const double d = boost_quantile(0.0, 1.0, s) - boost_quantile(1.0, 2.0, s);
    sum += d * d;
  }
  EXPECT_NEAR(gaussian_w2(0, 1, 1, 2), std::sqrt(sum / n), 1e-4);
  EXPECT_NEAR(gaussian_w2(0, 1, 1, 2), std::sqrt(2.0), 1e-15);
}
