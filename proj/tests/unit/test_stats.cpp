#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "frozen_oracles.hpp"
#include "striprw/error.hpp"
#include "striprw/stats.hpp"

using namespace striprw;

namespace {

std::vector<double> uniforms(long n, std::uint64_t seed) {
  Rng rng(seed, 0);
  std::vector<double> x(n);
  for (auto& v : x) v = rng.uniform();
  return x;
}

std::vector<double> pareto(long n, double alpha, std::uint64_t seed) {
  auto x = uniforms(n, seed);
  for (auto& v : x) v = std::pow(v, -1.0 / alpha);
  return x;
}

}  // namespace

TEST(Kolmogorov, LimitMatchesOracle) {
  for (int i = 0; i < 6; ++i) {
    const double ne = 1e12;
    const double d = oracle::kKolmogorovX[i] / std::sqrt(ne);
    EXPECT_NEAR(kolmogorov_pvalue(d, ne), oracle::kKolmogorovSf[i], 1e-6);
  }
}

TEST(Kolmogorov, OneSampleUniform) {
  const auto x = uniforms(5000, 3);
  EXPECT_GT(ks_test(x, [](double t) { return t; }).p_value, 0.001);
  auto y = x;
  for (auto& v : y) v = v * v;
  EXPECT_LT(ks_test(y, [](double t) { return t; }).p_value, 1e-6);
}

TEST(Kolmogorov, TwoSample) {
  const auto a = uniforms(3000, 4), b = uniforms(2000, 5);
  EXPECT_GT(ks_test(a, b).p_value, 0.001);
  auto c = b;
  for (auto& v : c) v += 0.1;
  EXPECT_LT(ks_test(a, c).p_value, 1e-6);
}

TEST(Kolmogorov, TooFewSamplesThrows) {
  EXPECT_THROW(ks_test(uniforms(5, 1), [](double t) { return t; }),
               InsufficientData);
}

TEST(Exponential, ScaleFreeAndExact) {
  auto x = uniforms(4000, 6);
  for (auto& v : x) v = -std::log(v) / 3.0;
  EXPECT_GT(exponentiality_test(x).p_value, 0.001);
  EXPECT_LT(exp1_test(x).p_value, 1e-6);
  for (auto& v : x) v *= 3.0;
  EXPECT_GT(exp1_test(x).p_value, 0.001);
}

TEST(ChiSquare, SurvivalMatchesOracle) {
  EXPECT_NEAR(chi_square_sf(7.0, 3.0), oracle::kChi2Sf_7_3, 1e-10);
  EXPECT_NEAR(chi_square_sf(150.0, 120.0), oracle::kChi2Sf_150_120, 1e-10);
  EXPECT_NEAR(chi_square_cdf(7.0, 3.0) + chi_square_sf(7.0, 3.0), 1.0, 1e-14);
}

TEST(ChiSquare, GeometricCounts) {
  std::mt19937_64 gen(7);
  std::geometric_distribution<long long> g(1.0 / 3.0);
  std::vector<long long> c(20000);
  for (auto& v : c) v = g(gen) + 1;  // support {1, 2, ...}, mean 3
  EXPECT_GT(geometric_test(c, 3.0, false).p_value, 0.001);
  EXPECT_LT(geometric_test(c, 2.0, false).p_value, 1e-6);
}

TEST(Dispersion, PoissonAndOverdispersed) {
  std::mt19937_64 gen(8);
  std::poisson_distribution<long long> p5(5.0);
  std::vector<long long> c(5000);
  for (auto& v : c) v = p5(gen);
  const auto r = dispersion_test(c);
  EXPECT_NEAR(r.statistic, 1.0, 0.1);
  EXPECT_GT(r.p_value, 0.001);
  std::poisson_distribution<long long> p1(1.0), p9(9.0);
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = i % 2 ? p1(gen) : p9(gen);
  EXPECT_LT(dispersion_test(c).p_value, 1e-6);
}

TEST(Hill, ParetoTailIndex) {
  const auto x = pareto(200000, 0.5, 9);
  const auto h = hill_tail_index(x, 2000);
  EXPECT_NEAR(h.estimate, 0.5, 0.05);
  EXPECT_LE(h.ci_lo, h.estimate);
  EXPECT_GE(h.ci_hi, h.estimate);
  const auto pl = hill_plateau(x);
  EXPECT_TRUE(pl.found);
  EXPECT_NEAR(pl.estimate, 0.5, 0.05);
}

TEST(Hill, ExponentialHasNoPlateau) {
  auto x = uniforms(200000, 10);
  for (auto& v : x) v = -std::log(v);
  EXPECT_FALSE(hill_plateau(x).found);
}

TEST(PointProcess, PowerLawCountAndLaw) {
  Rng rng(11, 0);
  double count = 0;
  const int R = 20000;
  std::vector<double> pts;
  for (int k = 0; k < R; ++k) {
    const auto p = sample_power_law_points(
        1.0, 0.5, 1.0, std::numeric_limits<double>::infinity(), rng);
    count += p.size();
    pts.insert(pts.end(), p.begin(), p.end());
  }
  EXPECT_NEAR(count / R, 2.0, 4 * std::sqrt(2.0 / R));
  // Points above 1 have tail theta^-1/2.
  EXPECT_GT(ks_test(pts, [](double t) { return 1.0 - 1.0 / std::sqrt(t); })
                .p_value,
            0.001);
}

TEST(PointProcess, QuadratureIntensity) {
  Rng rng(12, 0);
  double count = 0;
  const int R = 2000;
  std::vector<double> pts;
  for (int k = 0; k < R; ++k) {
    const auto p = sample_poisson_points([](double x) { return std::exp(-x); },
                                         0.0, 40.0, rng);
    count += p.size();
    pts.insert(pts.end(), p.begin(), p.end());
  }
  EXPECT_NEAR(count / R, 1.0, 4 * std::sqrt(1.0 / R));
  EXPECT_GT(exp1_test(pts).p_value, 0.001);
}

TEST(StableOracle, CenteredAboveOne) {
  const auto x = stable_sum_samples(1.5, 0.2, 20000, 13);
  EXPECT_LT(std::abs(mean(x)), 0.15);
}

TEST(StableOracle, DeterministicAcrossWorkers) {
  EXPECT_EQ(stable_sum_samples(0.5, 0.2, 500, 14, 1),
            stable_sum_samples(0.5, 0.2, 500, 14, 4));
}

TEST(StableOracle, FloorBiasBelowOne) {
  EXPECT_NEAR(stable_floor_bias(0.5, 0.2),
              std::pow(kStableFloor, 0.5) / 0.5, 1e-15);
}

TEST(Summaries, QuantileAndScaleMatch) {
  const std::vector<double> x = {1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(quantile(x, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile(x, 0.25), 1.75);
  EXPECT_DOUBLE_EQ(iqr(x), 1.5);
  const auto z = scale_match(uniforms(1001, 15));
  EXPECT_NEAR(median(z), 0.0, 1e-12);
  EXPECT_NEAR(iqr(z), 1.0, 1e-12);
  EXPECT_NEAR(variance({1, 2, 3, 4}), 5.0 / 3.0, 1e-15);
  EXPECT_NEAR(correlation({1, 2, 3}, {2, 4, 6}), 1.0, 1e-15);
}

TEST(Summaries, MedianScale) {
  const auto z = median_scale({2, 4, 6, 8, 10});
  EXPECT_DOUBLE_EQ(median(z), 1.0);
  EXPECT_DOUBLE_EQ(z.front(), 1.0 / 3.0);
  EXPECT_THROW(median_scale({-1, 0, 0}), InsufficientData);
}

// Two oracle batches of the same index agree after median scaling, and a
// shifted index is told apart.
TEST(StableOracle, MedianScaledBatchesAgree) {
  const auto ref = median_scale(stable_sum_samples(0.45, 0.2, 5000, 41));
  for (std::uint64_t seed : {42, 43, 44}) {
    const auto x = median_scale(stable_sum_samples(0.45, 0.2, 2000, seed));
    EXPECT_GT(ks_test(x, ref).p_value, 0.001) << seed;
  }
  const auto far = median_scale(stable_sum_samples(0.3, 0.2, 2000, 45));
  EXPECT_LT(ks_test(far, ref).p_value, 1e-6);
}

TEST(Summaries, LogLogSlopeOfPareto) {
  const auto x = pareto(200000, 0.5, 16);
  EXPECT_NEAR(loglog_survival_slope(x, 10.0, 1000.0), -0.5, 0.05);
}
