#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "striprw/rng.hpp"

namespace striprw {

enum class TestMethod { kKS1Sample, kKS2Sample, kChiSquare, kDispersion };

const char* method_name(TestMethod m);

struct TestReport {
  double statistic = 0.0;
  double p_value = 1.0;
  long n_samples = 0;
  double dof = 0.0;  // chi-square tests only
  TestMethod method = TestMethod::kKS1Sample;
  std::string warning;

  std::string to_json() const;
};

inline constexpr long kMinTestSamples = 20;

// Asymptotic Kolmogorov tail with Stephens' finite-n correction,
// P(sqrt(ne) D > x) evaluated at x = (sqrt(ne) + 0.12 + 0.11/sqrt(ne)) D.
double kolmogorov_pvalue(double d, double n_effective);

TestReport ks_test(std::vector<double> samples,
                   const std::function<double(double)>& cdf);
TestReport ks_test(std::vector<double> a, std::vector<double> b);

// KS against Exp(1) after dividing by the sample mean.
TestReport exponentiality_test(std::vector<double> samples);

// KS against Exp(1) as is.
TestReport exp1_test(std::vector<double> samples);

// var/mean of counts; two-sided chi-square p with n-1 degrees of freedom.
TestReport dispersion_test(const std::vector<long long>& counts);

// Pearson chi-square of observed against expected cell counts.
TestReport chi_square_test(const std::vector<double>& observed,
                           const std::vector<double>& expected, int dof);

// Chi-square of counts on {1, 2, ...} against the geometric law with the
// given mean (>= 1). Cells are merged from the right until each expects at
// least 5. `fitted` subtracts one degree of freedom.
TestReport geometric_test(const std::vector<long long>& counts, double mean,
                          bool fitted);

double chi_square_sf(double x, double dof);
double chi_square_cdf(double x, double dof);

struct HillEstimate {
  double estimate = 0.0;  // tail index alpha
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  long k = 0;
  std::string warning;
};

// Hill estimator over the top k order statistics of positive samples.
HillEstimate hill_tail_index(std::vector<double> samples, long k);

// Same on data already sorted in decreasing order.
HillEstimate hill_sorted_desc(const std::vector<double>& desc, long k);

struct HillPlateau {
  bool found = false;
  double estimate = 0.0;
  long k_lo = 0;
  long k_hi = 0;
  double spread = 0.0;  // (max - min) / mean over [k_lo, k_hi]
  std::vector<std::pair<long, double>> path;
};

// Scans k on a log grid from max(100, n/1000) to n/2 and picks the window
// [k, 4k] of smallest relative spread; found iff that spread is < 10%.
HillPlateau hill_plateau(std::vector<double> samples);

// Poisson process on [lo, hi] with the given intensity. The mean measure and
// the location law come from adaptive quadrature; hi may be infinite.
std::vector<double> sample_poisson_points(
    const std::function<double(double)>& intensity, double lo, double hi,
    Rng& rng);

// Intensity c * theta^-(1+s) on [lo, hi], sampled by inversion.
std::vector<double> sample_power_law_points(double c, double s, double lo,
                                            double hi, Rng& rng);

// Floor used for s < 1 sums.
inline constexpr double kStableFloor = 1e-6;

// Sum of the points of a Poisson process with intensity theta^-(1+s) above
// a floor: kStableFloor for s < 1 (delta is ignored), delta
// otherwise, centered by 1/((s-1) delta^(s-1)) for 1 < s < 2 and by |ln
// delta| for s = 1. Dropping points below the floor biases s < 1 sums by
// floor^(1-s)/(1-s).
double stable_sum_oracle(double s, double delta, Rng& rng);
double stable_floor_bias(double s, double delta);

std::vector<double> stable_sum_samples(double s, double delta, long count,
                                       std::uint64_t seed, int workers = 1);

// Least-squares slope of ln S(t) against ln t on a log grid of `points`
// values in [lo, hi], S the empirical survival function of `samples`.
double loglog_survival_slope(const std::vector<double>& samples, double lo,
                             double hi, int points = 20);

double mean(const std::vector<double>& x);
double variance(const std::vector<double>& x);  // unbiased
double quantile(std::vector<double> x, double q);  // type 7
double median(std::vector<double> x);
double iqr(std::vector<double> x);
double correlation(const std::vector<double>& x, const std::vector<double>& y);

// (x - median) / IQR, elementwise.
std::vector<double> scale_match(const std::vector<double>& x);

// x / median, elementwise; the matching for positive laws without centering
// (stable index below 1). Requires a positive median.
std::vector<double> median_scale(const std::vector<double>& x);

}  // namespace striprw
