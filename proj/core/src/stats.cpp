#include "striprw/stats.hpp"

#include <algorithm>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "striprw/error.hpp"
#include "striprw/parallel.hpp"

namespace striprw {

const char* method_name(TestMethod m) {
  switch (m) {
    case TestMethod::kKS1Sample:
      return "KS-1sample";
    case TestMethod::kKS2Sample:
      return "KS-2sample";
    case TestMethod::kChiSquare:
      return "chi-square";
    case TestMethod::kDispersion:
      return "dispersion";
  }
  return "unknown";
}

std::string TestReport::to_json() const {
  std::ostringstream os;
  os.precision(17);
  os << "{\"statistic\": " << statistic << ", \"p_value\": " << p_value
     << ", \"n_samples\": " << n_samples << ", \"method\": \""
     << method_name(method) << "\"";
  if (dof > 0) os << ", \"dof\": " << dof;
  if (!warning.empty()) os << ", \"warning\": \"" << warning << "\"";
  os << "}";
  return os.str();
}

namespace {

void require_samples(std::size_t n, std::size_t need = kMinTestSamples) {
  if (n < need) {
    throw InsufficientData("need at least " + std::to_string(need) +
                           " samples, got " + std::to_string(n));
  }
}

// Q(x) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 x^2).
double kolmogorov_q(double x) {
  if (x <= 0.0) return 1.0;
  if (x < 1.18) {
    // Dual series: 1 - sqrt(2 pi)/x sum exp(-(2k-1)^2 pi^2 / (8 x^2)).
    const double y = std::exp(-M_PI * M_PI / (8.0 * x * x));
    double sum = 0.0;
    for (int k = 1; k <= 50; ++k) {
      const double term = std::pow(y, (2.0 * k - 1) * (2.0 * k - 1));
      sum += term;
      if (term < 1e-17) break;
    }
    return std::clamp(1.0 - std::sqrt(2.0 * M_PI) / x * sum, 0.0, 1.0);
  }
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * x * x);
    sum += (k % 2 ? term : -term);
    if (term < 1e-17) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

}  // namespace

double kolmogorov_pvalue(double d, double ne) {
  const double sn = std::sqrt(ne);
  return kolmogorov_q((sn + 0.12 + 0.11 / sn) * d);
}

TestReport ks_test(std::vector<double> x,
                   const std::function<double(double)>& cdf) {
  require_samples(x.size());
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  TestReport r;
  r.statistic = d;
  r.p_value = kolmogorov_pvalue(d, n);
  r.n_samples = static_cast<long>(x.size());
  r.method = TestMethod::kKS1Sample;
  return r;
}

TestReport ks_test(std::vector<double> a, std::vector<double> b) {
  require_samples(a.size());
  require_samples(b.size());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(i / na - j / nb));
  }
  TestReport r;
  r.statistic = d;
  r.p_value = kolmogorov_pvalue(d, na * nb / (na + nb));
  r.n_samples = static_cast<long>(a.size() + b.size());
  r.method = TestMethod::kKS2Sample;
  return r;
}

TestReport exp1_test(std::vector<double> x) {
  return ks_test(std::move(x),
                 [](double t) { return t <= 0 ? 0.0 : -std::expm1(-t); });
}

TestReport exponentiality_test(std::vector<double> x) {
  require_samples(x.size());
  const double m = mean(x);
  if (!(m > 0.0)) throw InsufficientData("sample mean is not positive");
  for (double& v : x) v /= m;
  return exp1_test(std::move(x));
}

double chi_square_sf(double x, double dof) {
  if (x <= 0.0) return 1.0;
  return boost::math::gamma_q(dof / 2.0, x / 2.0);
}

double chi_square_cdf(double x, double dof) {
  if (x <= 0.0) return 0.0;
  return boost::math::gamma_p(dof / 2.0, x / 2.0);
}

TestReport dispersion_test(const std::vector<long long>& counts) {
  require_samples(counts.size());
  std::vector<double> x(counts.begin(), counts.end());
  const double m = mean(x);
  const double v = variance(x);
  TestReport r;
  r.method = TestMethod::kDispersion;
  r.n_samples = static_cast<long>(x.size());
  if (!(m > 0.0)) {
    r.statistic = 0.0;
    r.p_value = 0.0;
    r.warning = "all counts are zero";
    return r;
  }
  r.statistic = v / m;
  const double dof = static_cast<double>(x.size() - 1);
  r.dof = dof;
  const double chi = dof * v / m;
  r.p_value = std::min(1.0, 2.0 * std::min(chi_square_cdf(chi, dof),
                                           chi_square_sf(chi, dof)));
  return r;
}

TestReport chi_square_test(const std::vector<double>& observed,
                           const std::vector<double>& expected, int dof) {
  if (observed.size() != expected.size()) {
    throw StructuralError("observed and expected differ in length");
  }
  double chi = 0.0;
  double total = 0.0;
  for (std::size_t k = 0; k < observed.size(); ++k) {
    total += observed[k];
    if (expected[k] > 0) {
      chi += (observed[k] - expected[k]) * (observed[k] - expected[k]) /
             expected[k];
    }
  }
  TestReport r;
  r.method = TestMethod::kChiSquare;
  r.statistic = chi;
  r.n_samples = static_cast<long>(total);
  r.dof = dof;
  r.p_value = dof > 0 ? chi_square_sf(chi, dof) : (chi == 0.0 ? 1.0 : 0.0);
  return r;
}

TestReport geometric_test(const std::vector<long long>& counts, double mu,
                          bool fitted) {
  require_samples(counts.size());
  if (!(mu >= 1.0)) throw ConfigError("geometric mean must be >= 1");
  const double n = static_cast<double>(counts.size());
  const double p = 1.0 / mu;
  // Cells 1..J, then {> J}; each expects at least 5.
  std::vector<double> expected;
  double tail = 1.0;  // P(X > j) after j cells
  for (long j = 1;; ++j) {
    const double pj = p * std::pow(1.0 - p, static_cast<double>(j - 1));
    if (n * pj < 5.0 || n * (tail - pj) < 5.0) break;
    expected.push_back(n * pj);
    tail -= pj;
  }
  expected.push_back(n * tail);
  const long J = static_cast<long>(expected.size()) - 1;
  std::vector<double> observed(expected.size(), 0.0);
  for (long long c : counts) {
    if (c < 1) throw ConfigError("geometric counts must be >= 1");
    observed[c <= J ? c - 1 : J] += 1.0;
  }
  const int dof = static_cast<int>(expected.size()) - 1 - (fitted ? 1 : 0);
  return chi_square_test(observed, expected, dof);
}

HillEstimate hill_sorted_desc(const std::vector<double>& desc, long k) {
  const long n = static_cast<long>(desc.size());
  if (k < 1 || k >= n) throw ConfigError("Hill k must lie in [1, n)");
  if (!(desc[k] > 0.0)) throw ConfigError("Hill estimator needs positive data");
  const double ref = std::log(desc[k]);
  double g = 0.0;
  long ties = 0;
  for (long i = 0; i < k; ++i) {
    g += std::log(desc[i]) - ref;
    if (desc[i] == desc[k]) ++ties;
  }
  g /= k;
  HillEstimate h;
  h.k = k;
  h.estimate = g > 0 ? 1.0 / g : std::numeric_limits<double>::infinity();
  const double half = 1.96 / std::sqrt(static_cast<double>(k));
  h.ci_lo = h.estimate * (1.0 - half);
  h.ci_hi = h.estimate * (1.0 + half);
  if (ties > k / 10) {
    h.warning = "ties exceed 10% of the top-k order statistics";
  }
  return h;
}

HillEstimate hill_tail_index(std::vector<double> x, long k) {
  if (2 * k >= static_cast<long>(x.size())) {
    throw ConfigError("Hill k must be below n/2");
  }
  std::sort(x.begin(), x.end(), std::greater<>());
  return hill_sorted_desc(x, k);
}

HillPlateau hill_plateau(std::vector<double> x) {
  const long n = static_cast<long>(x.size());
  HillPlateau out;
  const long k_min = std::max<long>(100, n / 1000);
  const long k_max = n / 2 - 1;
  if (k_min * 4 > k_max) return out;
  std::sort(x.begin(), x.end(), std::greater<>());
  // prefix[k] = sum_{i<k} ln x_i
  std::vector<double> prefix(static_cast<std::size_t>(k_max) + 1, 0.0);
  for (long i = 0; i < k_max; ++i) prefix[i + 1] = prefix[i] + std::log(x[i]);
  std::vector<long> ks;
  for (double k = static_cast<double>(k_min); k <= k_max; k *= 1.1) {
    const long kk = static_cast<long>(std::llround(k));
    if (ks.empty() || kk != ks.back()) ks.push_back(kk);
  }
  for (long k : ks) {
    const double g = prefix[k] / k - std::log(x[k]);
    out.path.emplace_back(k, g > 0 ? 1.0 / g : 0.0);
  }
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < ks.size(); ++a) {
    if (ks[a] * 4 > k_max) break;
    double lo = 1e300, hi = -1e300, sum = 0.0;
    int cnt = 0;
    for (std::size_t b = a; b < ks.size() && ks[b] <= 4 * ks[a]; ++b) {
      lo = std::min(lo, out.path[b].second);
      hi = std::max(hi, out.path[b].second);
      sum += out.path[b].second;
      ++cnt;
    }
    const double avg = sum / cnt;
    const double spread = (hi - lo) / avg;
    if (spread < best) {
      best = spread;
      out.estimate = avg;
      out.k_lo = ks[a];
      out.k_hi = 4 * ks[a];
      out.spread = spread;
    }
  }
  out.found = best < 0.10;
  return out;
}

namespace {

long long poisson_count(double mu, Rng& rng) {
  if (!(mu > 0.0)) return 0;
  std::poisson_distribution<long long> dist(mu);
  return dist(rng);
}

}  // namespace

std::vector<double> sample_power_law_points(double c, double s, double lo,
                                            double hi, Rng& rng) {
  if (!(s > 0.0) || !(lo > 0.0)) {
    throw ConfigError("power-law intensity needs s > 0 and lo > 0");
  }
  std::vector<double> out;
  if (!(hi > lo)) return out;
  const double a = std::pow(lo, -s);
  const double b = std::isinf(hi) ? 0.0 : std::pow(hi, -s);
  const long long n = poisson_count(c * (a - b) / s, rng);
  out.reserve(static_cast<std::size_t>(n));
  for (long long k = 0; k < n; ++k) {
    const double u = rng.uniform();
    out.push_back(std::pow(a - u * (a - b), -1.0 / s));
  }
  return out;
}

std::vector<double> sample_poisson_points(
    const std::function<double(double)>& f, double lo, double hi, Rng& rng) {
  std::vector<double> out;
  if (!(hi > lo)) return out;
  using boost::math::quadrature::exp_sinh;
  using boost::math::quadrature::gauss_kronrod;
  auto integrate = [&](double a, double b) {
    if (std::isinf(b)) {
      if (!(a > 0.0)) throw ConfigError("infinite window needs lo > 0");
      exp_sinh<double> integrator;
      return integrator.integrate(f, a, b);
    }
    return gauss_kronrod<double, 31>::integrate(f, a, b, 15, 1e-12);
  };
  double mu = 0.0;
  try {
    mu = integrate(lo, hi);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("intensity is not integrable: ") + e.what());
  }
  if (!std::isfinite(mu) || mu < 0.0) {
    throw ConfigError("intensity is not integrable on the window");
  }
  const long long n = poisson_count(mu, rng);
  for (long long k = 0; k < n; ++k) {
    const double target = rng.uniform() * mu;
    // Find an upper end with enough mass, then bisect.
    double a = lo;
    double acc = 0.0;
    double b = std::isinf(hi) ? std::max(2.0 * lo, lo + 1.0) : hi;
    if (std::isinf(hi)) {
      for (;;) {
        const double piece = integrate(a, b);
        if (acc + piece >= target) break;
        acc += piece;
        a = b;
        b *= 2.0;
      }
    }
    double l = a, r = b;
    for (int it = 0; it < 80 && r - l > 1e-13 * std::max(1.0, std::abs(r));
         ++it) {
      const double mid = 0.5 * (l + r);
      if (acc + integrate(a, mid) < target) {
        l = mid;
      } else {
        r = mid;
      }
    }
    out.push_back(0.5 * (l + r));
  }
  std::sort(out.begin(), out.end());
  return out;
}

double stable_floor_bias(double s, double delta) {
  if (s < 1.0) {
    return std::pow(kStableFloor, 1.0 - s) / (1.0 - s);
  }
  (void)delta;
  return 0.0;
}

double stable_sum_oracle(double s, double delta, Rng& rng) {
  if (!(s > 0.0) || !(s < 2.0)) throw ConfigError("s must lie in (0, 2)");
  if (!(delta > 0.0)) throw ConfigError("delta must be positive");
  const double floor = s < 1.0 ? kStableFloor : delta;
  const double a = std::pow(floor, -s);
  const long long n = poisson_count(a / s, rng);
  double sum = 0.0;
  for (long long k = 0; k < n; ++k) {
    sum += std::pow(a * rng.uniform(), -1.0 / s);  // floor * U^(-1/s)
  }
  if (s > 1.0) {
    sum -= 1.0 / ((s - 1.0) * std::pow(delta, s - 1.0));
  } else if (s == 1.0) {
    sum -= std::abs(std::log(delta));
  }
  return sum;
}

std::vector<double> stable_sum_samples(double s, double delta, long count,
                                       std::uint64_t seed, int workers) {
  const auto key = derive_key(seed, StreamDomain::kAuxiliary, 0x57ab1e);
  return parallel_map<double>(static_cast<std::size_t>(count), workers,
                              [&](std::size_t i) {
                                Rng rng(key, i);
                                return stable_sum_oracle(s, delta, rng);
                              });
}

double loglog_survival_slope(const std::vector<double>& samples, double lo,
                             double hi, int points) {
  if (samples.empty()) throw InsufficientData("no samples");
  std::vector<double> x = samples;
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  std::vector<double> lx, ly;
  for (int i = 0; i < points; ++i) {
    const double t = lo * std::pow(hi / lo, static_cast<double>(i) / (points - 1));
    const auto it = std::lower_bound(x.begin(), x.end(), t);
    const double surv = static_cast<double>(x.end() - it) / n;
    if (surv <= 0.0) continue;
    lx.push_back(std::log(t));
    ly.push_back(std::log(surv));
  }
  if (lx.size() < 2) throw InsufficientData("survival vanishes on the range");
  const double mx = mean(lx), my = mean(ly);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  return sxy / sxx;
}

double mean(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double variance(const std::vector<double>& x) {
  if (x.size() < 2) return 0.0;
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / static_cast<double>(x.size() - 1);
}

double quantile(std::vector<double> x, double q) {
  if (x.empty()) throw InsufficientData("empty sample");
  std::sort(x.begin(), x.end());
  const double h = (static_cast<double>(x.size()) - 1.0) * q;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

double median(std::vector<double> x) { return quantile(std::move(x), 0.5); }

double iqr(std::vector<double> x) {
  return quantile(x, 0.75) - quantile(x, 0.25);
}

double correlation(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) return 0.0;
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

std::vector<double> scale_match(const std::vector<double>& x) {
  const double med = median(x);
  const double spread = iqr(x);
  if (!(spread > 0.0)) throw InsufficientData("zero interquartile range");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - med) / spread;
  return out;
}

std::vector<double> median_scale(const std::vector<double>& x) {
  const double med = median(x);
  if (!(med > 0.0)) throw InsufficientData("median is not positive");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] / med;
  return out;
}

}  // namespace striprw
