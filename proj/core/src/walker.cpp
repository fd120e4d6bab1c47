#include "striprw/walker.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "striprw/error.hpp"
#include "striprw/occupation.hpp"
#include "striprw/stats.hpp"

namespace striprw {

long long TrajectorySummary::xi_at(const Site& z) const {
  const long key = z.n * m + (z.i - 1);
  const auto it = std::lower_bound(
      xi_site.begin(), xi_site.end(), key,
      [](const std::pair<long, long long>& e, long k) { return e.first < k; });
  return it != xi_site.end() && it->first == key ? it->second : 0;
}

Walker::Walker(const EnvironmentWindow& env)
    : m_(env.m()), first_(env.first()), last_(env.last()) {
  const int w = 3 * m_;
  cum_.resize(env.size() * m_ * w);
  for (long n = first_; n <= last_; ++n) {
    const auto P = env.P(n), Q = env.Q(n), R = env.R(n);
    for (int i = 0; i < m_; ++i) {
      double* c = cum_.data() + ((n - first_) * m_ + i) * w;
      double acc = 0.0;
      for (int j = 0; j < m_; ++j) c[j] = (acc += P(i, j));
      for (int j = 0; j < m_; ++j) c[m_ + j] = (acc += Q(i, j));
      for (int j = 0; j < m_; ++j) c[2 * m_ + j] = (acc += R(i, j));
      // Rounding guard: the last positive outcome absorbs the slack.
      int k = w - 1;
      while (k > 0 && c[k] == c[k - 1]) --k;
      for (int j = k; j < w; ++j) c[j] = 2.0;
    }
  }
}

Site Walker::step(const Site& z, Rng& rng) const {
  if (z.n <= first_) {
    throw NeedsWiderWindow("walker reached the left window edge", 1, true);
  }
  if (z.n >= last_) {
    throw NeedsWiderWindow("walker reached the right window edge", 1, false);
  }
  const int w = 3 * m_;
  const double* c = cum_.data() + ((z.n - first_) * m_ + (z.i - 1)) * w;
  const double u = rng.uniform();
  int j = 0;
  while (u >= c[j]) ++j;
  if (j < m_) return {z.n + 1, j + 1};
  if (j < 2 * m_) return {z.n - 1, j - m_ + 1};
  return {z.n, j - 2 * m_ + 1};
}

TrajectorySummary Walker::run(const Site& start, long N, long stop_layer,
                              bool stop_at_hit, Rng& rng,
                              const RunOptions& opts) const {
  TrajectorySummary s;
  s.start = start;
  s.N = N;
  s.m = m_;
  s.cutoff_layer = stop_layer;
  s.xi_layer.assign(static_cast<std::size_t>(std::max<long>(N, 0)), 0);
  std::vector<long long> dense;
  std::vector<long> touched;
  if (opts.record_sites) {
    dense.assign((last_ - first_ + 1) * static_cast<std::size_t>(m_), 0);
  }
  Site z = start;
  long long t = 0;
  if (z.n == N) s.hit_time = 0;
  for (;;) {
    if (stop_at_hit ? z.n == N : z.n == stop_layer) break;
    if (t >= opts.max_steps) {
      s.timed_out = true;
      break;
    }
    if (z.n >= 0 && z.n < N) {
      ++s.xi_layer[z.n];
      ++s.occupation_time;
    }
    if (opts.record_sites) {
      long long& cell = dense[(z.n - first_) * m_ + (z.i - 1)];
      if (cell++ == 0) touched.push_back((z.n - first_) * m_ + (z.i - 1));
    }
    z = step(z, rng);
    ++t;
    if (z.n == N && s.hit_time < 0) s.hit_time = t;
  }
  s.total_steps = t;
  if (opts.record_sites) {
    std::sort(touched.begin(), touched.end());
    s.xi_site.reserve(touched.size());
    for (long k : touched) {
      s.xi_site.emplace_back(k + first_ * m_, dense[k]);
    }
  }
  return s;
}

TrajectorySummary Walker::run_to_hit(const Site& start, long N, Rng& rng,
                                     const RunOptions& opts) const {
  return run(start, N, N, true, rng, opts);
}

TrajectorySummary Walker::run_until(const Site& start, long N,
                                    long cutoff_layer, Rng& rng,
                                    const RunOptions& opts) const {
  if (cutoff_layer < N) throw ConfigError("cutoff layer precedes N");
  return run(start, N, cutoff_layer, false, rng, opts);
}

Site step(const EnvironmentWindow& env, const Site& z, Rng& rng) {
  const auto dist = transition_distribution(env, z);
  const double u = rng.uniform();
  double acc = 0.0;
  for (const auto& t : dist) {
    acc += t.prob;
    if (u < acc) return t.to;
  }
  for (auto it = dist.rbegin(); it != dist.rend(); ++it) {
    if (it->prob > 0) return it->to;
  }
  return dist.back().to;
}

TrajectorySummary run_to_hit(const EnvironmentWindow& env, const Site& start,
                             long N, Rng& rng, long long max_steps) {
  RunOptions o;
  o.max_steps = max_steps;
  return Walker(env).run_to_hit(start, N, rng, o);
}

Cutoff certify_cutoff(const ChainState& chain, long N, double tail_eps,
                      std::optional<double> edge_factor) {
  const auto bounds = return_probability_bounds(chain, N - 1, edge_factor);
  for (std::size_t l = 0; l < bounds.size(); ++l) {
    if (bounds[l] < tail_eps) {
      Cutoff c;
      c.l = static_cast<long>(l);
      c.layer = N + c.l;
      c.certificate = bounds[l];
      return c;
    }
  }
  throw NeedsWiderWindow("return bound does not reach tail_eps inside window",
                         static_cast<long>(bounds.size()) / 2 + 50, false);
}

TrajectorySummary occupation_time(const EnvironmentWindow& env,
                                  const ChainState& chain, const Site& start,
                                  long N, Rng& rng, double tail_eps,
                                  const RunOptions& opts) {
  const Cutoff cut = certify_cutoff(chain, N, tail_eps);
  if (cut.layer >= env.last()) {
    throw NeedsWiderWindow("cutoff layer is past the window",
                           cut.layer - env.last() + 1, false);
  }
  TrajectorySummary s = Walker(env).run_until(start, N, cut.layer, rng, opts);
  s.cutoff_l = cut.l;
  s.cutoff_certificate = cut.certificate;
  return s;
}

long long negative_binomial(long long k, double p, Rng& rng) {
  if (k <= 0 || p >= 1.0) return 0;
  std::negative_binomial_distribution<long long> dist(k, p);
  return dist(rng);
}

CrossingRun sample_crossings(const EnvironmentWindow& env, long start, long N,
                             long cutoff_layer, Rng& rng, bool record_sites) {
  if (env.m() != 1) throw ConfigError("crossing sampler needs m = 1");
  if (start > N || cutoff_layer < N) {
    throw ConfigError("crossing sampler needs start <= N <= cutoff");
  }
  if (cutoff_layer > env.last()) {
    throw NeedsWiderWindow("cutoff layer is past the window",
                           cutoff_layer - env.last(), false);
  }
  CrossingRun out;
  out.lo = env.first();
  if (record_sites) {
    out.visits.assign(static_cast<std::size_t>(cutoff_layer - out.lo + 1), 0);
  }
  // One excursion system: walk from k0 absorbed at target. Returns the
  // number of steps, adding visits inside [0, N-1] to occupation_time.
  auto leg = [&](long k0, long target) {
    long long steps = 0;
    long long down = 0;  // left departures from x + 1
    for (long x = target - 1;; --x) {
      const long long up = down + (x >= k0 ? 1 : 0);
      if (x < k0 && up == 0) break;
      if (x <= env.first()) {
        throw NeedsWiderWindow("walk left the window", 1, true);
      }
      const double p = env.p(x), q = env.q(x), r = env.r(x);
      down = negative_binomial(up, p / (p + q), rng);
      long long visits = up + down;
      if (r > 0.0) visits += negative_binomial(visits, 1.0 - r, rng);
      steps += visits;
      if (x >= 0 && x < N) out.occupation_time += visits;
      if (record_sites) out.visits[x - out.lo] += visits;
    }
    return steps;
  };
  out.hit_time = start < N ? leg(start, N) : 0;
  if (cutoff_layer > N) leg(N, cutoff_layer);
  return out;
}

BoundedJumpWalk1D::BoundedJumpWalk1D(const EnvironmentLaw& law,
                                     const EnvironmentWindow& env)
    : m_(law.m) {
  if (law.kind != LawKind::kBoundedJump) {
    throw ConfigError("1D walk needs a bounded-jump law");
  }
  if (env.atom_index().size() != env.size() || env.m() != law.m) {
    throw ConfigError("window was not sampled from this law");
  }
  lo_ = env.first() * m_;
  hi_ = (env.last() + 1) * m_ - 1;
  const int K = static_cast<int>(law.jump_atoms.size());
  const int w = 2 * m_ + 1;
  laws_.reserve(hi_ - lo_ + 1);
  cum_.resize(static_cast<std::size_t>(hi_ - lo_ + 1) * w);
  for (long n = env.first(); n <= env.last(); ++n) {
    int combo = env.atom_index()[n - env.first()];
    for (int i = 0; i < m_; ++i) {
      laws_.push_back(law.jump_atoms[combo % K]);
      combo /= K;
    }
  }
  for (std::size_t s = 0; s < laws_.size(); ++s) {
    double acc = 0.0;
    double* c = cum_.data() + s * w;
    for (int k = 0; k < w; ++k) c[k] = (acc += laws_[s][k]);
    int k = w - 1;
    while (k > 0 && c[k] == c[k - 1]) --k;
    for (int j = k; j < w; ++j) c[j] = 2.0;
  }
}

const std::vector<double>& BoundedJumpWalk1D::jump_law(long x) const {
  return laws_.at(static_cast<std::size_t>(x - lo_));
}

long BoundedJumpWalk1D::step(long x, Rng& rng) const {
  if (x - m_ < lo_) throw NeedsWiderWindow("1D walk at left edge", 1, true);
  if (x + m_ > hi_) throw NeedsWiderWindow("1D walk at right edge", 1, false);
  const double* c = cum_.data() + static_cast<std::size_t>(x - lo_) * (2 * m_ + 1);
  const double u = rng.uniform();
  int k = 0;
  while (u >= c[k]) ++k;
  return x + k - m_;
}

long long BoundedJumpWalk1D::hitting_time(long x, long target, Rng& rng,
                                          long long max_steps) const {
  long long t = 0;
  while (x < target) {
    if (t >= max_steps) return -1;
    x = step(x, rng);
    ++t;
  }
  return t;
}

VisitStatistics visit_statistics_from_counts(const std::vector<long long>& xa,
                                             const std::vector<long long>& xb,
                                             std::optional<double> F_a) {
  VisitStatistics v;
  v.replicas = static_cast<long>(xa.size());
  if (xa.empty()) throw InsufficientData("no runs");
  if (v.replicas < 1000) {
    v.warning = "fewer than 1000 replicas: confidence intervals are wide";
  }
  std::vector<double> a(xa.begin(), xa.end()), b(xb.begin(), xb.end());
  v.mean_a = mean(a);
  v.var_a = variance(a);
  v.mean_b = mean(b);
  v.var_b = variance(b);
  v.corr_ab = correlation(a, b);
  long hits = 0;
  std::vector<long long> cond;
  for (long long c : xa) {
    if (c >= 1) {
      ++hits;
      cond.push_back(c);
    }
  }
  v.hit_fraction_a = static_cast<double>(hits) / v.replicas;
  const double E = v.mean_a, V = v.var_a;
  if (E > 0.0) {
    v.implied_p = 2.0 * E / (V + E * E + E);
    v.implied_q = E * v.implied_p;
  }
  if (F_a) {
    v.implied_mean = v.hit_fraction_a * (*F_a);
    // xi - F 1{xi >= 1} has mean zero under the formula.
    std::vector<double> d(xa.size());
    for (std::size_t i = 0; i < xa.size(); ++i) {
      d[i] = static_cast<double>(xa[i]) - (xa[i] >= 1 ? *F_a : 0.0);
    }
    const double se = std::sqrt(variance(d) / static_cast<double>(d.size()));
    v.implied_z = se > 0 ? mean(d) / se : 0.0;
  }
  if (static_cast<long>(cond.size()) >= kMinTestSamples) {
    const double mu = F_a ? *F_a
                          : mean(std::vector<double>(cond.begin(), cond.end()));
    const TestReport r = geometric_test(cond, std::max(mu, 1.0), !F_a);
    v.geometric_chi2 = r.statistic;
    v.geometric_p = r.p_value;
    v.geometric_dof = static_cast<int>(r.dof);
  }
  return v;
}

VisitStatistics visit_statistics(const std::vector<TrajectorySummary>& runs,
                                 const Site& a, const Site& b,
                                 std::optional<double> F_a) {
  std::vector<long long> xa, xb;
  xa.reserve(runs.size());
  xb.reserve(runs.size());
  for (const auto& r : runs) {
    xa.push_back(r.xi_at(a));
    xb.push_back(r.xi_at(b));
  }
  return visit_statistics_from_counts(xa, xb, F_a);
}

}  // namespace striprw
