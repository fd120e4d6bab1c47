#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "striprw/algebra.hpp"
#include "striprw/env.hpp"
#include "striprw/rng.hpp"

namespace striprw {

struct TrajectorySummary {
  Site start;
  long N = 0;
  long long hit_time = -1;  // first t with Z_t = N; -1 if never reached
  long long occupation_time = 0;  // visits to layers [0, N-1]
  long long total_steps = 0;
  std::vector<long long> xi_layer;  // layers 0 .. N-1
  // Sparse per-site counts sorted by key = n*m + (i-1).
  std::vector<std::pair<long, long long>> xi_site;
  int m = 1;
  long cutoff_layer = 0;  // run stopped on first entry to this layer
  long cutoff_l = 0;
  double cutoff_certificate = 0.0;
  bool timed_out = false;

  long long xi_at(const Site& z) const;
  long long xi_layer_at(long n) const {
    return n >= 0 && n < static_cast<long>(xi_layer.size()) ? xi_layer[n] : 0;
  }
};

struct RunOptions {
  long long max_steps = 2'000'000'000LL;
  bool record_sites = true;
};

// Cumulative transition tables over a window. Sites at the window's edge
// layers cannot be stepped from.
class Walker {
 public:
  explicit Walker(const EnvironmentWindow& env);

  int m() const { return m_; }
  long first() const { return first_; }
  long last() const { return last_; }

  Site step(const Site& z, Rng& rng) const;

  // Stops on first entry to layer N.
  TrajectorySummary run_to_hit(const Site& start, long N, Rng& rng,
                               const RunOptions& opts = {}) const;

  // Runs past the hit of L_N until first entry to layer `cutoff_layer`.
  TrajectorySummary run_until(const Site& start, long N, long cutoff_layer,
                              Rng& rng, const RunOptions& opts = {}) const;

 private:
  TrajectorySummary run(const Site& start, long N, long stop_layer,
                        bool stop_at_hit, Rng& rng,
                        const RunOptions& opts) const;

  int m_;
  long first_;
  long last_;
  std::vector<double> cum_;  // per site 3m cumulative masses
};

// Samples one transition from transition_distribution.
Site step(const EnvironmentWindow& env, const Site& z, Rng& rng);

TrajectorySummary run_to_hit(const EnvironmentWindow& env, const Site& start,
                             long N, Rng& rng, long long max_steps);

struct Cutoff {
  long l = 0;
  long layer = 0;  // N + l
  double certificate = 0.0;
};

// Smallest l with return_probability_bound(N-1, l) < tail_eps.
Cutoff certify_cutoff(const ChainState& chain, long N, double tail_eps,
                      std::optional<double> edge_factor = {});

// Simulates until the walk reaches L_{N + l*} and records T_N.
TrajectorySummary occupation_time(const EnvironmentWindow& env,
                                  const ChainState& chain, const Site& start,
                                  long N, Rng& rng, double tail_eps,
                                  const RunOptions& opts = {});

// Exact sampler for m = 1 through edge-crossing counts. At a site x the
// number of left departures given u right departures is negative binomial
// with success probability p/(p+q), and the holding count given d departures
// is negative binomial with success probability 1-r. The run from `start`
// to N and the run from N to `cutoff_layer` are sampled separately.
struct CrossingRun {
  long long hit_time = 0;
  long long occupation_time = 0;
  long lo = 0;                   // layer of visits[0]
  std::vector<long long> visits;  // lifetime visits per site, if recorded
  long long visits_at(long x) const {
    const long k = x - lo;
    return k >= 0 && k < static_cast<long>(visits.size()) ? visits[k] : 0;
  }
};

CrossingRun sample_crossings(const EnvironmentWindow& env, long start, long N,
                             long cutoff_layer, Rng& rng,
                             bool record_sites = false);

// Failures before k successes; zero for k = 0.
long long negative_binomial(long long k, double p, Rng& rng);

// 1D walk with jumps |k| <= m on the integers whose site laws are those
// encoded in a window sampled from an embedded bounded-jump law.
class BoundedJumpWalk1D {
 public:
  BoundedJumpWalk1D(const EnvironmentLaw& law, const EnvironmentWindow& env);

  long lo() const { return lo_; }
  long hi() const { return hi_; }
  long step(long x, Rng& rng) const;
  // Steps until x >= target; -1 on timeout.
  long long hitting_time(long x, long target, Rng& rng,
                         long long max_steps = 2'000'000'000LL) const;
  const std::vector<double>& jump_law(long x) const;

 private:
  int m_;
  long lo_, hi_;
  std::vector<std::vector<double>> laws_;  // per site, length 2m+1
  std::vector<double> cum_;
};

struct VisitStatistics {
  long replicas = 0;
  double mean_a = 0.0;
  double var_a = 0.0;
  double mean_b = 0.0;
  double var_b = 0.0;
  double corr_ab = 0.0;
  double hit_fraction_a = 0.0;  // empirical P(xi_a >= 1)
  // (q_a, p_a) from E xi = q/p, Var xi = q(2-q-p)/p^2.
  double implied_q = 0.0;
  double implied_p = 0.0;
  // With a formula mean F_a of visits given a hit: q_a F_a against the
  // empirical mean, and its z-score.
  double implied_mean = 0.0;
  double implied_z = 0.0;
  double geometric_chi2 = 0.0;
  double geometric_p = 0.0;
  int geometric_dof = 0;
  std::string warning;
};

VisitStatistics visit_statistics(const std::vector<TrajectorySummary>& runs,
                                 const Site& a, const Site& b,
                                 std::optional<double> F_a = {});

// Same statistics from raw count vectors.
VisitStatistics visit_statistics_from_counts(const std::vector<long long>& xa,
                                             const std::vector<long long>& xb,
                                             std::optional<double> F_a = {});

}  // namespace striprw
