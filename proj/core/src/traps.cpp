#include "striprw/traps.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "striprw/error.hpp"
#include "striprw/stats.hpp"

namespace striprw {

long trap_depth(long N) {
  if (N < 3) return 0;
  return std::max(0L, static_cast<long>(std::floor(std::log(std::log(double(N))))));
}

std::vector<TrapRecord> detect_traps(const std::vector<double>& w,
                                     const std::vector<double>& rho, long N,
                                     double delta, double s) {
  if (static_cast<long>(w.size()) < N || static_cast<long>(rho.size()) < N) {
    throw StructuralError("w and rho must cover [0, N-1]");
  }
  if (!(delta > 0.0) || !(s > 0.0)) {
    throw ConfigError("delta and s must be positive");
  }
  const long M = trap_depth(N);
  const double threshold = delta * std::pow(static_cast<double>(N), 1.0 / s);
  const long len = static_cast<long>(w.size());
  std::vector<TrapRecord> out;
  long next_massive = std::numeric_limits<long>::max();
  for (long n = std::min(len - 1, N - 1 + M); n >= 0; --n) {
    const bool massive = w[n] >= threshold;
    if (massive && n < N && next_massive - n > M) {
      TrapRecord r;
      r.marked_n = n;
      r.M = M;
      r.left = std::max(0L, n - M);
      r.right = n;
      r.clipped = n < M;
      r.mass = 0.0;
      for (long j = r.left; j <= n; ++j) r.mass += rho[j];
      r.w_value = w[n];
      r.delta = delta;
      r.N = N;
      r.center = trap_center(w, r, 1.0);
      out.push_back(r);
    }
    if (massive) next_massive = n;
  }
  std::reverse(out.begin(), out.end());
  return out;
}

long trap_center(const std::vector<double>& w, const TrapRecord& rec,
                 double R) {
  if (!(R >= 1.0)) throw ConfigError("R must be >= 1");
  double top = 0.0;
  for (long n = rec.left; n <= rec.right; ++n) top = std::max(top, w[n]);
  const double bar = top / R;
  for (long n = rec.right; n >= rec.left; --n) {
    if (R == 1.0 ? w[n] >= bar : w[n] > bar) return n;
  }
  return rec.right;
}

PointSample point_process(const std::vector<TrapRecord>& records, long N,
                          double s) {
  std::vector<TrapRecord> sorted = records;
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.marked_n < b.marked_n; });
  PointSample out;
  const double scale = std::pow(static_cast<double>(N), 1.0 / s);
  for (const auto& r : sorted) {
    out.location.push_back(static_cast<double>(r.marked_n) / N);
    out.theta.push_back(r.mass / scale);
    out.clipped.push_back(r.clipped);
    out.marked_n.push_back(r.marked_n);
  }
  return out;
}

int trap_rung(const TrapRecord& rec, const OccupationProfile& profile) {
  int best = 1;
  for (int y = 2; y <= profile.m; ++y) {
    if (profile.rho_y_at(rec.marked_n, y) >
        profile.rho_y_at(rec.marked_n, best)) {
      best = y;
    }
  }
  return best;
}

PointSample theta_gamma(const std::vector<TrapRecord>& records, long N,
                        double s, const VisitLookup& xi,
                        const OccupationProfile& profile) {
  PointSample out = point_process(records, N, s);
  for (std::size_t j = 0; j < out.marked_n.size(); ++j) {
    const long n = out.marked_n[j];
    const auto it = std::find_if(records.begin(), records.end(),
                                 [&](const auto& r) { return r.marked_n == n; });
    const int k = trap_rung(*it, profile);
    const long long count = xi(n, k);
    out.k.push_back(k);
    out.missed.push_back(count == 0);
    out.gamma.push_back(static_cast<double>(count) / profile.rho_y_at(n, k));
  }
  return out;
}

Normalized normalize_tN_uN(const std::vector<std::vector<double>>& T,
                           const std::vector<double>& E_T, long N, double s,
                           const std::vector<double>& rho_pool) {
  if (!(s > 0.0)) throw ConfigError("s must be positive");
  if (s >= 2.0) {
    throw OutOfRegime("normalization covers 0 < s < 2 only");
  }
  if (T.size() != E_T.size()) {
    throw StructuralError("one expectation per environment is required");
  }
  Normalized out;
  const double Nd = static_cast<double>(N);
  const double scale = std::pow(Nd, 1.0 / s);
  if (s == 1.0) {
    if (static_cast<double>(rho_pool.size()) < 100.0 * Nd) {
      throw InsufficientData("s = 1 needs at least 100 N pooled rho samples");
    }
    out.x_N = quantile(rho_pool, 1.0 - 1.0 / Nd);
    double sum = 0.0;
    for (double r : rho_pool) {
      if (r < out.x_N) sum += r;
    }
    out.u_N = Nd * sum / static_cast<double>(rho_pool.size());
  }
  if (s > 1.0) {
    double total = 0.0;
    long count = 0;
    for (const auto& env : T) {
      for (double t : env) {
        total += t;
        ++count;
      }
    }
    out.annealed_mean = count > 0 ? total / count : 0.0;
  }
  for (std::size_t e = 0; e < T.size(); ++e) {
    std::vector<double> t;
    t.reserve(T[e].size());
    for (double x : T[e]) {
      t.push_back(s < 1.0 ? x / scale : (x - E_T[e]) / scale);
    }
    out.tN.push_back(std::move(t));
    if (s < 1.0) {
      out.uN.push_back(E_T[e] / scale);
    } else if (s == 1.0) {
      out.uN.push_back((E_T[e] - out.u_N) / Nd);
    } else {
      out.uN.push_back((E_T[e] - out.annealed_mean) / scale);
    }
  }
  return out;
}

MassProfile mass_profile(const ChainState& chain,
                         const OccupationProfile& profile,
                         const TrapRecord& rec) {
  MassProfile out;
  const long n = rec.marked_n;
  out.w = profile.w_at(n);
  double prod = 1.0;  // lambda_n ... lambda_{n-j+1}
  double acc = 0.0;
  for (long j = 0; n - j >= rec.left; ++j) {
    if (j > 0) prod *= chain.lambda(n - j + 1);
    const long site = n - j;
    const long r = default_local_radius(chain, site);
    acc += prod * local_functional(chain, site, chain.u(site), r);
    out.a.push_back(acc);
  }
  for (long j = rec.left; j <= rec.right; ++j) {
    out.mass_direct += profile.rho_at(j);
  }
  out.mass_from_w = out.w * out.a.back();
  return out;
}

}  // namespace striprw
