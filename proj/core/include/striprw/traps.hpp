#pragma once

#include <functional>
#include <vector>

#include "striprw/algebra.hpp"
#include "striprw/occupation.hpp"

namespace striprw {

// floor(ln ln N), at least 0.
long trap_depth(long N);

struct TrapRecord {
  long marked_n = 0;
  long left = 0;   // max(0, marked_n - M)
  long right = 0;  // marked_n
  long M = 0;
  double mass = 0.0;  // sum of rho over [left, right]
  long center = 0;    // R-center with R = 1 unless recomputed
  double w_value = 0.0;
  double delta = 0.0;
  long N = 0;
  bool clipped = false;  // marked_n < M
};

// Sites n in [0, N-1] with w_n >= delta N^(1/s) and no such site in
// (n, n+M]. w[k] and rho[k] refer to layer k; look-ahead past the end of w
// uses whatever entries exist.
std::vector<TrapRecord> detect_traps(const std::vector<double>& w,
                                     const std::vector<double>& rho, long N,
                                     double delta, double s);

// Rightmost n in the trap with w_n > max w / R; for R = 1 the comparison is
// non-strict, giving the argmax with rightmost ties.
long trap_center(const std::vector<double>& w, const TrapRecord& rec,
                 double R);

struct PointSample {
  std::vector<double> location;  // n_j / N
  std::vector<double> theta;     // mass / N^(1/s)
  std::vector<double> gamma;     // xi / rho at (n_j, k_j), if attached
  std::vector<int> k;            // rung k_j, if attached
  std::vector<bool> missed;      // xi = 0 at (n_j, k_j)
  std::vector<bool> clipped;
  std::vector<long> marked_n;
};

// Sorted by location.
PointSample point_process(const std::vector<TrapRecord>& records, long N,
                          double s);

using VisitLookup = std::function<long long(long n, int y)>;

// k_j = argmax_y rho_{n_j,y} (lowest y on ties) and Gamma_j = xi/rho there.
PointSample theta_gamma(const std::vector<TrapRecord>& records, long N,
                        double s, const VisitLookup& xi,
                        const OccupationProfile& profile);

int trap_rung(const TrapRecord& rec, const OccupationProfile& profile);

struct Normalized {
  std::vector<std::vector<double>> tN;  // per environment, per walk
  std::vector<double> uN;               // per environment
  double x_N = 0.0;                     // s = 1 only
  double u_N = 0.0;                     // s = 1 only
  double annealed_mean = 0.0;           // 1 < s < 2 only
};

// Normalizations of T_N and E_omega T_N by the case split on s. For s = 1
// the pool must hold at least 100 N samples of rho.
Normalized normalize_tN_uN(const std::vector<std::vector<double>>& T,
                           const std::vector<double>& E_T, long N, double s,
                           const std::vector<double>& rho_pool = {});

struct MassProfile {
  std::vector<double> a;  // a[k] = a_{n-k, n}
  double w = 0.0;
  double mass_direct = 0.0;  // sum of rho
  double mass_from_w = 0.0;  // w * a[last]
};

// a_{n-k,n} = sum_{j=0}^{k} lambda_n ... lambda_{n-j+1} l_{n-j}(bold u_{n-j})
// over the trap window.
MassProfile mass_profile(const ChainState& chain,
                         const OccupationProfile& profile,
                         const TrapRecord& rec);

}  // namespace striprw
