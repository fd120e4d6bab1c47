#pragma once

#include <optional>
#include <vector>

#include "striprw/algebra.hpp"
#include "striprw/env.hpp"

namespace striprw {

inline constexpr int kAllRungs = 0;

// (I - Q zeta_prev - R)^-1 e_y, or the same applied to 1 for kAllRungs.
Vector u_vector(const Triple& t, const Matrix& zeta_prev, int y);

struct OccupationOptions {
  double tail_tol = 1e-10;
  // Bound on sum_{j > b} ||A_j ... A_{b+1}|| past the chain's right edge b.
  // Estimated from the last part of the window when absent.
  std::optional<double> edge_factor;
};

// 10 * max over k in the second-to-last slab of the window of the truncated
// sums sum_{j=k+1}^{b} lambda_j ... lambda_{k+1} / min v_k. A heuristic, not
// a certificate: the true sum past b is random.
double estimate_edge_factor(const ChainState& chain);

// E_{(k,i)} xi_{(n,y)} for every start rung i. k and n must be certified
// chain layers. Throws NeedsWiderWindow(right) when the truncated tail is
// not below tail_tol.
Vector expected_occupation(const ChainState& chain, long k, long n, int y,
                           const OccupationOptions& opts = {},
                           double* tail_bound = nullptr);

struct OccupationProfile {
  long first = 0;
  long last = 0;
  int m = 1;
  std::vector<double> rho;         // per layer
  std::vector<double> rho_y;       // per layer, m entries
  std::vector<double> w;           // per layer
  std::vector<double> tail_bound;  // per layer, bound on the rho truncation
  std::vector<double> remainder;   // rho - l(bold u) w
  long truncation_used = 0;        // right slack in layers
  double edge_factor = 0.0;

  double rho_at(long n) const { return rho[n - first]; }
  double w_at(long n) const { return w[n - first]; }
  double rho_y_at(long n, int y) const { return rho_y[(n - first) * m + y - 1]; }
};

// rho_{n,y} = g_n u_{n,y} with g_n = pi_n + g_{n+1} A_{n+1}, for n in [a, b].
OccupationProfile rho_profile(const ChainState& chain, long a, long b,
                              const OccupationOptions& opts = {});

// w_n = (pi_n, v_n) + lambda_{n+1} w_{n+1}, seeded w = 0 past the chain's
// right edge. `truncation` receives the per-layer bound on the dropped tail.
std::vector<double> w_sequence(const ChainState& chain, long a, long b,
                               std::vector<double>* truncation = nullptr,
                               std::optional<double> edge_factor = {});

// Direct truncated sum sum_{j=n}^{n2} lambda_j ... lambda_{n+1} (pi_j, v_j).
double w_partial_sum(const ChainState& chain, long n, long n2);

// max_y ||u_{n,y}|| * sum_{j >= n+l} ||A_j ... A_{n+1}||, with the part past
// the chain's edge bounded through the edge factor.
double return_probability_bound(const ChainState& chain, long n, long l,
                                std::optional<double> edge_factor = {});

// return_probability_bound for l = 0 .. chain.last() - n at once.
std::vector<double> return_probability_bounds(
    const ChainState& chain, long n, std::optional<double> edge_factor = {});

// ||A_{n+r} ... A_{n+1} u|| / (lambda_{n+r} ... lambda_{n+1}).
double local_functional(const ChainState& chain, long n,
                        const Eigen::Ref<const Eigen::VectorXd>& u, long r);

// Radius used for l_n: the chain's burn-in, at least 20, clipped to the
// layers available right of n.
long default_local_radius(const ChainState& chain, long n);

}  // namespace striprw
