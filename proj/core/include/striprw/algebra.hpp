#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "striprw/env.hpp"
#include "striprw/matrix.hpp"

namespace striprw {

// (I - R - Q prev)^-1 P. prev = 0 gives the first step of the phi recursion.
// Throws EllipticityError when the system is singular.
Matrix fold_step(const Matrix& prev, const Triple& t);

// Stationary solution of zeta = (I - Q zeta - R)^-1 P, iterated from the
// uniform stochastic matrix until successive iterates differ by < tol.
Matrix zeta_fixed_point(const Triple& t, double tol, int* iterations = nullptr);

// Geometric envelope K * theta^n of the gap between psi recursions started
// from the two extreme stochastic seeds (all mass on the first column vs all
// mass on the last). theta = 0, K = 0 for m = 1, where the gap is identically
// zero.
struct Contraction {
  double K = 0.0;
  double theta = 0.0;
  double r_squared = 1.0;
  int n = 0;
  int replicas = 0;
  std::vector<double> mean_log_gap;  // index k = 0..n, log ||Delta_k||
};

Contraction contraction_probe(const EnvironmentLaw& law, int n, int replicas,
                              std::uint64_t seed);

// Same fit on the first n layers of a concrete window (one replica).
Contraction contraction_probe_window(const EnvironmentWindow& env, int n);

// Smallest B >= 1 with K * theta^B < tol; 0 when the gap vanishes.
long burn_in_for(const Contraction& c, double tol);

struct ZetaWindow {
  long first = 0;             // layer of zeta[0]
  std::vector<Matrix> zeta;   // zeta_n for n = first .. env.last()
  long burn_in_used = 0;
  double error_bound = 0.0;   // at target_first
  Contraction contraction;
};

// psi recursion seeded with `seed` (uniform stochastic if null) at the left
// edge. Throws NeedsWiderWindow when fewer than the required burn-in layers
// precede target_first.
ZetaWindow zeta_window(const EnvironmentWindow& env, long target_first,
                       double tol, const Matrix* seed = nullptr,
                       const Contraction* contraction = nullptr);

// 1 - min over row pairs of the overlap sum_j min(a(i,j), a(k,j)).
double dobrushin_coefficient(const Matrix& stochastic);

// Birkhoff contraction coefficient tanh(D/4) of a positive matrix, D its
// projective diameter. Returns 1 when some entry is nonpositive.
double birkhoff_coefficient(const Matrix& a);
double projective_diameter(const Matrix& a);

struct PiWindow {
  std::vector<RowVector> pi;  // pi[k] = pi_{first+k}
  long burn_in = 0;           // first k at which the certificate is < tol
  double error_bound = 0.0;
};

// pi_k = pi_{k-1} zeta_{k-1}, seeded uniform at k = 0.
PiWindow pi_window(const std::vector<Matrix>& zetas, double tol);

struct VLambdaWindow {
  std::vector<Vector> v;        // v[0] = 1, v[k] for k = 1..A.size()
  std::vector<double> lambda;   // lambda[k-1] pairs with A[k-1]
  long burn_in = 0;             // first k at which the certificate is < tol
  double error_bound = 0.0;
};

// A[k-1] v[k-1] = lambda[k-1] v[k] with ||v[k]||_sup = 1.
// Throws PositivityError on a nonpositive entry.
VLambdaWindow v_lambda_window(const std::vector<Matrix>& A, double tol);

struct ChainOptions {
  std::optional<Contraction> contraction;  // measured in-window when absent
  const Matrix* seed = nullptr;            // uniform stochastic when null
  bool allow_uncertified = false;          // no NeedsWiderWindow if set
};

// Per-layer zeta, A, (I - Q zeta_{n-1} - R)^-1, bold u, pi, v, lambda over a
// window. Layer `first` uses the seed in place of zeta_{first-1}.
class ChainState {
 public:
  int m() const { return m_; }
  long first() const { return first_; }
  long last() const { return first_ + static_cast<long>(layers_) - 1; }
  long valid_first() const { return valid_first_; }
  bool contains(long n) const { return n >= first() && n <= last(); }

  ConstMatrixMap zeta(long n) const { return mat(zeta_, n); }
  ConstMatrixMap A(long n) const { return mat(A_, n); }
  ConstMatrixMap Minv(long n) const { return mat(minv_, n); }
  Eigen::Map<const Eigen::VectorXd> u(long n) const { return vec(u_, n); }
  Eigen::Map<const Eigen::VectorXd> v(long n) const { return vec(v_, n); }
  Eigen::Map<const Eigen::RowVectorXd> pi(long n) const {
    return Eigen::Map<const Eigen::RowVectorXd>(pi_.data() + idx(n) * m_, m_);
  }
  Eigen::Map<const Eigen::VectorXd> u_y(long n, int y) const;  // y is 1-based
  double lambda(long n) const { return lambda_[idx(n)]; }
  double log_lambda(long n) const { return log_lambda_[idx(n)]; }
  double pi_dot_v(long n) const { return pi(n).dot(v(n)); }
  double min_v(long n) const { return v(n).minCoeff(); }

  long burn_in_used() const { return valid_first_ - first_; }
  double error_bound() const { return error_bound_; }
  double zeta_error() const { return zeta_error_; }
  double pi_error() const { return pi_error_; }
  double v_error() const { return v_error_; }
  const Contraction& contraction() const { return contraction_; }

  // Residual of A_n v_{n-1} = lambda_n v_n in sup norm, n > first.
  double eigen_residual(long n) const;

  friend ChainState build_chain(const EnvironmentWindow& env,
                                long target_first, double tol,
                                const ChainOptions& opts);

 private:
  std::size_t idx(long n) const { return static_cast<std::size_t>(n - first_); }
  ConstMatrixMap mat(const std::vector<double>& d, long n) const {
    return ConstMatrixMap(d.data() + idx(n) * m_ * m_, m_, m_);
  }
  Eigen::Map<const Eigen::VectorXd> vec(const std::vector<double>& d,
                                        long n) const {
    return Eigen::Map<const Eigen::VectorXd>(d.data() + idx(n) * m_, m_);
  }

  int m_ = 0;
  long first_ = 0;
  std::size_t layers_ = 0;
  long valid_first_ = 0;
  double error_bound_ = 0.0;
  double zeta_error_ = 0.0;
  double pi_error_ = 0.0;
  double v_error_ = 0.0;
  Contraction contraction_;
  std::vector<double> zeta_, A_, minv_, u_, pi_, v_, lambda_, log_lambda_;
};

ChainState build_chain(const EnvironmentWindow& env, long target_first,
                       double tol, const ChainOptions& opts = {});

// Streams layers one at a time, carrying zeta_{n-1} and v_{n-1}. Each step
// returns ln lambda_n.
class ChainStepper {
 public:
  explicit ChainStepper(int m);
  void reset_v();
  double step(const Triple& t);
  const Matrix& zeta() const { return zeta_; }
  const Vector& v() const { return v_; }

 private:
  int m_;
  Matrix zeta_;
  Vector v_;
};

struct LyapunovEstimate {
  double value = 0.0;
  double std_error = 0.0;
  long n = 0;
  int replicas = 0;
  long burn_in = 0;
};

// Mean over replicas of (1/n) sum ln lambda_j.
LyapunovEstimate lyapunov_exponent(const EnvironmentLaw& law, long n,
                                   int replicas, std::uint64_t seed,
                                   int workers = 1);

struct MomentEstimate {
  double alpha = 0.0;
  double r_hat = 1.0;
  double std_error = 0.0;
  double log_r = 0.0;
  double log_stderr = 0.0;
  long n = 0;
  int replicas = 0;
  int batches = 0;
  double min_ess_fraction = 1.0;
  std::string warning;
  std::vector<double> batch_log_r;
};

struct MomentOptions {
  int batches = 10;
  long burn_in = -1;  // from a law contraction probe when negative
  int workers = 1;
};

// (E ||A_n ... A_1||^alpha)^(1/n) by a resampled population: each batch
// carries replicas/batches walkers, multiplies in the mean weight
// lambda^alpha per layer and resamples proportionally to it. alpha may be
// negative. With v_0 = 1 the product of lambdas is exactly the norm.
MomentEstimate log_moment_lyapunov(const EnvironmentLaw& law, double alpha,
                                   long n, int replicas, std::uint64_t seed,
                                   const MomentOptions& opts = {});

// As above with alpha >= 0 enforced.
MomentEstimate moment_lyapunov(const EnvironmentLaw& law, double alpha,
                               long n, int replicas, std::uint64_t seed,
                               const MomentOptions& opts = {});

struct SlopeEstimate {
  double slope = 0.0;
  double std_error = 0.0;
  double h = 0.0;
};

// Central difference (ln r(h) - ln r(-h)) / 2h with common random numbers.
SlopeEstimate log_moment_slope_at_zero(const EnvironmentLaw& law, double h,
                                       long n, int replicas,
                                       std::uint64_t seed,
                                       const MomentOptions& opts = {});

struct SolveResult {
  double s_hat = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  bool diffusive = false;
  double log_r_at_root = 0.0;
  double log_stderr = 0.0;
  double slope = 0.0;
  int evaluations = 0;
};

// Root of ln r(alpha) = 0 by bisection. The bracket grows by doubling from
// alpha = 0.1 up to alpha_max; no sign change reports diffusive.
SolveResult solve_s(const EnvironmentLaw& law, double tol, long n,
                    int replicas, std::uint64_t seed, double alpha_max = 10.0,
                    const MomentOptions& opts = {});

long law_burn_in(const EnvironmentLaw& law, double tol, std::uint64_t seed);

// ln of the Perron root of (I - Q zeta - R)^-1 Q with zeta the fixed point
// of each atom, for auditing arithmeticity by eye.
std::vector<double> atom_lyapunov(const EnvironmentLaw& law);

double perron_root(const Matrix& a, Vector* vec = nullptr);

}  // namespace striprw
