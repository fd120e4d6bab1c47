#include "striprw/occupation.hpp"

#include <algorithm>
#include <cmath>

#include "striprw/error.hpp"

namespace striprw {

Vector u_vector(const Triple& t, const Matrix& zeta_prev, int y) {
  const int m = t.m();
  const Matrix M = Matrix::Identity(m, m) - t.Q * zeta_prev - t.R;
  Eigen::PartialPivLU<Matrix> lu(M);
  if (!(std::abs(lu.determinant()) > 0.0)) {
    throw EllipticityError("I - Q zeta - R is singular");
  }
  Vector rhs = Vector::Zero(m);
  if (y == kAllRungs) {
    rhs.setOnes();
  } else {
    if (y < 1 || y > m) throw StructuralError("rung out of range");
    rhs(y - 1) = 1.0;
  }
  Vector u = lu.solve(rhs);
  if (!u.allFinite() || u.minCoeff() <= 0.0) {
    throw EllipticityError("u vector is not positive");
  }
  return u;
}

namespace {

void require_certified(const ChainState& c, long n) {
  if (n < c.valid_first()) {
    throw NeedsWiderWindow("layer " + std::to_string(n) +
                               " precedes the certified part of the chain",
                           c.valid_first() - n, true);
  }
  if (n > c.last()) {
    throw NeedsWiderWindow("layer " + std::to_string(n) +
                               " is past the chain's right edge",
                           n - c.last(), false);
  }
}

double mean_log_lambda(const ChainState& c) {
  double s = 0.0;
  for (long n = c.first(); n <= c.last(); ++n) s += c.log_lambda(n);
  return s / static_cast<double>(c.last() - c.first() + 1);
}

long extra_layers(const ChainState& c, double log_excess) {
  const double rate = std::max(-mean_log_lambda(c), 0.01);
  return static_cast<long>(std::ceil(log_excess / rate)) + 10;
}

}  // namespace

double estimate_edge_factor(const ChainState& chain) {
  const long L = chain.last() - chain.first() + 1;
  const long h = std::max<long>(1, std::min<long>(500, L / 4));
  const long b = chain.last();
  const long k_lo = std::max(chain.first(), b - 2 * h);
  const long k_hi = std::max(chain.first(), b - h);
  // s_k = sum_{j=k+1}^{b} prod_{i=k+1}^{j} lambda_i, by a backward pass.
  std::vector<double> s(static_cast<std::size_t>(b - k_lo + 1), 0.0);
  for (long k = b - 1; k >= k_lo; --k) {
    s[k - k_lo] = chain.lambda(k + 1) * (1.0 + s[k + 1 - k_lo]);
  }
  double best = 0.0;
  for (long k = k_lo; k <= k_hi; ++k) {
    best = std::max(best, s[k - k_lo] / chain.min_v(k));
  }
  return 10.0 * std::max(best, 1.0);
}

Vector expected_occupation(const ChainState& chain, long k, long n, int y,
                           const OccupationOptions& opts,
                           double* tail_bound) {
  require_certified(chain, k);
  require_certified(chain, n);
  const int m = chain.m();
  if (y < 1 || y > m) throw StructuralError("rung out of range");
  const long p = std::max(k, n);
  const long b = chain.last();
  // G_p = sum_{j >= p} zeta_p ... zeta_{j-1} A_j ... A_{p+1}.
  Matrix G = Matrix::Identity(m, m);
  for (long j = b - 1; j >= p; --j) {
    G = Matrix::Identity(m, m) + chain.zeta(j) * G * chain.A(j + 1);
  }
  // ||A_b ... A_{p+1}|| = sup of the product applied to 1.
  Vector x = Vector::Ones(m);
  double log_scale = 0.0;
  for (long j = p + 1; j <= b; ++j) {
    x = chain.A(j) * x;
    const double s = x.maxCoeff();
    x /= s;
    log_scale += std::log(s);
  }
  const double edge = opts.edge_factor ? *opts.edge_factor
                                       : estimate_edge_factor(chain);
  Vector u = chain.u_y(n, y);
  Vector out;
  double tail_log;
  if (k < n) {
    Vector t = G * u;
    for (long j = n - 1; j >= k; --j) t = chain.zeta(j) * t;
    out = t;
    tail_log = std::log(edge) + log_scale + std::log(sup_norm(u));
  } else {
    Vector t = u;
    for (long j = n + 1; j <= k; ++j) t = chain.A(j) * t;
    out = G * t;
    tail_log = std::log(edge) + log_scale + std::log(sup_norm(t));
  }
  const double tail = std::exp(tail_log);
  if (tail_bound) *tail_bound = tail;
  if (tail >= opts.tail_tol) {
    throw NeedsWiderWindow("occupation tail bound " + std::to_string(tail) +
                               " exceeds tolerance",
                           extra_layers(chain, tail_log - std::log(opts.tail_tol)),
                           false);
  }
  return out;
}

OccupationProfile rho_profile(const ChainState& chain, long a, long b,
                              const OccupationOptions& opts) {
  require_certified(chain, a);
  require_certified(chain, b);
  if (a > b) throw StructuralError("empty profile range");
  const int m = chain.m();
  const long B = chain.last();
  OccupationProfile prof;
  prof.first = a;
  prof.last = b;
  prof.m = m;
  prof.truncation_used = B - b;
  prof.edge_factor =
      opts.edge_factor ? *opts.edge_factor : estimate_edge_factor(chain);
  const std::size_t L = static_cast<std::size_t>(b - a + 1);
  prof.rho.resize(L);
  prof.rho_y.resize(L * m);
  prof.tail_bound.resize(L);
  prof.remainder.resize(L);
  prof.w = w_sequence(chain, a, b, nullptr, prof.edge_factor);

  const double log_edge = std::log(prof.edge_factor);
  double worst_log_tail = -1e300;
  if (m == 1) {
    double g = 1.0;       // pi = 1
    double log_prod = 0;  // sum_{i=n+1}^{B} ln lambda_i
    for (long n = B; n >= a; --n) {
      if (n < B) {
        g = 1.0 + g * chain.A(n + 1)(0, 0);
        log_prod += chain.log_lambda(n + 1);
      }
      if (n > b) continue;
      const std::size_t k = static_cast<std::size_t>(n - a);
      const double u = chain.u(n)(0);
      prof.rho[k] = g * u;
      prof.rho_y[k] = g * u;
      const double lt = log_edge + log_prod + std::log(u);
      prof.tail_bound[k] = std::exp(lt);
      worst_log_tail = std::max(worst_log_tail, lt);
    }
  } else {
    Eigen::RowVectorXd g = chain.pi(B);
    double log_prod = 0;
    for (long n = B; n >= a; --n) {
      if (n < B) {
        g = chain.pi(n) + g * chain.A(n + 1);
        log_prod += chain.log_lambda(n + 1);
      }
      if (n > b) continue;
      const std::size_t k = static_cast<std::size_t>(n - a);
      const Eigen::RowVectorXd ry = g * chain.Minv(n);
      for (int y = 0; y < m; ++y) prof.rho_y[k * m + y] = ry(y);
      prof.rho[k] = g.dot(chain.u(n));
      const double lt = log_edge + log_prod + std::log(chain.u(n).maxCoeff()) -
                        std::log(chain.min_v(n));
      prof.tail_bound[k] = std::exp(lt);
      worst_log_tail = std::max(worst_log_tail, lt);
    }
  }
  for (long n = a; n <= b; ++n) {
    const std::size_t k = static_cast<std::size_t>(n - a);
    const long r = default_local_radius(chain, n);
    const double l = local_functional(chain, n, chain.u(n), r);
    prof.remainder[k] = prof.rho[k] - l * prof.w[k];
  }
  if (worst_log_tail >= std::log(opts.tail_tol)) {
    throw NeedsWiderWindow(
        "profile tail bound exceeds tolerance",
        extra_layers(chain, worst_log_tail - std::log(opts.tail_tol)), false);
  }
  return prof;
}

std::vector<double> w_sequence(const ChainState& chain, long a, long b,
                               std::vector<double>* truncation,
                               std::optional<double> edge_factor) {
  require_certified(chain, a);
  require_certified(chain, b);
  const long B = chain.last();
  std::vector<double> out(static_cast<std::size_t>(b - a + 1));
  if (truncation) truncation->assign(out.size(), 0.0);
  const double edge =
      truncation ? (edge_factor ? *edge_factor : estimate_edge_factor(chain))
                 : 0.0;
  double w = 0.0;
  double log_prod = 0.0;
  for (long n = B; n >= a; --n) {
    if (n < B) log_prod += chain.log_lambda(n + 1);
    w = chain.pi_dot_v(n) + (n < B ? chain.lambda(n + 1) * w : 0.0);
    if (n <= b) {
      out[n - a] = w;
      if (truncation) (*truncation)[n - a] = edge * std::exp(log_prod);
    }
  }
  return out;
}

double w_partial_sum(const ChainState& chain, long n, long n2) {
  double sum = 0.0;
  double prod = 1.0;
  for (long j = n; j <= n2; ++j) {
    if (j > n) prod *= chain.lambda(j);
    sum += prod * chain.pi_dot_v(j);
  }
  return sum;
}

std::vector<double> return_probability_bounds(
    const ChainState& chain, long n, std::optional<double> edge_factor) {
  require_certified(chain, n);
  const int m = chain.m();
  const long B = chain.last();
  const double edge = edge_factor ? *edge_factor : estimate_edge_factor(chain);
  double umax = 0.0;
  for (int y = 1; y <= m; ++y) umax = std::max(umax, sup_norm(Vector(chain.u_y(n, y))));
  // norms[j - n] = ||A_j ... A_{n+1}||, exact for nonnegative matrices.
  const std::size_t L = static_cast<std::size_t>(B - n + 1);
  std::vector<double> norms(L);
  Vector x = Vector::Ones(m);
  double log_scale = 0.0;
  norms[0] = 1.0;
  for (long j = n + 1; j <= B; ++j) {
    x = chain.A(j) * x;
    const double s = x.maxCoeff();
    x /= s;
    log_scale += std::log(s);
    norms[j - n] = std::exp(log_scale);
  }
  std::vector<double> out(L);
  double suffix = norms[L - 1] * edge;
  for (long l = static_cast<long>(L) - 1; l >= 0; --l) {
    suffix += norms[l];
    out[l] = umax * suffix;
  }
  return out;
}

double return_probability_bound(const ChainState& chain, long n, long l,
                                std::optional<double> edge_factor) {
  if (l < 0) throw StructuralError("negative l");
  const auto all = return_probability_bounds(chain, n, edge_factor);
  if (l >= static_cast<long>(all.size())) {
    // Every remaining term lies past the edge: keep only the edge part of
    // the last entry, which is umax * ||A_B ... A_{n+1}|| * (edge + 1).
    const double edge =
        edge_factor ? *edge_factor : estimate_edge_factor(chain);
    return all.back() * edge / (edge + 1.0);
  }
  return all[l];
}

double local_functional(const ChainState& chain, long n,
                        const Eigen::Ref<const Eigen::VectorXd>& u, long r) {
  if (n + r > chain.last()) {
    throw NeedsWiderWindow("local functional radius past the window",
                           n + r - chain.last(), false);
  }
  Eigen::VectorXd x = u;
  double log_ratio = 0.0;
  for (long j = n + 1; j <= n + r; ++j) {
    x = chain.A(j) * x;
    const double s = x.cwiseAbs().maxCoeff();
    x /= s;
    log_ratio += std::log(s) - chain.log_lambda(j);
  }
  return std::exp(log_ratio) * x.cwiseAbs().maxCoeff();
}

long default_local_radius(const ChainState& chain, long n) {
  const long want = std::max<long>(20, chain.burn_in_used());
  return std::max<long>(0, std::min(want, chain.last() - n));
}

}  // namespace striprw
