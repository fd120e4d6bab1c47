#include "striprw/algebra.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "striprw/error.hpp"
#include "striprw/parallel.hpp"
#include "striprw/rng.hpp"

namespace striprw {

namespace {

constexpr double kLogTiny = -745.0;  // below ln of the smallest subnormal

// minv = (I - R - Q psi)^-1, which is an M-matrix inverse and hence
// entrywise nonnegative under ellipticity.
template <typename MP, typename MQ, typename MR>
void solve_layer(const MP& P, const MQ& Q, const MR& R, const Matrix& psi,
                 Matrix& minv) {
  const int m = static_cast<int>(P.rows());
  const Matrix M = Matrix::Identity(m, m) - R - Q * psi;
  Eigen::PartialPivLU<Matrix> lu(M);
  const double det = lu.determinant();
  if (!(std::abs(det) > 0.0) || !std::isfinite(det)) {
    throw EllipticityError("I - R - Q psi is singular");
  }
  minv = lu.inverse();
  if (!minv.allFinite() || minv.minCoeff() < -1e-12) {
    throw EllipticityError("I - R - Q psi is not an M-matrix");
  }
}

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LineFit f;
  f.slope = sxx > 0 ? sxy / sxx : 0.0;
  f.intercept = my - f.slope * mx;
  f.r_squared = (sxx > 0 && syy > 0) ? (sxy * sxy) / (sxx * syy) : 1.0;
  return f;
}

// Exact gap recursion between psi'' and psi':
//   Delta_k = (I - R - Q psi''_{k-1})^-1 Q Delta_{k-1} psi'_k,
// renormalized each step so that long runs do not underflow.
class GapTracker {
 public:
  explicit GapTracker(int m)
      : m_(m),
        lo_(column_mass(m, 0)),
        hi_(column_mass(m, m - 1)),
        delta_(hi_ - lo_) {
    log_scale_ = std::log(norm(delta_));
  }

  template <typename MP, typename MQ, typename MR>
  double step(const MP& P, const MQ& Q, const MR& R) {
    Matrix minv_lo, minv_hi;
    solve_layer(P, Q, R, lo_, minv_lo);
    solve_layer(P, Q, R, hi_, minv_hi);
    lo_ = minv_lo * P;
    hi_ = minv_hi * P;
    lo_.array().colwise() /= lo_.rowwise().sum().array();
    hi_.array().colwise() /= hi_.rowwise().sum().array();
    if (collapsed_) return kLogTiny;
    delta_ = minv_hi * Q * delta_ * lo_;
    // Rows of a difference of stochastic matrices sum to zero; rounding in
    // that direction is not contracted by the right factors.
    delta_.colwise() -= delta_.rowwise().mean();
    const double s = norm(delta_);
    if (!(s > 0.0)) {
      collapsed_ = true;
      log_scale_ = kLogTiny;
      return kLogTiny;
    }
    delta_ /= s;
    log_scale_ = std::max(log_scale_ + std::log(s), kLogTiny);
    return log_scale_;
  }

  double log_gap() const { return log_scale_; }
  bool collapsed() const { return collapsed_; }

 private:
  int m_;
  Matrix lo_, hi_, delta_;
  double log_scale_ = 0.0;
  bool collapsed_ = false;
};

Contraction fit_contraction(const std::vector<std::vector<double>>& curves,
                            int n) {
  Contraction c;
  c.n = n;
  c.replicas = static_cast<int>(curves.size());
  c.mean_log_gap.assign(n + 1, 0.0);
  bool all_collapsed = true;
  for (const auto& cur : curves) {
    for (int k = 0; k <= n; ++k) c.mean_log_gap[k] += cur[k] / curves.size();
    if (cur[1] > kLogTiny) all_collapsed = false;
  }
  if (all_collapsed) {
    c.K = 0.0;
    c.theta = 0.0;
    c.r_squared = 1.0;
    return c;
  }
  const int k0 = std::min(5, n / 2);
  std::vector<double> xs, ys;
  for (int k = k0; k <= n; ++k) {
    if (c.mean_log_gap[k] <= kLogTiny + 1) break;
    xs.push_back(k);
    ys.push_back(c.mean_log_gap[k]);
  }
  if (xs.size() < 3) {
    // The gap collapses within a handful of layers.
    c.K = 2.0;
    c.theta = 0.0;
    for (int k = 1; k <= n; ++k) {
      if (c.mean_log_gap[k] > kLogTiny + 1) {
        c.theta = std::max(c.theta,
                           std::exp((c.mean_log_gap[k] - std::log(2.0)) / k));
      }
    }
    return c;
  }
  const LineFit f = fit_line(xs, ys);
  c.theta = std::exp(f.slope);
  c.r_squared = f.r_squared;
  double worst = 0.0;
  for (const auto& cur : curves) {
    for (int k = 0; k <= n; ++k) {
      if (cur[k] <= kLogTiny + 1) continue;
      worst = std::max(worst, cur[k] - (f.intercept + f.slope * k));
    }
  }
  c.K = std::exp(f.intercept + worst);
  if (!(c.theta < 1.0)) {
    throw ContractionError("fitted contraction rate " +
                           std::to_string(c.theta) + " is not below 1");
  }
  return c;
}

}  // namespace

Matrix fold_step(const Matrix& prev, const Triple& t) {
  Matrix minv;
  solve_layer(t.P, t.Q, t.R, prev, minv);
  return minv * t.P;
}

Matrix zeta_fixed_point(const Triple& t, double tol, int* iterations) {
  const int m = t.m();
  Matrix psi = uniform_stochastic(m);
  for (int it = 1; it <= 1000000; ++it) {
    Matrix next = fold_step(psi, t);
    // Stochastic from a stochastic seed; projecting stops rounding from
    // growing along the row-sum direction when the triple drifts left.
    next.array().colwise() /= next.rowwise().sum().array();
    const double d = norm(next - psi);
    psi = std::move(next);
    if (d < tol) {
      if (iterations) *iterations = it;
      return psi;
    }
  }
  throw NumericError("zeta fixed point did not converge");
}

Contraction contraction_probe(const EnvironmentLaw& law, int n, int replicas,
                              std::uint64_t seed) {
  if (n < 10 || replicas < 1) {
    throw ConfigError("contraction probe needs n >= 10 and replicas >= 1");
  }
  law.validate();
  Contraction out;
  if (law.m == 1) {
    out.n = n;
    out.replicas = replicas;
    return out;
  }
  std::vector<std::vector<double>> curves(replicas);
  const auto key = derive_key(seed, StreamDomain::kReplica, 0x70726f6265ull);
  for (int r = 0; r < replicas; ++r) {
    Rng rng(key, static_cast<std::uint64_t>(r));
    GapTracker gap(law.m);
    auto& cur = curves[r];
    cur.reserve(n + 1);
    cur.push_back(gap.log_gap());
    for (int k = 1; k <= n; ++k) {
      const Triple& t = law.atoms[law.sample_atom(rng.uniform())];
      cur.push_back(gap.step(t.P, t.Q, t.R));
    }
  }
  return fit_contraction(curves, n);
}

Contraction contraction_probe_window(const EnvironmentWindow& env, int n) {
  Contraction out;
  n = std::min<int>(n, static_cast<int>(env.size()));
  if (env.m() == 1 || n < 3) {
    out.n = n;
    out.replicas = 1;
    if (env.m() != 1) {
      out.K = 2.0;
      out.theta = 1.0 - 1e-3;
    }
    return out;
  }
  GapTracker gap(env.m());
  std::vector<std::vector<double>> curves(1);
  curves[0].push_back(gap.log_gap());
  for (int k = 1; k <= n; ++k) {
    const long layer = env.first() + k - 1;
    curves[0].push_back(gap.step(env.P(layer), env.Q(layer), env.R(layer)));
  }
  return fit_contraction(curves, n);
}

long burn_in_for(const Contraction& c, double tol) {
  if (c.K <= 0.0) return 0;
  if (c.theta <= 0.0) return 1;
  if (c.K < tol) return 1;
  const double b = (std::log(tol) - std::log(c.K)) / std::log(c.theta);
  return std::max<long>(1, static_cast<long>(std::ceil(b)));
}

ZetaWindow zeta_window(const EnvironmentWindow& env, long target_first,
                       double tol, const Matrix* seed,
                       const Contraction* contraction) {
  if (!env.contains(target_first)) {
    throw StructuralError("target_first outside window");
  }
  ZetaWindow out;
  out.first = env.first();
  out.contraction = contraction ? *contraction
                                : contraction_probe_window(env, 200);
  const long need = burn_in_for(out.contraction, tol);
  const long have = target_first - env.first() + 1;
  if (have < need) {
    throw NeedsWiderWindow("zeta burn-in needs " + std::to_string(need) +
                               " layers, window offers " +
                               std::to_string(have),
                           need - have, true);
  }
  out.burn_in_used = have;
  out.error_bound = out.contraction.K > 0
                        ? out.contraction.K *
                              std::pow(out.contraction.theta, double(have))
                        : 0.0;
  Matrix psi = seed ? *seed : uniform_stochastic(env.m());
  Matrix minv;
  out.zeta.reserve(env.size());
  for (long n = env.first(); n <= env.last(); ++n) {
    solve_layer(env.P(n), env.Q(n), env.R(n), psi, minv);
    psi = minv * env.P(n);
    psi.array().colwise() /= psi.rowwise().sum().array();
    out.zeta.push_back(psi);
  }
  return out;
}

double dobrushin_coefficient(const Matrix& a) {
  const int m = static_cast<int>(a.rows());
  double worst = 1.0;
  for (int i = 0; i < m; ++i) {
    for (int k = i + 1; k < m; ++k) {
      worst = std::min(worst, a.row(i).cwiseMin(a.row(k)).sum());
    }
  }
  return m == 1 ? 0.0 : std::clamp(1.0 - worst, 0.0, 1.0);
}

double projective_diameter(const Matrix& a) {
  const int rows = static_cast<int>(a.rows());
  const int cols = static_cast<int>(a.cols());
  if (a.minCoeff() <= 0.0) return std::numeric_limits<double>::infinity();
  double d = 0.0;
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < rows; ++j) {
      for (int k = 0; k < cols; ++k) {
        for (int l = 0; l < cols; ++l) {
          d = std::max(d, std::log(a(i, k) * a(j, l) / (a(j, k) * a(i, l))));
        }
      }
    }
  }
  return d;
}

double birkhoff_coefficient(const Matrix& a) {
  const double d = projective_diameter(a);
  return std::isfinite(d) ? std::tanh(d / 4.0) : 1.0;
}

PiWindow pi_window(const std::vector<Matrix>& zetas, double tol) {
  PiWindow out;
  if (zetas.empty()) return out;
  const int m = static_cast<int>(zetas.front().rows());
  out.pi.reserve(zetas.size() + 1);
  out.pi.push_back(RowVector::Constant(m, 1.0 / m));
  double log_cert = std::log(2.0);
  out.burn_in = -1;
  if (m == 1) {
    out.burn_in = 0;
    log_cert = kLogTiny;
  }
  for (std::size_t k = 0; k < zetas.size(); ++k) {
    out.pi.push_back(out.pi.back() * zetas[k]);
    if (out.burn_in < 0) {
      log_cert += std::log(std::max(dobrushin_coefficient(zetas[k]), 1e-300));
      if (log_cert < std::log(tol)) out.burn_in = static_cast<long>(k) + 1;
    }
  }
  if (out.burn_in < 0) {
    out.burn_in = static_cast<long>(out.pi.size());
    out.error_bound = std::exp(log_cert);
  } else {
    out.error_bound = m == 1 ? 0.0 : tol;
  }
  return out;
}

VLambdaWindow v_lambda_window(const std::vector<Matrix>& A, double tol) {
  VLambdaWindow out;
  if (A.empty()) return out;
  const int m = static_cast<int>(A.front().rows());
  out.v.push_back(Vector::Ones(m));
  double d = 0.0;
  out.burn_in = -1;
  for (std::size_t k = 0; k < A.size(); ++k) {
    if (A[k].minCoeff() <= 0.0) {
      throw PositivityError("A has a nonpositive entry at index " +
                            std::to_string(k));
    }
    const Vector x = A[k] * out.v.back();
    const double lam = sup_norm(x);
    out.lambda.push_back(lam);
    out.v.push_back(x / lam);
    d = k == 0 ? projective_diameter(A[k]) : d * birkhoff_coefficient(A[k]);
    if (out.burn_in < 0 && std::expm1(d) < tol) {
      out.burn_in = static_cast<long>(k) + 1;
      out.error_bound = std::expm1(d);
    }
  }
  if (out.burn_in < 0) {
    out.burn_in = static_cast<long>(out.v.size());
    out.error_bound = std::expm1(d);
  }
  return out;
}

Eigen::Map<const Eigen::VectorXd> ChainState::u_y(long n, int y) const {
  return Eigen::Map<const Eigen::VectorXd>(
      minv_.data() + idx(n) * m_ * m_ + (y - 1) * m_, m_);
}

double ChainState::eigen_residual(long n) const {
  const Eigen::VectorXd lhs = A(n) * v(n - 1);
  return (lhs - lambda(n) * v(n)).cwiseAbs().maxCoeff();
}

ChainState build_chain(const EnvironmentWindow& env, long target_first,
                       double tol, const ChainOptions& opts) {
  if (!env.contains(target_first)) {
    throw StructuralError("target_first outside window");
  }
  ChainState c;
  const int m = env.m();
  const std::size_t L = env.size();
  c.m_ = m;
  c.first_ = env.first();
  c.layers_ = L;
  const std::size_t mm = static_cast<std::size_t>(m) * m;
  c.zeta_.resize(L * mm);
  c.A_.resize(L * mm);
  c.minv_.resize(L * mm);
  c.u_.resize(L * m);
  c.pi_.resize(L * m);
  c.v_.resize(L * m);
  c.lambda_.resize(L);
  c.log_lambda_.resize(L);

  if (m == 1) {
    for (std::size_t k = 0; k < L; ++k) {
      const long n = c.first_ + static_cast<long>(k);
      const double q = env.q(n);
      const double p = 1.0 - env.r(n) - q;  // (I - R - Q zeta), zeta = 1
      if (!(p > 0.0)) throw EllipticityError("1 - r - q is not positive");
      c.zeta_[k] = env.p(n) / p;
      c.minv_[k] = 1.0 / p;
      c.A_[k] = q / p;
      c.u_[k] = 1.0 / p;
      c.pi_[k] = 1.0;
      c.v_[k] = 1.0;
      c.lambda_[k] = q / p;
      c.log_lambda_[k] = std::log(q) - std::log(p);
    }
    c.valid_first_ = c.first_;
    return c;
  }

  c.contraction_ = opts.contraction
                       ? *opts.contraction
                       : contraction_probe_window(env, 200);
  const double logK =
      c.contraction_.K > 0 ? std::log(c.contraction_.K) : kLogTiny;
  const double logT =
      c.contraction_.theta > 0 ? std::log(c.contraction_.theta) : kLogTiny;
  const double log_tol = std::log(tol);

  Matrix psi = opts.seed ? *opts.seed : uniform_stochastic(m);
  Vector v = Vector::Ones(m);
  RowVector pi = RowVector::Constant(m, 1.0 / m);
  Matrix minv;
  double log_pi_cert = std::log(2.0);
  double hilbert = 0.0;
  long valid = 0;
  bool certified = false;
  double zeta_err = 0, pi_err = 0, v_err = 0;
  for (std::size_t k = 0; k < L; ++k) {
    const long n = c.first_ + static_cast<long>(k);
    const auto P = env.P(n), Q = env.Q(n), R = env.R(n);
    // zeta_{n-1} error: K theta^k (k steps from the seed at first-1).
    const double log_zeta_prev =
        k == 0 ? std::log(2.0) : std::max(logK + logT * k, kLogTiny);
    solve_layer(P, Q, R, psi, minv);
    const Matrix A = minv * Q;
    if (A.minCoeff() <= 0.0) {
      throw PositivityError("A_" + std::to_string(n) +
                            " has a nonpositive entry");
    }
    if (k > 0) {
      log_pi_cert += std::log(std::max(dobrushin_coefficient(psi), 1e-300));
      pi = pi * psi;  // pi_n = pi_{n-1} zeta_{n-1}
    }
    hilbert = k == 0 ? projective_diameter(A)
                     : hilbert * birkhoff_coefficient(A);
    const Vector x = A * v;
    const double lam = x.maxCoeff();
    v = x / lam;
    Matrix zeta = minv * P;
    zeta.array().colwise() /= zeta.rowwise().sum().array();

    MatrixMap(c.zeta_.data() + k * mm, m, m) = zeta;
    MatrixMap(c.A_.data() + k * mm, m, m) = A;
    MatrixMap(c.minv_.data() + k * mm, m, m) = minv;
    Eigen::Map<Eigen::VectorXd>(c.u_.data() + k * m, m) =
        minv.rowwise().sum();
    Eigen::Map<Eigen::RowVectorXd>(c.pi_.data() + k * m, m) = pi;
    Eigen::Map<Eigen::VectorXd>(c.v_.data() + k * m, m) = v;
    c.lambda_[k] = lam;
    c.log_lambda_[k] = std::log(lam);
    psi = zeta;

    if (!certified) {
      const double ve = std::expm1(hilbert);
      if (log_zeta_prev < log_tol && log_pi_cert < log_tol && ve < tol) {
        certified = true;
        valid = n;
        zeta_err = std::exp(log_zeta_prev);
        pi_err = std::exp(log_pi_cert);
        v_err = ve;
      }
    }
  }
  if (!certified) {
    valid = c.last() + 1;
    zeta_err = std::exp(std::max(logK + logT * double(L), kLogTiny));
    pi_err = std::exp(log_pi_cert);
    v_err = std::expm1(hilbert);
  }
  c.valid_first_ = valid;
  c.zeta_error_ = zeta_err;
  c.pi_error_ = pi_err;
  c.v_error_ = v_err;
  c.error_bound_ = std::max({zeta_err, pi_err, v_err});
  if (valid > target_first && !opts.allow_uncertified) {
    throw NeedsWiderWindow(
        "chain burn-in reaches layer " + std::to_string(valid) +
            " past target " + std::to_string(target_first),
        valid - target_first, true);
  }
  return c;
}

ChainStepper::ChainStepper(int m)
    : m_(m), zeta_(uniform_stochastic(m)), v_(Vector::Ones(m)) {}

void ChainStepper::reset_v() { v_.setOnes(); }

double ChainStepper::step(const Triple& t) {
  if (m_ == 1) {
    const double q = t.Q(0, 0);
    return std::log(q) - std::log(1.0 - t.R(0, 0) - q);
  }
  Matrix minv;
  solve_layer(t.P, t.Q, t.R, zeta_, minv);
  const Vector x = minv * (t.Q * v_);
  const double lam = x.maxCoeff();
  v_ = x / lam;
  // Row-sum rounding errors propagate through A_n; under tilted sampling
  // the products grow, so project back onto stochastic matrices.
  zeta_ = minv * t.P;
  zeta_.array().colwise() /= zeta_.rowwise().sum().array();
  return std::log(lam);
}

long law_burn_in(const EnvironmentLaw& law, double tol, std::uint64_t seed) {
  if (law.m == 1) return 0;
  const Contraction c = contraction_probe(law, 60, 20, seed ^ 0x5eedull);
  return std::clamp<long>(burn_in_for(c, tol), 10, 100000);
}

namespace {

struct AtomTable {
  int m = 1;
  std::vector<double> log_lambda;  // m = 1 only
};

AtomTable atom_table(const EnvironmentLaw& law) {
  AtomTable t;
  t.m = law.m;
  if (law.m == 1) {
    for (const auto& a : law.atoms) {
      const double q = a.Q(0, 0);
      t.log_lambda.push_back(std::log(q) - std::log(1.0 - a.R(0, 0) - q));
    }
  }
  return t;
}

}  // namespace

LyapunovEstimate lyapunov_exponent(const EnvironmentLaw& law, long n,
                                   int replicas, std::uint64_t seed,
                                   int workers) {
  if (n < 1 || replicas < 1) throw ConfigError("n and replicas must be >= 1");
  law.validate();
  const long burn = law_burn_in(law, 1e-12, seed);
  const AtomTable table = atom_table(law);
  const auto key = derive_key(seed, StreamDomain::kReplica, 1);
  const auto per = parallel_map<double>(
      static_cast<std::size_t>(replicas), workers, [&](std::size_t r) {
        Rng rng(key, r);
        double sum = 0.0;
        if (law.m == 1) {
          for (long j = 0; j < n; ++j) {
            sum += table.log_lambda[law.sample_atom(rng.uniform())];
          }
          return sum / n;
        }
        ChainStepper st(law.m);
        for (long j = 0; j < burn; ++j) {
          st.step(law.atoms[law.sample_atom(rng.uniform())]);
        }
        st.reset_v();
        for (long j = 0; j < n; ++j) {
          sum += st.step(law.atoms[law.sample_atom(rng.uniform())]);
        }
        return sum / n;
      });
  LyapunovEstimate out;
  out.n = n;
  out.replicas = replicas;
  out.burn_in = burn;
  const double mean = std::accumulate(per.begin(), per.end(), 0.0) / replicas;
  double ss = 0.0;
  for (double x : per) ss += (x - mean) * (x - mean);
  out.value = mean;
  out.std_error = replicas > 1 ? std::sqrt(ss / (replicas - 1) / replicas) : 0;
  return out;
}

namespace {

struct BatchResult {
  double log_r = 0.0;
  double min_ess = 1.0;
};

BatchResult run_population(const EnvironmentLaw& law, const AtomTable& table,
                           double alpha, long n, int pop, long burn,
                           std::uint64_t seed, int batch) {
  const auto env_key =
      derive_key(seed, StreamDomain::kReplica, 1000 + static_cast<unsigned>(batch));
  Rng resample(derive_key(seed, StreamDomain::kBatch, batch), 0);
  std::vector<Rng> rngs;
  rngs.reserve(pop);
  for (int i = 0; i < pop; ++i) rngs.emplace_back(env_key, i);
  const bool stateful = law.m > 1;
  std::vector<ChainStepper> states;
  if (stateful) {
    states.assign(pop, ChainStepper(law.m));
    for (int i = 0; i < pop; ++i) {
      for (long j = 0; j < burn; ++j) {
        states[i].step(law.atoms[law.sample_atom(rngs[i].uniform())]);
      }
      states[i].reset_v();
    }
  }
  std::vector<double> logw(pop, 0.0);  // carried log weights
  std::vector<double> lw(pop);
  std::vector<ChainStepper> scratch;
  BatchResult out;
  double acc = 0.0;
  for (long j = 0; j < n; ++j) {
    double mx = -std::numeric_limits<double>::infinity();
    double mx_old = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < pop; ++i) {
      const int a = law.sample_atom(rngs[i].uniform());
      const double ll =
          stateful ? states[i].step(law.atoms[a]) : table.log_lambda[a];
      mx_old = std::max(mx_old, logw[i]);
      lw[i] = logw[i] + alpha * ll;
      mx = std::max(mx, lw[i]);
    }
    double s_new = 0.0, s_old = 0.0, s2 = 0.0;
    for (int i = 0; i < pop; ++i) {
      const double w = std::exp(lw[i] - mx);
      s_new += w;
      s2 += w * w;
      s_old += std::exp(logw[i] - mx_old);
    }
    // Increment ln(sum W_i w_i / sum W_i).
    acc += (mx + std::log(s_new)) - (mx_old + std::log(s_old));
    const double ess = s_new * s_new / s2 / pop;
    out.min_ess = std::min(out.min_ess, ess);
    for (int i = 0; i < pop; ++i) logw[i] = lw[i] - mx;
    if (ess < 0.5) {
      // Systematic resampling.
      if (stateful) {
        scratch.clear();
        scratch.reserve(pop);
        const double step = s_new / pop;
        double u = resample.uniform() * step;
        double cum = 0.0;
        int src = -1;
        for (int k = 0; k < pop; ++k) {
          const double target = u + k * step;
          while (cum <= target && src + 1 < pop) {
            ++src;
            cum += std::exp(logw[src]);
          }
          scratch.push_back(states[src]);
        }
        states.swap(scratch);
      } else {
        resample.uniform();
      }
      std::fill(logw.begin(), logw.end(), 0.0);
    }
  }
  out.log_r = acc / n;
  return out;
}

}  // namespace

MomentEstimate log_moment_lyapunov(const EnvironmentLaw& law, double alpha,
                                   long n, int replicas, std::uint64_t seed,
                                   const MomentOptions& opts) {
  if (n < 1 || replicas < 1) throw ConfigError("n and replicas must be >= 1");
  law.validate();
  const int batches = std::max(1, std::min(opts.batches, replicas));
  const int pop = replicas / batches;
  const long burn = opts.burn_in >= 0 ? opts.burn_in
                                      : law_burn_in(law, 1e-12, seed);
  const AtomTable table = atom_table(law);
  MomentEstimate out;
  out.alpha = alpha;
  out.n = n;
  out.replicas = pop * batches;
  out.batches = batches;
  if (alpha == 0.0) {
    out.batch_log_r.assign(batches, 0.0);
    return out;
  }
  const auto res = parallel_map<BatchResult>(
      static_cast<std::size_t>(batches), opts.workers, [&](std::size_t b) {
        return run_population(law, table, alpha, n, pop, burn, seed,
                              static_cast<int>(b));
      });
  double mean = 0.0;
  for (const auto& r : res) {
    out.batch_log_r.push_back(r.log_r);
    mean += r.log_r / batches;
    out.min_ess_fraction = std::min(out.min_ess_fraction, r.min_ess);
  }
  double ss = 0.0;
  for (const auto& r : res) ss += (r.log_r - mean) * (r.log_r - mean);
  out.log_r = mean;
  out.log_stderr = batches > 1 ? std::sqrt(ss / (batches - 1) / batches) : 0;
  out.r_hat = std::exp(mean);
  out.std_error = out.r_hat * out.log_stderr;
  if (out.min_ess_fraction < 0.01) {
    out.warning = "heavy-tailed weights: effective sample size fell to " +
                  std::to_string(out.min_ess_fraction * 100) +
                  "% of the population; increase replicas";
  }
  return out;
}

MomentEstimate moment_lyapunov(const EnvironmentLaw& law, double alpha, long n,
                               int replicas, std::uint64_t seed,
                               const MomentOptions& opts) {
  if (alpha < 0.0) throw ConfigError("alpha must be nonnegative");
  return log_moment_lyapunov(law, alpha, n, replicas, seed, opts);
}

SlopeEstimate log_moment_slope_at_zero(const EnvironmentLaw& law, double h,
                                       long n, int replicas,
                                       std::uint64_t seed,
                                       const MomentOptions& opts) {
  if (!(h > 0.0)) throw ConfigError("h must be positive");
  const auto plus = log_moment_lyapunov(law, h, n, replicas, seed, opts);
  const auto minus = log_moment_lyapunov(law, -h, n, replicas, seed, opts);
  const std::size_t B = plus.batch_log_r.size();
  std::vector<double> d(B);
  for (std::size_t b = 0; b < B; ++b) {
    d[b] = (plus.batch_log_r[b] - minus.batch_log_r[b]) / (2 * h);
  }
  SlopeEstimate out;
  out.h = h;
  out.slope = std::accumulate(d.begin(), d.end(), 0.0) / B;
  double ss = 0.0;
  for (double x : d) ss += (x - out.slope) * (x - out.slope);
  out.std_error = B > 1 ? std::sqrt(ss / (B - 1) / B) : 0.0;
  return out;
}

SolveResult solve_s(const EnvironmentLaw& law, double tol, long n,
                    int replicas, std::uint64_t seed, double alpha_max,
                    const MomentOptions& opts) {
  MomentOptions o = opts;
  if (o.burn_in < 0) o.burn_in = law_burn_in(law, 1e-12, seed);
  SolveResult out;
  auto f = [&](double a) {
    ++out.evaluations;
    return log_moment_lyapunov(law, a, n, replicas, seed, o);
  };
  double lo = 0.1;
  MomentEstimate f_lo = f(lo);
  double hi = lo;
  MomentEstimate f_hi = f_lo;
  if (f_lo.log_r > 0.0) {
    // Root below 0.1: shrink until ln r turns negative.
    bool found = false;
    for (int k = 0; k < 30; ++k) {
      hi = lo;
      f_hi = f_lo;
      lo /= 2;
      f_lo = f(lo);
      if (f_lo.log_r < 0.0) {
        found = true;
        break;
      }
    }
    if (!found) {
      out.diffusive = true;
      return out;
    }
  } else {
    bool found = false;
    while (hi < alpha_max) {
      lo = hi;
      f_lo = f_hi;
      hi = std::min(2 * hi, alpha_max);
      f_hi = f(hi);
      if (f_hi.log_r > 0.0) {
        found = true;
        break;
      }
    }
    if (!found) {
      out.diffusive = true;
      return out;
    }
  }
  double mid = 0.5 * (lo + hi);
  MomentEstimate fm = f(mid);
  for (int it = 0; it < 60 && std::abs(fm.log_r) >= tol && hi - lo > 1e-9;
       ++it) {
    if (fm.log_r < 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
    mid = 0.5 * (lo + hi);
    fm = f(mid);
  }
  out.s_hat = mid;
  out.log_r_at_root = fm.log_r;
  out.log_stderr = fm.log_stderr;
  const double h = 0.05 * mid;
  const double slope = (f(mid + h).log_r - f(mid - h).log_r) / (2 * h);
  out.slope = slope;
  const double half = slope > 0 ? 1.96 * fm.log_stderr / slope : mid;
  out.ci_lo = mid - half;
  out.ci_hi = mid + half;
  return out;
}

double perron_root(const Matrix& a, Vector* vec) {
  const int m = static_cast<int>(a.rows());
  Vector x = Vector::Ones(m);
  double lam = 0.0;
  for (int it = 0; it < 100000; ++it) {
    const Vector y = a * x;
    const double next = y.maxCoeff();
    if (!(next > 0.0)) throw PositivityError("matrix has no positive root");
    const Vector xn = y / next;
    const double diff = (xn - x).cwiseAbs().maxCoeff();
    x = xn;
    lam = next;
    if (diff < 1e-15) break;
  }
  if (vec) *vec = x;
  return lam;
}

std::vector<double> atom_lyapunov(const EnvironmentLaw& law) {
  std::vector<double> out;
  for (const auto& t : law.atoms) {
    const Matrix zeta = zeta_fixed_point(t, 1e-14);
    Matrix minv;
    solve_layer(t.P, t.Q, t.R, zeta, minv);
    out.push_back(std::log(perron_root(minv * t.Q)));
  }
  return out;
}

}  // namespace striprw
