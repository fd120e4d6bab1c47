#include <gtest/gtest.h>

#include <cmath>

#include "frozen_oracles.hpp"
#include "striprw/algebra.hpp"
#include "striprw/rng.hpp"
#include "striprw/error.hpp"

using namespace striprw;

namespace {

Matrix mat2(const double* a) {
  Matrix out(2, 2);
  out << a[0], a[1], a[2], a[3];
  return out;
}

Triple const_triple() {
  Triple t;
  t.P = Matrix(2, 2);
  t.P << 0.5, 0.1, 0.2, 0.35;
  t.Q = Matrix(2, 2);
  t.Q << 0.1, 0.05, 0.05, 0.15;
  t.R = Matrix(2, 2);
  t.R << 0.15, 0.1, 0.1, 0.15;
  return t;
}

EnvironmentLaw strip_law() {
  Triple a, b;
  a.P = Matrix(2, 2);
  a.P << .45, .15, .15, .45;
  a.Q = Matrix::Constant(2, 2, 0.1);
  a.R = Matrix(2, 2);
  a.R << 0, .2, .2, 0;
  b.P = Matrix(2, 2);
  b.P << .15, .1, .1, .2;
  b.Q = Matrix(2, 2);
  b.Q << .35, .2, .2, .3;
  b.R = Matrix::Constant(2, 2, 0.1);
  return mixture_law({a, b}, {0.5, 0.5}, 0.05);
}

// Random valid triple of width m: positive entries, rows summing to 1.
Triple random_triple(int m, Rng& rng) {
  Triple t;
  t.P = Matrix(m, m);
  t.Q = Matrix(m, m);
  t.R = Matrix(m, m);
  for (int i = 0; i < m; ++i) {
    double s = 0.0;
    for (int j = 0; j < m; ++j) {
      t.P(i, j) = 0.2 + rng.uniform();
      t.Q(i, j) = 0.1 + rng.uniform();
      t.R(i, j) = 0.1 + rng.uniform();
      s += t.P(i, j) + t.Q(i, j) + t.R(i, j);
    }
    t.P.row(i) /= s;
    t.Q.row(i) /= s;
    t.R.row(i) /= s;
  }
  return t;
}

EnvironmentWindow constant_window(const Triple& t, long a, long b) {
  return EnvironmentWindow(a, std::vector<Triple>(b - a + 1, t), 0.01);
}

}  // namespace

TEST(Fold, ScalarSteps) {
  const Triple t = Triple::scalar(0.75, 0.25, 0.0);
  EXPECT_DOUBLE_EQ(fold_step(Matrix::Ones(1, 1), t)(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(fold_step(Matrix::Zero(1, 1), t)(0, 0), 0.75);
}

TEST(Fold, StochasticAndMatchesDirectSolve) {
  Rng rng(11, 0);
  for (int rep = 0; rep < 20; ++rep) {
    const Triple t = random_triple(2, rng);
    const Matrix prev = uniform_stochastic(2);
    const Matrix z = fold_step(prev, t);
    EXPECT_LT(max_row_sum_deviation(z), 1e-12);
    const Eigen::MatrixXd M =
        Eigen::MatrixXd::Identity(2, 2) - t.R - t.Q * prev;
    const Eigen::MatrixXd direct = M.fullPivLu().solve(Eigen::MatrixXd(t.P));
    EXPECT_LT((z - direct).cwiseAbs().maxCoeff(), 1e-13);
  }
}

TEST(FixedPoint, ScalarIsOne) {
  EXPECT_DOUBLE_EQ(
      zeta_fixed_point(Triple::scalar(0.6, 0.3, 0.1), 1e-14)(0, 0), 1.0);
}

TEST(FixedPoint, SymmetricTripleIsUniform) {
  Triple t;
  t.P = Matrix::Constant(2, 2, 0.25);
  t.Q = Matrix::Constant(2, 2, 0.25);
  t.R = Matrix::Zero(2, 2);
  const Matrix z = zeta_fixed_point(t, 1e-14);
  EXPECT_LT((z - Matrix::Constant(2, 2, 0.5)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((fold_step(z, t) - z).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(FixedPoint, MatchesOracleAndResidual) {
  const Triple t = const_triple();
  const Matrix z = zeta_fixed_point(t, 1e-14);
  EXPECT_LT((z - mat2(oracle::kConst_zeta)).cwiseAbs().maxCoeff(), 1e-12);
  Rng rng(3, 1);
  for (int m : {1, 2, 3}) {
    const Triple r = random_triple(m, rng);
    const Matrix zr = zeta_fixed_point(r, 1e-13);
    EXPECT_LT((fold_step(zr, r) - zr).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(ZetaWindow, ConstantEnvironmentMatchesFixedPoint) {
  const Triple t = const_triple();
  const auto env = constant_window(t, -200, 50);
  const auto zw = zeta_window(env, 0, 1e-12);
  const Matrix z = zeta_fixed_point(t, 1e-15);
  for (long n = 0; n <= 50; ++n) {
    EXPECT_LT((zw.zeta[n - zw.first] - z).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(ZetaWindow, ScalarIsOne) {
  const auto law = model1_law({0.8, 0.3}, {0.5, 0.5}, 0.05);
  const auto env = sample_iid_environment(law, -10, 20, 2);
  const auto zw = zeta_window(env, 0, 1e-12);
  for (const auto& z : zw.zeta) EXPECT_DOUBLE_EQ(z(0, 0), 1.0);
}

TEST(ZetaWindow, SeedIndependent) {
  const auto law = strip_law();
  const auto env = sample_iid_environment(law, -300, 40, 8);
  const Matrix id = Matrix::Identity(2, 2);
  const auto a = zeta_window(env, 0, 1e-12);
  const auto b = zeta_window(env, 0, 1e-12, &id);
  for (long n = 0; n <= 40; ++n) {
    EXPECT_LT((a.zeta[n - a.first] - b.zeta[n - b.first]).cwiseAbs().maxCoeff(),
              1e-12);
  }
}

TEST(ZetaWindow, ShortWindowAsksForMore) {
  const auto law = strip_law();
  const auto env = sample_iid_environment(law, -2, 40, 8);
  try {
    zeta_window(env, 0, 1e-12);
    FAIL() << "expected NeedsWiderWindow";
  } catch (const NeedsWiderWindow& e) {
    EXPECT_TRUE(e.left());
    EXPECT_GT(e.extra_layers(), 0);
  }
}

TEST(Contraction, ScalarSentinel) {
  const auto c = contraction_probe(model1_law({0.8, 0.3}, {.5, .5}, .05), 20,
                                   5, 1);
  EXPECT_EQ(c.theta, 0.0);
  EXPECT_EQ(c.K, 0.0);
}

TEST(Contraction, StripGeometricDecay) {
  const auto c = contraction_probe(strip_law(), 60, 100, 1);
  EXPECT_LT(c.theta, 1.0);
  EXPECT_GT(c.r_squared, 0.95);
  EXPECT_LT(c.mean_log_gap.back(), std::log(1e-12));
  const auto one = contraction_probe(strip_law(), 60, 1, 1);
  EXPECT_NEAR(one.theta, c.theta, 0.1);
}

TEST(Chain, ScalarFastPath) {
  const auto law = model1_law({0.8, 0.3}, {0.5, 0.5}, 0.05);
  const auto env = sample_iid_environment(law, -5, 30, 3);
  const auto ch = build_chain(env, 0, 1e-12);
  for (long n = 0; n <= 30; ++n) {
    EXPECT_DOUBLE_EQ(ch.pi(n)(0), 1.0);
    EXPECT_DOUBLE_EQ(ch.v(n)(0), 1.0);
    EXPECT_DOUBLE_EQ(ch.lambda(n), env.q(n) / env.p(n));
    EXPECT_DOUBLE_EQ(ch.u(n)(0), 1.0 / env.p(n));
  }
}

TEST(Chain, ConstantEnvironmentMatchesOracle) {
  const auto env = constant_window(const_triple(), -300, 60);
  const auto ch = build_chain(env, 0, 1e-12);
  for (long n : {0L, 10L, 60L}) {
    EXPECT_LT((Matrix(ch.A(n)) - mat2(oracle::kConst_A)).cwiseAbs().maxCoeff(),
              1e-12);
    EXPECT_NEAR(ch.lambda(n), oracle::kConst_lam, 1e-12);
    for (int i = 0; i < 2; ++i) {
      EXPECT_NEAR(ch.pi(n)(i), oracle::kConst_pi[i], 1e-12);
      EXPECT_NEAR(ch.v(n)(i), oracle::kConst_v[i], 1e-12);
      EXPECT_NEAR(ch.u(n)(i), oracle::kConst_u[i], 1e-12);
    }
  }
}

TEST(Chain, DefiningRelationsHold) {
  const auto env = sample_iid_environment(strip_law(), -100, 400, 5);
  const auto ch = build_chain(env, 0, 1e-12);
  for (long n = 1; n <= 400; ++n) {
    EXPECT_LT(ch.eigen_residual(n), 1e-9);
    const Eigen::RowVectorXd next = ch.pi(n - 1) * ch.zeta(n - 1);
    EXPECT_LT((next - ch.pi(n)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT(max_row_sum_deviation(ch.zeta(n)), 1e-12);
  }
}

TEST(Lyapunov, ScalarClosedForm) {
  const auto law = model1_law({0.8, 0.3}, {0.5, 0.5}, 0.05);
  const auto est = lyapunov_exponent(law, 5000, 100, 7);
  EXPECT_NEAR(est.value, oracle::kLstarLambda, 3 * est.std_error);
}

TEST(Lyapunov, ConstantIsExact) {
  const auto law = model1_law({0.75}, {1.0}, 0.05);
  const auto est = lyapunov_exponent(law, 1000, 3, 7);
  EXPECT_NEAR(est.value, std::log(1.0 / 3.0), 1e-12);
  const auto strip = mixture_law({const_triple()}, {1.0}, 0.01);
  EXPECT_NEAR(lyapunov_exponent(strip, 2000, 2, 7).value,
              std::log(oracle::kConst_lam), 2e-3);
}

TEST(Perron, MatchesOracle) {
  Vector v;
  const double r = perron_root(mat2(oracle::kConst_A), &v);
  EXPECT_NEAR(r, oracle::kConst_lam, 1e-12);
  const auto lam = atom_lyapunov(strip_law());
  EXPECT_NEAR(lam[1], std::log(oracle::kConstB_lam), 1e-10);
}

TEST(Moment, ZeroIsOne) {
  const auto law = model1_law({0.8, 0.3}, {0.5, 0.5}, 0.05);
  const auto r = moment_lyapunov(law, 0.0, 50, 100, 1);
  EXPECT_EQ(r.r_hat, 1.0);
  EXPECT_THROW(moment_lyapunov(law, -0.5, 50, 100, 1), ConfigError);
}

TEST(Moment, ScalarClosedForm) {
  const auto law = model1_law({0.8, 0.3}, {0.5, 0.5}, 0.05);
  const double want[3] = {oracle::kLstarR025, oracle::kLstarR05,
                          oracle::kLstarR1};
  const double alphas[3] = {0.25, 0.5, 1.0};
  for (int k = 0; k < 3; ++k) {
    const auto r = moment_lyapunov(law, alphas[k], 200, 5000, 13);
    EXPECT_NEAR(r.r_hat, want[k], 4 * r.std_error) << alphas[k];
  }
}

TEST(Moment, SlopeAtZeroIsLambda) {
  const auto law = model1_law({0.8, 0.3}, {0.5, 0.5}, 0.05);
  const auto sl = log_moment_slope_at_zero(law, 0.05, 200, 5000, 3);
  EXPECT_NEAR(sl.slope, oracle::kLstarLambda, 3 * sl.std_error + 0.01);
}

TEST(SolveS, ScalarClosedForm) {
  const auto law = model1_law({0.8, 0.3}, {0.5, 0.5}, 0.05);
  const auto res = solve_s(law, 1e-3, 200, 5000, 5);
  EXPECT_FALSE(res.diffusive);
  EXPECT_NEAR(res.s_hat, oracle::kLstarS, 0.02);
  EXPECT_LE(res.ci_lo, res.s_hat);
  EXPECT_GE(res.ci_hi, res.s_hat);
}

TEST(SolveS, SecondScalarLaw) {
  const auto law = model1_law({0.7, 0.45}, {0.5, 0.5}, 0.05);
  const auto res = solve_s(law, 1e-3, 200, 5000, 5);
  EXPECT_FALSE(res.diffusive);
  EXPECT_NEAR(res.s_hat, oracle::kSecondLawS, 0.05);
}

TEST(SolveS, ConstantEnvironmentIsDiffusive) {
  const auto law = model1_law({0.75}, {1.0}, 0.05);
  const auto res = solve_s(law, 1e-3, 100, 200, 5);
  EXPECT_TRUE(res.diffusive);
}
