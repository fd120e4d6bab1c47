#pragma once

#include <Eigen/Core>
#include <Eigen/LU>

namespace striprw {

// Widest strip supported. Small dense matrices live on the stack with this
// capacity so that per-layer arithmetic never touches the heap.
inline constexpr int kMaxWidth = 8;

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::ColMajor, kMaxWidth, kMaxWidth>;
using Vector = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor,
                             kMaxWidth, 1>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic, Eigen::RowMajor,
                                1, kMaxWidth>;

using ConstMatrixMap = Eigen::Map<const Eigen::MatrixXd>;
using MatrixMap = Eigen::Map<Eigen::MatrixXd>;

// ||x|| = max_j |x(j)|
inline double sup_norm(const Vector& x) { return x.cwiseAbs().maxCoeff(); }
inline double sup_norm(const RowVector& x) { return x.cwiseAbs().maxCoeff(); }

// ||A|| = max_i sum_j |a(i,j)|, the operator norm induced by sup_norm.
template <typename Derived>
double norm(const Eigen::MatrixBase<Derived>& a) {
  return a.cwiseAbs().rowwise().sum().maxCoeff();
}

inline Matrix uniform_stochastic(int m) {
  return Matrix::Constant(m, m, 1.0 / m);
}

// Stochastic matrix whose rows all put unit mass on column `col`.
inline Matrix column_mass(int m, int col) {
  Matrix out = Matrix::Zero(m, m);
  out.col(col).setOnes();
  return out;
}

template <typename Derived>
double max_row_sum_deviation(const Eigen::MatrixBase<Derived>& a) {
  return (a.rowwise().sum().array() - 1.0).abs().maxCoeff();
}

}  // namespace striprw
