#pragma once

// Thin row-major GEMM facade over Eigen so the backend stays swappable.

#include <Eigen/Dense>

namespace silp::la {

using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// C = A(m,k) * B(k,n), overwriting C.
inline void gemm(const double* a, const double* b, double* c, int m, int k, int n) {
  ConstMatMap A(a, m, k), B(b, k, n);
  MatMap C(c, m, n);
  C.noalias() = A * B;
}

// C += A(m,k) * B(k,n)
inline void gemm_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  ConstMatMap A(a, m, k), B(b, k, n);
  MatMap C(c, m, n);
  C.noalias() += A * B;
}

// C += A^T(m,k) * B(m,n)  ->  (k,n)
inline void gemm_at_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  ConstMatMap A(a, m, k), B(b, m, n);
  MatMap C(c, k, n);
  C.noalias() += A.transpose() * B;
}

// C += A(m,k) * B^T(n,k)  ->  (m,n)
inline void gemm_bt_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  ConstMatMap A(a, m, k), B(b, n, k);
  MatMap C(c, m, n);
  C.noalias() += A * B.transpose();
}

}  // namespace silp::la
