#pragma once

#include <cblas.h>

#include "dyslab/tensor.hpp"

namespace dyslab::nn::detail {

#ifdef DYSLAB_REAL_DOUBLE
#define DYSLAB_BLAS(name) cblas_d##name
#else
#define DYSLAB_BLAS(name) cblas_s##name
#endif

/// Row-major C = alpha * op(A) * op(B) + beta * C, op(A) is M x K, op(B) is K x N.
inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, real alpha, const real* a,
                 const real* b, real beta, real* c) {
  const int lda = trans_a ? m : k;
  const int ldb = trans_b ? k : n;
  DYSLAB_BLAS(gemm)(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans, m, n,
                    k, alpha, a, lda, b, ldb, beta, c, n);
}

/// y = alpha * op(A) * x + beta * y, A is M x N row-major.
inline void gemv(bool trans_a, int m, int n, real alpha, const real* a, const real* x, real beta, real* y) {
  DYSLAB_BLAS(gemv)(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, m, n, alpha, a, n, x, 1, beta, y, 1);
}

/// A += alpha * x * y^T, A is M x N row-major.
inline void ger(int m, int n, real alpha, const real* x, const real* y, real* a) {
  DYSLAB_BLAS(ger)(CblasRowMajor, m, n, alpha, x, 1, y, 1, a, n);
}

#undef DYSLAB_BLAS

}  // namespace dyslab::nn::detail
