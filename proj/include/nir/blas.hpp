#pragma once

#include <cblas.h>

#include <algorithm>
#include <cstdlib>

extern "C" void openblas_set_num_threads(int);

namespace nir::detail {

// Intra-job parallel width. One fitting job is a single logical thread;
// NIR_THREADS>1 widens the BLAS kernels (deterministic for a fixed width).
inline int blas_threads() {
  static const int n = [] {
    const char* env = std::getenv("NIR_THREADS");
    int t = env ? std::atoi(env) : 1;
    t = std::clamp(t, 1, 64);
    openblas_set_num_threads(t);
    return t;
  }();
  return n;
}

// C(MxN) (+)= op(A)(MxK) * op(B)(KxN), row-major.
inline void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                 const float* a, const float* b, float* c, float beta) {
  blas_threads();
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), 1.0f, a,
              static_cast<int>(trans_a ? m : k), b, static_cast<int>(trans_b ? k : n), beta, c,
              static_cast<int>(n));
}

inline void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                 const double* a, const double* b, double* c, double beta) {
  blas_threads();
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), 1.0, a,
              static_cast<int>(trans_a ? m : k), b, static_cast<int>(trans_b ? k : n), beta, c,
              static_cast<int>(n));
}

}  // namespace nir::detail
