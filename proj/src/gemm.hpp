#pragma once

// Row-major double GEMM used by conv3d/linear/bmm. Each output row is owned
// by one thread and the k-loop order is fixed, so results do not depend on
// the worker count.

#include <cstdint>
#include <cstring>

namespace emocpd::nn::detail {

// C[m,n] = alpha * A(.)B + beta * C, with A: m x k (or k x m when trans_a)
// and B: k x n (or n x k when trans_b). Leading dimensions are row strides.
inline void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, const double* a,
                 int64_t lda, const double* b, int64_t ldb, double beta, double* c, int64_t ldc) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    double* crow = c + i * ldc;
    if (beta == 0.0) {
      std::memset(crow, 0, static_cast<size_t>(n) * sizeof(double));
    } else if (beta != 1.0) {
      for (int64_t j = 0; j < n; ++j) crow[j] *= beta;
    }
    if (!trans_a && !trans_b) {
      for (int64_t p = 0; p < k; ++p) {
        double aval = a[i * lda + p];
        if (aval == 0.0) continue;
        const double* brow = b + p * ldb;
        for (int64_t j = 0; j < n; ++j) crow[j] += aval * brow[j];
      }
    } else if (!trans_a && trans_b) {
      const double* arow = a + i * lda;
      for (int64_t j = 0; j < n; ++j) {
        const double* brow = b + j * ldb;
        double sum = 0.0;
        for (int64_t p = 0; p < k; ++p) sum += arow[p] * brow[p];
        crow[j] += sum;
      }
    } else if (trans_a && !trans_b) {
      for (int64_t p = 0; p < k; ++p) {
        double aval = a[p * lda + i];
        if (aval == 0.0) continue;
        const double* brow = b + p * ldb;
        for (int64_t j = 0; j < n; ++j) crow[j] += aval * brow[j];
      }
    } else {
      for (int64_t j = 0; j < n; ++j) {
        double sum = 0.0;
        for (int64_t p = 0; p < k; ++p) sum += a[p * lda + i] * b[j * ldb + p];
        crow[j] += sum;
      }
    }
  }
}

}  // namespace emocpd::nn::detail
