#pragma once

// Dense row-major kernels used by the autodiff engine. The functions in
// `reflx::kernels` are OpenMP-parallel over output rows; `reflx::kernels::serial`
// holds straightforward reference loops kept for testing and benchmarking.

#include <cstddef>

namespace reflx::kernels {

// C[n,m] (+)= A[n,k] * B[k,m]
void gemm_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
             std::size_t m, bool accumulate);
// C[k,m] (+)= A[n,k]^T * B[n,m]
void gemm_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
             std::size_t m, bool accumulate);
// C[n,k] (+)= A[n,m] * B[k,m]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t m,
             std::size_t k, bool accumulate);

// Row-wise softmax / log-softmax of x[rows, cols] into out.
void softmax_rows(const double* x, double* out, std::size_t rows, std::size_t cols);
void log_softmax_rows(const double* x, double* out, std::size_t rows, std::size_t cols);

namespace serial {
void gemm_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
             std::size_t m, bool accumulate);
void gemm_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
             std::size_t m, bool accumulate);
void gemm_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t m,
             std::size_t k, bool accumulate);
void softmax_rows(const double* x, double* out, std::size_t rows, std::size_t cols);
void log_softmax_rows(const double* x, double* out, std::size_t rows, std::size_t cols);
}  // namespace serial

}  // namespace reflx::kernels
