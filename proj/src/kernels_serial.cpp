#include "reflx/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace reflx::kernels::serial {

void gemm_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
             std::size_t m, bool accumulate) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double acc = accumulate ? c[i * m + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * m + j];
      c[i * m + j] = acc;
    }
  }
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
             std::size_t m, bool accumulate) {
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double acc = accumulate ? c[i * m + j] : 0.0;
      for (std::size_t p = 0; p < n; ++p) acc += a[p * k + i] * b[p * m + j];
      c[i * m + j] = acc;
    }
  }
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t m,
             std::size_t k, bool accumulate) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      double acc = accumulate ? c[i * k + j] : 0.0;
      for (std::size_t p = 0; p < m; ++p) acc += a[i * m + p] * b[j * m + p];
      c[i * k + j] = acc;
    }
  }
}

void softmax_rows(const double* x, double* out, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = x + r * cols;
    double hi = row[0];
    for (std::size_t c = 1; c < cols; ++c) hi = std::max(hi, row[c]);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += std::exp(row[c] - hi);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = std::exp(row[c] - hi) / total;
  }
}

void log_softmax_rows(const double* x, double* out, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = x + r * cols;
    double hi = row[0];
    for (std::size_t c = 1; c < cols; ++c) hi = std::max(hi, row[c]);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += std::exp(row[c] - hi);
    const double lse = hi + std::log(total);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = row[c] - lse;
  }
}

}  // namespace reflx::kernels::serial
