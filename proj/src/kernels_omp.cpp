#include "reflx/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace reflx::kernels {

namespace {
// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1u << 16;
}  // namespace

void gemm_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
             std::size_t m, bool accumulate) {
  const auto rows = static_cast<long>(n);
#pragma omp parallel for schedule(static) if (n * k * m >= kParallelWork)
  for (long ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* out = c + i * m;
    if (!accumulate) std::memset(out, 0, m * sizeof(double));
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double scale = arow[p];
      if (scale == 0.0) continue;
      const double* brow = b + p * m;
      for (std::size_t j = 0; j < m; ++j) out[j] += scale * brow[j];
    }
  }
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
             std::size_t m, bool accumulate) {
  const auto rows = static_cast<long>(k);
#pragma omp parallel for schedule(static) if (n * k * m >= kParallelWork)
  for (long ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* out = c + i * m;
    if (!accumulate) std::memset(out, 0, m * sizeof(double));
    for (std::size_t p = 0; p < n; ++p) {
      const double scale = a[p * k + i];
      if (scale == 0.0) continue;
      const double* brow = b + p * m;
      for (std::size_t j = 0; j < m; ++j) out[j] += scale * brow[j];
    }
  }
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t m,
             std::size_t k, bool accumulate) {
  const auto rows = static_cast<long>(n);
#pragma omp parallel for schedule(static) if (n * k * m >= kParallelWork)
  for (long ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double* arow = a + i * m;
    for (std::size_t j = 0; j < k; ++j) {
      const double* brow = b + j * m;
      double acc = 0.0;
#pragma omp simd reduction(+ : acc)
      for (std::size_t p = 0; p < m; ++p) acc += arow[p] * brow[p];
      c[i * k + j] = accumulate ? c[i * k + j] + acc : acc;
    }
  }
}

void softmax_rows(const double* x, double* out, std::size_t rows, std::size_t cols) {
  const auto count = static_cast<long>(rows);
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelWork)
  for (long rr = 0; rr < count; ++rr) {
    const auto r = static_cast<std::size_t>(rr);
    const double* row = x + r * cols;
    double* dst = out + r * cols;
    const double hi = *std::max_element(row, row + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      dst[c] = std::exp(row[c] - hi);
      total += dst[c];
    }
    const double inv = 1.0 / total;
    for (std::size_t c = 0; c < cols; ++c) dst[c] *= inv;
  }
}

void log_softmax_rows(const double* x, double* out, std::size_t rows, std::size_t cols) {
  const auto count = static_cast<long>(rows);
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelWork)
  for (long rr = 0; rr < count; ++rr) {
    const auto r = static_cast<std::size_t>(rr);
    const double* row = x + r * cols;
    const double hi = *std::max_element(row, row + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += std::exp(row[c] - hi);
    const double lse = hi + std::log(total);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = row[c] - lse;
  }
}

}  // namespace reflx::kernels
