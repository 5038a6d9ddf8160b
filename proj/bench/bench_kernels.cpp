// OpenMP kernels against the serial reference loops, at the shapes the models
// use (81 cells x d features) and at a larger square size.
//
//   ./bench_kernels --benchmark_filter=gemm
//   OMP_NUM_THREADS=4 ./bench_kernels

#include <benchmark/benchmark.h>

#include <vector>

#include "reflx/kernels.hpp"
#include "reflx/model.hpp"
#include "reflx/rng.hpp"

namespace k = reflx::kernels;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  reflx::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform() * 2.0 - 1.0;
  return v;
}

using Gemm = void (*)(const double*, const double*, double*, std::size_t, std::size_t, std::size_t,
                      bool);

void run_gemm(benchmark::State& state, Gemm gemm) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto d = static_cast<std::size_t>(state.range(1));
  const auto a = random_values(n * d, 1);
  const auto b = random_values(d * d, 2);
  std::vector<double> c(n * d);
  for (auto _ : state) {
    gemm(a.data(), b.data(), c.data(), n, d, d, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(2 * n * d * d));
}

void run_softmax(benchmark::State& state, void (*fn)(const double*, double*, std::size_t, std::size_t)) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const auto cols = static_cast<std::size_t>(state.range(1));
  const auto x = random_values(rows * cols, 3);
  std::vector<double> out(rows * cols);
  for (auto _ : state) {
    fn(x.data(), out.data(), rows, cols);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(rows * cols));
}

void BM_gemm_nn_omp(benchmark::State& s) { run_gemm(s, k::gemm_nn); }
void BM_gemm_nn_serial(benchmark::State& s) { run_gemm(s, k::serial::gemm_nn); }
void BM_gemm_tn_omp(benchmark::State& s) { run_gemm(s, k::gemm_tn); }
void BM_gemm_tn_serial(benchmark::State& s) { run_gemm(s, k::serial::gemm_tn); }
void BM_gemm_nt_omp(benchmark::State& s) { run_gemm(s, k::gemm_nt); }
void BM_gemm_nt_serial(benchmark::State& s) { run_gemm(s, k::serial::gemm_nt); }
void BM_softmax_omp(benchmark::State& s) { run_softmax(s, k::softmax_rows); }
void BM_softmax_serial(benchmark::State& s) { run_softmax(s, k::serial::softmax_rows); }
void BM_log_softmax_omp(benchmark::State& s) { run_softmax(s, k::log_softmax_rows); }
void BM_log_softmax_serial(benchmark::State& s) { run_softmax(s, k::serial::log_softmax_rows); }

void gemm_shapes(benchmark::internal::Benchmark* b) {
  b->Args({81, 64})->Args({81, 96})->Args({243, 96})->Args({512, 512});
}
void softmax_shapes(benchmark::internal::Benchmark* b) { b->Args({81, 9})->Args({4096, 9})->Args({4096, 256}); }

// One full forward pass of the default 9x9 model, for scale.
void BM_forward_sudoku9(benchmark::State& state) {
  const reflx::ReflModel model(reflx::ModelConfig::sudoku(9, static_cast<int>(state.range(0)), 8), 1);
  const auto adj = reflx::mean_adjacency(reflx::build_sudoku_graph(9));
  std::vector<int> symbols(81, 0);
  for (std::size_t i = 0; i < 81; i += 3) symbols[i] = static_cast<int>(i % 9) + 1;
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(symbols, adj).flag_probs.data());
}

}  // namespace

BENCHMARK(BM_gemm_nn_omp)->Apply(gemm_shapes);
BENCHMARK(BM_gemm_nn_serial)->Apply(gemm_shapes);
BENCHMARK(BM_gemm_tn_omp)->Apply(gemm_shapes);
BENCHMARK(BM_gemm_tn_serial)->Apply(gemm_shapes);
BENCHMARK(BM_gemm_nt_omp)->Apply(gemm_shapes);
BENCHMARK(BM_gemm_nt_serial)->Apply(gemm_shapes);
BENCHMARK(BM_softmax_omp)->Apply(softmax_shapes);
BENCHMARK(BM_softmax_serial)->Apply(softmax_shapes);
BENCHMARK(BM_log_softmax_omp)->Apply(softmax_shapes);
BENCHMARK(BM_log_softmax_serial)->Apply(softmax_shapes);
BENCHMARK(BM_forward_sudoku9)->Arg(64)->Arg(96);

BENCHMARK_MAIN();
