#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "dsgkd/kernels.hpp"

namespace k = dsgkd::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::gemm(false, true, n, n, n, a.data(), n, b.data(), n, c.data(), false);
    } else {
      k::reference::gemm(false, true, n, n, n, a.data(), n, b.data(), n, c.data(), false);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

template <bool Parallel>
void BM_Softmax(benchmark::State& state) {
  const auto cols = static_cast<std::size_t>(state.range(0));
  const std::size_t rows = 32 * 4 * cols;
  const auto x = random_vec(rows * cols, 3);
  std::vector<std::uint8_t> valid(32 * cols, 1);
  std::vector<double> y(rows * cols);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::softmax_rows(x.data(), y.data(), rows, cols, valid.data(), 4 * cols);
    } else {
      k::reference::softmax_rows(x.data(), y.data(), rows, cols, valid.data(), 4 * cols);
    }
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Parallel>
void BM_LayerNorm(benchmark::State& state) {
  const auto cols = static_cast<std::size_t>(state.range(0));
  const std::size_t rows = 32 * 64;
  const auto x = random_vec(rows * cols, 4), g = random_vec(cols, 5), b = random_vec(cols, 6);
  std::vector<double> xhat(rows * cols), inv(rows), y(rows * cols);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::layernorm_rows(x.data(), g.data(), b.data(), xhat.data(), inv.data(), y.data(), rows, cols, 1e-5);
    } else {
      k::reference::layernorm_rows(x.data(), g.data(), b.data(), xhat.data(), inv.data(), y.data(), rows,
                                   cols, 1e-5);
    }
    benchmark::DoNotOptimize(y.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<true>)->Name("gemm/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<false>)->Name("gemm/reference")->Arg(64)->Arg(256);
BENCHMARK(BM_Softmax<true>)->Name("softmax/parallel")->Arg(64);
BENCHMARK(BM_Softmax<false>)->Name("softmax/reference")->Arg(64);
BENCHMARK(BM_LayerNorm<true>)->Name("layernorm/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_LayerNorm<false>)->Name("layernorm/reference")->Arg(64)->Arg(256);

BENCHMARK_MAIN();
