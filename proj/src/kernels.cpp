#include "dsgkd/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Core>

#if defined(_OPENMP)
#include <omp.h>
#endif
#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace dsgkd::kernels {

namespace {

int g_threads = 0;  // 0 = OpenMP default

// Below this many multiply-adds a product is not worth forking for.
constexpr std::size_t kParallelWork = 1u << 15;

int thread_count() {
#if defined(_OPENMP)
  return g_threads > 0 ? g_threads : omp_get_max_threads();
#else
  return 1;
#endif
}

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
using MutMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;

// Output rows are computed in fixed blocks so the summation order never
// depends on the thread count.
constexpr std::size_t kRowBlock = 64;

// Rows [r0, r0 + len) of C (m x n, leading dimension n) += or = op(A) op(B).
void gemm_block(bool trans_a, bool trans_b, std::size_t r0, std::size_t len, std::size_t m,
                std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
                std::size_t ldb, double* c, bool accumulate) {
  const auto ei = [](std::size_t v) { return static_cast<Eigen::Index>(v); };
  MutMap cm(c + r0 * n, ei(len), ei(n), Eigen::OuterStride<>(ei(n)));
  const ConstMap am = trans_a ? ConstMap(a, ei(k), ei(m), Eigen::OuterStride<>(ei(lda)))
                              : ConstMap(a, ei(m), ei(k), Eigen::OuterStride<>(ei(lda)));
  const ConstMap bm = trans_b ? ConstMap(b, ei(n), ei(k), Eigen::OuterStride<>(ei(ldb)))
                              : ConstMap(b, ei(k), ei(n), Eigen::OuterStride<>(ei(ldb)));
  auto run = [&](const auto& lhs) {
    if (trans_b) {
      if (accumulate) cm.noalias() += lhs * bm.transpose();
      else cm.noalias() = lhs * bm.transpose();
    } else {
      if (accumulate) cm.noalias() += lhs * bm;
      else cm.noalias() = lhs * bm;
    }
  };
  if (trans_a) {
    run(am.middleCols(ei(r0), ei(len)).transpose());
  } else {
    run(am.middleRows(ei(r0), ei(len)));
  }
}

}  // namespace

void set_num_threads(int threads) { g_threads = std::max(threads, 0); }

int num_threads() { return thread_count(); }

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c,
          bool accumulate) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate) std::fill(c, c + m * n, 0.0);
    return;
  }
  const std::size_t blocks = (m + kRowBlock - 1) / kRowBlock;
  const int threads = thread_count();
  const bool parallel = threads > 1 && blocks > 1 && m * n * k >= kParallelWork;
  const auto count = static_cast<std::ptrdiff_t>(blocks);
#pragma omp parallel for schedule(static) num_threads(threads) if (parallel)
  for (std::ptrdiff_t blk = 0; blk < count; ++blk) {
    const std::size_t r0 = static_cast<std::size_t>(blk) * kRowBlock;
    gemm_block(trans_a, trans_b, r0, std::min(kRowBlock, m - r0), m, n, k, a, lda, b, ldb, c,
               accumulate);
  }
}

void gemm_batched(std::size_t batch, bool trans_a, bool trans_b, std::size_t m, std::size_t n,
                  std::size_t k, const double* a, std::size_t stride_a, const double* b,
                  std::size_t stride_b, double* c, std::size_t stride_c, bool accumulate) {
  if (batch == 0 || m == 0 || n == 0) return;
  const std::size_t lda = trans_a ? m : k;
  const std::size_t ldb = trans_b ? k : n;
  const int threads = thread_count();
  const bool parallel = threads > 1 && batch > 1 && batch * m * n * k >= kParallelWork;
  const auto count = static_cast<std::ptrdiff_t>(batch);
#pragma omp parallel for schedule(static) num_threads(threads) if (parallel)
  for (std::ptrdiff_t e = 0; e < count; ++e) {
    const auto idx = static_cast<std::size_t>(e);
    double* ce = c + idx * stride_c;
    if (k == 0) {
      if (!accumulate) std::fill(ce, ce + m * n, 0.0);
      continue;
    }
    for (std::size_t r0 = 0; r0 < m; r0 += kRowBlock) {
      gemm_block(trans_a, trans_b, r0, std::min(kRowBlock, m - r0), m, n, k, a + idx * stride_a,
                 lda, b + idx * stride_b, ldb, ce, accumulate);
    }
  }
}

namespace {

inline void softmax_one(const double* x, double* y, std::size_t cols, const std::uint8_t* valid) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < cols; ++j) {
    if (valid == nullptr || valid[j]) mx = std::max(mx, x[j]);
  }
  if (mx == -std::numeric_limits<double>::infinity()) {
    std::fill(y, y + cols, 0.0);
    return;
  }
  double total = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    if (valid == nullptr || valid[j]) {
      y[j] = std::exp(x[j] - mx);
      total += y[j];
    } else {
      y[j] = 0.0;
    }
  }
  const double inv = 1.0 / total;
  for (std::size_t j = 0; j < cols; ++j) y[j] *= inv;
}

inline void layernorm_one(const double* x, const double* gain, const double* bias, double* xhat,
                          double* inv_std, double* y, std::size_t cols, double eps) {
  double mu = 0.0;
  for (std::size_t j = 0; j < cols; ++j) mu += x[j];
  mu /= static_cast<double>(cols);
  double var = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    const double dlt = x[j] - mu;
    var += dlt * dlt;
  }
  var /= static_cast<double>(cols);
  const double is = 1.0 / std::sqrt(var + eps);
  *inv_std = is;
  for (std::size_t j = 0; j < cols; ++j) {
    xhat[j] = (x[j] - mu) * is;
    y[j] = xhat[j] * gain[j] + bias[j];
  }
}

}  // namespace

void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols,
                  const std::uint8_t* key_valid, std::size_t rows_per_group) {
  const int threads = thread_count();
  const bool parallel = threads > 1 && rows * cols >= kParallelWork / 8;
  const auto count = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) num_threads(threads) if (parallel)
  for (std::ptrdiff_t r = 0; r < count; ++r) {
    const auto row = static_cast<std::size_t>(r);
    const std::uint8_t* valid =
        key_valid == nullptr ? nullptr : key_valid + (row / rows_per_group) * cols;
    softmax_one(x + row * cols, y + row * cols, cols, valid);
  }
}

void layernorm_rows(const double* x, const double* gain, const double* bias, double* xhat,
                    double* inv_std, double* y, std::size_t rows, std::size_t cols, double eps) {
  const int threads = thread_count();
  const bool parallel = threads > 1 && rows * cols >= kParallelWork / 8;
  const auto count = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) num_threads(threads) if (parallel)
  for (std::ptrdiff_t r = 0; r < count; ++r) {
    const auto row = static_cast<std::size_t>(r);
    layernorm_one(x + row * cols, gain, bias, xhat + row * cols, inv_std + row, y + row * cols,
                  cols, eps);
  }
}

namespace reference {

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c,
          bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = trans_a ? a[p * lda + i] : a[i * lda + p];
        const double bv = trans_b ? b[j * ldb + p] : b[p * ldb + j];
        acc += av * bv;
      }
      c[i * n + j] = accumulate ? c[i * n + j] + acc : acc;
    }
  }
}

void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols,
                  const std::uint8_t* key_valid, std::size_t rows_per_group) {
  for (std::size_t r = 0; r < rows; ++r) {
    const std::uint8_t* valid =
        key_valid == nullptr ? nullptr : key_valid + (r / rows_per_group) * cols;
    softmax_one(x + r * cols, y + r * cols, cols, valid);
  }
}

void layernorm_rows(const double* x, const double* gain, const double* bias, double* xhat,
                    double* inv_std, double* y, std::size_t rows, std::size_t cols, double eps) {
  for (std::size_t r = 0; r < rows; ++r) {
    layernorm_one(x + r * cols, gain, bias, xhat + r * cols, inv_std + r, y + r * cols, cols, eps);
  }
}

}  // namespace reference

}  // namespace dsgkd::kernels
