#pragma once

// Dense row-major kernels used by the tensor operations.
//
// The default entry points are OpenMP-parallel (when built with OpenMP) and
// split work only across independent output rows or batch entries, so the
// floating-point evaluation order of every output element does not depend on
// the thread count. `kernels::reference` holds plain serial loops kept for
// testing and benchmarking.

#include <cstddef>
#include <cstdint>

namespace dsgkd::kernels {

// Threads used by the parallel kernels; 1 forces serial execution.
void set_num_threads(int threads);
int num_threads();

// Keeps large freed buffers in the process heap so per-step tensor
// allocations do not fault in fresh pages. No-op outside glibc.
void tune_allocator();

// C[m,n] (+)= op(A) * op(B), op(X) = X or X^T. lda/ldb are the row strides of
// A and B as stored.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c,
          bool accumulate);

// `batch` independent products with fixed strides between entries. A stride
// of 0 broadcasts that operand.
void gemm_batched(std::size_t batch, bool trans_a, bool trans_b, std::size_t m, std::size_t n,
                  std::size_t k, const double* a, std::size_t stride_a, const double* b,
                  std::size_t stride_b, double* c, std::size_t stride_c, bool accumulate);

// Row softmax. `key_valid` (may be null) holds `cols` flags per group of
// `rows_per_group` consecutive rows.
void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols,
                  const std::uint8_t* key_valid, std::size_t rows_per_group);

// Per-row normalization; writes normalized values (pre-affine) to `xhat` and
// 1/sqrt(var+eps) to `inv_std`, and the affine output to `y`.
void layernorm_rows(const double* x, const double* gain, const double* bias, double* xhat,
                    double* inv_std, double* y, std::size_t rows, std::size_t cols, double eps);

namespace reference {

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c,
          bool accumulate);

void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols,
                  const std::uint8_t* key_valid, std::size_t rows_per_group);

void layernorm_rows(const double* x, const double* gain, const double* bias, double* xhat,
                    double* inv_std, double* y, std::size_t rows, std::size_t cols, double eps);

}  // namespace reference

}  // namespace dsgkd::kernels
