#pragma once

// Dense row-major kernels behind the tensor ops. Each kernel has an OpenMP
// version (parallel over output rows) and a serial reference in
// ssnmt::kernels::serial. Per output element both perform the same
// floating-point operations in the same order, so results are bit-identical
// regardless of thread count.

#include <cstddef>

#include "ssnmt/common.hpp"

namespace ssnmt::kernels {

enum class Trans { kNo, kYes };

// C[M,N] (+)= op(A)[M,K] * op(B)[K,N]. op(A) = A stored [M,K], or A stored
// [K,M] when ta == kYes; likewise for B. The inner sum runs over k ascending.
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const Real* a,
          const Real* b, Real* c, bool accumulate);

// g independent products, operands laid out back to back; parallel over g.
void gemm_batched(Trans ta, Trans tb, std::size_t groups, std::size_t m, std::size_t n,
                  std::size_t k, const Real* a, const Real* b, Real* c, bool accumulate);

void softmax_rows(const Real* x, Real* y, std::size_t rows, std::size_t cols);
void log_softmax_rows(const Real* x, Real* y, std::size_t rows, std::size_t cols);

// y = gain * (x - mean) / sqrt(var + eps) + bias per row. xhat and rstd are
// saved for the backward pass.
void layer_norm_rows(const Real* x, const Real* gain, const Real* bias, Real* y, Real* xhat,
                     Real* rstd, std::size_t rows, std::size_t cols, Real eps);

namespace serial {

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const Real* a,
          const Real* b, Real* c, bool accumulate);
void gemm_batched(Trans ta, Trans tb, std::size_t groups, std::size_t m, std::size_t n,
                  std::size_t k, const Real* a, const Real* b, Real* c, bool accumulate);
void softmax_rows(const Real* x, Real* y, std::size_t rows, std::size_t cols);
void log_softmax_rows(const Real* x, Real* y, std::size_t rows, std::size_t cols);
void layer_norm_rows(const Real* x, const Real* gain, const Real* bias, Real* y, Real* xhat,
                     Real* rstd, std::size_t rows, std::size_t cols, Real eps);

}  // namespace serial

// Number of threads the parallel kernels may use (1 without OpenMP).
int max_threads();

}  // namespace ssnmt::kernels
