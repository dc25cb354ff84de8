#include "ssnmt/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ssnmt::kernels {
namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 15;

// One output row of C for every transpose combination. For (kNo, kYes) the
// caller passes B already transposed into bt ([K,N]).
inline void gemm_row(Trans ta, std::size_t i, std::size_t m, std::size_t n, std::size_t k,
                     const Real* a, const Real* b, Real* c_row, bool accumulate) {
  if (!accumulate) std::fill(c_row, c_row + n, Real{0});
  for (std::size_t p = 0; p < k; ++p) {
    const Real av = ta == Trans::kNo ? a[i * k + p] : a[p * m + i];
    const Real* b_row = b + p * n;
    for (std::size_t j = 0; j < n; ++j) c_row[j] += av * b_row[j];
  }
}

std::vector<Real> transpose(const Real* b, std::size_t rows, std::size_t cols) {
  std::vector<Real> t(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) t[c * rows + r] = b[r * cols + c];
  return t;
}

inline void softmax_row(const Real* x, Real* y, std::size_t cols) {
  Real mx = x[0];
  for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
  Real total = 0;
  for (std::size_t j = 0; j < cols; ++j) {
    y[j] = std::exp(x[j] - mx);
    total += y[j];
  }
  const Real inv = Real{1} / total;
  for (std::size_t j = 0; j < cols; ++j) y[j] *= inv;
}

inline void log_softmax_row(const Real* x, Real* y, std::size_t cols) {
  Real mx = x[0];
  for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
  Real total = 0;
  for (std::size_t j = 0; j < cols; ++j) total += std::exp(x[j] - mx);
  const Real lse = mx + std::log(total);
  for (std::size_t j = 0; j < cols; ++j) y[j] = x[j] - lse;
}

inline void layer_norm_row(const Real* x, const Real* gain, const Real* bias, Real* y, Real* xhat,
                           Real* rstd, std::size_t cols, Real eps) {
  Real mean = 0;
  for (std::size_t j = 0; j < cols; ++j) mean += x[j];
  mean /= static_cast<Real>(cols);
  Real var = 0;
  for (std::size_t j = 0; j < cols; ++j) {
    const Real d = x[j] - mean;
    var += d * d;
  }
  var /= static_cast<Real>(cols);
  const Real r = Real{1} / std::sqrt(var + eps);
  *rstd = r;
  for (std::size_t j = 0; j < cols; ++j) {
    xhat[j] = (x[j] - mean) * r;
    y[j] = gain[j] * xhat[j] + bias[j];
  }
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const Real* a,
          const Real* b, Real* c, bool accumulate) {
  std::vector<Real> bt;
  if (tb == Trans::kYes) {
    bt = transpose(b, n, k);
    b = bt.data();
  }
  const bool par = m * n * k >= kParallelWork && m > 1;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i)
    gemm_row(ta, static_cast<std::size_t>(i), m, n, k, a, b, c + static_cast<std::size_t>(i) * n,
             accumulate);
}

void gemm_batched(Trans ta, Trans tb, std::size_t groups, std::size_t m, std::size_t n,
                  std::size_t k, const Real* a, const Real* b, Real* c, bool accumulate) {
  const bool par = groups * m * n * k >= kParallelWork && groups > 1;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t g = 0; g < static_cast<std::ptrdiff_t>(groups); ++g) {
    const Real* ag = a + static_cast<std::size_t>(g) * m * k;
    const Real* bg = b + static_cast<std::size_t>(g) * k * n;
    Real* cg = c + static_cast<std::size_t>(g) * m * n;
    std::vector<Real> bt;
    if (tb == Trans::kYes) {
      bt = transpose(bg, n, k);
      bg = bt.data();
    }
    for (std::size_t i = 0; i < m; ++i) gemm_row(ta, i, m, n, k, ag, bg, cg + i * n, accumulate);
  }
}

void softmax_rows(const Real* x, Real* y, std::size_t rows, std::size_t cols) {
  const bool par = rows * cols >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(rows); ++r)
    softmax_row(x + r * cols, y + r * cols, cols);
}

void log_softmax_rows(const Real* x, Real* y, std::size_t rows, std::size_t cols) {
  const bool par = rows * cols >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(rows); ++r)
    log_softmax_row(x + r * cols, y + r * cols, cols);
}

void layer_norm_rows(const Real* x, const Real* gain, const Real* bias, Real* y, Real* xhat,
                     Real* rstd, std::size_t rows, std::size_t cols, Real eps) {
  const bool par = rows * cols >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(rows); ++r)
    layer_norm_row(x + r * cols, gain, bias, y + r * cols, xhat + r * cols, rstd + r, cols, eps);
}

namespace serial {

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const Real* a,
          const Real* b, Real* c, bool accumulate) {
  // Textbook triple loop, kept deliberately plain.
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      Real acc = accumulate ? c[i * n + j] : Real{0};
      for (std::size_t p = 0; p < k; ++p) {
        const Real av = ta == Trans::kNo ? a[i * k + p] : a[p * m + i];
        const Real bv = tb == Trans::kNo ? b[p * n + j] : b[j * k + p];
        acc += av * bv;
      }
      c[i * n + j] = acc;
    }
  }
}

void gemm_batched(Trans ta, Trans tb, std::size_t groups, std::size_t m, std::size_t n,
                  std::size_t k, const Real* a, const Real* b, Real* c, bool accumulate) {
  for (std::size_t g = 0; g < groups; ++g)
    serial::gemm(ta, tb, m, n, k, a + g * m * k, b + g * k * n, c + g * m * n, accumulate);
}

void softmax_rows(const Real* x, Real* y, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) softmax_row(x + r * cols, y + r * cols, cols);
}

void log_softmax_rows(const Real* x, Real* y, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) log_softmax_row(x + r * cols, y + r * cols, cols);
}

void layer_norm_rows(const Real* x, const Real* gain, const Real* bias, Real* y, Real* xhat,
                     Real* rstd, std::size_t rows, std::size_t cols, Real eps) {
  for (std::size_t r = 0; r < rows; ++r)
    layer_norm_row(x + r * cols, gain, bias, y + r * cols, xhat + r * cols, rstd + r, cols, eps);
}

}  // namespace serial
}  // namespace ssnmt::kernels
