#include "hoidet/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace hoidet::kernels {

namespace {
std::atomic<Mode> g_mode{Mode::Auto};

// Work below this many scalar multiply-adds is not worth a parallel region.
constexpr long long kParallelCutoff = 1 << 15;

inline bool go_parallel(long long work) {
  switch (g_mode.load(std::memory_order_relaxed)) {
    case Mode::Serial: return false;
    case Mode::Parallel: return omp_compiled();
    case Mode::Auto: break;
  }
  return omp_compiled() && work >= kParallelCutoff && max_threads() > 1;
}
}  // namespace

bool omp_compiled() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_mode(Mode m) { g_mode.store(m, std::memory_order_relaxed); }
Mode mode() { return g_mode.load(std::memory_order_relaxed); }

// ---------------------------------------------------------------- matmul_nn

namespace {
inline void mm_nn_row(const double* __restrict a, const double* __restrict b,
                      double* __restrict c, int i, int k, int n) {
  double* crow = c + static_cast<long long>(i) * n;
  std::memset(crow, 0, sizeof(double) * static_cast<size_t>(n));
  const double* arow = a + static_cast<long long>(i) * k;
  for (int p = 0; p < k; ++p) {
    const double av = arow[p];
    const double* brow = b + static_cast<long long>(p) * n;
    for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}
}  // namespace

void matmul_nn_serial(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) mm_nn_row(a, b, c, i, k, n);
}

void matmul_nn_omp(const double* a, const double* b, double* c, int m, int k, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) mm_nn_row(a, b, c, i, k, n);
}

void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n) {
  if (go_parallel(1LL * m * k * n))
    matmul_nn_omp(a, b, c, m, k, n);
  else
    matmul_nn_serial(a, b, c, m, k, n);
}

// ---------------------------------------------------------------- matmul_nt

namespace {
inline void mm_nt_row(const double* __restrict a, const double* __restrict b,
                      double* __restrict c, int i, int k, int n) {
  const double* arow = a + static_cast<long long>(i) * k;
  double* crow = c + static_cast<long long>(i) * n;
  for (int j = 0; j < n; ++j) {
    const double* brow = b + static_cast<long long>(j) * k;
    double acc = 0.0;
    for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
    crow[j] = acc;
  }
}
}  // namespace

void matmul_nt_serial(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) mm_nt_row(a, b, c, i, k, n);
}

void matmul_nt_omp(const double* a, const double* b, double* c, int m, int k, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) mm_nt_row(a, b, c, i, k, n);
}

void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n) {
  if (go_parallel(1LL * m * k * n))
    matmul_nt_omp(a, b, c, m, k, n);
  else
    matmul_nt_serial(a, b, c, m, k, n);
}

// ---------------------------------------------------------------- matmul_tn

namespace {
inline void mm_tn_row(const double* __restrict a, const double* __restrict b,
                      double* __restrict c, int i, int m, int k, int n) {
  double* crow = c + static_cast<long long>(i) * n;
  std::memset(crow, 0, sizeof(double) * static_cast<size_t>(n));
  for (int p = 0; p < k; ++p) {
    const double av = a[static_cast<long long>(p) * m + i];
    const double* brow = b + static_cast<long long>(p) * n;
    for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}
}  // namespace

void matmul_tn_serial(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) mm_tn_row(a, b, c, i, m, k, n);
}

void matmul_tn_omp(const double* a, const double* b, double* c, int m, int k, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) mm_tn_row(a, b, c, i, m, k, n);
}

void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n) {
  if (go_parallel(1LL * m * k * n))
    matmul_tn_omp(a, b, c, m, k, n);
  else
    matmul_tn_serial(a, b, c, m, k, n);
}

// ----------------------------------------------------------------- softmax

namespace {
inline void softmax_row(const double* __restrict x, double* __restrict y, int i, int cols) {
  const double* xr = x + static_cast<long long>(i) * cols;
  double* yr = y + static_cast<long long>(i) * cols;
  double mx = xr[0];
  for (int j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
  double sum = 0.0;
  for (int j = 0; j < cols; ++j) {
    yr[j] = std::exp(xr[j] - mx);
    sum += yr[j];
  }
  const double inv = 1.0 / sum;
  for (int j = 0; j < cols; ++j) yr[j] *= inv;
}
}  // namespace

void softmax_rows_serial(const double* x, double* y, int rows, int cols) {
  for (int i = 0; i < rows; ++i) softmax_row(x, y, i, cols);
}

void softmax_rows_omp(const double* x, double* y, int rows, int cols) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < rows; ++i) softmax_row(x, y, i, cols);
}

void softmax_rows(const double* x, double* y, int rows, int cols) {
  if (go_parallel(4LL * rows * cols))
    softmax_rows_omp(x, y, rows, cols);
  else
    softmax_rows_serial(x, y, rows, cols);
}

// --------------------------------------------------------------- layernorm

namespace {
inline void layernorm_row(const double* __restrict x, double* __restrict y,
                          double* __restrict rstd, int i, int cols, double eps) {
  const double* xr = x + static_cast<long long>(i) * cols;
  double* yr = y + static_cast<long long>(i) * cols;
  double mean = 0.0;
  for (int j = 0; j < cols; ++j) mean += xr[j];
  mean /= cols;
  double var = 0.0;
  for (int j = 0; j < cols; ++j) {
    const double d = xr[j] - mean;
    var += d * d;
  }
  var /= cols;
  const double r = 1.0 / std::sqrt(var + eps);
  for (int j = 0; j < cols; ++j) yr[j] = (xr[j] - mean) * r;
  if (rstd) rstd[i] = r;
}
}  // namespace

void layernorm_rows_serial(const double* x, double* y, double* rstd, int rows, int cols, double eps) {
  for (int i = 0; i < rows; ++i) layernorm_row(x, y, rstd, i, cols, eps);
}

void layernorm_rows_omp(const double* x, double* y, double* rstd, int rows, int cols, double eps) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < rows; ++i) layernorm_row(x, y, rstd, i, cols, eps);
}

void layernorm_rows(const double* x, double* y, double* rstd, int rows, int cols, double eps) {
  if (go_parallel(4LL * rows * cols))
    layernorm_rows_omp(x, y, rstd, rows, cols, eps);
  else
    layernorm_rows_serial(x, y, rstd, rows, cols, eps);
}

// ------------------------------------------------------------------ im2col

int conv_out_extent(int extent, int k, int stride, int pad) {
  return (extent + 2 * pad - k) / stride + 1;
}

namespace {
inline void im2col_patch(const double* __restrict src, int c, int h, int w, int k,
                         int stride, int pad, int ow, int patch, double* __restrict dst) {
  const int oy = patch / ow;
  const int ox = patch % ow;
  double* out = dst + static_cast<long long>(patch) * c * k * k;
  int idx = 0;
  for (int ch = 0; ch < c; ++ch) {
    const double* plane = src + static_cast<long long>(ch) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      const int y = oy * stride - pad + ky;
      for (int kx = 0; kx < k; ++kx) {
        const int x = ox * stride - pad + kx;
        out[idx++] = (y >= 0 && y < h && x >= 0 && x < w)
                         ? plane[static_cast<long long>(y) * w + x]
                         : 0.0;
      }
    }
  }
}
}  // namespace

void im2col_serial(const double* src, int c, int h, int w, int k, int stride, int pad, double* dst) {
  const int oh = conv_out_extent(h, k, stride, pad);
  const int ow = conv_out_extent(w, k, stride, pad);
  for (int p = 0; p < oh * ow; ++p) im2col_patch(src, c, h, w, k, stride, pad, ow, p, dst);
}

void im2col_omp(const double* src, int c, int h, int w, int k, int stride, int pad, double* dst) {
  const int oh = conv_out_extent(h, k, stride, pad);
  const int ow = conv_out_extent(w, k, stride, pad);
#pragma omp parallel for schedule(static)
  for (int p = 0; p < oh * ow; ++p) im2col_patch(src, c, h, w, k, stride, pad, ow, p, dst);
}

void im2col(const double* src, int c, int h, int w, int k, int stride, int pad, double* dst) {
  const long long work = 1LL * conv_out_extent(h, k, stride, pad) *
                         conv_out_extent(w, k, stride, pad) * c * k * k;
  if (go_parallel(work))
    im2col_omp(src, c, h, w, k, stride, pad, dst);
  else
    im2col_serial(src, c, h, w, k, stride, pad, dst);
}

// Scatter-add overlaps patches, so this stays serial; it only runs in the
// backward pass of the first stem layer.
void col2im_add(const double* cols, int c, int h, int w, int k, int stride, int pad, double* dst) {
  const int oh = conv_out_extent(h, k, stride, pad);
  const int ow = conv_out_extent(w, k, stride, pad);
  for (int p = 0; p < oh * ow; ++p) {
    const int oy = p / ow;
    const int ox = p % ow;
    const double* in = cols + static_cast<long long>(p) * c * k * k;
    int idx = 0;
    for (int ch = 0; ch < c; ++ch) {
      double* plane = dst + static_cast<long long>(ch) * h * w;
      for (int ky = 0; ky < k; ++ky) {
        const int y = oy * stride - pad + ky;
        for (int kx = 0; kx < k; ++kx, ++idx) {
          const int x = ox * stride - pad + kx;
          if (y >= 0 && y < h && x >= 0 && x < w)
            plane[static_cast<long long>(y) * w + x] += in[idx];
        }
      }
    }
  }
}

}  // namespace hoidet::kernels
