#pragma once

// Dense numeric kernels backing the tensor engine. Each kernel comes in a
// serial reference version and an OpenMP version parallelized over
// independent output rows. No accumulation is ever split across threads, so
// the two versions produce bit-identical results and thread count never
// affects any downstream artifact.

namespace hoidet::kernels {

enum class Mode { Auto, Serial, Parallel };

bool omp_compiled();
int max_threads();
void set_mode(Mode m);
Mode mode();

// c[m x n] = a[m x k] * b[k x n]
void matmul_nn_serial(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_nn_omp(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n);

// c[m x n] = a[m x k] * b[n x k]^T
void matmul_nt_serial(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_nt_omp(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n);

// c[m x n] = a[k x m]^T * b[k x n]
void matmul_tn_serial(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_tn_omp(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n);

// row-wise softmax with max subtraction
void softmax_rows_serial(const double* x, double* y, int rows, int cols);
void softmax_rows_omp(const double* x, double* y, int rows, int cols);
void softmax_rows(const double* x, double* y, int rows, int cols);

// row-wise normalization to zero mean / unit variance; rstd (1/sqrt(var+eps))
// is written per row when non-null (the backward pass needs it)
void layernorm_rows_serial(const double* x, double* y, double* rstd, int rows, int cols, double eps);
void layernorm_rows_omp(const double* x, double* y, double* rstd, int rows, int cols, double eps);
void layernorm_rows(const double* x, double* y, double* rstd, int rows, int cols, double eps);

// src is [c x h x w]; dst is [(oh*ow) x (c*k*k)] where oh/ow are the strided
// output extents with padding `pad`. Out-of-image taps read as zero.
int conv_out_extent(int extent, int k, int stride, int pad);
void im2col_serial(const double* src, int c, int h, int w, int k, int stride, int pad, double* dst);
void im2col_omp(const double* src, int c, int h, int w, int k, int stride, int pad, double* dst);
void im2col(const double* src, int c, int h, int w, int k, int stride, int pad, double* dst);

// adjoint of im2col: scatter-add patch gradients back into the image grid
void col2im_add(const double* cols, int c, int h, int w, int k, int stride, int pad, double* dst);

}  // namespace hoidet::kernels
