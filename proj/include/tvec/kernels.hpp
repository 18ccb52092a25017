#pragma once

#include <cstddef>

// Dense row-major kernels behind the tensor ops. Every kernel exists twice:
// tvec::kernels::serial is the reference, tvec::kernels::parallel adds OpenMP
// over independent output rows. Both produce bit-identical results for any
// thread count because no accumulation order ever changes; the dispatchers at
// namespace scope pick a variant by problem size and the configured thread
// budget.
namespace tvec::kernels {

// Caps OpenMP worker threads for all dispatched kernels. n <= 1 forces the
// serial path.
void set_max_threads(int n);
int max_threads();

// Reads the TVEC_THREADS environment variable, if set.
void init_threads_from_env();

namespace serial {

// c = a[m x k] * b[k x n], accumulating into c when accumulate is true.
void matmul_nn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate);

// c = a[m x k] * b[n x k]^T
void matmul_nt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate);

// c = a[k x m]^T * b[k x n]
void matmul_tn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate);

// Row-wise softmax with per-row max subtraction.
void softmax_rows(const double* x, double* y, std::size_t m, std::size_t n);

// Per-row normalization: y = (x - mean) * rstd * gain + bias with
// rstd = 1/sqrt(population variance + eps). mean and rstd (length m) are
// written for the backward pass.
void layer_norm_rows(const double* x, const double* gain, const double* bias,
                     double* y, double* mean, double* rstd,
                     std::size_t m, std::size_t n, double eps);

}  // namespace serial

namespace parallel {

void matmul_nn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void matmul_nt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void matmul_tn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void softmax_rows(const double* x, double* y, std::size_t m, std::size_t n);
void layer_norm_rows(const double* x, const double* gain, const double* bias,
                     double* y, double* mean, double* rstd,
                     std::size_t m, std::size_t n, double eps);

}  // namespace parallel

// Size-dispatching entry points used by the tensor engine.
void matmul_nn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void matmul_nt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void matmul_tn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void softmax_rows(const double* x, double* y, std::size_t m, std::size_t n);
void layer_norm_rows(const double* x, const double* gain, const double* bias,
                     double* y, double* mean, double* rstd,
                     std::size_t m, std::size_t n, double eps);

}  // namespace tvec::kernels
