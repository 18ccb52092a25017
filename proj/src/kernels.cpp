#include "tvec/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace tvec::kernels {

namespace {

std::atomic<int> g_max_threads{
#ifdef _OPENMP
    0  // 0 = not yet initialized, resolve lazily from omp
#else
    1
#endif
};

int resolve_threads() {
  int t = g_max_threads.load(std::memory_order_relaxed);
  if (t > 0) return t;
#ifdef _OPENMP
  t = omp_get_max_threads();
#else
  t = 1;
#endif
  g_max_threads.store(t, std::memory_order_relaxed);
  return t;
}

// Work below this many multiply-adds is not worth a parallel region.
constexpr std::size_t kMinParallelWork = 1 << 15;

bool use_parallel(std::size_t rows, std::size_t work) {
  return resolve_threads() > 1 && rows >= 2 && work >= kMinParallelWork;
}

}  // namespace

void set_max_threads(int n) {
  if (n < 1) n = 1;
  g_max_threads.store(n, std::memory_order_relaxed);
#ifdef _OPENMP
  omp_set_num_threads(n);
#endif
}

int max_threads() { return resolve_threads(); }

void init_threads_from_env() {
  if (const char* env = std::getenv("TVEC_THREADS")) {
    try {
      set_max_threads(std::stoi(env));
    } catch (...) {
      // unparseable value: leave the default
    }
  }
}

void matmul_nn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  if (use_parallel(m, m * k * n))
    parallel::matmul_nn(a, b, c, m, k, n, accumulate);
  else
    serial::matmul_nn(a, b, c, m, k, n, accumulate);
}

void matmul_nt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  if (use_parallel(m, m * k * n))
    parallel::matmul_nt(a, b, c, m, k, n, accumulate);
  else
    serial::matmul_nt(a, b, c, m, k, n, accumulate);
}

void matmul_tn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  if (use_parallel(m, m * k * n))
    parallel::matmul_tn(a, b, c, m, k, n, accumulate);
  else
    serial::matmul_tn(a, b, c, m, k, n, accumulate);
}

void softmax_rows(const double* x, double* y, std::size_t m, std::size_t n) {
  if (use_parallel(m, m * n))
    parallel::softmax_rows(x, y, m, n);
  else
    serial::softmax_rows(x, y, m, n);
}

void layer_norm_rows(const double* x, const double* gain, const double* bias,
                     double* y, double* mean, double* rstd,
                     std::size_t m, std::size_t n, double eps) {
  if (use_parallel(m, m * n))
    parallel::layer_norm_rows(x, gain, bias, y, mean, rstd, m, n, eps);
  else
    serial::layer_norm_rows(x, gain, bias, y, mean, rstd, m, n, eps);
}

}  // namespace tvec::kernels
