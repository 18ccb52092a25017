#include "tvec/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace tvec::kernels::serial {

void matmul_nn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  // i-k-j ordering: the inner loop streams contiguous rows of b and c.
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    if (!accumulate) std::memset(ci, 0, n * sizeof(double));
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double sum = 0.0;
      for (std::size_t p = 0; p < k; ++p) sum += ai[p] * bj[p];
      ci[j] = accumulate ? ci[j] + sum : sum;
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  // a is k x m, c is m x n; row i of c gathers column i of a.
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    if (!accumulate) std::memset(ci, 0, n * sizeof(double));
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[p * m + i];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void softmax_rows(const double* x, double* y, std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* xi = x + i * n;
    double* yi = y + i * n;
    double mx = xi[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xi[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      yi[j] = std::exp(xi[j] - mx);
      sum += yi[j];
    }
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j < n; ++j) yi[j] *= inv;
  }
}

void layer_norm_rows(const double* x, const double* gain, const double* bias,
                     double* y, double* mean, double* rstd,
                     std::size_t m, std::size_t n, double eps) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* xi = x + i * n;
    double* yi = y + i * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xi[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = xi[j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double r = 1.0 / std::sqrt(var + eps);
    mean[i] = mu;
    rstd[i] = r;
    for (std::size_t j = 0; j < n; ++j) yi[j] = (xi[j] - mu) * r * gain[j] + bias[j];
  }
}

}  // namespace tvec::kernels::serial
