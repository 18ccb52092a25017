// Times the serial reference kernels against the OpenMP variants and checks
// that the outputs match bit for bit.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <random>
#include <vector>

#include "tvec/kernels.hpp"

namespace {

using Clock = std::chrono::steady_clock;

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

template <typename F>
double time_ms(F&& f, int iters) {
  f();  // warmup
  const auto t0 = Clock::now();
  for (int i = 0; i < iters; ++i) f();
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count() / iters;
}

void bench_matmul(std::size_t n, std::mt19937_64& rng) {
  const auto a = random_vec(n * n, rng);
  const auto b = random_vec(n * n, rng);
  std::vector<double> c_serial(n * n), c_parallel(n * n);
  const int iters = n >= 512 ? 3 : 10;
  const double serial_ms = time_ms(
      [&] { tvec::kernels::serial::matmul_nn(a.data(), b.data(), c_serial.data(), n, n, n, false); },
      iters);
  const double parallel_ms = time_ms(
      [&] {
        tvec::kernels::parallel::matmul_nn(a.data(), b.data(), c_parallel.data(), n, n, n, false);
      },
      iters);
  const double gflops = 2.0 * n * n * n / (parallel_ms * 1e6);
  std::printf("matmul_nn   %4zu^3   serial %8.2f ms   parallel %8.2f ms   speedup %.2fx   "
              "%.2f GF/s   max|diff| %g\n",
              n, serial_ms, parallel_ms, serial_ms / parallel_ms, gflops,
              max_abs_diff(c_serial, c_parallel));
}

void bench_rows(const char* name, std::size_t m, std::size_t n, std::mt19937_64& rng,
                bool layer_norm) {
  const auto x = random_vec(m * n, rng);
  const auto gain = random_vec(n, rng);
  const auto bias = random_vec(n, rng);
  std::vector<double> y_serial(m * n), y_parallel(m * n), mu(m), rstd(m);
  const auto serial_fn = [&] {
    if (layer_norm)
      tvec::kernels::serial::layer_norm_rows(x.data(), gain.data(), bias.data(), y_serial.data(),
                                             mu.data(), rstd.data(), m, n, 1e-5);
    else
      tvec::kernels::serial::softmax_rows(x.data(), y_serial.data(), m, n);
  };
  const auto parallel_fn = [&] {
    if (layer_norm)
      tvec::kernels::parallel::layer_norm_rows(x.data(), gain.data(), bias.data(),
                                               y_parallel.data(), mu.data(), rstd.data(), m, n,
                                               1e-5);
    else
      tvec::kernels::parallel::softmax_rows(x.data(), y_parallel.data(), m, n);
  };
  const double serial_ms = time_ms(serial_fn, 20);
  const double parallel_ms = time_ms(parallel_fn, 20);
  std::printf("%-11s %zux%zu   serial %8.3f ms   parallel %8.3f ms   speedup %.2fx   "
              "max|diff| %g\n",
              name, m, n, serial_ms, parallel_ms, serial_ms / parallel_ms,
              max_abs_diff(y_serial, y_parallel));
}

}  // namespace

int main(int argc, char** argv) {
  tvec::kernels::init_threads_from_env();
  if (argc > 1) tvec::kernels::set_max_threads(std::atoi(argv[1]));
  std::printf("threads: %d\n", tvec::kernels::max_threads());

  std::mt19937_64 rng(7);
  for (std::size_t n : {128, 256, 512}) bench_matmul(n, rng);
  bench_rows("softmax", 4096, 256, rng, false);
  bench_rows("layer_norm", 4096, 256, rng, true);
  return 0;
}
