#pragma once

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "tvec/tensor.hpp"

// Test-only helpers and independent oracles. Everything here stays off the
// implementation paths it checks: the attention and EER references are plain
// loops over raw arrays, and the gradient oracle is central finite
// differences over tape-free evaluations.
namespace support {

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

inline tvec::Tensor random_tensor(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                                  double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  tvec::Tensor t(rows, cols);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

// Max relative error between the grad already accumulated in t and central
// finite differences of eval(), which must re-run the forward pass tape-free.
inline double max_grad_fd_err(tvec::Tensor& t, const std::function<double()>& eval,
                              double h = 1e-5) {
  double worst = 0.0;
  std::vector<double>& vals = t.values();
  const std::vector<double>& grad = t.grad();
  for (std::size_t i = 0; i < vals.size(); ++i) {
    const double old = vals[i];
    vals[i] = old + h;
    const double lp = eval();
    vals[i] = old - h;
    const double lm = eval();
    vals[i] = old;
    const double fd = (lp - lm) / (2.0 * h);
    worst = std::max(worst, rel_err(grad[i], fd));
  }
  return worst;
}

// Reference multi-head attention with memories: single explicit loop per
// position, no tensor engine. x is M x D row-major, mem is mem_rows x D
// (mem_rows may be 0), weights are D x D. Returns the M x D output.
inline std::vector<double> naive_mha(const std::vector<double>& x, std::size_t m,
                                     const std::vector<double>& mem, std::size_t mem_rows,
                                     std::size_t d, std::size_t heads,
                                     const std::vector<double>& wq, const std::vector<double>& wk,
                                     const std::vector<double>& wv, const std::vector<double>& wo,
                                     double scale) {
  const std::size_t kv_rows = mem_rows + m;
  std::vector<double> kv(kv_rows * d);
  std::copy(mem.begin(), mem.end(), kv.begin());
  std::copy(x.begin(), x.end(), kv.begin() + mem_rows * d);

  auto project = [d](const std::vector<double>& in, std::size_t rows,
                     const std::vector<double>& w) {
    std::vector<double> out(rows * d, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < d; ++c) {
        double s = 0.0;
        for (std::size_t p = 0; p < d; ++p) s += in[r * d + p] * w[p * d + c];
        out[r * d + c] = s;
      }
    return out;
  };
  const std::vector<double> q = project(x, m, wq);
  const std::vector<double> k = project(kv, kv_rows, wk);
  const std::vector<double> v = project(kv, kv_rows, wv);

  const std::size_t dk = d / heads;
  std::vector<double> concat(m * d, 0.0);
  std::vector<double> weights(kv_rows);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dk;
    for (std::size_t r = 0; r < m; ++r) {
      double mx = -1e300;
      for (std::size_t j = 0; j < kv_rows; ++j) {
        double s = 0.0;
        for (std::size_t p = 0; p < dk; ++p) s += q[r * d + off + p] * k[j * d + off + p];
        weights[j] = s * scale;
        mx = std::max(mx, weights[j]);
      }
      double sum = 0.0;
      for (std::size_t j = 0; j < kv_rows; ++j) {
        weights[j] = std::exp(weights[j] - mx);
        sum += weights[j];
      }
      for (std::size_t j = 0; j < kv_rows; ++j) weights[j] /= sum;
      for (std::size_t p = 0; p < dk; ++p) {
        double s = 0.0;
        for (std::size_t j = 0; j < kv_rows; ++j) s += weights[j] * v[j * d + off + p];
        concat[r * d + off + p] = s;
      }
    }
  }
  std::vector<double> out(m * d, 0.0);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < d; ++c) {
      double s = 0.0;
      for (std::size_t p = 0; p < d; ++p) s += concat[r * d + p] * wo[p * d + c];
      out[r * d + c] = s;
    }
  return out;
}

// Exhaustive-threshold EER: recounts FP/FN by scanning every score at every
// candidate threshold (each unique value, predict positive when score >=
// threshold, plus a +inf sentinel), then applies the same exact-crossing /
// interpolated-midpoint rule the implementation documents.
inline double eer_oracle(const std::vector<double>& scores,
                         const std::vector<std::uint8_t>& label) {
  std::size_t num_pos = 0;
  for (std::uint8_t y : label) num_pos += y != 0;
  const std::size_t num_neg = scores.size() - num_pos;

  std::vector<double> thresholds(scores);
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  double prev_fpr = 0.0, prev_fnr = 0.0;
  bool have_prev = false;
  for (std::size_t t = 0; t <= thresholds.size(); ++t) {
    std::size_t fp = 0, fn = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const bool predicted = t < thresholds.size() && scores[i] >= thresholds[t];
      if (predicted && !label[i]) ++fp;
      if (!predicted && label[i]) ++fn;
    }
    const double fpr = static_cast<double>(fp) / static_cast<double>(num_neg);
    const double fnr = static_cast<double>(fn) / static_cast<double>(num_pos);
    const long long diff =
        static_cast<long long>(fn * num_neg) - static_cast<long long>(fp * num_pos);
    if (diff == 0) return fpr;
    if (diff > 0) {
      const double d_prev = prev_fnr - prev_fpr;
      const double d_cur = fnr - fpr;
      const double alpha = -d_prev / (d_cur - d_prev);
      const double fpr_star = prev_fpr + alpha * (fpr - prev_fpr);
      const double fnr_star = prev_fnr + alpha * (fnr - prev_fnr);
      return (fpr_star + fnr_star) / 2.0;
    }
    prev_fpr = fpr;
    prev_fnr = fnr;
    have_prev = true;
  }
  (void)have_prev;
  return -1.0;  // unreachable: the sentinel always has fnr=1 > fpr=0
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<unsigned> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("tvec_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

}  // namespace support
