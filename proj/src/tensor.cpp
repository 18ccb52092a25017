#include "tvec/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tvec/kernels.hpp"

namespace tvec {

namespace {

thread_local Tape* g_active_tape = nullptr;

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": dimension mismatch " + a.shape_str() +
                              " vs " + b.shape_str());
}

bool grad_needed(std::initializer_list<const Tensor*> inputs) {
  if (!Tape::active()) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

// Registers inputs and output on the active tape and records the op.
// Call only after grad_needed() returned true.
void record_op(std::initializer_list<const Tensor*> inputs, Tensor& out,
               std::function<void()> backward_fn) {
  Tape* t = Tape::active();
  std::vector<int> ids;
  for (const Tensor* in : inputs)
    if (in->requires_grad()) ids.push_back(t->ensure_node(in->data(), false));
  out.set_requires_grad(true);
  int out_id = t->ensure_node(out.data(), true);
  t->record(std::move(ids), out_id, std::move(backward_fn));
}

constexpr double kVarFloor = 1e-10;  // std_rows variance floor

}  // namespace

// --- Tensor -----------------------------------------------------------------

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : d_(std::make_shared<TensorData>()) {
  d_->rows = rows;
  d_->cols = cols;
  d_->values.assign(rows * cols, fill);
}

Tensor Tensor::from(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw std::invalid_argument("Tensor::from: no rows");
  Tensor t(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size())
      throw std::invalid_argument("Tensor::from: ragged rows");
    for (std::size_t j = 0; j < rows[i].size(); ++j) t(i, j) = rows[i][j];
  }
  return t;
}

Tensor Tensor::row(const std::vector<double>& v) {
  Tensor t(1, v.size());
  std::copy(v.begin(), v.end(), t.values().begin());
  return t;
}

void Tensor::set_requires_grad(bool on) {
  d_->requires_grad = on;
  if (on) {
    if (d_->grad.size() != d_->values.size()) d_->grad.assign(d_->values.size(), 0.0);
  } else {
    d_->grad.clear();
  }
}

const std::vector<double>& Tensor::grad() const {
  if (!d_->requires_grad)
    throw std::logic_error("Tensor::grad: tensor does not require grad");
  return d_->grad;
}

double Tensor::grad_at(std::size_t i, std::size_t j) const {
  if (!d_->requires_grad) return 0.0;
  return d_->grad[i * d_->cols + j];
}

void Tensor::zero_grad() {
  std::fill(d_->grad.begin(), d_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  Tensor t(d_->rows, d_->cols);
  t.d_->values = d_->values;
  return t;
}

std::string Tensor::shape_str() const {
  return "[" + std::to_string(d_->rows) + "x" + std::to_string(d_->cols) + "]";
}

// --- Tape -------------------------------------------------------------------

Tape::Tape() {
  if (g_active_tape)
    throw std::logic_error("Tape: another tape is already active on this thread");
  g_active_tape = this;
}

Tape::~Tape() {
  if (g_active_tape == this) g_active_tape = nullptr;
}

Tape* Tape::active() { return g_active_tape; }

int Tape::ensure_node(const std::shared_ptr<TensorData>& d, bool is_output) {
  int id = d->node_id;
  if (id >= 0 && static_cast<std::size_t>(id) < nodes_.size() && nodes_[id].get() == d.get()) {
    if (is_output) is_output_[id] = true;
    return id;
  }
  d->node_id = static_cast<int>(nodes_.size());
  nodes_.push_back(d);
  is_output_.push_back(is_output);
  if (d->requires_grad && d->grad.size() != d->values.size())
    d->grad.assign(d->values.size(), 0.0);
  return d->node_id;
}

void Tape::record(std::vector<int> input_ids, int output_id, std::function<void()> backward_fn) {
  ops_.push_back({std::move(input_ids), output_id, std::move(backward_fn)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.is_scalar())
    throw std::invalid_argument("backward: loss must be a scalar, got " + loss.shape_str());
  const auto& ld = loss.data();
  if (!ld->requires_grad) return;  // constant loss: nothing depends on any input
  int id = ld->node_id;
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size() || nodes_[id].get() != ld.get())
    throw std::invalid_argument("backward: loss is not on the active tape");

  // Fresh adjoints for op outputs; leaf grads keep accumulating across calls.
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (is_output_[i])
      std::fill(nodes_[i]->grad.begin(), nodes_[i]->grad.end(), 0.0);

  ld->grad[0] += 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) it->backward();
}

void backward(const Tensor& loss) {
  Tape* t = Tape::active();
  if (!t) throw std::logic_error("backward: no active tape");
  t->backward(loss);
}

// --- ops --------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a, b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out(m, n);
  kernels::matmul_nn(a.values().data(), b.values().data(), out.values().data(), m, k, n, false);
  if (grad_needed({&a, &b})) {
    auto ad = a.data(), bd = b.data(), od = out.data();
    record_op({&a, &b}, out, [ad, bd, od, m, k, n] {
      if (ad->requires_grad)
        kernels::matmul_nt(od->grad.data(), bd->values.data(), ad->grad.data(), m, n, k, true);
      if (bd->requires_grad)
        kernels::matmul_tn(ad->values.data(), od->grad.data(), bd->grad.data(), k, m, n, true);
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("add", a, b);
  Tensor out(a.rows(), a.cols());
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] + b.values()[i];
  if (grad_needed({&a, &b})) {
    auto ad = a.data(), bd = b.data(), od = out.data();
    record_op({&a, &b}, out, [ad, bd, od, n] {
      if (ad->requires_grad)
        for (std::size_t i = 0; i < n; ++i) ad->grad[i] += od->grad[i];
      if (bd->requires_grad)
        for (std::size_t i = 0; i < n; ++i) bd->grad[i] += od->grad[i];
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("sub", a, b);
  Tensor out(a.rows(), a.cols());
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] - b.values()[i];
  if (grad_needed({&a, &b})) {
    auto ad = a.data(), bd = b.data(), od = out.data();
    record_op({&a, &b}, out, [ad, bd, od, n] {
      if (ad->requires_grad)
        for (std::size_t i = 0; i < n; ++i) ad->grad[i] += od->grad[i];
      if (bd->requires_grad)
        for (std::size_t i = 0; i < n; ++i) bd->grad[i] -= od->grad[i];
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("mul", a, b);
  Tensor out(a.rows(), a.cols());
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] * b.values()[i];
  if (grad_needed({&a, &b})) {
    auto ad = a.data(), bd = b.data(), od = out.data();
    record_op({&a, &b}, out, [ad, bd, od, n] {
      if (ad->requires_grad)
        for (std::size_t i = 0; i < n; ++i) ad->grad[i] += od->grad[i] * bd->values[i];
      if (bd->requires_grad)
        for (std::size_t i = 0; i < n; ++i) bd->grad[i] += od->grad[i] * ad->values[i];
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double c) {
  Tensor out(a.rows(), a.cols());
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] * c;
  if (grad_needed({&a})) {
    auto ad = a.data(), od = out.data();
    record_op({&a}, out, [ad, od, c, n] {
      for (std::size_t i = 0; i < n; ++i) ad->grad[i] += od->grad[i] * c;
    });
  }
  return out;
}

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
  if (v.rows() != 1 || v.cols() != a.cols()) shape_error("add_rowvec", a, v);
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out(m, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = a(i, j) + v(0, j);
  if (grad_needed({&a, &v})) {
    auto ad = a.data(), vd = v.data(), od = out.data();
    record_op({&a, &v}, out, [ad, vd, od, m, n] {
      if (ad->requires_grad)
        for (std::size_t i = 0; i < m * n; ++i) ad->grad[i] += od->grad[i];
      if (vd->requires_grad)
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) vd->grad[j] += od->grad[i * n + j];
    });
  }
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out(a.rows(), a.cols());
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] > 0.0 ? a.values()[i] : 0.0;
  if (grad_needed({&a})) {
    auto ad = a.data(), od = out.data();
    record_op({&a}, out, [ad, od, n] {
      for (std::size_t i = 0; i < n; ++i)
        if (ad->values[i] > 0.0) ad->grad[i] += od->grad[i];
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& a) {
  Tensor out(a.rows(), a.cols());
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out.values()[i] = 1.0 / (1.0 + std::exp(-a.values()[i]));
  if (grad_needed({&a})) {
    auto ad = a.data(), od = out.data();
    record_op({&a}, out, [ad, od, n] {
      for (std::size_t i = 0; i < n; ++i) {
        const double s = od->values[i];
        ad->grad[i] += od->grad[i] * s * (1.0 - s);
      }
    });
  }
  return out;
}

Tensor log(const Tensor& a) {
  Tensor out(a.rows(), a.cols());
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out.values()[i] = std::log(a.values()[i]);
  if (grad_needed({&a})) {
    auto ad = a.data(), od = out.data();
    record_op({&a}, out, [ad, od, n] {
      for (std::size_t i = 0; i < n; ++i) ad->grad[i] += od->grad[i] / ad->values[i];
    });
  }
  return out;
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (!(lo < hi)) throw std::invalid_argument("clamp: lo must be < hi");
  Tensor out(a.rows(), a.cols());
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out.values()[i] = std::min(std::max(a.values()[i], lo), hi);
  if (grad_needed({&a})) {
    auto ad = a.data(), od = out.data();
    record_op({&a}, out, [ad, od, lo, hi, n] {
      for (std::size_t i = 0; i < n; ++i) {
        const double x = ad->values[i];
        if (x >= lo && x <= hi) ad->grad[i] += od->grad[i];
      }
    });
  }
  return out;
}

Tensor softmax_rows(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  for (double v : a.values())
    if (!std::isfinite(v))
      throw std::runtime_error("softmax_rows: non-finite input");
  Tensor out(m, n);
  kernels::softmax_rows(a.values().data(), out.values().data(), m, n);
  if (grad_needed({&a})) {
    auto ad = a.data(), od = out.data();
    record_op({&a}, out, [ad, od, m, n] {
      for (std::size_t i = 0; i < m; ++i) {
        const double* y = od->values.data() + i * n;
        const double* g = od->grad.data() + i * n;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
        double* gx = ad->grad.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) gx[j] += y[j] * (g[j] - dot);
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t m = a.rows(), n = a.cols();
  if (n < 1) throw std::invalid_argument("layer_norm: empty rows");
  if (eps <= 0.0) throw std::invalid_argument("layer_norm: eps must be positive");
  if (gain.numel() != n) shape_error("layer_norm gain", a, gain);
  if (bias.numel() != n) shape_error("layer_norm bias", a, bias);
  Tensor out(m, n);
  auto mean = std::make_shared<std::vector<double>>(m);
  auto rstd = std::make_shared<std::vector<double>>(m);
  kernels::layer_norm_rows(a.values().data(), gain.values().data(), bias.values().data(),
                           out.values().data(), mean->data(), rstd->data(), m, n, eps);
  if (grad_needed({&a, &gain, &bias})) {
    auto ad = a.data(), gd = gain.data(), bd = bias.data(), od = out.data();
    record_op({&a, &gain, &bias}, out, [ad, gd, bd, od, mean, rstd, m, n] {
      std::vector<double> xhat(n), dxhat(n);
      for (std::size_t i = 0; i < m; ++i) {
        const double mu = (*mean)[i];
        const double r = (*rstd)[i];
        const double* x = ad->values.data() + i * n;
        const double* g = od->grad.data() + i * n;
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          xhat[j] = (x[j] - mu) * r;
          dxhat[j] = g[j] * gd->values[j];
          s1 += dxhat[j];
          s2 += dxhat[j] * xhat[j];
        }
        if (gd->requires_grad)
          for (std::size_t j = 0; j < n; ++j) gd->grad[j] += g[j] * xhat[j];
        if (bd->requires_grad)
          for (std::size_t j = 0; j < n; ++j) bd->grad[j] += g[j];
        if (ad->requires_grad) {
          const double inv_n = 1.0 / static_cast<double>(n);
          double* gx = ad->grad.data() + i * n;
          for (std::size_t j = 0; j < n; ++j)
            gx[j] += r * (dxhat[j] - s1 * inv_n - xhat[j] * s2 * inv_n);
        }
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out(n, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(j, i) = a(i, j);
  if (grad_needed({&a})) {
    auto ad = a.data(), od = out.data();
    record_op({&a}, out, [ad, od, m, n] {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ad->grad[i * n + j] += od->grad[j * m + i];
    });
  }
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  const std::size_t n = parts[0].cols();
  std::size_t m = 0;
  for (const Tensor& p : parts) {
    if (p.cols() != n) shape_error("concat_rows", parts[0], p);
    m += p.rows();
  }
  Tensor out(m, n);
  std::size_t r = 0;
  for (const Tensor& p : parts) {
    std::copy(p.values().begin(), p.values().end(), out.values().begin() + r * n);
    r += p.rows();
  }
  std::vector<const Tensor*> ptrs;
  for (const Tensor& p : parts) ptrs.push_back(&p);
  bool needs = Tape::active() && std::any_of(ptrs.begin(), ptrs.end(),
                                             [](const Tensor* t) { return t->requires_grad(); });
  if (needs) {
    std::vector<std::shared_ptr<TensorData>> pds;
    for (const Tensor& p : parts) pds.push_back(p.data());
    auto od = out.data();
    Tape* t = Tape::active();
    std::vector<int> ids;
    for (const Tensor* p : ptrs)
      if (p->requires_grad()) ids.push_back(t->ensure_node(p->data(), false));
    out.set_requires_grad(true);
    int out_id = t->ensure_node(out.data(), true);
    t->record(std::move(ids), out_id, [pds, od, n] {
      std::size_t r2 = 0;
      for (const auto& pd : pds) {
        if (pd->requires_grad) {
          const std::size_t count = pd->values.size();
          const double* g = od->grad.data() + r2 * n;
          for (std::size_t i = 0; i < count; ++i) pd->grad[i] += g[i];
        }
        r2 += pd->rows;
      }
    });
  }
  return out;
}

Tensor slice_rows(const Tensor& a, std::size_t start, std::size_t count) {
  if (start + count > a.rows())
    throw std::invalid_argument("slice_rows: range [" + std::to_string(start) + ", " +
                                std::to_string(start + count) + ") exceeds " + a.shape_str());
  const std::size_t n = a.cols();
  Tensor out(count, n);
  std::copy(a.values().begin() + start * n, a.values().begin() + (start + count) * n,
            out.values().begin());
  if (grad_needed({&a})) {
    auto ad = a.data(), od = out.data();
    record_op({&a}, out, [ad, od, start, count, n] {
      double* g = ad->grad.data() + start * n;
      for (std::size_t i = 0; i < count * n; ++i) g[i] += od->grad[i];
    });
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  const std::size_t m = parts[0].rows();
  std::size_t n = 0;
  for (const Tensor& p : parts) {
    if (p.rows() != m) shape_error("concat_cols", parts[0], p);
    n += p.cols();
  }
  Tensor out(m, n);
  std::size_t c = 0;
  for (const Tensor& p : parts) {
    for (std::size_t i = 0; i < m; ++i)
      std::copy(p.values().begin() + i * p.cols(), p.values().begin() + (i + 1) * p.cols(),
                out.values().begin() + i * n + c);
    c += p.cols();
  }
  std::vector<const Tensor*> ptrs;
  for (const Tensor& p : parts) ptrs.push_back(&p);
  bool needs = Tape::active() && std::any_of(ptrs.begin(), ptrs.end(),
                                             [](const Tensor* t) { return t->requires_grad(); });
  if (needs) {
    std::vector<std::shared_ptr<TensorData>> pds;
    for (const Tensor& p : parts) pds.push_back(p.data());
    auto od = out.data();
    Tape* t = Tape::active();
    std::vector<int> ids;
    for (const Tensor* p : ptrs)
      if (p->requires_grad()) ids.push_back(t->ensure_node(p->data(), false));
    out.set_requires_grad(true);
    int out_id = t->ensure_node(out.data(), true);
    t->record(std::move(ids), out_id, [pds, od, m, n] {
      std::size_t c2 = 0;
      for (const auto& pd : pds) {
        if (pd->requires_grad) {
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < pd->cols; ++j)
              pd->grad[i * pd->cols + j] += od->grad[i * n + c2 + j];
        }
        c2 += pd->cols;
      }
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count) {
  if (start + count > a.cols())
    throw std::invalid_argument("slice_cols: range [" + std::to_string(start) + ", " +
                                std::to_string(start + count) + ") exceeds " + a.shape_str());
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out(m, count);
  for (std::size_t i = 0; i < m; ++i)
    std::copy(a.values().begin() + i * n + start, a.values().begin() + i * n + start + count,
              out.values().begin() + i * count);
  if (grad_needed({&a})) {
    auto ad = a.data(), od = out.data();
    record_op({&a}, out, [ad, od, start, count, m, n] {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < count; ++j)
          ad->grad[i * n + start + j] += od->grad[i * count + j];
    });
  }
  return out;
}

Tensor mean_rows(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  if (m == 0) throw std::invalid_argument("mean_rows: empty input");
  Tensor out(1, n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += a(i, j);
    out(0, j) = s / static_cast<double>(m);
  }
  if (grad_needed({&a})) {
    auto ad = a.data(), od = out.data();
    record_op({&a}, out, [ad, od, m, n] {
      const double inv_m = 1.0 / static_cast<double>(m);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ad->grad[i * n + j] += od->grad[j] * inv_m;
    });
  }
  return out;
}

Tensor std_rows(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  if (m == 0) throw std::invalid_argument("std_rows: empty input");
  Tensor out(1, n);
  auto mu = std::make_shared<std::vector<double>>(n);
  auto live = std::make_shared<std::vector<char>>(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += a(i, j);
    const double mean = s / static_cast<double>(m);
    double var = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double d = a(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(m);
    (*mu)[j] = mean;
    (*live)[j] = var > kVarFloor ? 1 : 0;
    out(0, j) = std::sqrt(std::max(var, kVarFloor));
  }
  if (grad_needed({&a})) {
    auto ad = a.data(), od = out.data();
    record_op({&a}, out, [ad, od, mu, live, m, n] {
      const double inv_m = 1.0 / static_cast<double>(m);
      for (std::size_t j = 0; j < n; ++j) {
        if (!(*live)[j]) continue;  // floored: locally constant
        const double g = od->grad[j] / od->values[j] * inv_m;
        for (std::size_t i = 0; i < m; ++i)
          ad->grad[i * n + j] += g * (ad->values[i * n + j] - (*mu)[j]);
      }
    });
  }
  return out;
}

Tensor sum_all(const Tensor& a) {
  Tensor out(1, 1);
  double s = 0.0;
  for (double v : a.values()) s += v;
  out(0, 0) = s;
  if (grad_needed({&a})) {
    auto ad = a.data(), od = out.data();
    record_op({&a}, out, [ad, od] {
      const double g = od->grad[0];
      for (double& gi : ad->grad) gi += g;
    });
  }
  return out;
}

Tensor stop_gradient(const Tensor& a) { return a.clone(); }

}  // namespace tvec
