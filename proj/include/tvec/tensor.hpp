#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace tvec {

// Dense row-major matrix with an accumulated-gradient slot. All tensors are
// rank-2; vectors are 1 x n, scalars 1 x 1. Handles share storage; clone()
// makes a deep copy.
struct TensorData {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  std::vector<double> grad;  // allocated iff requires_grad
  bool requires_grad = false;
  int node_id = -1;  // slot on the tape that last registered this tensor
};

class Tensor {
 public:
  Tensor() : d_(std::make_shared<TensorData>()) {}
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
  explicit Tensor(std::shared_ptr<TensorData> d) : d_(std::move(d)) {}

  static Tensor from(const std::vector<std::vector<double>>& rows);
  static Tensor row(const std::vector<double>& v);
  static Tensor scalar(double v) { return Tensor(1, 1, v); }

  std::size_t rows() const { return d_->rows; }
  std::size_t cols() const { return d_->cols; }
  std::size_t numel() const { return d_->values.size(); }
  bool is_scalar() const { return numel() == 1; }

  double& operator()(std::size_t i, std::size_t j) { return d_->values[i * d_->cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return d_->values[i * d_->cols + j]; }

  std::vector<double>& values() { return d_->values; }
  const std::vector<double>& values() const { return d_->values; }

  bool requires_grad() const { return d_->requires_grad; }
  // Allocates (or drops) the gradient slot. Gradients of tensors that do not
  // require grad are identically zero by construction.
  void set_requires_grad(bool on);

  const std::vector<double>& grad() const;
  double grad_at(std::size_t i, std::size_t j) const;
  void zero_grad();

  Tensor clone() const;
  std::string shape_str() const;

  const std::shared_ptr<TensorData>& data() const { return d_; }

 private:
  std::shared_ptr<TensorData> d_;
};

struct Parameter {
  std::string name;
  Tensor tensor;
};

// Define-by-run tape. Constructing a Tape makes it the active tape for the
// current thread; ops record themselves while one is active and run
// value-only otherwise. Tapes are rebuilt every forward pass and are
// confined to one thread; nesting is a contract error.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Seeds d(loss)/d(loss) = 1 and sweeps the recorded ops exactly once in
  // reverse order. Grads of intermediate (op-output) tensors are reset per
  // call; leaf grads accumulate until zero_grad.
  void backward(const Tensor& loss);

  std::size_t op_count() const { return ops_.size(); }
  std::size_t node_count() const { return nodes_.size(); }

  static Tape* active();

  // Registration interface used by the ops.
  int ensure_node(const std::shared_ptr<TensorData>& d, bool is_output);
  void record(std::vector<int> input_ids, int output_id, std::function<void()> backward_fn);

 private:
  struct OpRecord {
    std::vector<int> inputs;
    int output;
    std::function<void()> backward;
  };
  std::vector<std::shared_ptr<TensorData>> nodes_;
  std::vector<bool> is_output_;
  std::vector<OpRecord> ops_;
};

// Calls backward on the active tape.
void backward(const Tensor& loss);

// --- differentiable ops ---------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, double c);
Tensor add_rowvec(const Tensor& a, const Tensor& v);  // v broadcast over rows
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor log(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor softmax_rows(const Tensor& a);
Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
Tensor transpose(const Tensor& a);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, std::size_t start, std::size_t count);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count);
Tensor mean_rows(const Tensor& a);  // m x n -> 1 x n, mean over rows
Tensor std_rows(const Tensor& a);   // m x n -> 1 x n, population std, floored variance
Tensor sum_all(const Tensor& a);    // -> 1 x 1

// Value-identical copy detached from the tape; backward never flows through.
Tensor stop_gradient(const Tensor& a);

}  // namespace tvec
