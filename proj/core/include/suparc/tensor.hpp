#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace suparc {

class Tape;

/// Storage shared by tensor handles and tape nodes. `grad` is allocated
/// (zero-filled) only for tensors that participate in gradient tracking.
struct TensorData {
  std::vector<std::size_t> shape;
  std::vector<double> values;
  std::vector<double> grad;
  bool requires_grad = false;
  std::int64_t tape_id = -1;  // node handle on the recording tape; -1 = leaf or untracked
};

/// Dense 64-bit float tensor. Copies alias the same storage, so a Tensor
/// behaves like a shared handle; use detached() for an independent copy.
/// Rank 0 (empty shape, one value) represents a scalar.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double value);
  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor from(std::vector<std::size_t> shape, std::vector<double> values);
  /// A leaf with gradient tracking enabled (a trainable parameter).
  static Tensor parameter(std::vector<std::size_t> shape, std::vector<double> values);

  bool defined() const { return data_ != nullptr; }
  const std::vector<std::size_t>& shape() const { return data_->shape; }
  std::size_t numel() const { return data_->values.size(); }
  bool is_scalar() const { return defined() && data_->values.size() == 1; }

  /// Value of a one-element tensor; ContractError otherwise.
  double item() const;

  std::span<const double> values() const { return data_->values; }
  std::span<double> values_mut() { return data_->values; }
  std::span<const double> grad() const { return data_->grad; }

  bool requires_grad() const { return data_->requires_grad; }
  std::int64_t tape_id() const { return data_->tape_id; }
  void zero_grad();

  /// Copy of the values with no gradient tracking.
  Tensor detached() const;

  const std::shared_ptr<TensorData>& data() const { return data_; }

 private:
  explicit Tensor(std::shared_ptr<TensorData> data) : data_(std::move(data)) {}
  std::shared_ptr<TensorData> data_;

  friend Tensor make_op_result(std::vector<std::size_t> shape, std::vector<double> values);
};

/// Records one node per differentiable operation, in execution order, so a
/// node's parents always precede it (define-by-run topological order).
/// backward_from sweeps the node list once, in reverse.
class Tape {
 public:
  struct Node {
    std::vector<std::int64_t> parents;         // tape ids of tracked parents; -1 for leaves
    std::shared_ptr<TensorData> output;
    std::function<void()> backprop;            // accumulates output->grad into parent grads
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::int64_t record(Node node);
  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t index) const { return nodes_[index]; }
  void clear() { nodes_.clear(); }

  /// Runs every backprop closure from `from` down to 0, exactly once each.
  /// Grads of op outputs are reset first so that repeated sweeps accumulate
  /// only into leaves (parameters and inputs).
  void backward_from(std::int64_t from);

  /// Tape currently recording on this thread, or nullptr.
  static Tape* active();

 private:
  friend class TapeScope;
  std::vector<Node> nodes_;
};

/// RAII activation of a tape for the current thread. While a scope is alive,
/// ops on tracked tensors record nodes; without one, all ops run forward-only.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// --- differentiable operations --------------------------------------------
//
// Every op validates shapes (DimensionError on mismatch) and records a tape
// node when a tape is active and an input is tracked. Domain-guarded ops
// (log, sqrt, exp, arccos) clamp so that finite inputs always produce finite
// values and gradients.

/// [m×k]·[k×n] -> [m×n]. A 1-D left operand is a row vector, a 1-D right
/// operand a column vector; singleton dimensions are squeezed from the result.
Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise binaries; shapes must match or one side must be one-element
// (scalar broadcasting, the only broadcasting supported).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);      // gradient 0 at x == 0
Tensor exp(const Tensor& x);       // input clamped to <= 700 so the result stays finite
Tensor log(const Tensor& x);       // input clamped to >= 1e-12
Tensor sqrt(const Tensor& x);      // input clamped to >= 1e-12
Tensor abs(const Tensor& x);       // subgradient sign(x), sign(0) = 0
Tensor cos(const Tensor& x);
Tensor scale(const Tensor& x, double factor);
Tensor clamp(const Tensor& x, double lo, double hi);  // zero gradient outside [lo, hi]

/// Same values under a new shape with the same element count.
Tensor reshape(const Tensor& x, std::vector<std::size_t> shape);

/// Contiguous window of the flattened values, as a 1-D tensor.
Tensor slice(const Tensor& x, std::size_t offset, std::size_t length);
/// Flattens each part and concatenates, as a 1-D tensor.
Tensor concat(std::span<const Tensor> parts);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// a·b / (||a||·||b||) for 1-D tensors, in [-1, 1]. Exact zero-norm input is
/// a DegenerateInputError; inside the gradient the norms are floored at 1e-12.
Tensor cosine_similarity(const Tensor& a, const Tensor& b);

/// arccos of a scalar clamped to [-1+1e-7, 1-1e-7]; the gradient
/// -1/sqrt(1-x^2) is evaluated at the clamped value and is therefore finite.
Tensor arccos(const Tensor& x);

/// Seeds d(loss)/d(loss) = 1 and sweeps the active tape backwards. The loss
/// must be a scalar recorded on the active tape. Repeated calls accumulate
/// into leaf gradients; call zero_grad on the leaves to reset.
void backward(const Tensor& loss);

/// Central-difference gradient oracle: (f(x+h·e_i) - f(x-h·e_i)) / (2h) per
/// coordinate. f must be deterministic; it receives detached copies of x.
std::vector<double> finite_difference_gradient(
    const std::function<double(const Tensor&)>& f, const Tensor& x,
    double step = 1e-5);

}  // namespace suparc
