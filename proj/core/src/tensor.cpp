#include "suparc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

#include "suparc/errors.hpp"

namespace suparc {

namespace {

thread_local Tape* g_active_tape = nullptr;

constexpr double kLogFloor = 1e-12;
constexpr double kSqrtFloor = 1e-12;
constexpr double kExpCeil = 700.0;
constexpr double kArccosEps = 1e-7;
constexpr double kNormFloor = 1e-12;

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream out;
  out << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out << "x";
    out << shape[i];
  }
  out << "]";
  return out.str();
}

[[noreturn]] void dimension_failure(const std::string& op, const Tensor& a, const Tensor& b) {
  throw DimensionError(op + ": incompatible shapes " + shape_string(a.shape()) +
                       " and " + shape_string(b.shape()));
}

bool recording(const Tensor& t) {
  return g_active_tape != nullptr && t.requires_grad();
}

void enable_grad(Tensor& t) {
  t.data()->requires_grad = true;
  t.data()->grad.assign(t.numel(), 0.0);
}

}  // namespace

Tensor make_op_result(std::vector<std::size_t> shape, std::vector<double> values) {
  auto data = std::make_shared<TensorData>();
  data->shape = std::move(shape);
  data->values = std::move(values);
  return Tensor(std::move(data));
}

// --- Tensor -----------------------------------------------------------------

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  const std::size_t n = shape_numel(shape);
  return make_op_result(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
  const std::size_t n = shape_numel(shape);
  return make_op_result(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) {
  return make_op_result({}, {value});
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return make_op_result({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  if (values.size() != rows * cols) {
    throw DimensionError("Tensor::matrix: " + std::to_string(values.size()) +
                         " values for a " + std::to_string(rows) + "x" +
                         std::to_string(cols) + " matrix");
  }
  return make_op_result({rows, cols}, std::move(values));
}

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<double> values) {
  if (values.size() != shape_numel(shape)) {
    throw DimensionError("Tensor::from: value count does not match shape " +
                         shape_string(shape));
  }
  return make_op_result(std::move(shape), std::move(values));
}

Tensor Tensor::parameter(std::vector<std::size_t> shape, std::vector<double> values) {
  Tensor t = Tensor::from(std::move(shape), std::move(values));
  enable_grad(t);
  return t;
}

double Tensor::item() const {
  if (!is_scalar()) {
    throw ContractError("Tensor::item: tensor has " + std::to_string(numel()) +
                        " elements, expected 1");
  }
  return data_->values[0];
}

void Tensor::zero_grad() {
  if (data_->requires_grad) std::fill(data_->grad.begin(), data_->grad.end(), 0.0);
}

Tensor Tensor::detached() const {
  return make_op_result(data_->shape, data_->values);
}

// --- Tape -------------------------------------------------------------------

std::int64_t Tape::record(Node node) {
  nodes_.push_back(std::move(node));
  return static_cast<std::int64_t>(nodes_.size()) - 1;
}

void Tape::backward_from(std::int64_t from) {
  // Reset intermediate adjoints so a repeated sweep does not double-count;
  // leaf tensors are not on the node list and keep accumulating.
  for (auto& node : nodes_) {
    std::fill(node.output->grad.begin(), node.output->grad.end(), 0.0);
  }
  nodes_[static_cast<std::size_t>(from)].output->grad[0] = 1.0;
  for (std::int64_t id = from; id >= 0; --id) {
    nodes_[static_cast<std::size_t>(id)].backprop();
  }
}

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) {
  g_active_tape = &tape;
}

TapeScope::~TapeScope() { g_active_tape = previous_; }

// --- op helpers ---------------------------------------------------------

namespace {

// Finishes an op: marks the result tracked and records the node.
void record_node(Tensor& out, std::vector<std::int64_t> parents,
                 std::function<void()> backprop) {
  enable_grad(out);
  out.data()->tape_id = g_active_tape->record(
      {std::move(parents), out.data(), std::move(backprop)});
}

enum class BinaryKind { add, sub, mul };

Tensor binary_op(const char* name, BinaryKind kind, const Tensor& a, const Tensor& b) {
  const std::size_t na = a.numel();
  const std::size_t nb = b.numel();
  const bool a_scalar = na == 1;
  const bool b_scalar = nb == 1;
  if (!a_scalar && !b_scalar && a.shape() != b.shape()) dimension_failure(name, a, b);

  const std::size_t n = std::max(na, nb);
  const auto& out_shape = na >= nb ? a.shape() : b.shape();
  std::vector<double> values(n);
  const auto& av = a.data()->values;
  const auto& bv = b.data()->values;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = av[a_scalar ? 0 : i];
    const double y = bv[b_scalar ? 0 : i];
    switch (kind) {
      case BinaryKind::add: values[i] = x + y; break;
      case BinaryKind::sub: values[i] = x - y; break;
      case BinaryKind::mul: values[i] = x * y; break;
    }
  }
  Tensor out = make_op_result(out_shape, std::move(values));

  if (g_active_tape != nullptr && (a.requires_grad() || b.requires_grad())) {
    auto ad = a.data();
    auto bd = b.data();
    auto od = out.data();
    record_node(out, {a.tape_id(), b.tape_id()}, [kind, ad, bd, od, a_scalar, b_scalar, n] {
      const auto& g = od->grad;
      if (ad->requires_grad) {
        for (std::size_t i = 0; i < n; ++i) {
          double local = 0.0;
          switch (kind) {
            case BinaryKind::add: local = g[i]; break;
            case BinaryKind::sub: local = g[i]; break;
            case BinaryKind::mul: local = g[i] * bd->values[b_scalar ? 0 : i]; break;
          }
          ad->grad[a_scalar ? 0 : i] += local;
        }
      }
      if (bd->requires_grad) {
        for (std::size_t i = 0; i < n; ++i) {
          double local = 0.0;
          switch (kind) {
            case BinaryKind::add: local = g[i]; break;
            case BinaryKind::sub: local = -g[i]; break;
            case BinaryKind::mul: local = g[i] * ad->values[a_scalar ? 0 : i]; break;
          }
          bd->grad[b_scalar ? 0 : i] += local;
        }
      }
    });
  }
  return out;
}

// Unary op with value-and-derivative computed per element. `fn` fills
// out_value and local_grad (d out / d in) for one input element.
template <typename Fn>
Tensor unary_op(const Tensor& x, Fn&& fn) {
  const std::size_t n = x.numel();
  std::vector<double> values(n);
  std::vector<double> locals(n);
  const auto& xv = x.data()->values;
  for (std::size_t i = 0; i < n; ++i) fn(xv[i], values[i], locals[i]);
  Tensor out = make_op_result(x.shape(), std::move(values));

  if (recording(x)) {
    auto xd = x.data();
    auto od = out.data();
    auto shared_locals = std::make_shared<std::vector<double>>(std::move(locals));
    record_node(out, {x.tape_id()}, [xd, od, shared_locals, n] {
      for (std::size_t i = 0; i < n; ++i) {
        xd->grad[i] += od->grad[i] * (*shared_locals)[i];
      }
    });
  }
  return out;
}

}  // namespace

// --- elementwise ops ------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) { return binary_op("add", BinaryKind::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op("sub", BinaryKind::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op("mul", BinaryKind::mul, a, b); }

Tensor tanh(const Tensor& x) {
  return unary_op(x, [](double v, double& out, double& local) {
    out = std::tanh(v);
    local = 1.0 - out * out;
  });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(x, [](double v, double& out, double& local) {
    out = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    local = out * (1.0 - out);
  });
}

Tensor relu(const Tensor& x) {
  return unary_op(x, [](double v, double& out, double& local) {
    out = v > 0.0 ? v : 0.0;
    local = v > 0.0 ? 1.0 : 0.0;
  });
}

Tensor exp(const Tensor& x) {
  return unary_op(x, [](double v, double& out, double& local) {
    out = std::exp(std::min(v, kExpCeil));
    local = out;
  });
}

Tensor log(const Tensor& x) {
  return unary_op(x, [](double v, double& out, double& local) {
    const double clamped = std::max(v, kLogFloor);
    out = std::log(clamped);
    local = 1.0 / clamped;
  });
}

Tensor sqrt(const Tensor& x) {
  return unary_op(x, [](double v, double& out, double& local) {
    out = std::sqrt(std::max(v, kSqrtFloor));
    local = 0.5 / out;
  });
}

Tensor abs(const Tensor& x) {
  return unary_op(x, [](double v, double& out, double& local) {
    out = std::fabs(v);
    local = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
  });
}

Tensor cos(const Tensor& x) {
  return unary_op(x, [](double v, double& out, double& local) {
    out = std::cos(v);
    local = -std::sin(v);
  });
}

Tensor scale(const Tensor& x, double factor) {
  return unary_op(x, [factor](double v, double& out, double& local) {
    out = v * factor;
    local = factor;
  });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  if (lo > hi) throw ContractError("clamp: lo > hi");
  return unary_op(x, [lo, hi](double v, double& out, double& local) {
    out = std::min(std::max(v, lo), hi);
    local = (v < lo || v > hi) ? 0.0 : 1.0;
  });
}

// --- matmul -----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto& ash = a.shape();
  const auto& bsh = b.shape();
  if (ash.empty() || ash.size() > 2 || bsh.empty() || bsh.size() > 2) {
    dimension_failure("matmul", a, b);
  }
  const bool a_vec = ash.size() == 1;
  const bool b_vec = bsh.size() == 1;
  const std::size_t m = a_vec ? 1 : ash[0];
  const std::size_t k = a_vec ? ash[0] : ash[1];
  const std::size_t n = b_vec ? 1 : bsh[1];
  if (k != bsh[0]) dimension_failure("matmul", a, b);

  std::vector<double> values(m * n, 0.0);
  const auto& av = a.data()->values;
  const auto& bv = b.data()->values;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        values[i * n + j] += aip * bv[p * n + j];
      }
    }
  }

  std::vector<std::size_t> out_shape;
  if (!a_vec) out_shape.push_back(m);
  if (!b_vec) out_shape.push_back(n);
  Tensor out = make_op_result(std::move(out_shape), std::move(values));

  if (g_active_tape != nullptr && (a.requires_grad() || b.requires_grad())) {
    auto ad = a.data();
    auto bd = b.data();
    auto od = out.data();
    record_node(out, {a.tape_id(), b.tape_id()}, [ad, bd, od, m, k, n] {
      const auto& g = od->grad;
      if (ad->requires_grad) {
        // dA = G * B^T
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              acc += g[i * n + j] * bd->values[p * n + j];
            }
            ad->grad[i * k + p] += acc;
          }
        }
      }
      if (bd->requires_grad) {
        // dB = A^T * G
        for (std::size_t p = 0; p < k; ++p) {
          for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
              acc += ad->values[i * k + p] * g[i * n + j];
            }
            bd->grad[p * n + j] += acc;
          }
        }
      }
    });
  }
  return out;
}

// --- structural ops ---------------------------------------------------------

Tensor reshape(const Tensor& x, std::vector<std::size_t> shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: shape " + shape_string(shape) + " does not hold " +
                         std::to_string(x.numel()) + " elements");
  }
  Tensor out = make_op_result(std::move(shape), {x.values().begin(), x.values().end()});
  if (recording(x)) {
    auto xd = x.data();
    auto od = out.data();
    const std::size_t n = x.numel();
    record_node(out, {x.tape_id()}, [xd, od, n] {
      for (std::size_t i = 0; i < n; ++i) xd->grad[i] += od->grad[i];
    });
  }
  return out;
}

Tensor slice(const Tensor& x, std::size_t offset, std::size_t length) {
  if (offset + length > x.numel()) {
    throw DimensionError("slice: window [" + std::to_string(offset) + ", " +
                         std::to_string(offset + length) + ") exceeds " +
                         std::to_string(x.numel()) + " elements");
  }
  const auto& xv = x.data()->values;
  std::vector<double> values(xv.begin() + static_cast<std::ptrdiff_t>(offset),
                             xv.begin() + static_cast<std::ptrdiff_t>(offset + length));
  Tensor out = make_op_result({length}, std::move(values));

  if (recording(x)) {
    auto xd = x.data();
    auto od = out.data();
    record_node(out, {x.tape_id()}, [xd, od, offset, length] {
      for (std::size_t i = 0; i < length; ++i) {
        xd->grad[offset + i] += od->grad[i];
      }
    });
  }
  return out;
}

Tensor concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat: no parts");
  std::size_t total = 0;
  for (const auto& p : parts) total += p.numel();
  std::vector<double> values;
  values.reserve(total);
  for (const auto& p : parts) {
    const auto& pv = p.data()->values;
    values.insert(values.end(), pv.begin(), pv.end());
  }
  Tensor out = make_op_result({total}, std::move(values));

  bool any_tracked = false;
  for (const auto& p : parts) any_tracked = any_tracked || p.requires_grad();
  if (g_active_tape != nullptr && any_tracked) {
    std::vector<std::shared_ptr<TensorData>> parents;
    std::vector<std::int64_t> parent_ids;
    parents.reserve(parts.size());
    for (const auto& p : parts) {
      parents.push_back(p.data());
      parent_ids.push_back(p.tape_id());
    }
    auto od = out.data();
    record_node(out, std::move(parent_ids), [parents = std::move(parents), od] {
      std::size_t offset = 0;
      for (const auto& pd : parents) {
        const std::size_t n = pd->values.size();
        if (pd->requires_grad) {
          for (std::size_t i = 0; i < n; ++i) pd->grad[i] += od->grad[offset + i];
        }
        offset += n;
      }
    });
  }
  return out;
}

namespace {

Tensor reduce_op(const Tensor& x, double weight) {
  const std::size_t n = x.numel();
  double acc = 0.0;
  for (double v : x.data()->values) acc += v;
  Tensor out = Tensor::scalar(acc * weight);

  if (recording(x)) {
    auto xd = x.data();
    auto od = out.data();
    record_node(out, {x.tape_id()}, [xd, od, n, weight] {
      const double g = od->grad[0] * weight;
      for (std::size_t i = 0; i < n; ++i) xd->grad[i] += g;
    });
  }
  return out;
}

}  // namespace

Tensor sum(const Tensor& x) { return reduce_op(x, 1.0); }

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ContractError("mean: empty tensor");
  return reduce_op(x, 1.0 / static_cast<double>(x.numel()));
}

// --- fused geometry ops -------------------------------------------------

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 1 || b.shape().size() != 1 || a.numel() != b.numel()) {
    dimension_failure("cosine_similarity", a, b);
  }
  if (a.numel() == 0) throw ContractError("cosine_similarity: empty vectors");
  const auto& av = a.data()->values;
  const auto& bv = b.data()->values;
  const std::size_t d = av.size();
  double dot = 0.0, na2 = 0.0, nb2 = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    dot += av[i] * bv[i];
    na2 += av[i] * av[i];
    nb2 += bv[i] * bv[i];
  }
  if (na2 == 0.0 || nb2 == 0.0) {
    throw DegenerateInputError("cosine_similarity: zero-norm input");
  }
  // sqrt of the product keeps identical inputs at exactly 1.0.
  const double denom = std::sqrt(na2 * nb2);
  const double value = std::min(1.0, std::max(-1.0, dot / denom));
  Tensor out = Tensor::scalar(value);

  if (g_active_tape != nullptr && (a.requires_grad() || b.requires_grad())) {
    auto ad = a.data();
    auto bd = b.data();
    auto od = out.data();
    record_node(out, {a.tape_id(), b.tape_id()}, [ad, bd, od, d, na2, nb2, value] {
      const double g = od->grad[0];
      const double na2f = std::max(na2, kNormFloor * kNormFloor);
      const double nb2f = std::max(nb2, kNormFloor * kNormFloor);
      const double denomf = std::sqrt(na2f * nb2f);
      if (ad->requires_grad) {
        for (std::size_t i = 0; i < d; ++i) {
          ad->grad[i] += g * (bd->values[i] / denomf - value * ad->values[i] / na2f);
        }
      }
      if (bd->requires_grad) {
        for (std::size_t i = 0; i < d; ++i) {
          bd->grad[i] += g * (ad->values[i] / denomf - value * bd->values[i] / nb2f);
        }
      }
    });
  }
  return out;
}

Tensor arccos(const Tensor& x) {
  if (!x.is_scalar()) throw ContractError("arccos: expected a scalar tensor");
  const double raw = x.data()->values[0];
  const double clamped = std::min(1.0 - kArccosEps, std::max(-1.0 + kArccosEps, raw));
  Tensor out = Tensor::scalar(std::acos(clamped));

  if (recording(x)) {
    auto xd = x.data();
    auto od = out.data();
    record_node(out, {x.tape_id()}, [xd, od, clamped] {
      xd->grad[0] += od->grad[0] * (-1.0 / std::sqrt(1.0 - clamped * clamped));
    });
  }
  return out;
}

// --- backward / finite differences ----------------------------------------

void backward(const Tensor& loss) {
  if (!loss.is_scalar()) {
    throw ContractError("backward: loss must be a scalar tensor");
  }
  Tape* tape = Tape::active();
  if (tape == nullptr || loss.tape_id() < 0 ||
      loss.tape_id() >= static_cast<std::int64_t>(tape->size()) ||
      tape->node(static_cast<std::size_t>(loss.tape_id())).output != loss.data()) {
    throw ContractError("backward: loss is not recorded on the active tape");
  }
  tape->backward_from(loss.tape_id());
}

std::vector<double> finite_difference_gradient(
    const std::function<double(const Tensor&)>& f, const Tensor& x, double step) {
  if (step <= 0.0) throw ContractError("finite_difference_gradient: step must be > 0");
  const std::size_t n = x.numel();
  std::vector<double> gradient(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    Tensor plus = x.detached();
    Tensor minus = x.detached();
    plus.values_mut()[i] += step;
    minus.values_mut()[i] -= step;
    gradient[i] = (f(plus) - f(minus)) / (2.0 * step);
  }
  return gradient;
}

}  // namespace suparc
