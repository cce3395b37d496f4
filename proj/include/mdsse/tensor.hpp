#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mdsse {

using Shape = std::vector<int64_t>;

int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

// One recorded operation result. Nodes carry a strictly increasing sequence
// id assigned at construction, so the implicit tape order is the recording
// order; backward replays reachable nodes in reverse.
struct TensorNode {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // lazily sized to values
  bool requires_grad = false;
  uint64_t seq = 0;
  const char* op_name = "leaf";
  std::vector<NodePtr> inputs;
  std::function<void(TensorNode&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr n) : node_(std::move(n)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t size() const { return static_cast<int64_t>(node_->values.size()); }
  int64_t dim(size_t i) const { return node_->shape[i]; }
  size_t rank() const { return node_->shape.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const double> values() const { return node_->values; }
  std::span<double> mutable_values() { return node_->values; }
  std::span<const double> grad() const;
  double item() const;
  double at(int64_t i) const { return node_->values[static_cast<size_t>(i)]; }

  void zero_grad() { node_->grad.assign(node_->values.size(), 0.0); }
  void set_requires_grad(bool v) { node_->requires_grad = v; }

  NodePtr node() const { return node_; }
  TensorNode& raw() { return *node_; }
  const TensorNode& raw() const { return *node_; }

 private:
  NodePtr node_;
};

// Creates a recorded op node. Other modules use this to register fused
// operations (selective scan, sequence ZOH) with custom backward rules.
Tensor make_op(const char* name, Shape out_shape, std::vector<double> values,
               std::vector<Tensor> inputs,
               std::function<void(TensorNode&)> backward_fn);

// Scoped suppression of recording, for evaluation-only forward passes.
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};
bool grad_enabled();

// Elementwise binary ops with trailing-dimension broadcast: shapes must be
// equal, or one operand's shape must be a suffix of the other's (a 1-element
// tensor broadcasts against anything).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n]

Tensor exp(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor square(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor neg(const Tensor& x);

Tensor concat(const std::vector<Tensor>& xs, size_t axis);
Tensor slice(const Tensor& x, size_t axis, int64_t start, int64_t len);
Tensor reshape(const Tensor& x, Shape shape);
Tensor broadcast_to(const Tensor& x, const Shape& shape);

Tensor reduce_sum(const Tensor& x);   // -> shape {1}
Tensor reduce_mean(const Tensor& x);  // -> shape {1}

// Convenience wrappers over the closed set.
Tensor add_scalar(const Tensor& x, double c);
Tensor mul_scalar(const Tensor& x, double c);
Tensor mse(const Tensor& pred, const Tensor& target);
Tensor row(const Tensor& x, int64_t r);  // [m,n] -> row r as shape {n}
Tensor stack_rows(const std::vector<Tensor>& rows);  // k tensors {n} -> {k,n}

// Generic dispatcher over the closed op set. `axis`/`start`/`len` feed
// concat/slice, `target_shape` feeds broadcast.
struct OpAttrs {
  size_t axis = 0;
  int64_t start = 0;
  int64_t len = 0;
  Shape target_shape;
};
Tensor forward_op(const std::string& op_kind, const std::vector<Tensor>& inputs,
                  const OpAttrs& attrs = {});
const std::vector<std::string>& closed_op_set();

// Reverse-mode pass. `loss` must be scalar; gradients accumulate into every
// reachable node with requires_grad set. Call zero_grad on parameters first.
void backward(const Tensor& loss);

}  // namespace mdsse
