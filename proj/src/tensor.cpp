#include "mdsse/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace mdsse {

namespace {

std::atomic<uint64_t> g_seq{1};
thread_local bool g_grad_enabled = true;

uint64_t next_seq() { return g_seq.fetch_add(1, std::memory_order_relaxed); }

void check_finite(const char* op, const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw std::runtime_error(std::string("op '") + op +
                               "' produced non-finite values");
    }
  }
}

NodePtr make_leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  int64_t n = numel(shape);
  if (n != static_cast<int64_t>(values.size())) {
    throw std::invalid_argument("tensor shape " + shape_str(shape) +
                                " does not match value count " +
                                std::to_string(values.size()));
  }
  check_finite("leaf", values);
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->requires_grad = requires_grad;
  node->seq = next_seq();
  return node;
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

// Trailing-dimension broadcast: equal shapes, a 1-element operand, or one
// shape being a suffix of the other.
struct BinPlan {
  Shape out_shape;
  int64_t n = 0, an = 0, bn = 0;
};

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  size_t off = big.size() - small.size();
  for (size_t i = 0; i < small.size(); ++i) {
    if (small[i] != big[off + i]) return false;
  }
  return true;
}

BinPlan plan_binary(const char* op, const Tensor& a, const Tensor& b) {
  BinPlan p;
  p.an = a.size();
  p.bn = b.size();
  if (a.shape() == b.shape()) {
    p.out_shape = a.shape();
  } else if (p.bn == 1) {
    p.out_shape = a.shape();
  } else if (p.an == 1) {
    p.out_shape = b.shape();
  } else if (is_suffix(b.shape(), a.shape())) {
    p.out_shape = a.shape();
  } else if (is_suffix(a.shape(), b.shape())) {
    p.out_shape = b.shape();
  } else {
    throw std::invalid_argument(std::string("op '") + op +
                                "' shape mismatch: " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
  p.n = numel(p.out_shape);
  return p;
}

Tensor binary_op(const char* name, const Tensor& a, const Tensor& b,
                 double (*fwd)(double, double),
                 void (*bwd)(double g, double av, double bv, double out,
                             double* ga, double* gb)) {
  BinPlan p = plan_binary(name, a, b);
  std::vector<double> out(static_cast<size_t>(p.n));
  const auto av = a.values();
  const auto bv = b.values();
  for (int64_t i = 0; i < p.n; ++i) {
    out[static_cast<size_t>(i)] = fwd(av[static_cast<size_t>(i % p.an)],
                                      bv[static_cast<size_t>(i % p.bn)]);
  }
  int64_t an = p.an, bn = p.bn, n = p.n;
  return make_op(name, p.out_shape, std::move(out), {a, b},
                 [an, bn, n, bwd](TensorNode& self) {
                   auto& ai = *self.inputs[0];
                   auto& bi = *self.inputs[1];
                   for (int64_t i = 0; i < n; ++i) {
                     size_t ia = static_cast<size_t>(i % an);
                     size_t ib = static_cast<size_t>(i % bn);
                     double ga = 0.0, gb = 0.0;
                     bwd(self.grad[static_cast<size_t>(i)], ai.values[ia],
                         bi.values[ib], self.values[static_cast<size_t>(i)],
                         &ga, &gb);
                     if (ai.requires_grad) ai.grad[ia] += ga;
                     if (bi.requires_grad) bi.grad[ib] += gb;
                   }
                 });
}

Tensor unary_op(const char* name, const Tensor& x, double (*fwd)(double),
                double (*dfdx_from)(double xv, double yv)) {
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  return make_op(name, x.shape(), std::move(out), {x},
                 [dfdx_from](TensorNode& self) {
                   auto& xi = *self.inputs[0];
                   if (!xi.requires_grad) return;
                   for (size_t i = 0; i < self.values.size(); ++i) {
                     xi.grad[i] +=
                         self.grad[i] * dfdx_from(xi.values[i], self.values[i]);
                   }
                 });
}

struct AxisBlocks {
  int64_t outer = 1, axis = 1, inner = 1;
};

AxisBlocks axis_blocks(const Shape& s, size_t axis) {
  AxisBlocks b;
  for (size_t i = 0; i < axis; ++i) b.outer *= s[i];
  b.axis = s[axis];
  for (size_t i = axis + 1; i < s.size(); ++i) b.inner *= s[i];
  return b;
}

}  // namespace

int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << "]";
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  int64_t n = numel(shape);
  return Tensor(make_leaf(std::move(shape),
                          std::vector<double>(static_cast<size_t>(n), 0.0),
                          requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  int64_t n = numel(shape);
  return Tensor(make_leaf(std::move(shape),
                          std::vector<double>(static_cast<size_t>(n), value),
                          requires_grad));
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values,
                           bool requires_grad) {
  return Tensor(make_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values({1}, {value}, requires_grad);
}

std::span<const double> Tensor::grad() const {
  const_cast<TensorNode*>(node_.get())->ensure_grad();
  return node_->grad;
}

double Tensor::item() const {
  if (size() != 1) {
    throw std::invalid_argument("item() requires a scalar tensor, got shape " +
                                shape_str(shape()));
  }
  return node_->values[0];
}

Tensor make_op(const char* name, Shape out_shape, std::vector<double> values,
               std::vector<Tensor> inputs,
               std::function<void(TensorNode&)> backward_fn) {
  if (numel(out_shape) != static_cast<int64_t>(values.size())) {
    throw std::invalid_argument(std::string("op '") + name +
                                "' output shape/value count mismatch");
  }
  check_finite(name, values);
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(out_shape);
  node->values = std::move(values);
  node->op_name = name;
  bool record = false;
  if (g_grad_enabled) {
    for (const auto& t : inputs) {
      if (t.requires_grad()) record = true;
    }
  }
  node->requires_grad = record;
  if (record) {
    node->inputs.reserve(inputs.size());
    for (auto& t : inputs) node->inputs.push_back(t.node());
    node->backward_fn = std::move(backward_fn);
  }
  node->seq = next_seq();
  return Tensor(node);
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool grad_enabled() { return g_grad_enabled; }

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double g, double, double, double, double* ga, double* gb) {
        *ga = g;
        *gb = g;
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double g, double, double, double, double* ga, double* gb) {
        *ga = g;
        *gb = -g;
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double g, double av, double bv, double, double* ga, double* gb) {
        *ga = g * bv;
        *gb = g * av;
      });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double g, double, double bv, double out, double* ga, double* gb) {
        *ga = g / bv;
        *gb = -g * out / bv;
      });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw std::invalid_argument("op 'matmul' shape mismatch: " +
                                shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  }
  int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(static_cast<size_t>(m * n), 0.0);
  const auto av = a.values();
  const auto bv = b.values();
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t p = 0; p < k; ++p) {
      double aip = av[static_cast<size_t>(i * k + p)];
      const double* brow = &bv[static_cast<size_t>(p * n)];
      double* orow = &out[static_cast<size_t>(i * n)];
      for (int64_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return make_op("matmul", {m, n}, std::move(out), {a, b},
                 [m, k, n](TensorNode& self) {
                   auto& ai = *self.inputs[0];
                   auto& bi = *self.inputs[1];
                   const auto& g = self.grad;
                   if (ai.requires_grad) {
                     // dA[i,p] += sum_j g[i,j] * B[p,j]
                     for (int64_t i = 0; i < m; ++i) {
                       for (int64_t p = 0; p < k; ++p) {
                         double acc = 0.0;
                         const double* grow = &g[static_cast<size_t>(i * n)];
                         const double* brow =
                             &bi.values[static_cast<size_t>(p * n)];
                         for (int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                         ai.grad[static_cast<size_t>(i * k + p)] += acc;
                       }
                     }
                   }
                   if (bi.requires_grad) {
                     // dB[p,j] += sum_i A[i,p] * g[i,j]
                     for (int64_t i = 0; i < m; ++i) {
                       const double* grow = &g[static_cast<size_t>(i * n)];
                       for (int64_t p = 0; p < k; ++p) {
                         double aip = ai.values[static_cast<size_t>(i * k + p)];
                         double* brow = &bi.grad[static_cast<size_t>(p * n)];
                         for (int64_t j = 0; j < n; ++j)
                           brow[j] += aip * grow[j];
                       }
                     }
                   }
                 });
}

Tensor exp(const Tensor& x) {
  return unary_op(
      "exp", x, [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor softplus(const Tensor& x) {
  return unary_op(
      "softplus", x, [](double v) { return stable_softplus(v); },
      [](double xv, double) { return stable_sigmoid(xv); });
}

Tensor tanh(const Tensor& x) {
  return unary_op(
      "tanh", x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      "sigmoid", x, [](double v) { return stable_sigmoid(v); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor square(const Tensor& x) {
  return unary_op(
      "square", x, [](double v) { return v * v; },
      [](double xv, double) { return 2.0 * xv; });
}

Tensor sqrt(const Tensor& x) {
  return unary_op(
      "sqrt", x, [](double v) { return std::sqrt(v); },
      [](double, double y) { return 0.5 / y; });
}

Tensor neg(const Tensor& x) {
  return unary_op(
      "neg", x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor concat(const std::vector<Tensor>& xs, size_t axis) {
  if (xs.empty()) throw std::invalid_argument("op 'concat' needs inputs");
  const Shape& s0 = xs[0].shape();
  if (axis >= s0.size()) throw std::invalid_argument("op 'concat' axis out of range");
  int64_t total_axis = 0;
  for (const auto& x : xs) {
    if (x.rank() != s0.size()) {
      throw std::invalid_argument("op 'concat' rank mismatch");
    }
    for (size_t i = 0; i < s0.size(); ++i) {
      if (i != axis && x.shape()[i] != s0[i]) {
        throw std::invalid_argument("op 'concat' shape mismatch: " +
                                    shape_str(x.shape()) + " vs " +
                                    shape_str(s0));
      }
    }
    total_axis += x.shape()[axis];
  }
  Shape out_shape = s0;
  out_shape[axis] = total_axis;
  AxisBlocks ob = axis_blocks(out_shape, axis);
  std::vector<double> out(static_cast<size_t>(numel(out_shape)));
  int64_t axis_off = 0;
  for (const auto& x : xs) {
    AxisBlocks xb = axis_blocks(x.shape(), axis);
    const auto xv = x.values();
    for (int64_t o = 0; o < xb.outer; ++o) {
      std::memcpy(&out[static_cast<size_t>((o * ob.axis + axis_off) * ob.inner)],
                  &xv[static_cast<size_t>(o * xb.axis * xb.inner)],
                  static_cast<size_t>(xb.axis * xb.inner) * sizeof(double));
    }
    axis_off += xb.axis;
  }
  std::vector<Tensor> ins = xs;
  return make_op("concat", out_shape, std::move(out), std::move(ins),
                 [axis, ob](TensorNode& self) {
                   int64_t axis_off = 0;
                   for (auto& in : self.inputs) {
                     AxisBlocks xb = axis_blocks(in->shape, axis);
                     if (in->requires_grad) {
                       for (int64_t o = 0; o < xb.outer; ++o) {
                         const double* g =
                             &self.grad[static_cast<size_t>(
                                 (o * ob.axis + axis_off) * ob.inner)];
                         double* gi = &in->grad[static_cast<size_t>(
                             o * xb.axis * xb.inner)];
                         for (int64_t t = 0; t < xb.axis * xb.inner; ++t)
                           gi[t] += g[t];
                       }
                     }
                     axis_off += xb.axis;
                   }
                 });
}

Tensor slice(const Tensor& x, size_t axis, int64_t start, int64_t len) {
  if (axis >= x.rank()) throw std::invalid_argument("op 'slice' axis out of range");
  if (start < 0 || len < 1 || start + len > x.shape()[axis]) {
    throw std::invalid_argument(
        "op 'slice' range [" + std::to_string(start) + "," +
        std::to_string(start + len) + ") out of bounds for shape " +
        shape_str(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = len;
  AxisBlocks xb = axis_blocks(x.shape(), axis);
  std::vector<double> out(static_cast<size_t>(numel(out_shape)));
  const auto xv = x.values();
  for (int64_t o = 0; o < xb.outer; ++o) {
    std::memcpy(&out[static_cast<size_t>(o * len * xb.inner)],
                &xv[static_cast<size_t>((o * xb.axis + start) * xb.inner)],
                static_cast<size_t>(len * xb.inner) * sizeof(double));
  }
  return make_op("slice", out_shape, std::move(out), {x},
                 [xb, start, len](TensorNode& self) {
                   auto& xi = *self.inputs[0];
                   if (!xi.requires_grad) return;
                   for (int64_t o = 0; o < xb.outer; ++o) {
                     const double* g =
                         &self.grad[static_cast<size_t>(o * len * xb.inner)];
                     double* gx = &xi.grad[static_cast<size_t>(
                         (o * xb.axis + start) * xb.inner)];
                     for (int64_t t = 0; t < len * xb.inner; ++t) gx[t] += g[t];
                   }
                 });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw std::invalid_argument("op 'reshape' numel mismatch: " +
                                shape_str(x.shape()) + " -> " +
                                shape_str(shape));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  return make_op("reshape", std::move(shape), std::move(out), {x},
                 [](TensorNode& self) {
                   auto& xi = *self.inputs[0];
                   if (!xi.requires_grad) return;
                   for (size_t i = 0; i < self.grad.size(); ++i)
                     xi.grad[i] += self.grad[i];
                 });
}

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
  int64_t xn = x.size();
  int64_t n = numel(shape);
  if (!(xn == 1 || is_suffix(x.shape(), shape))) {
    throw std::invalid_argument("op 'broadcast' cannot broadcast " +
                                shape_str(x.shape()) + " to " +
                                shape_str(shape));
  }
  std::vector<double> out(static_cast<size_t>(n));
  const auto xv = x.values();
  for (int64_t i = 0; i < n; ++i)
    out[static_cast<size_t>(i)] = xv[static_cast<size_t>(i % xn)];
  return make_op("broadcast", shape, std::move(out), {x},
                 [xn, n](TensorNode& self) {
                   auto& xi = *self.inputs[0];
                   if (!xi.requires_grad) return;
                   for (int64_t i = 0; i < n; ++i)
                     xi.grad[static_cast<size_t>(i % xn)] +=
                         self.grad[static_cast<size_t>(i)];
                 });
}

Tensor reduce_sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  return make_op("reduce_sum", {1}, {acc}, {x}, [](TensorNode& self) {
    auto& xi = *self.inputs[0];
    if (!xi.requires_grad) return;
    for (size_t i = 0; i < xi.grad.size(); ++i) xi.grad[i] += self.grad[0];
  });
}

Tensor reduce_mean(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  double inv = 1.0 / static_cast<double>(x.size());
  return make_op("reduce_mean", {1}, {acc * inv}, {x},
                 [inv](TensorNode& self) {
                   auto& xi = *self.inputs[0];
                   if (!xi.requires_grad) return;
                   for (size_t i = 0; i < xi.grad.size(); ++i)
                     xi.grad[i] += self.grad[0] * inv;
                 });
}

Tensor add_scalar(const Tensor& x, double c) { return add(x, Tensor::scalar(c)); }
Tensor mul_scalar(const Tensor& x, double c) { return mul(x, Tensor::scalar(c)); }

Tensor mse(const Tensor& pred, const Tensor& target) {
  return reduce_mean(square(sub(pred, target)));
}

Tensor row(const Tensor& x, int64_t r) {
  if (x.rank() != 2) throw std::invalid_argument("row() requires rank-2 tensor");
  return reshape(slice(x, 0, r, 1), {x.dim(1)});
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  std::vector<Tensor> reshaped;
  reshaped.reserve(rows.size());
  for (const auto& r : rows) reshaped.push_back(reshape(r, {1, r.size()}));
  return concat(reshaped, 0);
}

const std::vector<std::string>& closed_op_set() {
  static const std::vector<std::string> kOps = {
      "add",    "sub",   "mul",    "matmul",     "exp",
      "softplus", "tanh", "sigmoid", "concat",   "slice",
      "reduce_sum", "reduce_mean", "square", "sqrt", "div",
      "broadcast"};
  return kOps;
}

Tensor forward_op(const std::string& op_kind, const std::vector<Tensor>& inputs,
                  const OpAttrs& attrs) {
  auto need = [&](size_t n) {
    if (inputs.size() != n) {
      throw std::invalid_argument("op '" + op_kind + "' expects " +
                                  std::to_string(n) + " inputs, got " +
                                  std::to_string(inputs.size()));
    }
  };
  if (op_kind == "add") { need(2); return add(inputs[0], inputs[1]); }
  if (op_kind == "sub") { need(2); return sub(inputs[0], inputs[1]); }
  if (op_kind == "mul") { need(2); return mul(inputs[0], inputs[1]); }
  if (op_kind == "div") { need(2); return div(inputs[0], inputs[1]); }
  if (op_kind == "matmul") { need(2); return matmul(inputs[0], inputs[1]); }
  if (op_kind == "exp") { need(1); return exp(inputs[0]); }
  if (op_kind == "softplus") { need(1); return softplus(inputs[0]); }
  if (op_kind == "tanh") { need(1); return tanh(inputs[0]); }
  if (op_kind == "sigmoid") { need(1); return sigmoid(inputs[0]); }
  if (op_kind == "square") { need(1); return square(inputs[0]); }
  if (op_kind == "sqrt") { need(1); return sqrt(inputs[0]); }
  if (op_kind == "concat") { return concat(inputs, attrs.axis); }
  if (op_kind == "slice") {
    need(1);
    return slice(inputs[0], attrs.axis, attrs.start, attrs.len);
  }
  if (op_kind == "reduce_sum") { need(1); return reduce_sum(inputs[0]); }
  if (op_kind == "reduce_mean") { need(1); return reduce_mean(inputs[0]); }
  if (op_kind == "broadcast") {
    need(1);
    return broadcast_to(inputs[0], attrs.target_shape);
  }
  throw std::invalid_argument("unknown op kind '" + op_kind + "'");
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw std::invalid_argument("backward() requires a scalar loss");
  }
  if (!loss.requires_grad()) return;

  // Gather reachable grad-requiring nodes; recording order doubles as a
  // topological order.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  std::vector<TensorNode*> stack{loss.node().get()};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    TensorNode* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (auto& in : n->inputs) {
      if (in->requires_grad && seen.insert(in.get()).second) {
        stack.push_back(in.get());
      }
    }
  }
  std::sort(order.begin(), order.end(),
            [](const TensorNode* a, const TensorNode* b) { return a->seq > b->seq; });

  for (TensorNode* n : order) n->ensure_grad();
  loss.node()->grad[0] += 1.0;
  for (TensorNode* n : order) {
    if (!n->backward_fn) continue;
    for (auto& in : n->inputs) {
      if (in->seq >= n->seq) {
        throw std::runtime_error("tape order violated at op '" +
                                 std::string(n->op_name) + "'");
      }
      if (in->requires_grad) in->ensure_grad();
    }
    n->backward_fn(*n);
  }
}

}  // namespace mdsse
