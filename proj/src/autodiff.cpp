#include "hbnn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <utility>

#include "hbnn/error.hpp"

namespace hbnn::ad {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_)) {
    throw UsageError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_string(shape_));
  }
}

Tensor Tensor::from_rows(const std::vector<std::vector<double>>& rows) {
  const std::size_t cols = rows.empty() ? 0 : rows.front().size();
  std::vector<double> data;
  data.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw UsageError("ragged rows");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), cols}, std::move(data));
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

std::vector<double> Tensor::row(std::size_t r) const {
  const std::size_t cols = shape_.at(1);
  return {data_.begin() + static_cast<std::ptrdiff_t>(r * cols),
          data_.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols)};
}

double Tensor::item() const {
  if (data_.size() != 1) throw UsageError("item() on tensor of shape " + shape_string(shape_));
  return data_[0];
}

namespace detail {

struct Node {
  Tensor value;
  Tensor grad;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;
  const char* op = "leaf";
  std::size_t id = 0;
  bool requires_grad = false;
  Tape* tape = nullptr;

  Tensor& grad_buffer() {
    if (grad.shape() != value.shape()) grad = Tensor(value.shape());
    return grad;
  }
};

}  // namespace detail

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

const Tensor& Var::value() const {
  if (!node_) throw UsageError("empty Var");
  return node_->value;
}

const Tensor& Var::grad() const {
  if (!node_) throw UsageError("empty Var");
  if (node_->grad.shape() != node_->value.shape()) node_->grad = Tensor(node_->value.shape());
  return node_->grad;
}

bool Var::requires_grad() const { return node_ && node_->requires_grad; }
std::size_t Var::id() const { return node_ ? node_->id : 0; }
Tape* Var::tape() const { return node_ ? node_->tape : nullptr; }

struct OpBuilder {
  static const NodePtr& node(const Var& v) {
    if (!v.node_) throw UsageError("empty Var used in an operation");
    return v.node_;
  }

  static Tape* common_tape(std::initializer_list<const Var*> vars) {
    Tape* tape = nullptr;
    for (const Var* v : vars) {
      Tape* t = node(*v)->tape;
      if (tape && t != tape) throw UsageError("operands belong to different tapes");
      tape = t;
    }
    return tape;
  }

  static Var make(Tape* tape, const char* op, Tensor value, std::vector<NodePtr> inputs,
                  std::function<void(Node&)> backward) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->tape = tape;
    n->id = tape->next_id_++;
    for (double x : value.data()) {
      if (!std::isfinite(x)) {
        throw NumericError(std::string("non-finite output in op '") + op + "' (node " + std::to_string(n->id) + ")");
      }
    }
    n->value = std::move(value);
    n->requires_grad = std::any_of(inputs.begin(), inputs.end(), [](const NodePtr& p) { return p->requires_grad; });
    if (n->requires_grad) {
      n->inputs = std::move(inputs);
      n->backward = std::move(backward);
      tape->nodes_.push_back(n);
    }
    return Var(std::move(n));
  }

  static Var input(Tape* tape, Tensor value, bool trainable) {
    auto n = std::make_shared<Node>();
    n->op = trainable ? "leaf" : "constant";
    n->tape = tape;
    n->id = tape->next_id_++;
    n->value = std::move(value);
    n->requires_grad = trainable;
    if (trainable) tape->nodes_.push_back(n);
    return Var(std::move(n));
  }
};

Var Tape::leaf(Tensor value) { return OpBuilder::input(this, std::move(value), true); }
Var Tape::constant(Tensor value) { return OpBuilder::input(this, std::move(value), false); }

void Tape::mix_branch(std::uint64_t bits) {
  branch_signature_ ^= bits + 0x9e3779b97f4a7c15ULL + (branch_signature_ << 6) + (branch_signature_ >> 2);
}

void Tape::backward(const Var& loss) {
  const NodePtr& root = OpBuilder::node(loss);
  if (root->tape != this) throw UsageError("loss was not recorded on this tape");
  if (root->value.size() != 1) throw UsageError("backward needs a one-element loss, got " + shape_string(root->value.shape()));
  for (const auto& n : nodes_) n->grad = Tensor(n->value.shape());
  if (!root->requires_grad) return;
  root->grad_buffer()[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = **it;
    if (n.backward) n.backward(n);
  }
}

namespace {

const NodePtr& N(const Var& v) { return OpBuilder::node(v); }

// Visits every output element of a broadcast binary op with the matching
// flat indices into both operands.
class Broadcast {
 public:
  Broadcast(const Shape& a, const Shape& b) : a_(a), b_(b) {
    const std::size_t rank = std::max(a.size(), b.size());
    out_.assign(rank, 1);
    sa_.assign(rank, 0);
    sb_.assign(rank, 0);
    std::size_t stride_a = 1;
    std::size_t stride_b = 1;
    for (std::size_t i = 0; i < rank; ++i) {
      const std::size_t ax = rank - 1 - i;
      const std::size_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
      const std::size_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
      if (da != db && da != 1 && db != 1) {
        throw UsageError("cannot broadcast " + shape_string(a) + " with " + shape_string(b));
      }
      out_[ax] = std::max(da, db);
      sa_[ax] = da == 1 ? 0 : stride_a;
      sb_[ax] = db == 1 ? 0 : stride_b;
      stride_a *= da;
      stride_b *= db;
    }
  }

  const Shape& out_shape() const { return out_; }

  template <class F>
  void for_each(F&& f) const {
    const std::size_t total = shape_size(out_);
    if (a_ == b_) {
      for (std::size_t i = 0; i < total; ++i) f(i, i, i);
      return;
    }
    if (shape_size(b_) == 1 && a_ == out_) {
      for (std::size_t i = 0; i < total; ++i) f(i, i, std::size_t{0});
      return;
    }
    if (shape_size(a_) == 1 && b_ == out_) {
      for (std::size_t i = 0; i < total; ++i) f(i, std::size_t{0}, i);
      return;
    }
    const std::size_t rank = out_.size();
    std::vector<std::size_t> idx(rank, 0);
    std::size_t ia = 0;
    std::size_t ib = 0;
    for (std::size_t o = 0; o < total; ++o) {
      f(o, ia, ib);
      for (std::size_t ax = rank; ax-- > 0;) {
        ++idx[ax];
        ia += sa_[ax];
        ib += sb_[ax];
        if (idx[ax] < out_[ax]) break;
        ia -= sa_[ax] * out_[ax];
        ib -= sb_[ax] * out_[ax];
        idx[ax] = 0;
      }
    }
  }

 private:
  Shape a_;
  Shape b_;
  Shape out_;
  std::vector<std::size_t> sa_;
  std::vector<std::size_t> sb_;
};

// f(a, b) -> value; da(a, b, out) and db(a, b, out) are local partials.
template <class F, class DA, class DB>
Var binary(const char* op, const Var& a, const Var& b, F f, DA da, DB db) {
  Tape* tape = OpBuilder::common_tape({&a, &b});
  const NodePtr& na = N(a);
  const NodePtr& nb = N(b);
  auto bc = std::make_shared<Broadcast>(na->value.shape(), nb->value.shape());
  Tensor out(bc->out_shape());
  const auto av = na->value.data();
  const auto bv = nb->value.data();
  auto ov = out.data();
  bc->for_each([&](std::size_t o, std::size_t i, std::size_t j) { ov[o] = f(av[i], bv[j]); });
  return OpBuilder::make(tape, op, std::move(out), {na, nb}, [bc, da, db](Node& n) {
    Node& x = *n.inputs[0];
    Node& y = *n.inputs[1];
    const auto g = n.grad.data();
    const auto xv = x.value.data();
    const auto yv = y.value.data();
    const auto ov = n.value.data();
    if (x.requires_grad) {
      auto gx = x.grad_buffer().data();
      bc->for_each([&](std::size_t o, std::size_t i, std::size_t j) { gx[i] += g[o] * da(xv[i], yv[j], ov[o]); });
    }
    if (y.requires_grad) {
      auto gy = y.grad_buffer().data();
      bc->for_each([&](std::size_t o, std::size_t i, std::size_t j) { gy[j] += g[o] * db(xv[i], yv[j], ov[o]); });
    }
  });
}

// f(x) -> value; d(x, y) -> dy/dx.
template <class F, class D>
Var unary(const char* op, const Var& a, F f, D d) {
  const NodePtr& na = N(a);
  Tensor out(na->value.shape());
  const auto av = na->value.data();
  auto ov = out.data();
  for (std::size_t i = 0; i < av.size(); ++i) ov[i] = f(av[i]);
  return OpBuilder::make(na->tape, op, std::move(out), {na}, [d](Node& n) {
    Node& x = *n.inputs[0];
    const auto g = n.grad.data();
    const auto xv = x.value.data();
    const auto yv = n.value.data();
    auto gx = x.grad_buffer().data();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * d(xv[i], yv[i]);
  });
}

Var constant_like(const Var& ref, double s) { return N(ref)->tape->scalar(s); }

// Splits a shape around `axis` into outer * len * inner.
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t len = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) throw UsageError("axis " + std::to_string(axis) + " out of range for " + shape_string(shape));
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

Shape reduced_shape(const Shape& shape, std::size_t axis, bool keepdim) {
  Shape out = shape;
  if (keepdim) {
    out[axis] = 1;
  } else {
    out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
  }
  return out;
}

}  // namespace

Var add(const Var& a, const Var& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

Var sub(const Var& a, const Var& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

Var mul(const Var& a, const Var& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

Var div(const Var& a, const Var& b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; }, [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double o) { return -o / y; });
}

Var neg(const Var& a) {
  return unary("neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Var operator+(const Var& a, const Var& b) { return add(a, b); }
Var operator-(const Var& a, const Var& b) { return sub(a, b); }
Var operator*(const Var& a, const Var& b) { return mul(a, b); }
Var operator/(const Var& a, const Var& b) { return div(a, b); }
Var operator-(const Var& a) { return neg(a); }

Var operator+(const Var& a, double s) {
  return unary("add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}
Var operator+(double s, const Var& a) { return a + s; }
Var operator-(const Var& a, double s) { return a + (-s); }
Var operator-(double s, const Var& a) {
  return unary("rsub_scalar", a, [s](double x) { return s - x; }, [](double, double) { return -1.0; });
}
Var operator*(const Var& a, double s) {
  return unary("mul_scalar", a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}
Var operator*(double s, const Var& a) { return a * s; }
Var operator/(const Var& a, double s) { return a * (1.0 / s); }
Var operator/(double s, const Var& a) { return div(constant_like(a, s), a); }

Var exp(const Var& a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
  return unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sqrt(const Var& a) {
  return unary("sqrt", a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

Var square(const Var& a) {
  return unary("square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sinh(const Var& a) {
  return unary("sinh", a, [](double x) { return std::sinh(x); }, [](double x, double) { return std::cosh(x); });
}

Var cosh(const Var& a) {
  return unary("cosh", a, [](double x) { return std::cosh(x); }, [](double x, double) { return std::sinh(x); });
}

Var tanh(const Var& a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var asinh(const Var& a) {
  return unary(
      "asinh", a, [](double x) { return std::asinh(x); }, [](double x, double) { return 1.0 / std::sqrt(x * x + 1.0); });
}

Var acosh(const Var& a) {
  return unary(
      "acosh", a, [](double x) { return std::acosh(x); }, [](double x, double) { return 1.0 / std::sqrt(x * x - 1.0); });
}

Var atanh(const Var& a) {
  return unary(
      "atanh", a, [](double x) { return std::atanh(x); }, [](double x, double) { return 1.0 / (1.0 - x * x); });
}

Var sigmoid(const Var& a) {
  return unary(
      "sigmoid", a,
      [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var softplus(const Var& a) {
  return unary(
      "softplus", a, [](double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
      [](double x, double) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); });
}

Var hypot1(const Var& a) {
  return unary(
      "hypot1", a, [](double x) { return std::hypot(1.0, x); }, [](double x, double y) { return x / y; });
}

namespace {
// Below this magnitude the f(x)/x forms switch to their Taylor expansions.
constexpr double kSeriesCut = 1e-4;
}  // namespace

Var sinhc(const Var& a) {
  return unary(
      "sinhc", a,
      [](double x) { return std::abs(x) < kSeriesCut ? 1.0 + x * x / 6.0 : std::sinh(x) / x; },
      [](double x, double y) { return std::abs(x) < kSeriesCut ? x / 3.0 : (std::cosh(x) - y) / x; });
}

Var tanhc(const Var& a) {
  return unary(
      "tanhc", a,
      [](double x) { return std::abs(x) < kSeriesCut ? 1.0 - x * x / 3.0 : std::tanh(x) / x; },
      [](double x, double y) {
        if (std::abs(x) < kSeriesCut) return -2.0 * x / 3.0;
        const double t = std::tanh(x);
        return (1.0 - t * t - y) / x;
      });
}

Var asinhc(const Var& a) {
  return unary(
      "asinhc", a,
      [](double x) { return std::abs(x) < kSeriesCut ? 1.0 - x * x / 6.0 : std::asinh(x) / x; },
      [](double x, double y) {
        return std::abs(x) < kSeriesCut ? -x / 3.0 : (1.0 / std::sqrt(1.0 + x * x) - y) / x;
      });
}

Var atanhc(const Var& a) {
  return unary(
      "atanhc", a,
      [](double x) { return std::abs(x) < kSeriesCut ? 1.0 + x * x / 3.0 : std::atanh(x) / x; },
      [](double x, double y) {
        return std::abs(x) < kSeriesCut ? 2.0 * x / 3.0 : (1.0 / (1.0 - x * x) - y) / x;
      });
}

Var clamp(const Var& a, double lo, double hi) {
  const NodePtr& na = N(a);
  std::uint64_t bits = 0;
  std::size_t i = 0;
  for (double x : na->value.data()) {
    const std::uint64_t state = x < lo ? 1 : (x > hi ? 2 : 0);
    bits = bits * 31 + state * (i++ + 1);
  }
  na->tape->mix_branch(bits);
  return unary(
      "clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var clamp_min(const Var& a, double lo) { return clamp(a, lo, std::numeric_limits<double>::infinity()); }

Var relu(const Var& a) { return clamp_min(a, 0.0); }

Var matmul(const Var& a, const Var& b) {
  Tape* tape = OpBuilder::common_tape({&a, &b});
  const NodePtr& na = N(a);
  const NodePtr& nb = N(b);
  const Tensor& A = na->value;
  const Tensor& B = nb->value;
  if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0)) {
    throw UsageError("matmul shape mismatch " + shape_string(A.shape()) + " x " + shape_string(B.shape()));
  }
  const std::size_t m = A.dim(0);
  const std::size_t k = A.dim(1);
  const std::size_t n = B.dim(1);
  Tensor out({m, n});
  const double* pa = A.data().data();
  const double* pb = B.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double s = pa[i * k + p];
      const double* brow = pb + p * n;
      double* orow = po + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += s * brow[j];
    }
  }
  return OpBuilder::make(tape, "matmul", std::move(out), {na, nb}, [m, k, n](Node& node) {
    Node& x = *node.inputs[0];
    Node& y = *node.inputs[1];
    const double* g = node.grad.data().data();
    if (x.requires_grad) {
      // dA = G B^T
      double* gx = x.grad_buffer().data().data();
      const double* pb = y.value.data().data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * pb[p * n + j];
          gx[i * k + p] += s;
        }
      }
    }
    if (y.requires_grad) {
      // dB = A^T G
      double* gy = y.grad_buffer().data().data();
      const double* pa = x.value.data().data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double s = pa[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gy[p * n + j] += s * g[i * n + j];
        }
      }
    }
  });
}

Var transpose(const Var& a) {
  const NodePtr& na = N(a);
  const Tensor& A = na->value;
  if (A.rank() != 2) throw UsageError("transpose needs a rank-2 tensor, got " + shape_string(A.shape()));
  const std::size_t r = A.dim(0);
  const std::size_t c = A.dim(1);
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out.at(j, i) = A.at(i, j);
  }
  return OpBuilder::make(na->tape, "transpose", std::move(out), {na}, [r, c](Node& n) {
    Tensor& gx = n.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) gx.at(i, j) += n.grad.at(j, i);
    }
  });
}

Var reshape(const Var& a, Shape shape) {
  const NodePtr& na = N(a);
  if (shape_size(shape) != na->value.size()) {
    throw UsageError("cannot reshape " + shape_string(na->value.shape()) + " to " + shape_string(shape));
  }
  Tensor out(std::move(shape), na->value.values());
  return OpBuilder::make(na->tape, "reshape", std::move(out), {na}, [](Node& n) {
    auto gx = n.inputs[0]->grad_buffer().data();
    const auto g = n.grad.data();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var broadcast_to(const Var& a, const Shape& shape) {
  const NodePtr& na = N(a);
  auto bc = std::make_shared<Broadcast>(na->value.shape(), shape);
  if (bc->out_shape() != shape) {
    throw UsageError("cannot broadcast " + shape_string(na->value.shape()) + " to " + shape_string(shape));
  }
  Tensor out(shape);
  const auto av = na->value.data();
  auto ov = out.data();
  bc->for_each([&](std::size_t o, std::size_t i, std::size_t) { ov[o] = av[i]; });
  return OpBuilder::make(na->tape, "broadcast_to", std::move(out), {na}, [bc](Node& n) {
    auto gx = n.inputs[0]->grad_buffer().data();
    const auto g = n.grad.data();
    bc->for_each([&](std::size_t o, std::size_t i, std::size_t) { gx[i] += g[o]; });
  });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw UsageError("concat of zero tensors");
  Tape* tape = nullptr;
  std::vector<NodePtr> inputs;
  inputs.reserve(parts.size());
  Shape out_shape = N(parts.front())->value.shape();
  if (axis >= out_shape.size()) throw UsageError("concat axis out of range");
  out_shape[axis] = 0;
  for (const Var& p : parts) {
    const NodePtr& np = N(p);
    if (tape && np->tape != tape) throw UsageError("operands belong to different tapes");
    tape = np->tape;
    Shape s = np->value.shape();
    if (s.size() != out_shape.size()) throw UsageError("concat rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != out_shape[i]) throw UsageError("concat shape mismatch " + shape_string(s));
    }
    out_shape[axis] += s[axis];
    inputs.push_back(np);
  }
  const AxisSplit os = split_at(out_shape, axis);
  Tensor out(out_shape);
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& np : inputs) {
    const AxisSplit ps = split_at(np->value.shape(), axis);
    const auto pv = np->value.data();
    for (std::size_t o = 0; o < ps.outer; ++o) {
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(o * ps.len * ps.inner), ps.len * ps.inner,
                  out.data().begin() + static_cast<std::ptrdiff_t>((o * os.len + offset) * os.inner));
    }
    offsets.push_back(offset);
    offset += ps.len;
  }
  return OpBuilder::make(tape, "concat", std::move(out), std::move(inputs), [axis, os, offsets](Node& n) {
    const auto g = n.grad.data();
    for (std::size_t p = 0; p < n.inputs.size(); ++p) {
      Node& in = *n.inputs[p];
      if (!in.requires_grad) continue;
      const AxisSplit ps = split_at(in.value.shape(), axis);
      auto gx = in.grad_buffer().data();
      for (std::size_t o = 0; o < ps.outer; ++o) {
        const std::size_t src = (o * os.len + offsets[p]) * os.inner;
        const std::size_t dst = o * ps.len * ps.inner;
        for (std::size_t i = 0; i < ps.len * ps.inner; ++i) gx[dst + i] += g[src + i];
      }
    }
  });
}

Var slice(const Var& a, std::size_t axis, std::size_t begin, std::size_t end) {
  const NodePtr& na = N(a);
  const AxisSplit s = split_at(na->value.shape(), axis);
  if (begin > end || end > s.len) throw UsageError("slice bounds out of range");
  Shape out_shape = na->value.shape();
  out_shape[axis] = end - begin;
  const std::size_t w = end - begin;
  Tensor out(out_shape);
  const auto av = na->value.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(av.begin() + static_cast<std::ptrdiff_t>((o * s.len + begin) * s.inner), w * s.inner,
                out.data().begin() + static_cast<std::ptrdiff_t>(o * w * s.inner));
  }
  return OpBuilder::make(na->tape, "slice", std::move(out), {na}, [s, begin, w](Node& n) {
    auto gx = n.inputs[0]->grad_buffer().data();
    const auto g = n.grad.data();
    for (std::size_t o = 0; o < s.outer; ++o) {
      const std::size_t dst = (o * s.len + begin) * s.inner;
      const std::size_t src = o * w * s.inner;
      for (std::size_t i = 0; i < w * s.inner; ++i) gx[dst + i] += g[src + i];
    }
  });
}

Var sum(const Var& a) {
  const NodePtr& na = N(a);
  double total = 0.0;
  for (double x : na->value.data()) total += x;
  return OpBuilder::make(na->tape, "sum", Tensor::scalar(total), {na}, [](Node& n) {
    const double g = n.grad[0];
    for (double& gx : n.inputs[0]->grad_buffer().data()) gx += g;
  });
}

Var sum(const Var& a, std::size_t axis, bool keepdim) {
  const NodePtr& na = N(a);
  const AxisSplit s = split_at(na->value.shape(), axis);
  Tensor out(reduced_shape(na->value.shape(), axis, keepdim));
  const auto av = na->value.data();
  auto ov = out.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t l = 0; l < s.len; ++l) {
      for (std::size_t i = 0; i < s.inner; ++i) ov[o * s.inner + i] += av[(o * s.len + l) * s.inner + i];
    }
  }
  return OpBuilder::make(na->tape, "sum_axis", std::move(out), {na}, [s](Node& n) {
    auto gx = n.inputs[0]->grad_buffer().data();
    const auto g = n.grad.data();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t l = 0; l < s.len; ++l) {
        for (std::size_t i = 0; i < s.inner; ++i) gx[(o * s.len + l) * s.inner + i] += g[o * s.inner + i];
      }
    }
  });
}

Var mean(const Var& a) { return sum(a) * (1.0 / static_cast<double>(N(a)->value.size())); }

Var mean(const Var& a, std::size_t axis, bool keepdim) {
  const double len = static_cast<double>(split_at(N(a)->value.shape(), axis).len);
  return sum(a, axis, keepdim) * (1.0 / len);
}

Var sum_sq(const Var& a, std::size_t axis, bool keepdim) {
  const NodePtr& na = N(a);
  const AxisSplit s = split_at(na->value.shape(), axis);
  Tensor out(reduced_shape(na->value.shape(), axis, keepdim));
  const auto av = na->value.data();
  auto ov = out.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t l = 0; l < s.len; ++l) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        const double x = av[(o * s.len + l) * s.inner + i];
        ov[o * s.inner + i] += x * x;
      }
    }
  }
  return OpBuilder::make(na->tape, "sum_sq", std::move(out), {na}, [s](Node& n) {
    Node& x = *n.inputs[0];
    auto gx = x.grad_buffer().data();
    const auto xv = x.value.data();
    const auto g = n.grad.data();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t l = 0; l < s.len; ++l) {
        for (std::size_t i = 0; i < s.inner; ++i) {
          const std::size_t j = (o * s.len + l) * s.inner + i;
          gx[j] += 2.0 * xv[j] * g[o * s.inner + i];
        }
      }
    }
  });
}

Var norm(const Var& a, std::size_t axis, bool keepdim) {
  const NodePtr& na = N(a);
  const AxisSplit s = split_at(na->value.shape(), axis);
  Tensor out(reduced_shape(na->value.shape(), axis, keepdim));
  const auto av = na->value.data();
  auto ov = out.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      double scale = 0.0;
      for (std::size_t l = 0; l < s.len; ++l) scale = std::max(scale, std::abs(av[(o * s.len + l) * s.inner + i]));
      if (scale == 0.0) continue;
      double acc = 0.0;
      for (std::size_t l = 0; l < s.len; ++l) {
        const double x = av[(o * s.len + l) * s.inner + i] / scale;
        acc += x * x;
      }
      ov[o * s.inner + i] = scale * std::sqrt(acc);
    }
  }
  return OpBuilder::make(na->tape, "norm", std::move(out), {na}, [s](Node& n) {
    Node& x = *n.inputs[0];
    auto gx = x.grad_buffer().data();
    const auto xv = x.value.data();
    const auto g = n.grad.data();
    const auto nv = n.value.data();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        const double r = nv[o * s.inner + i];
        if (r == 0.0) continue;
        const double c = g[o * s.inner + i] / r;
        for (std::size_t l = 0; l < s.len; ++l) {
          const std::size_t j = (o * s.len + l) * s.inner + i;
          gx[j] += c * xv[j];
        }
      }
    }
  });
}

Var row_normalize(const Var& a) {
  const NodePtr& na = N(a);
  const Tensor& A = na->value;
  if (A.rank() != 2) throw UsageError("row_normalize needs a rank-2 tensor, got " + shape_string(A.shape()));
  const std::size_t r = A.dim(0);
  const std::size_t c = A.dim(1);
  std::vector<double> norms(r);
  Tensor out(A.shape());
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += A.at(i, j) * A.at(i, j);
    norms[i] = std::sqrt(s);
    if (!(norms[i] >= 1e-12)) {
      throw NumericError("row_normalize: row " + std::to_string(i) + " has norm below 1e-12");
    }
    for (std::size_t j = 0; j < c; ++j) out.at(i, j) = A.at(i, j) / norms[i];
  }
  return OpBuilder::make(na->tape, "row_normalize", std::move(out), {na}, [r, c, norms](Node& n) {
    Tensor& gx = n.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < r; ++i) {
      double gv = 0.0;
      for (std::size_t j = 0; j < c; ++j) gv += n.grad.at(i, j) * n.value.at(i, j);
      for (std::size_t j = 0; j < c; ++j) gx.at(i, j) += (n.grad.at(i, j) - gv * n.value.at(i, j)) / norms[i];
    }
  });
}

Tensor softmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw UsageError("softmax_rows needs [B, C], got " + shape_string(logits.shape()));
  Tensor p(logits.shape());
  const std::size_t b = logits.dim(0);
  const std::size_t c = logits.dim(1);
  for (std::size_t i = 0; i < b; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, logits.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (p.at(i, j) = std::exp(logits.at(i, j) - mx));
    for (std::size_t j = 0; j < c; ++j) p.at(i, j) /= z;
  }
  return p;
}

Var softmax_cross_entropy(const Var& logits, std::span<const int> labels) {
  const NodePtr& nl = N(logits);
  const Tensor& Z = nl->value;
  if (Z.rank() != 2) throw UsageError("softmax_cross_entropy needs [B, C] logits, got " + shape_string(Z.shape()));
  const std::size_t b = Z.dim(0);
  const std::size_t c = Z.dim(1);
  if (labels.size() != b) throw UsageError("label count does not match batch size");
  std::vector<int> y(labels.begin(), labels.end());
  for (int label : y) {
    if (label < 0 || static_cast<std::size_t>(label) >= c) {
      throw UsageError("label " + std::to_string(label) + " outside [0, " + std::to_string(c) + ")");
    }
  }
  auto probs = std::make_shared<Tensor>(softmax_rows(Z));
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, Z.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(Z.at(i, j) - mx);
    loss += mx + std::log(z) - Z.at(i, static_cast<std::size_t>(y[i]));
  }
  loss /= static_cast<double>(b);
  return OpBuilder::make(nl->tape, "softmax_cross_entropy", Tensor::scalar(loss), {nl}, [probs, y, b, c](Node& n) {
    Tensor& gx = n.inputs[0]->grad_buffer();
    const double g = n.grad[0] / static_cast<double>(b);
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        const double target = static_cast<std::size_t>(y[i]) == j ? 1.0 : 0.0;
        gx.at(i, j) += g * (probs->at(i, j) - target);
      }
    }
  });
}

ValueAndGrad value_and_grad(const LossBuilder& f, const std::vector<Tensor>& params) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const auto& p : params) leaves.push_back(tape.leaf(p));
  const Var loss = f(tape, leaves);
  tape.backward(loss);
  ValueAndGrad out;
  out.value = loss.value().item();
  for (const auto& l : leaves) out.grads.push_back(l.grad());
  return out;
}

namespace {

struct Probe {
  double value;
  std::uint64_t signature;
};

Probe evaluate(const LossBuilder& f, const std::vector<Tensor>& params) {
  Tape tape;
  std::vector<Var> inputs;
  inputs.reserve(params.size());
  for (const auto& p : params) inputs.push_back(tape.constant(p));
  const Var loss = f(tape, inputs);
  return {loss.value().item(), tape.branch_signature()};
}

}  // namespace

GradCheck finite_diff_check(const LossBuilder& f, const std::vector<Tensor>& params, double h) {
  const ValueAndGrad analytic = value_and_grad(f, params);
  const std::uint64_t base_signature = evaluate(f, params).signature;
  GradCheck report;
  std::vector<Tensor> probe = params;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      const double orig = params[p][i];
      probe[p][i] = orig + h;
      const Probe plus = evaluate(f, probe);
      probe[p][i] = orig - h;
      const Probe minus = evaluate(f, probe);
      probe[p][i] = orig;
      if (plus.signature != base_signature || minus.signature != base_signature) {
        ++report.skipped;
        continue;
      }
      const double fd = (plus.value - minus.value) / (2.0 * h);
      const double ad = analytic.grads[p][i];
      const double err = std::abs(ad - fd) / std::max(1e-8, std::abs(ad) + std::abs(fd));
      ++report.checked;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_param = p;
        report.worst_index = i;
      }
    }
  }
  return report;
}

}  // namespace hbnn::ad
