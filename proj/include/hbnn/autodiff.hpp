#pragma once

// Minimal define-by-run reverse-mode automatic differentiation over dense
// row-major float64 tensors.
//
// A Tape records every operation whose result depends on a trainable leaf.
// Var is a cheap handle to a graph node; nodes that do not require gradients
// are not recorded and are released as soon as their last handle goes away,
// so inference-only passes do not accumulate intermediates.
//
// Binary elementwise operations broadcast with NumPy rules. Every operation
// checks its output for NaN/Inf and throws NumericError naming the op.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace hbnn::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tensor {
 public:
  Tensor() : Tensor(Shape{}) {}
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value) { return Tensor(Shape{}, value); }
  /// Rows of equal length stacked into a [rows, cols] matrix.
  static Tensor from_rows(const std::vector<std::vector<double>>& rows);
  static Tensor vector(std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_.at(1) + c]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_.at(1) + c]; }
  std::vector<double> row(std::size_t r) const;

  /// Value of a one-element tensor.
  double item() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

class Tape;

namespace detail {
struct Node;
}

class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  /// Gradient accumulated by the last Tape::backward; zeros if unreached.
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  std::size_t id() const;
  Tape* tape() const;
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  friend class Tape;
  friend struct OpBuilder;
  explicit Var(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Trainable input; receives a gradient on backward.
  Var leaf(Tensor value);
  /// Input that never receives a gradient.
  Var constant(Tensor value);
  Var scalar(double value) { return constant(Tensor::scalar(value)); }

  /// Reverse sweep from a one-element `loss`. Gradients are reset first, so
  /// repeated calls on the same tape give identical results.
  void backward(const Var& loss);

  /// Number of recorded (gradient-carrying) nodes.
  std::size_t size() const { return nodes_.size(); }

  /// Hash of which elements sat inside/outside every clamp evaluated so far.
  /// Two evaluations with equal signatures took the same piecewise branches.
  std::uint64_t branch_signature() const { return branch_signature_; }
  void mix_branch(std::uint64_t bits);

 private:
  friend struct OpBuilder;
  std::vector<std::shared_ptr<detail::Node>> nodes_;
  std::size_t next_id_ = 0;
  std::uint64_t branch_signature_ = 0x9e3779b97f4a7c15ULL;
};

// Elementwise arithmetic with broadcasting.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);
Var operator+(const Var& a, double s);
Var operator+(double s, const Var& a);
Var operator-(const Var& a, double s);
Var operator-(double s, const Var& a);
Var operator*(const Var& a, double s);
Var operator*(double s, const Var& a);
Var operator/(const Var& a, double s);
Var operator/(double s, const Var& a);

// Elementwise functions.
Var exp(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
Var square(const Var& a);
Var sinh(const Var& a);
Var cosh(const Var& a);
Var tanh(const Var& a);
Var asinh(const Var& a);
Var acosh(const Var& a);
Var atanh(const Var& a);
Var sigmoid(const Var& a);
Var softplus(const Var& a);
Var relu(const Var& a);
/// sqrt(1 + a^2) without overflow.
Var hypot1(const Var& a);
/// f(x)/x for f in {sinh, tanh, asinh, atanh}, continuous at 0 with value 1.
Var sinhc(const Var& a);
Var tanhc(const Var& a);
Var asinhc(const Var& a);
Var atanhc(const Var& a);
/// Identity inside [lo, hi] (inclusive), constant with zero gradient outside.
Var clamp(const Var& a, double lo, double hi);
Var clamp_min(const Var& a, double lo);

// Shape operations.
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var reshape(const Var& a, Shape shape);
Var broadcast_to(const Var& a, const Shape& shape);
Var concat(const std::vector<Var>& parts, std::size_t axis);
Var slice(const Var& a, std::size_t axis, std::size_t begin, std::size_t end);

// Reductions.
Var sum(const Var& a);
Var sum(const Var& a, std::size_t axis, bool keepdim = false);
Var mean(const Var& a);
Var mean(const Var& a, std::size_t axis, bool keepdim = false);
/// Squared Euclidean norm along `axis`.
Var sum_sq(const Var& a, std::size_t axis, bool keepdim = false);

/// Euclidean norm along `axis`, scaled to avoid overflow. The gradient at a
/// zero slice is taken to be zero.
Var norm(const Var& a, std::size_t axis, bool keepdim = false);

/// Divides each row of a rank-2 tensor by its Euclidean norm.
Var row_normalize(const Var& a);

/// Mean over the batch of -log softmax(logits)[label]; logits are [B, C].
Var softmax_cross_entropy(const Var& logits, std::span<const int> labels);

/// Row-wise softmax of a [B, C] tensor (no gradient).
Tensor softmax_rows(const Tensor& logits);

using LossBuilder = std::function<Var(Tape&, std::span<const Var>)>;

/// Loss value and gradients of every parameter for one evaluation.
struct ValueAndGrad {
  double value = 0.0;
  std::vector<Tensor> grads;
};
ValueAndGrad value_and_grad(const LossBuilder& f, const std::vector<Tensor>& params);

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  ///< coordinates whose +-h probes crossed a clamp boundary
};

/// Central-difference check of the reverse-mode gradient:
/// max over coordinates of |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|).
GradCheck finite_diff_check(const LossBuilder& f, const std::vector<Tensor>& params, double h = 1e-6);

}  // namespace hbnn::ad
