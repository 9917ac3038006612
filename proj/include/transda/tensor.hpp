#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "transda/precision.hpp"

TRANSDA_CORE_BEGIN

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class OpKind {
  Leaf,
  Add,
  Sub,
  Mul,
  Scale,
  MatMul,
  Conv2d,
  MaxPool2x2,
  Relu,
  Tanh,
  Exp,
  Reshape,
  Sum,
  Mean,
  LogSoftmax,
  Concat,
  StopGradient,
  GradReverse,
  AffineGrid,
  GridSample,
};

std::string_view op_name(OpKind kind);
std::optional<OpKind> op_from_name(std::string_view name);

// One record of the define-by-run graph. Inputs are owned through shared
// pointers, so a loss keeps its whole history alive until it is dropped.
struct Node {
  OpKind kind = OpKind::Leaf;
  Shape shape;
  std::vector<Real> value;
  std::vector<Real> grad;  // empty until the node receives a gradient
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(Node& self)> backward;

  void ensure_grad();
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Real value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<Real> data,
                          bool requires_grad = false);
  static Tensor scalar(Real value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  OpKind kind() const;
  bool requires_grad() const;

  std::span<const Real> data() const;
  // Only leaves may be written, e.g. by an optimizer between steps.
  std::span<Real> mutable_data();
  Real item() const;

  // Zero-length when no gradient reached this tensor.
  std::span<const Real> grad() const;
  bool has_grad() const;
  void zero_grad();

  // Seeds d(this)/d(this) = 1 and propagates through the recorded graph.
  void backward() const;

  const std::shared_ptr<Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

 private:
  const Node& checked() const;
  std::shared_ptr<Node> node_;
};

// Disables graph recording on this thread while alive. Ops still compute
// values; their outputs never require grad.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Test fixture for the gradient-check suite: while alive, every backward
// rule of `kind` emits its gradients scaled by `factor`.
class ScopedBackwardFault {
 public:
  ScopedBackwardFault(OpKind kind, Real factor);
  ~ScopedBackwardFault();
  ScopedBackwardFault(const ScopedBackwardFault&) = delete;
  ScopedBackwardFault& operator=(const ScopedBackwardFault&) = delete;
};

// Nodes reachable from `root` that take part in differentiation, inputs
// before consumers. backward() walks this list in reverse.
std::vector<const Node*> topological_order(const Tensor& root);

enum class Padding { Valid, Same };

// Elementwise ops. `b` may have the same shape as `a` or a trailing suffix
// of it, in which case it is broadcast over the leading axes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Real factor);

// [m, k] x [k, n] -> [m, n]
Tensor matmul(const Tensor& a, const Tensor& b);

// x: [B, C, H, W], weight: [O, C, KH, KW], bias: [O] or undefined. Stride 1.
// Same padding needs odd kernel extents.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              Padding padding);
// [B, C, H, W] -> [B, C, H/2, W/2], trailing odd row/column dropped.
Tensor max_pool2x2(const Tensor& x);

Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Row-wise over the last axis of a [B, K] tensor.
Tensor log_softmax(const Tensor& x);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis);

Tensor stop_gradient(const Tensor& x);
Tensor grad_reverse(const Tensor& x);

// theta: [B, 2, 3] -> grid [B, H, W, 2] holding (u, v) for every output
// pixel, where (u, v) = theta * (u~, v~, 1) on the normalized [-1, 1] square.
Tensor affine_grid(const Tensor& theta, std::size_t out_h, std::size_t out_w);
// x: [B, C, H, W], grid: [B, Ho, Wo, 2] -> [B, C, Ho, Wo]. Bilinear with
// zero fill outside the image.
Tensor grid_sample(const Tensor& x, const Tensor& grid);

TRANSDA_CORE_END
