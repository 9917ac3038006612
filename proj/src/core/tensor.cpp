#include "transda/tensor.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "transda/simd/kernels.hpp"

TRANSDA_CORE_BEGIN

namespace {

thread_local bool g_grad_enabled = true;

struct FaultState {
  bool active = false;
  OpKind kind = OpKind::Leaf;
  Real factor = 1;
};
thread_local FaultState g_fault;

constexpr std::array<std::string_view, 20> kOpNames = {
    "leaf",        "add",        "sub",          "mul",
    "scale",       "matmul",     "conv2d",       "max_pool2x2",
    "relu",        "tanh",       "exp",          "reshape",
    "sum",         "mean",       "log_softmax",  "concat",
    "stop_gradient", "grad_reverse", "affine_grid", "grid_sample",
};

const simd::KernelTable<Real>& K() { return simd::kernels<Real>(); }

[[noreturn]] void shape_fail(std::string_view op, const std::string& what) {
  throw ShapeError(std::string(op) + ": " + what);
}

using BackwardFn = std::function<void(Node&)>;

// Wraps a computed value into a graph node. Inputs and the backward rule are
// only retained when the result takes part in differentiation.
Tensor make_result(OpKind kind, Shape shape, std::vector<Real> value,
                   std::vector<Tensor> inputs, BackwardFn backward) {
  auto node = std::make_shared<Node>();
  node->kind = kind;
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool needs = false;
  if (g_grad_enabled) {
    for (const Tensor& t : inputs) needs = needs || (t.defined() && t.requires_grad());
  }
  node->requires_grad = needs;
  if (needs) {
    node->inputs.reserve(inputs.size());
    for (const Tensor& t : inputs) node->inputs.push_back(t.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

// Gradient buffer of an input, or nullptr when that input is not
// differentiable.
Real* grad_of(Node& self, std::size_t i) {
  if (i >= self.inputs.size() || !self.inputs[i]) return nullptr;
  Node& in = *self.inputs[i];
  if (!in.requires_grad) return nullptr;
  in.ensure_grad();
  return in.grad.data();
}

bool is_suffix(const Shape& full, const Shape& suffix) {
  if (suffix.size() > full.size()) return false;
  return std::equal(suffix.rbegin(), suffix.rend(), full.rbegin());
}

void check_broadcast(std::string_view op, const Tensor& a, const Tensor& b) {
  if (!is_suffix(a.shape(), b.shape())) {
    shape_fail(op, "operand shapes " + shape_str(a.shape()) + " and " +
                       shape_str(b.shape()) +
                       " are incompatible (rhs must equal or be a trailing "
                       "suffix of lhs)");
  }
}

// C = beta * C + op(A) * op(B), op(A): [m, k], op(B): [k, n]. Transposed
// operands are stored as [k, m] and [n, k] respectively.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, const Real* a, const Real* b, Real* c, Real beta) {
  const auto& kt = K();
  std::vector<Real> a_packed;
  if (trans_a) {
    a_packed.resize(m * k);
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t i = 0; i < m; ++i) a_packed[i * k + p] = a[p * m + i];
    a = a_packed.data();
  }
  if (!trans_b) {
    kt.gemm_nn(m, n, k, a, b, c, beta);
    return;
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const Real d = kt.dot(a + i * k, b + j * k, k);
      c[i * n + j] = beta == Real(0) ? d : beta * c[i * n + j] + d;
    }
  }
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ']';
  return os.str();
}

std::string_view op_name(OpKind kind) {
  return kOpNames[static_cast<std::size_t>(kind)];
}

std::optional<OpKind> op_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kOpNames.size(); ++i) {
    if (kOpNames[i] == name) return static_cast<OpKind>(i);
  }
  return std::nullopt;
}

void Node::ensure_grad() {
  if (grad.empty()) grad.assign(value.size(), Real(0));
}

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), Real(0), requires_grad);
}

Tensor Tensor::full(Shape shape, Real value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return from_data(std::move(shape), std::vector<Real>(n, value), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<Real> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " holds " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(data.size()));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(Real value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

const Node& Tensor::checked() const {
  if (!node_) throw std::logic_error("tensor: use of undefined tensor");
  return *node_;
}

const Shape& Tensor::shape() const { return checked().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("tensor: axis " + std::to_string(axis) +
                     " out of range for shape " + shape_str(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return checked().value.size(); }
OpKind Tensor::kind() const { return checked().kind; }
bool Tensor::requires_grad() const { return checked().requires_grad; }
std::span<const Real> Tensor::data() const { return checked().value; }

std::span<Real> Tensor::mutable_data() {
  if (checked().kind != OpKind::Leaf) {
    throw std::logic_error("tensor: only leaf tensors may be written");
  }
  return node_->value;
}

Real Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item: tensor of shape " + shape_str(shape()) +
                     " is not a scalar");
  }
  return node_->value[0];
}

std::span<const Real> Tensor::grad() const { return checked().grad; }
bool Tensor::has_grad() const { return !checked().grad.empty(); }

void Tensor::zero_grad() {
  if (node_ && !node_->grad.empty()) {
    std::fill(node_->grad.begin(), node_->grad.end(), Real(0));
  }
}

std::vector<const Node*> topological_order(const Tensor& root) {
  std::vector<const Node*> order;
  if (!root.defined() || !root.requires_grad()) return order;
  std::unordered_set<const Node*> visited;
  // Iterative post-order DFS; frame = (node, next input index).
  std::vector<std::pair<const Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      const Node* child = node->inputs[next++].get();
      if (child && child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

void Tensor::backward() const {
  const Node& root = checked();
  if (root.value.size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " +
                     shape_str(root.shape));
  }
  if (!root.requires_grad) return;
  const auto order = topological_order(*this);
  node_->ensure_grad();
  node_->grad[0] += Real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node& node = const_cast<Node&>(**it);
    if (!node.backward || node.grad.empty()) continue;
    if (g_fault.active && node.kind == g_fault.kind) {
      std::vector<Real> saved = node.grad;
      for (Real& g : node.grad) g *= g_fault.factor;
      node.backward(node);
      node.grad = std::move(saved);
    } else {
      node.backward(node);
    }
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

ScopedBackwardFault::ScopedBackwardFault(OpKind kind, Real factor) {
  g_fault = {true, kind, factor};
}
ScopedBackwardFault::~ScopedBackwardFault() { g_fault = {}; }

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  check_broadcast("add", a, b);
  const std::size_t inner = b.numel();
  const std::size_t outer = a.numel() / inner;
  std::vector<Real> out(a.numel());
  for (std::size_t o = 0; o < outer; ++o) {
    K().add(a.data().data() + o * inner, b.data().data(), out.data() + o * inner, inner);
  }
  return make_result(OpKind::Add, a.shape(), std::move(out), {a, b},
                     [outer, inner](Node& self) {
                       const Real* g = self.grad.data();
                       if (Real* ga = grad_of(self, 0)) K().axpy(Real(1), g, ga, outer * inner);
                       if (Real* gb = grad_of(self, 1)) {
                         for (std::size_t o = 0; o < outer; ++o)
                           K().axpy(Real(1), g + o * inner, gb, inner);
                       }
                     });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_broadcast("sub", a, b);
  const std::size_t inner = b.numel();
  const std::size_t outer = a.numel() / inner;
  std::vector<Real> out(a.numel());
  const Real* pa = a.data().data();
  const Real* pb = b.data().data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t j = 0; j < inner; ++j) out[o * inner + j] = pa[o * inner + j] - pb[j];
  return make_result(OpKind::Sub, a.shape(), std::move(out), {a, b},
                     [outer, inner](Node& self) {
                       const Real* g = self.grad.data();
                       if (Real* ga = grad_of(self, 0)) K().axpy(Real(1), g, ga, outer * inner);
                       if (Real* gb = grad_of(self, 1)) {
                         for (std::size_t o = 0; o < outer; ++o)
                           K().axpy(Real(-1), g + o * inner, gb, inner);
                       }
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_broadcast("mul", a, b);
  const std::size_t inner = b.numel();
  const std::size_t outer = a.numel() / inner;
  std::vector<Real> out(a.numel());
  for (std::size_t o = 0; o < outer; ++o) {
    K().mul(a.data().data() + o * inner, b.data().data(), out.data() + o * inner, inner);
  }
  return make_result(
      OpKind::Mul, a.shape(), std::move(out), {a, b}, [outer, inner](Node& self) {
        const Real* g = self.grad.data();
        const Real* va = self.inputs[0]->value.data();
        const Real* vb = self.inputs[1]->value.data();
        if (Real* ga = grad_of(self, 0)) {
          for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t j = 0; j < inner; ++j) ga[o * inner + j] += g[o * inner + j] * vb[j];
        }
        if (Real* gb = grad_of(self, 1)) {
          for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t j = 0; j < inner; ++j) gb[j] += g[o * inner + j] * va[o * inner + j];
        }
      });
}

Tensor scale(const Tensor& a, Real factor) {
  std::vector<Real> out(a.numel());
  K().scale(factor, a.data().data(), out.data(), out.size());
  return make_result(OpKind::Scale, a.shape(), std::move(out), {a},
                     [factor](Node& self) {
                       if (Real* ga = grad_of(self, 0))
                         K().axpy(factor, self.grad.data(), ga, self.grad.size());
                     });
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    shape_fail("matmul", "cannot multiply " + shape_str(a.shape()) + " by " +
                             shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<Real> out(m * n);
  gemm(false, false, m, n, k, a.data().data(), b.data().data(), out.data(), Real(0));
  return make_result(OpKind::MatMul, {m, n}, std::move(out), {a, b},
                     [m, n, k](Node& self) {
                       const Real* g = self.grad.data();
                       const Real* va = self.inputs[0]->value.data();
                       const Real* vb = self.inputs[1]->value.data();
                       // dA = G * B^T, dB = A^T * G
                       if (Real* ga = grad_of(self, 0)) gemm(false, true, m, k, n, g, vb, ga, Real(1));
                       if (Real* gb = grad_of(self, 1)) gemm(true, false, k, n, m, va, g, gb, Real(1));
                     });
}

namespace {

struct ConvGeometry {
  std::size_t batch, in_c, in_h, in_w, out_c, kh, kw, pad, out_h, out_w;
  std::size_t col_rows() const { return in_c * kh * kw; }
  std::size_t col_cols() const { return out_h * out_w; }
};

void im2col(const ConvGeometry& g, const Real* x, Real* col) {
  for (std::size_t c = 0; c < g.in_c; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        Real* row = col + ((c * g.kh + ki) * g.kw + kj) * g.col_cols();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ki) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          Real* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) {
            std::fill(dst, dst + g.out_w, Real(0));
            continue;
          }
          const Real* src = x + (c * g.in_h + static_cast<std::size_t>(iy)) * g.in_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kj) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w))
                          ? Real(0)
                          : src[ix];
          }
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const Real* col, Real* dx) {
  for (std::size_t c = 0; c < g.in_c; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const Real* row = col + ((c * g.kh + ki) * g.kw + kj) * g.col_cols();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ki) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
          Real* dst = dx + (c * g.in_h + static_cast<std::size_t>(iy)) * g.in_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kj) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.in_w)) dst[ix] += row[oy * g.out_w + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              Padding padding) {
  if (x.rank() != 4 || weight.rank() != 4) {
    shape_fail("conv2d", "expected input [B, C, H, W] and weight [O, C, KH, KW], got " +
                             shape_str(x.shape()) + " and " + shape_str(weight.shape()));
  }
  ConvGeometry g{};
  g.batch = x.dim(0);
  g.in_c = x.dim(1);
  g.in_h = x.dim(2);
  g.in_w = x.dim(3);
  g.out_c = weight.dim(0);
  g.kh = weight.dim(2);
  g.kw = weight.dim(3);
  if (weight.dim(1) != g.in_c) {
    shape_fail("conv2d", "input has " + std::to_string(g.in_c) +
                             " channels but weight expects " +
                             std::to_string(weight.dim(1)) + " (input " +
                             shape_str(x.shape()) + ", weight " +
                             shape_str(weight.shape()) + ")");
  }
  if (bias.defined() && bias.shape() != Shape{g.out_c}) {
    shape_fail("conv2d", "bias shape " + shape_str(bias.shape()) + " does not match " +
                             std::to_string(g.out_c) + " output channels");
  }
  if (padding == Padding::Same) {
    if (g.kh % 2 == 0 || g.kw % 2 == 0 || g.kh != g.kw) {
      shape_fail("conv2d", "same padding needs a square odd kernel, got " +
                               std::to_string(g.kh) + "x" + std::to_string(g.kw));
    }
    g.pad = (g.kh - 1) / 2;
    g.out_h = g.in_h;
    g.out_w = g.in_w;
  } else {
    if (g.kh > g.in_h || g.kw > g.in_w) {
      shape_fail("conv2d", "kernel " + std::to_string(g.kh) + "x" + std::to_string(g.kw) +
                               " larger than input " + std::to_string(g.in_h) + "x" +
                               std::to_string(g.in_w));
    }
    g.pad = 0;
    g.out_h = g.in_h - g.kh + 1;
    g.out_w = g.in_w - g.kw + 1;
  }

  const std::size_t in_plane = g.in_c * g.in_h * g.in_w;
  const std::size_t out_plane = g.out_c * g.col_cols();
  std::vector<Real> out(g.batch * out_plane);
  std::vector<Real> col(g.col_rows() * g.col_cols());
  const Real* w = weight.data().data();
  for (std::size_t b = 0; b < g.batch; ++b) {
    im2col(g, x.data().data() + b * in_plane, col.data());
    Real* ob = out.data() + b * out_plane;
    gemm(false, false, g.out_c, g.col_cols(), g.col_rows(), w, col.data(), ob, Real(0));
    if (bias.defined()) {
      for (std::size_t o = 0; o < g.out_c; ++o) {
        const Real bo = bias.data()[o];
        Real* row = ob + o * g.col_cols();
        for (std::size_t j = 0; j < g.col_cols(); ++j) row[j] += bo;
      }
    }
  }

  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result(
      OpKind::Conv2d, {g.batch, g.out_c, g.out_h, g.out_w}, std::move(out),
      std::move(inputs), [g, in_plane, out_plane](Node& self) {
        Real* gx = grad_of(self, 0);
        Real* gw = grad_of(self, 1);
        Real* gbias = grad_of(self, 2);
        const Real* xv = self.inputs[0]->value.data();
        const Real* wv = self.inputs[1]->value.data();
        std::vector<Real> col(g.col_rows() * g.col_cols());
        std::vector<Real> dcol(gx ? col.size() : 0);
        for (std::size_t b = 0; b < g.batch; ++b) {
          const Real* gout = self.grad.data() + b * out_plane;
          if (gw) {
            im2col(g, xv + b * in_plane, col.data());
            gemm(false, true, g.out_c, g.col_rows(), g.col_cols(), gout, col.data(), gw, Real(1));
          }
          if (gx) {
            gemm(true, false, g.col_rows(), g.col_cols(), g.out_c, wv, gout, dcol.data(), Real(0));
            col2im_add(g, dcol.data(), gx + b * in_plane);
          }
          if (gbias) {
            for (std::size_t o = 0; o < g.out_c; ++o) {
              const Real* row = gout + o * g.col_cols();
              Real acc = 0;
              for (std::size_t j = 0; j < g.col_cols(); ++j) acc += row[j];
              gbias[o] += acc;
            }
          }
        }
      });
}

Tensor max_pool2x2(const Tensor& x) {
  if (x.rank() != 4 || x.dim(2) < 2 || x.dim(3) < 2) {
    shape_fail("max_pool2x2", "expected [B, C, H, W] with H, W >= 2, got " +
                                  shape_str(x.shape()));
  }
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h / 2, ow = w / 2;
  std::vector<Real> out(planes * oh * ow);
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(out.size());
  const Real* xv = x.data().data();
  for (std::size_t p = 0; p < planes; ++p) {
    const Real* plane = xv + p * h * w;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        std::size_t best = (2 * i) * w + 2 * j;
        for (std::size_t di = 0; di < 2; ++di)
          for (std::size_t dj = 0; dj < 2; ++dj) {
            const std::size_t idx = (2 * i + di) * w + 2 * j + dj;
            if (plane[idx] > plane[best]) best = idx;
          }
        const std::size_t o = (p * oh + i) * ow + j;
        out[o] = plane[best];
        (*argmax)[o] = static_cast<std::uint32_t>(p * h * w + best);
      }
    }
  }
  return make_result(OpKind::MaxPool2x2, {x.dim(0), x.dim(1), oh, ow}, std::move(out),
                     {x}, [argmax](Node& self) {
                       Real* gx = grad_of(self, 0);
                       if (!gx) return;
                       for (std::size_t o = 0; o < self.grad.size(); ++o)
                         gx[(*argmax)[o]] += self.grad[o];
                     });
}

// ---------------------------------------------------------------------------
// Pointwise nonlinearities

Tensor relu(const Tensor& x) {
  std::vector<Real> out(x.numel());
  K().relu(x.data().data(), out.data(), out.size());
  return make_result(OpKind::Relu, x.shape(), std::move(out), {x}, [](Node& self) {
    Real* gx = grad_of(self, 0);
    if (!gx) return;
    const Real* xv = self.inputs[0]->value.data();
    // Subgradient 0 at exactly 0.
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (xv[i] > Real(0)) gx[i] += self.grad[i];
  });
}

Tensor tanh(const Tensor& x) {
  std::vector<Real> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x.data()[i]);
  return make_result(OpKind::Tanh, x.shape(), std::move(out), {x}, [](Node& self) {
    Real* gx = grad_of(self, 0);
    if (!gx) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const Real y = self.value[i];
      gx[i] += self.grad[i] * (Real(1) - y * y);
    }
  });
}

Tensor exp(const Tensor& x) {
  std::vector<Real> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(x.data()[i]);
  return make_result(OpKind::Exp, x.shape(), std::move(out), {x}, [](Node& self) {
    Real* gx = grad_of(self, 0);
    if (!gx) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i] * self.value[i];
  });
}

// ---------------------------------------------------------------------------
// Structural

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    shape_fail("reshape", "cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<Real> out(x.data().begin(), x.data().end());
  return make_result(OpKind::Reshape, std::move(shape), std::move(out), {x}, [](Node& self) {
    if (Real* gx = grad_of(self, 0)) K().axpy(Real(1), self.grad.data(), gx, self.grad.size());
  });
}

Tensor sum(const Tensor& x) {
  Real acc = 0;
  for (Real v : x.data()) acc += v;
  return make_result(OpKind::Sum, {1}, {acc}, {x}, [](Node& self) {
    Real* gx = grad_of(self, 0);
    if (!gx) return;
    const Real g = self.grad[0];
    const std::size_t n = self.inputs[0]->value.size();
    for (std::size_t i = 0; i < n; ++i) gx[i] += g;
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) shape_fail("mean", "empty tensor");
  Real acc = 0;
  for (Real v : x.data()) acc += v;
  const Real inv = Real(1) / static_cast<Real>(x.numel());
  return make_result(OpKind::Mean, {1}, {acc * inv}, {x}, [inv](Node& self) {
    Real* gx = grad_of(self, 0);
    if (!gx) return;
    const Real g = self.grad[0] * inv;
    const std::size_t n = self.inputs[0]->value.size();
    for (std::size_t i = 0; i < n; ++i) gx[i] += g;
  });
}

Tensor log_softmax(const Tensor& x) {
  if (x.rank() != 2 || x.dim(1) == 0) {
    shape_fail("log_softmax", "expected [B, K] with K >= 1, got " + shape_str(x.shape()));
  }
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  std::vector<Real> out(x.numel());
  const Real* xv = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* in = xv + r * cols;
    const Real mx = *std::max_element(in, in + cols);
    Real s = 0;
    for (std::size_t c = 0; c < cols; ++c) s += std::exp(in[c] - mx);
    const Real lse = mx + std::log(s);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = in[c] - lse;
  }
  return make_result(OpKind::LogSoftmax, x.shape(), std::move(out), {x},
                     [rows, cols](Node& self) {
                       Real* gx = grad_of(self, 0);
                       if (!gx) return;
                       for (std::size_t r = 0; r < rows; ++r) {
                         const Real* g = self.grad.data() + r * cols;
                         const Real* y = self.value.data() + r * cols;
                         Real gs = 0;
                         for (std::size_t c = 0; c < cols; ++c) gs += g[c];
                         for (std::size_t c = 0; c < cols; ++c)
                           gx[r * cols + c] += g[c] - std::exp(y[c]) * gs;
                       }
                     });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) shape_fail("concat", "no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) {
    shape_fail("concat", "axis " + std::to_string(axis) + " out of range for " + shape_str(first));
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Tensor& t : parts) {
    const Shape& s = t.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    if (!ok) {
      shape_fail("concat", "shape " + shape_str(s) + " does not match " + shape_str(first) +
                               " outside axis " + std::to_string(axis));
    }
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];

  std::vector<std::size_t> spans;  // contiguous chunk length per part
  for (const Tensor& t : parts) spans.push_back(t.dim(axis) * inner);
  const std::size_t out_row = out_shape[axis] * inner;
  std::vector<Real> out(outer * out_row);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Real* src = parts[p].data().data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(src + o * spans[p], spans[p], out.data() + o * out_row + offset);
    offset += spans[p];
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_result(OpKind::Concat, std::move(out_shape), std::move(out), std::move(inputs),
                     [spans, outer, out_row](Node& self) {
                       std::size_t off = 0;
                       for (std::size_t p = 0; p < spans.size(); ++p) {
                         if (Real* gp = grad_of(self, p)) {
                           for (std::size_t o = 0; o < outer; ++o)
                             K().axpy(Real(1), self.grad.data() + o * out_row + off,
                                      gp + o * spans[p], spans[p]);
                         }
                         off += spans[p];
                       }
                     });
}

Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor stop_gradient(const Tensor& x) {
  std::vector<Real> out(x.data().begin(), x.data().end());
  // No inputs are recorded: the result is a constant for differentiation.
  return make_result(OpKind::StopGradient, x.shape(), std::move(out), {}, nullptr);
}

Tensor grad_reverse(const Tensor& x) {
  std::vector<Real> out(x.data().begin(), x.data().end());
  return make_result(OpKind::GradReverse, x.shape(), std::move(out), {x}, [](Node& self) {
    if (Real* gx = grad_of(self, 0)) K().axpy(Real(-1), self.grad.data(), gx, self.grad.size());
  });
}

// ---------------------------------------------------------------------------
// Spatial transformer primitives

namespace {

Real normalized_coord(std::size_t i, std::size_t n) {
  return Real(2) * static_cast<Real>(i) / static_cast<Real>(n - 1) - Real(1);
}

}  // namespace

Tensor affine_grid(const Tensor& theta, std::size_t out_h, std::size_t out_w) {
  if (theta.rank() != 3 || theta.dim(1) != 2 || theta.dim(2) != 3) {
    shape_fail("affine_grid", "expected theta [B, 2, 3], got " + shape_str(theta.shape()));
  }
  if (out_h < 2 || out_w < 2) {
    shape_fail("affine_grid", "output extent must be >= 2, got " + std::to_string(out_h) +
                                  "x" + std::to_string(out_w));
  }
  const std::size_t batch = theta.dim(0);
  const std::size_t pixels = out_h * out_w;
  std::vector<Real> out(batch * pixels * 2);
  const Real* t = theta.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    const Real* p = t + b * 6;
    for (std::size_t i = 0; i < out_h; ++i) {
      const Real vt = normalized_coord(i, out_h);
      for (std::size_t j = 0; j < out_w; ++j) {
        const Real ut = normalized_coord(j, out_w);
        Real* dst = out.data() + ((b * out_h + i) * out_w + j) * 2;
        dst[0] = p[0] * ut + p[1] * vt + p[2];
        dst[1] = p[3] * ut + p[4] * vt + p[5];
      }
    }
  }
  return make_result(OpKind::AffineGrid, {batch, out_h, out_w, 2}, std::move(out), {theta},
                     [batch, out_h, out_w](Node& self) {
                       Real* gt = grad_of(self, 0);
                       if (!gt) return;
                       for (std::size_t b = 0; b < batch; ++b) {
                         Real* dp = gt + b * 6;
                         for (std::size_t i = 0; i < out_h; ++i) {
                           const Real vt = normalized_coord(i, out_h);
                           for (std::size_t j = 0; j < out_w; ++j) {
                             const Real ut = normalized_coord(j, out_w);
                             const Real* g = self.grad.data() + ((b * out_h + i) * out_w + j) * 2;
                             dp[0] += g[0] * ut;
                             dp[1] += g[0] * vt;
                             dp[2] += g[0];
                             dp[3] += g[1] * ut;
                             dp[4] += g[1] * vt;
                             dp[5] += g[1];
                           }
                         }
                       }
                     });
}

namespace {

// Bilinear footprint of one sampling point in pixel units. Coordinates
// within a few ulps of a pixel center snap onto it so that an identity grid
// reproduces its input exactly.
struct Footprint {
  std::ptrdiff_t x0, y0;
  Real fx, fy;  // fractional offsets toward x0 + 1, y0 + 1
};

Footprint footprint(Real u, Real v, std::size_t h, std::size_t w) {
  const Real snap = Real(64) * std::numeric_limits<Real>::epsilon() *
                    static_cast<Real>(std::max(h, w));
  Real px = (u + Real(1)) * static_cast<Real>(w - 1) / Real(2);
  Real py = (v + Real(1)) * static_cast<Real>(h - 1) / Real(2);
  const Real rx = std::round(px), ry = std::round(py);
  if (std::abs(px - rx) <= snap) px = rx;
  if (std::abs(py - ry) <= snap) py = ry;
  const Real fx0 = std::floor(px), fy0 = std::floor(py);
  return {static_cast<std::ptrdiff_t>(fx0), static_cast<std::ptrdiff_t>(fy0), px - fx0, py - fy0};
}

}  // namespace

Tensor grid_sample(const Tensor& x, const Tensor& grid) {
  if (x.rank() != 4) shape_fail("grid_sample", "expected x [B, C, H, W], got " + shape_str(x.shape()));
  if (grid.rank() != 4 || grid.dim(3) != 2 || grid.dim(0) != x.dim(0)) {
    shape_fail("grid_sample", "expected grid [" + std::to_string(x.dim(0)) +
                                  ", Ho, Wo, 2], got " + shape_str(grid.shape()));
  }
  const std::size_t batch = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = grid.dim(1), ow = grid.dim(2);
  if (h < 2 || w < 2) shape_fail("grid_sample", "input extent must be >= 2, got " + shape_str(x.shape()));
  std::vector<Real> out(batch * ch * oh * ow);
  const Real* xv = x.data().data();
  const Real* gv = grid.data().data();
  const auto in_range = [h, w](std::ptrdiff_t yy, std::ptrdiff_t xx) {
    return yy >= 0 && xx >= 0 && yy < static_cast<std::ptrdiff_t>(h) &&
           xx < static_cast<std::ptrdiff_t>(w);
  };
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t p = 0; p < oh * ow; ++p) {
      const Real* uv = gv + (b * oh * ow + p) * 2;
      const Footprint f = footprint(uv[0], uv[1], h, w);
      const Real wts[4] = {(1 - f.fx) * (1 - f.fy), f.fx * (1 - f.fy), (1 - f.fx) * f.fy, f.fx * f.fy};
      const std::ptrdiff_t ys[4] = {f.y0, f.y0, f.y0 + 1, f.y0 + 1};
      const std::ptrdiff_t xs[4] = {f.x0, f.x0 + 1, f.x0, f.x0 + 1};
      for (std::size_t c = 0; c < ch; ++c) {
        const Real* plane = xv + (b * ch + c) * h * w;
        Real acc = 0;
        for (int q = 0; q < 4; ++q) {
          if (wts[q] != Real(0) && in_range(ys[q], xs[q]))
            acc += wts[q] * plane[static_cast<std::size_t>(ys[q]) * w + static_cast<std::size_t>(xs[q])];
        }
        out[(b * ch + c) * oh * ow + p] = acc;
      }
    }
  }
  return make_result(
      OpKind::GridSample, {batch, ch, oh, ow}, std::move(out), {x, grid},
      [batch, ch, h, w, oh, ow, in_range](Node& self) {
        Real* gx = grad_of(self, 0);
        Real* gg = grad_of(self, 1);
        const Real* xv = self.inputs[0]->value.data();
        const Real* gv = self.inputs[1]->value.data();
        const Real sx = static_cast<Real>(w - 1) / Real(2);
        const Real sy = static_cast<Real>(h - 1) / Real(2);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t p = 0; p < oh * ow; ++p) {
            const Real* uv = gv + (b * oh * ow + p) * 2;
            const Footprint f = footprint(uv[0], uv[1], h, w);
            const std::ptrdiff_t ys[4] = {f.y0, f.y0, f.y0 + 1, f.y0 + 1};
            const std::ptrdiff_t xs[4] = {f.x0, f.x0 + 1, f.x0, f.x0 + 1};
            const Real wts[4] = {(1 - f.fx) * (1 - f.fy), f.fx * (1 - f.fy), (1 - f.fx) * f.fy,
                                 f.fx * f.fy};
            Real du = 0, dv = 0;
            for (std::size_t c = 0; c < ch; ++c) {
              const Real g = self.grad[(b * ch + c) * oh * ow + p];
              if (g == Real(0)) continue;
              const std::size_t base = (b * ch + c) * h * w;
              Real px[4];
              for (int q = 0; q < 4; ++q) {
                const bool ok = in_range(ys[q], xs[q]);
                const std::size_t idx =
                    ok ? base + static_cast<std::size_t>(ys[q]) * w + static_cast<std::size_t>(xs[q]) : 0;
                px[q] = ok ? xv[idx] : Real(0);
                if (gx && ok) gx[idx] += g * wts[q];
              }
              if (gg) {
                du += g * ((1 - f.fy) * (px[1] - px[0]) + f.fy * (px[3] - px[2]));
                dv += g * ((1 - f.fx) * (px[2] - px[0]) + f.fx * (px[3] - px[1]));
              }
            }
            if (gg) {
              Real* d = gg + (b * oh * ow + p) * 2;
              d[0] += du * sx;
              d[1] += dv * sy;
            }
          }
        }
      });
}

TRANSDA_CORE_END
