#include "aisformer/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "aisformer/autograd.hpp"
#include "aisformer/errors.hpp"

namespace aisf {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

thread_local bool g_grad_enabled = true;

const detail::Node& node_of(const Tensor& t) {
  if (!t.defined()) throw ContractError("operation on an undefined tensor");
  return *t.node();
}

std::size_t normalize_axis(int axis, std::size_t rank, const char* op) {
  const int r = static_cast<int>(rank);
  if (axis < -r || axis >= r) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(rank));
  }
  return static_cast<std::size_t>(axis < 0 ? axis + r : axis);
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         shape_str(t.shape()));
  }
}

// Splits a shape into (outer, axis, inner) extents around `axis`.
struct AxisView {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis) {
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

// Output shape of a leading-singleton broadcast, and how many trailing
// elements each operand repeats over.
Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  auto padded = [rank](const Shape& s) {
    Shape p(rank - s.size(), 1);
    p.insert(p.end(), s.begin(), s.end());
    return p;
  };
  const Shape pa = padded(a);
  const Shape pb = padded(b);
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    if (pa[i] == pb[i] || pb[i] == 1) {
      out[i] = pa[i];
    } else if (pa[i] == 1) {
      out[i] = pb[i];
    } else {
      throw DimensionError("elementwise: incompatible shapes " + shape_str(a) + " and " + shape_str(b));
    }
  }
  // Each operand may only differ from the output on a leading run of axes.
  for (const Shape* p : {&pa, &pb}) {
    bool matching = false;
    for (std::size_t i = 0; i < rank; ++i) {
      if ((*p)[i] == out[i] && out[i] != 1) matching = true;
      if ((*p)[i] != out[i] && matching) {
        throw DimensionError("elementwise: only leading singleton axes broadcast; got " + shape_str(a) + " and " +
                             shape_str(b));
      }
    }
  }
  return out;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// --- Tensor ---

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " does not match " + std::to_string(values.size()) +
                         " values");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  node_ = std::move(node);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({1}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return node_of(*this).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw DimensionError("dim(): axis out of range for " + shape_str(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return node_of(*this).data.size(); }

std::span<const double> Tensor::data() const { return node_of(*this).data; }

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on non-scalar tensor " + shape_str(shape()));
  return data()[0];
}

std::span<double> Tensor::mutable_data() {
  if (!is_leaf()) throw ContractError("mutable_data() on a non-leaf tensor");
  return node_->data;
}

bool Tensor::requires_grad() const { return node_of(*this).requires_grad; }

bool Tensor::is_leaf() const { return node_of(*this).inputs.empty(); }

bool Tensor::has_grad() const { return !node_of(*this).grad.empty(); }

std::span<const double> Tensor::grad() const { return node_of(*this).grad; }

void Tensor::zero_grad() {
  node_of(*this);
  node_->grad.clear();
}

Tensor Tensor::detach(bool requires_grad) const {
  const auto& n = node_of(*this);
  return Tensor(n.shape, n.data, requires_grad);
}

const char* Tensor::op_name() const { return node_of(*this).op; }

void Tensor::backward() const {
  const auto& root = node_of(*this);
  if (root.data.size() != 1) throw ContractError("backward() requires a scalar loss, got " + shape_str(root.shape));
  if (!root.requires_grad) throw ContractError("backward() on a tensor that does not require grad");

  // Iterative post-order DFS gives a topological order (inputs first).
  std::vector<detail::Node*> order;
  std::unordered_set<const detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      detail::Node* child = n->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  // Interior gradients live only for the duration of this pass.
  for (auto* n : order) {
    if (!n->inputs.empty()) n->grad.assign(n->data.size(), 0.0);
  }
  auto* top = node_.get();
  if (top->grad.empty()) top->grad.assign(1, 0.0);
  top->grad[0] += 1.0;

  std::vector<std::vector<double>*> slots;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->inputs.empty()) continue;
    slots.clear();
    for (auto& in : n->inputs) {
      if (!in->requires_grad) {
        slots.push_back(nullptr);
        continue;
      }
      if (in->grad.empty()) in->grad.assign(in->data.size(), 0.0);
      slots.push_back(&in->grad);
    }
    n->backward(*n, slots);
    std::vector<double>().swap(n->grad);
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

namespace detail {

Tensor make_result(Shape shape, std::vector<double> values, const std::vector<Tensor>& inputs, const char* op,
                   BackwardFn backward) {
  Tensor out(std::move(shape), std::move(values), false);
  const bool track =
      g_grad_enabled && std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (track) {
    auto& n = *out.node();
    n.requires_grad = true;
    n.op = op;
    n.backward = std::move(backward);
    n.inputs.reserve(inputs.size());
    for (const auto& t : inputs) n.inputs.push_back(t.node());
  }
  return out;
}

}  // namespace detail

using detail::input_data;
using detail::make_result;
using detail::Node;
using GradSlots = std::span<std::vector<double>* const>;

// --- linear algebra ---

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::vector<double> out(m * n);
  MutMap(out.data(), m, n).noalias() = ConstMap(a.data().data(), m, k) * ConstMap(b.data().data(), k, n);
  return make_result({m, n}, std::move(out), {a, b}, "matmul", [m, k, n](const Node& self, GradSlots g) {
    ConstMap dc(self.grad.data(), m, n);
    if (g[0]) MutMap(g[0]->data(), m, k).noalias() += dc * ConstMap(input_data(self, 1).data(), k, n).transpose();
    if (g[1]) MutMap(g[1]->data(), k, n).noalias() += ConstMap(input_data(self, 0).data(), m, k).transpose() * dc;
  });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  MutMap(out.data(), n, m) = ConstMap(a.data().data(), m, n).transpose();
  return make_result({n, m}, std::move(out), {a}, "transpose", [m, n](const Node& self, GradSlots g) {
    if (g[0]) MutMap(g[0]->data(), m, n) += ConstMap(self.grad.data(), n, m).transpose();
  });
}

// --- elementwise ---

Tensor elementwise(const Tensor& a, const Tensor& b, ElementwiseKind kind) {
  Shape out_shape = broadcast_shape(a.shape(), b.shape());
  const std::size_t n = shape_numel(out_shape);
  const std::size_t na = a.numel(), nb = b.numel();
  auto da = a.data();
  auto db = b.data();
  std::vector<double> out(n);
  if (kind == ElementwiseKind::add) {
    for (std::size_t i = 0; i < n; ++i) out[i] = da[i % na] + db[i % nb];
  } else {
    for (std::size_t i = 0; i < n; ++i) out[i] = da[i % na] * db[i % nb];
  }
  const char* name = kind == ElementwiseKind::add ? "add" : "mul";
  return make_result(std::move(out_shape), std::move(out), {a, b}, name, [kind, n, na, nb](const Node& self, GradSlots g) {
    const auto& dy = self.grad;
    if (kind == ElementwiseKind::add) {
      if (g[0]) {
        auto& ga = *g[0];
        for (std::size_t i = 0; i < n; ++i) ga[i % na] += dy[i];
      }
      if (g[1]) {
        auto& gb = *g[1];
        for (std::size_t i = 0; i < n; ++i) gb[i % nb] += dy[i];
      }
      return;
    }
    auto xa = input_data(self, 0);
    auto xb = input_data(self, 1);
    if (g[0]) {
      auto& ga = *g[0];
      for (std::size_t i = 0; i < n; ++i) ga[i % na] += dy[i] * xb[i % nb];
    }
    if (g[1]) {
      auto& gb = *g[1];
      for (std::size_t i = 0; i < n; ++i) gb[i % nb] += dy[i] * xa[i % na];
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(a, b, ElementwiseKind::add); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(a, b, ElementwiseKind::mul); }

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  return make_result(a.shape(), std::move(out), {a}, "scale", [factor](const Node& self, GradSlots g) {
    if (!g[0]) return;
    auto& ga = *g[0];
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += factor * self.grad[i];
  });
}

// --- activations ---

namespace {

double stable_sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Tensor activation(const Tensor& x, ActivationKind kind) {
  auto in = x.data();
  std::vector<double> out(in.size());
  if (kind == ActivationKind::relu) {
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
    return make_result(x.shape(), std::move(out), {x}, "relu", [](const Node& self, GradSlots g) {
      if (!g[0]) return;
      auto xs = input_data(self, 0);
      auto& gx = *g[0];
      for (std::size_t i = 0; i < gx.size(); ++i) {
        if (xs[i] > 0.0) gx[i] += self.grad[i];
      }
    });
  }
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = stable_sigmoid(in[i]);
  return make_result(x.shape(), std::move(out), {x}, "sigmoid", [](const Node& self, GradSlots g) {
    if (!g[0]) return;
    auto& gx = *g[0];
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double y = self.data[i];
      gx[i] += self.grad[i] * y * (1.0 - y);
    }
  });
}

Tensor relu(const Tensor& x) { return activation(x, ActivationKind::relu); }
Tensor sigmoid(const Tensor& x) { return activation(x, ActivationKind::sigmoid); }

// --- softmax ---

Tensor softmax(const Tensor& x, int axis) {
  const std::size_t ax = normalize_axis(axis, x.rank(), "softmax");
  const AxisView v = axis_view(x.shape(), ax);
  auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      const std::size_t base = o * v.extent * v.inner + i;
      double hi = in[base];
      for (std::size_t j = 1; j < v.extent; ++j) hi = std::max(hi, in[base + j * v.inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < v.extent; ++j) {
        const double e = std::exp(in[base + j * v.inner] - hi);
        out[base + j * v.inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < v.extent; ++j) out[base + j * v.inner] /= total;
    }
  }
  return make_result(x.shape(), std::move(out), {x}, "softmax", [v](const Node& self, GradSlots g) {
    if (!g[0]) return;
    auto& gx = *g[0];
    const auto& y = self.data;
    const auto& dy = self.grad;
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t i = 0; i < v.inner; ++i) {
        const std::size_t base = o * v.extent * v.inner + i;
        double dot = 0.0;
        for (std::size_t j = 0; j < v.extent; ++j) dot += dy[base + j * v.inner] * y[base + j * v.inner];
        for (std::size_t j = 0; j < v.extent; ++j) {
          const std::size_t p = base + j * v.inner;
          gx[p] += y[p] * (dy[p] - dot);
        }
      }
    }
  });
}

// --- layer norm ---

Tensor layer_norm(const Tensor& x, std::size_t last_axis_size, const Tensor& gain, const Tensor& bias) {
  if (x.rank() == 0 || x.shape().back() != last_axis_size) {
    throw DimensionError("layer_norm: last axis of " + shape_str(x.shape()) + " is not " +
                         std::to_string(last_axis_size));
  }
  if (gain.numel() != last_axis_size || bias.numel() != last_axis_size) {
    throw DimensionError("layer_norm: gain " + shape_str(gain.shape()) + " / bias " + shape_str(bias.shape()) +
                         " do not match last axis " + std::to_string(last_axis_size));
  }
  const std::size_t d = last_axis_size;
  const std::size_t rows = x.numel() / d;
  auto in = x.data();
  auto gv = gain.data();
  auto bv = bias.data();
  std::vector<double> out(in.size());
  // Normalized values and inverse std are kept for the backward pass.
  auto xhat = std::make_shared<std::vector<double>>(in.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = in.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + kLayerNormEpsilon);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mu) * is;
      (*xhat)[r * d + j] = h;
      out[r * d + j] = h * gv[j] + bv[j];
    }
  }
  return make_result(x.shape(), std::move(out), {x, gain, bias}, "layer_norm",
                     [d, rows, xhat, inv_std](const Node& self, GradSlots g) {
                       const auto& dy = self.grad;
                       auto gv = input_data(self, 1);
                       const auto& h = *xhat;
                       for (std::size_t r = 0; r < rows; ++r) {
                         const std::size_t base = r * d;
                         if (g[1] || g[2]) {
                           for (std::size_t j = 0; j < d; ++j) {
                             if (g[1]) (*g[1])[j] += dy[base + j] * h[base + j];
                             if (g[2]) (*g[2])[j] += dy[base + j];
                           }
                         }
                         if (!g[0]) continue;
                         double mean_dh = 0.0, mean_dh_h = 0.0;
                         for (std::size_t j = 0; j < d; ++j) {
                           const double dh = dy[base + j] * gv[j];
                           mean_dh += dh;
                           mean_dh_h += dh * h[base + j];
                         }
                         mean_dh /= static_cast<double>(d);
                         mean_dh_h /= static_cast<double>(d);
                         const double is = (*inv_std)[r];
                         for (std::size_t j = 0; j < d; ++j) {
                           const double dh = dy[base + j] * gv[j];
                           (*g[0])[base + j] += is * (dh - mean_dh - h[base + j] * mean_dh_h);
                         }
                       }
                     });
}

// --- structural ---

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw DimensionError("concat: no parts");
  const Shape& first = parts.front().shape();
  const std::size_t ax = normalize_axis(axis, first.size(), "concat");
  Shape out_shape = first;
  out_shape[ax] = 0;
  std::vector<std::size_t> extents;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == ax || s[i] == first[i];
    if (!ok) throw DimensionError("concat: shape " + shape_str(s) + " incompatible with " + shape_str(first));
    extents.push_back(s[ax]);
    out_shape[ax] += s[ax];
  }
  const AxisView v = axis_view(out_shape, ax);
  std::vector<double> out(shape_numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto src = parts[p].data();
    const std::size_t chunk = extents[p] * v.inner;
    for (std::size_t o = 0; o < v.outer; ++o) {
      std::copy_n(src.data() + o * chunk, chunk, out.data() + o * v.extent * v.inner + offset * v.inner);
    }
    offset += extents[p];
  }
  return make_result(std::move(out_shape), std::move(out), parts, "concat", [v, extents](const Node& self, GradSlots g) {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < extents.size(); ++p) {
      const std::size_t chunk = extents[p] * v.inner;
      if (g[p]) {
        auto& gp = *g[p];
        for (std::size_t o = 0; o < v.outer; ++o) {
          const double* src = self.grad.data() + o * v.extent * v.inner + offset * v.inner;
          for (std::size_t i = 0; i < chunk; ++i) gp[o * chunk + i] += src[i];
        }
      }
      offset += extents[p];
    }
  });
}

Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end) {
  const std::size_t ax = normalize_axis(axis, x.rank(), "slice");
  if (begin >= end || end > x.dim(ax)) {
    throw DimensionError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for " +
                         shape_str(x.shape()));
  }
  const AxisView v = axis_view(x.shape(), ax);
  Shape out_shape = x.shape();
  out_shape[ax] = end - begin;
  const std::size_t chunk = (end - begin) * v.inner;
  auto in = x.data();
  std::vector<double> out(v.outer * chunk);
  for (std::size_t o = 0; o < v.outer; ++o) {
    std::copy_n(in.data() + o * v.extent * v.inner + begin * v.inner, chunk, out.data() + o * chunk);
  }
  return make_result(std::move(out_shape), std::move(out), {x}, "slice", [v, begin, chunk](const Node& self, GradSlots g) {
    if (!g[0]) return;
    auto& gx = *g[0];
    for (std::size_t o = 0; o < v.outer; ++o) {
      double* dst = gx.data() + o * v.extent * v.inner + begin * v.inner;
      for (std::size_t i = 0; i < chunk; ++i) dst[i] += self.grad[o * chunk + i];
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(out), {x}, "reshape", [](const Node& self, GradSlots g) {
    if (!g[0]) return;
    auto& gx = *g[0];
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
  });
}

// --- reductions ---

Tensor sum(const Tensor& x) {
  auto in = x.data();
  const double total = std::accumulate(in.begin(), in.end(), 0.0);
  return make_result({1}, {total}, {x}, "sum", [](const Node& self, GradSlots g) {
    if (!g[0]) return;
    for (auto& v : *g[0]) v += self.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor binary_cross_entropy_with_logits(const Tensor& logits, std::span<const double> targets) {
  if (targets.size() != logits.numel()) {
    throw DimensionError("binary_cross_entropy_with_logits: " + std::to_string(targets.size()) +
                         " targets for logits " + shape_str(logits.shape()));
  }
  auto z = logits.data();
  const double n = static_cast<double>(z.size());
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    total += std::max(z[i], 0.0) - z[i] * targets[i] + std::log1p(std::exp(-std::abs(z[i])));
  }
  std::vector<double> t(targets.begin(), targets.end());
  return make_result({1}, {total / n}, {logits}, "bce_with_logits",
                     [t = std::move(t), n](const Node& self, GradSlots g) {
                       if (!g[0]) return;
                       auto zs = input_data(self, 0);
                       auto& gz = *g[0];
                       const double up = self.grad[0] / n;
                       for (std::size_t i = 0; i < gz.size(); ++i) gz[i] += up * (stable_sigmoid(zs[i]) - t[i]);
                     });
}

}  // namespace aisf
