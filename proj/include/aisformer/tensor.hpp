#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace aisf {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct Node;
}

// N-D row-major array of doubles with an optional gradient slot.
//
// A Tensor is a cheap handle; copies share the same storage. Results of
// differentiable operations remember the producing operation and its inputs
// whenever any input requires grad, so that backward() can propagate
// derivatives to every reachable leaf.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  double value(std::size_t flat_index) const { return data()[flat_index]; }
  double item() const;

  // Writable storage. Only leaves may be written (parameters, optimizer).
  std::span<double> mutable_data();

  bool requires_grad() const;
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  // Reverse-mode pass from a scalar. Leaf grads accumulate across calls.
  void backward() const;

  // Fresh leaf holding a copy of the values, no lineage.
  Tensor detach(bool requires_grad = false) const;

  const char* op_name() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Disables lineage recording on the current thread while alive.
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

enum class ElementwiseKind { add, mul };
enum class ActivationKind { relu, sigmoid };

// --- differentiable operations ---

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Broadcasting is limited to leading singleton (or missing) axes of either
// operand, e.g. [N x C] + [1 x C] or [N x C] + [C].
Tensor elementwise(const Tensor& a, const Tensor& b, ElementwiseKind kind);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

Tensor activation(const Tensor& x, ActivationKind kind);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

Tensor softmax(const Tensor& x, int axis);

inline constexpr double kLayerNormEpsilon = 1e-5;
Tensor layer_norm(const Tensor& x, std::size_t last_axis_size, const Tensor& gain, const Tensor& bias);

Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& x, Shape shape);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Mean binary cross-entropy over all elements, evaluated on logits in the
// log-sum-exp stable form. Targets are constants.
Tensor binary_cross_entropy_with_logits(const Tensor& logits, std::span<const double> targets);

}  // namespace aisf
