#pragma once

// Building blocks for defining new differentiable operations outside the
// core tensor library (ROIAlign, convolutions).

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "aisformer/tensor.hpp"

namespace aisf::detail {

struct Node;

// Called with the producing node (its data and upstream grad) and one slot
// per input. A slot is null when that input needs no gradient; otherwise the
// function must accumulate (+=) into it.
using BackwardFn = std::function<void(const Node& self, std::span<std::vector<double>* const> input_grads)>;

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;
  const char* op = "leaf";
};

// Wraps freshly computed values as a tensor. Lineage is recorded only when
// grad mode is on and at least one input requires grad.
Tensor make_result(Shape shape, std::vector<double> values, const std::vector<Tensor>& inputs, const char* op,
                   BackwardFn backward);

inline std::span<const double> input_data(const Node& self, std::size_t i) { return self.inputs[i]->data; }

}  // namespace aisf::detail
