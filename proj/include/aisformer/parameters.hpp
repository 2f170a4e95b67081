#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>

#include "aisformer/tensor.hpp"

namespace aisf {

using Rng = std::mt19937_64;

// Derives an independent seed for stream `index` (splitmix64 finalizer).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index);

// Named trainable tensors, iterated in lexicographic name order.
class ParameterSet {
 public:
  using Map = std::map<std::string, Tensor, std::less<>>;

  // Registers a leaf; throws ContractError on a duplicate name.
  const Tensor& add(std::string name, Tensor value);
  const Tensor& at(std::string_view name) const;
  bool contains(std::string_view name) const { return params_.find(name) != params_.end(); }

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  Map::const_iterator begin() const { return params_.begin(); }
  Map::const_iterator end() const { return params_.end(); }

  void zero_grad();

 private:
  Map params_;
};

// p <- p - lr * grad(p), then grads are cleared. Every parameter must have a
// populated gradient.
void sgd_step(ParameterSet& params, double learning_rate);

// Leaf initializers. All draw from the supplied generator in row-major order.
Tensor normal_parameter(Shape shape, double stddev, Rng& rng);
Tensor xavier_parameter(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);
Tensor constant_parameter(Shape shape, double value);

}  // namespace aisf
