#include "aisformer/parameters.hpp"

#include <cmath>

#include "aisformer/errors.hpp"

namespace aisf {

const Tensor& ParameterSet::add(std::string name, Tensor value) {
  if (!value.is_leaf() || !value.requires_grad()) {
    throw ContractError("parameter '" + name + "' must be a leaf that requires grad");
  }
  auto [it, inserted] = params_.emplace(name, std::move(value));
  if (!inserted) throw ContractError("duplicate parameter name '" + name + "'");
  return it->second;
}

const Tensor& ParameterSet::at(std::string_view name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.numel();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& [_, t] : params_) {
    Tensor handle = t;
    handle.zero_grad();
  }
}

void sgd_step(ParameterSet& params, double learning_rate) {
  if (!(learning_rate >= 0.0)) throw ContractError("sgd_step: learning rate must be non-negative");
  for (const auto& [name, t] : params) {
    if (!t.has_grad()) throw ContractError("sgd_step: parameter '" + name + "' has no gradient");
  }
  for (const auto& [name, t] : params) {
    Tensor p = t;
    auto g = p.grad();
    auto w = p.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= learning_rate * g[i];
    p.zero_grad();
  }
}

Tensor normal_parameter(Shape shape, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v), true);
}

Tensor xavier_parameter(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v), true);
}

Tensor constant_parameter(Shape shape, double value) { return Tensor::full(std::move(shape), value, true); }

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace aisf
