#include "aisformer/layers.hpp"

#include <cmath>

#include "aisformer/errors.hpp"

namespace aisf {

Linear Linear::create(ParameterSet& params, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng) {
  Linear l;
  l.weight = params.add(prefix + ".weight", xavier_parameter({in, out}, in, out, rng));
  l.bias = params.add(prefix + ".bias", constant_parameter({1, out}, 0.0));
  return l;
}

Tensor Linear::operator()(const Tensor& x) const { return add(matmul(x, weight), bias); }

LayerNorm LayerNorm::create(ParameterSet& params, const std::string& prefix, std::size_t width) {
  LayerNorm n;
  n.gain = params.add(prefix + ".gain", constant_parameter({width}, 1.0));
  n.bias = params.add(prefix + ".bias", constant_parameter({width}, 0.0));
  return n;
}

Tensor LayerNorm::operator()(const Tensor& x) const { return layer_norm(x, gain.numel(), gain, bias); }

MultiHeadAttention MultiHeadAttention::create(ParameterSet& params, const std::string& prefix, std::size_t width,
                                              std::size_t heads, Rng& rng) {
  if (heads == 0 || width % heads != 0) {
    throw ConfigError("attention width " + std::to_string(width) + " is not divisible by " + std::to_string(heads) +
                      " heads");
  }
  MultiHeadAttention a;
  a.query = Linear::create(params, prefix + ".query", width, width, rng);
  a.key = Linear::create(params, prefix + ".key", width, width, rng);
  a.value = Linear::create(params, prefix + ".value", width, width, rng);
  a.out = Linear::create(params, prefix + ".out", width, width, rng);
  a.heads = heads;
  return a;
}

AttentionResult MultiHeadAttention::operator()(const Tensor& queries, const Tensor& keys, const Tensor& values) const {
  const std::size_t width = query.weight.dim(0);
  if (queries.rank() != 2 || keys.rank() != 2 || values.rank() != 2 || queries.dim(1) != width ||
      keys.dim(1) != width || values.dim(1) != width || keys.dim(0) != values.dim(0)) {
    throw DimensionError("attention: queries " + shape_str(queries.shape()) + ", keys " + shape_str(keys.shape()) +
                         ", values " + shape_str(values.shape()) + " incompatible with width " +
                         std::to_string(width));
  }
  const Tensor q = query(queries);
  const Tensor k = key(keys);
  const Tensor v = value(values);
  const std::size_t head_dim = width / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));

  AttentionResult result;
  std::vector<Tensor> head_outputs;
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t lo = h * head_dim, hi = lo + head_dim;
    const Tensor qh = heads == 1 ? q : slice(q, 1, lo, hi);
    const Tensor kh = heads == 1 ? k : slice(k, 1, lo, hi);
    const Tensor vh = heads == 1 ? v : slice(v, 1, lo, hi);
    Tensor w = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt), 1);
    head_outputs.push_back(matmul(w, vh));
    result.weights.push_back(std::move(w));
  }
  const Tensor merged = heads == 1 ? head_outputs.front() : concat(head_outputs, 1);
  result.output = out(merged);
  return result;
}

FeedForward FeedForward::create(ParameterSet& params, const std::string& prefix, std::size_t width,
                                std::size_t hidden, Rng& rng) {
  FeedForward f;
  f.expand = Linear::create(params, prefix + ".expand", width, hidden, rng);
  f.contract = Linear::create(params, prefix + ".contract", hidden, width, rng);
  return f;
}

Tensor FeedForward::operator()(const Tensor& x) const { return contract(relu(expand(x))); }

std::vector<double> average_heads(const std::vector<Tensor>& weights) {
  if (weights.empty()) return {};
  std::vector<double> avg(weights.front().numel(), 0.0);
  for (const auto& w : weights) {
    auto d = w.data();
    for (std::size_t i = 0; i < avg.size(); ++i) avg[i] += d[i];
  }
  for (auto& v : avg) v /= static_cast<double>(weights.size());
  return avg;
}

}  // namespace aisf
