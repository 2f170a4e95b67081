#pragma once

#include <string>
#include <vector>

#include "aisformer/parameters.hpp"
#include "aisformer/tensor.hpp"

namespace aisf {

// Row-vector affine map: y = x W + b with x [N x in], W [in x out], b [1 x out].
struct Linear {
  Tensor weight;
  Tensor bias;

  static Linear create(ParameterSet& params, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng);
  Tensor operator()(const Tensor& x) const;
};

struct LayerNorm {
  Tensor gain;
  Tensor bias;

  static LayerNorm create(ParameterSet& params, const std::string& prefix, std::size_t width);
  Tensor operator()(const Tensor& x) const;
};

struct AttentionResult {
  Tensor output;                // [Nq x C]
  std::vector<Tensor> weights;  // one [Nq x Nk] row-stochastic matrix per head
};

// Scaled dot-product attention with `heads` independent heads over
// contiguous channel groups, followed by an output projection.
struct MultiHeadAttention {
  Linear query;
  Linear key;
  Linear value;
  Linear out;
  std::size_t heads = 1;

  static MultiHeadAttention create(ParameterSet& params, const std::string& prefix, std::size_t width,
                                   std::size_t heads, Rng& rng);
  AttentionResult operator()(const Tensor& queries, const Tensor& keys, const Tensor& values) const;
};

// Two-layer position-wise feed-forward block with a ReLU in between.
struct FeedForward {
  Linear expand;
  Linear contract;

  static FeedForward create(ParameterSet& params, const std::string& prefix, std::size_t width, std::size_t hidden,
                            Rng& rng);
  Tensor operator()(const Tensor& x) const;
};

// Mean over heads of per-head attention weights; values only.
std::vector<double> average_heads(const std::vector<Tensor>& weights);

}  // namespace aisf
