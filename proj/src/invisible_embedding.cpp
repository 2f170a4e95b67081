#include "aisformer/invisible_embedding.hpp"

#include "aisformer/errors.hpp"

namespace aisf {

InvisibleMlp InvisibleMlp::create(ParameterSet& params, const std::string& prefix, const HeadConfig& config, Rng& rng) {
  const std::size_t c = config.channels;
  InvisibleMlp m;
  m.hidden1 = Linear::create(params, prefix + ".hidden1", 2 * c, c, rng);
  m.hidden2 = Linear::create(params, prefix + ".hidden2", c, c, rng);
  m.output = Linear::create(params, prefix + ".output", c, c, rng);
  m.activation = config.mlp_activation;
  return m;
}

InvisibleEmbedding invisible_embed(const Tensor& q_visible, const Tensor& q_amodal, const InvisibleMlp& mlp) {
  const std::size_t c = mlp.output.weight.dim(1);
  if (q_visible.numel() != c || q_amodal.numel() != c) {
    throw DimensionError("invisible_embed: queries " + shape_str(q_visible.shape()) + " and " +
                         shape_str(q_amodal.shape()) + " do not have " + std::to_string(c) + " channels");
  }
  const Tensor joined = concat({reshape(q_visible, {1, c}), reshape(q_amodal, {1, c})}, 1);
  Tensor h = activation(mlp.hidden1(joined), mlp.activation);
  h = activation(mlp.hidden2(h), mlp.activation);
  return InvisibleEmbedding{mlp.output(h)};
}

}  // namespace aisf
