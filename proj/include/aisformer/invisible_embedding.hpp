#pragma once

#include "aisformer/head_config.hpp"
#include "aisformer/layers.hpp"

namespace aisf {

struct InvisibleEmbedding {
  Tensor embedding;  // [1 x C]
};

// MLP over [q_visible ; q_amodal]: Linear(2C -> C), act, Linear(C -> C), act,
// Linear(C -> C). No activation on the output.
struct InvisibleMlp {
  Linear hidden1;
  Linear hidden2;
  Linear output;
  ActivationKind activation = ActivationKind::relu;

  static InvisibleMlp create(ParameterSet& params, const std::string& prefix, const HeadConfig& config, Rng& rng);
};

// Both inputs are C-element tensors of shape [C] or [1 x C].
InvisibleEmbedding invisible_embed(const Tensor& q_visible, const Tensor& q_amodal, const InvisibleMlp& mlp);

}  // namespace aisf
