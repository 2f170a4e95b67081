#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "aisformer/head_config.hpp"
#include "aisformer/layers.hpp"
#include "aisformer/roi_encoding.hpp"

namespace aisf {

// The learnable mask queries, stacked as rows of a [K x C] matrix in
// (occluder, visible, amodal) order. K is 3 for the full model and smaller
// when queries are ablated.
struct MaskQuerySet {
  std::vector<MaskKind> kinds;
  Tensor stacked;

  std::size_t size() const { return kinds.size(); }
  std::size_t channels() const { return stacked.dim(1); }
  bool has(MaskKind kind) const;
  // Row for one query as a [1 x C] tensor (differentiable slice).
  Tensor query(MaskKind kind) const;
};

struct AttentionRecord {
  std::vector<MaskKind> kinds;
  // Cross-attention of the last decoder layer averaged over heads, [K x N].
  Tensor cross_attention;
  // Raw per-head weights: [layer][head].
  std::vector<std::vector<Tensor>> self_attention_heads;
  std::vector<std::vector<Tensor>> cross_attention_heads;
};

struct DecoderLayer {
  MultiHeadAttention self_attention;
  LayerNorm norm1;
  MultiHeadAttention cross_attention;
  LayerNorm norm2;
  std::optional<FeedForward> feed_forward;
  std::optional<LayerNorm> norm3;

  static DecoderLayer create(ParameterSet& params, const std::string& prefix, const HeadConfig& config, Rng& rng);
};

// Learnable query vectors, each a [C] leaf registered in a ParameterSet.
struct QueryEmbeddings {
  std::vector<MaskKind> kinds;
  std::vector<Tensor> vectors;

  // Fresh [K x C] stack of the current parameter values.
  MaskQuerySet stack() const;
};

// Draws all three queries i.i.d. N(0, 0.02^2) from `seed` in fixed order and
// registers the enabled ones as "<prefix>.<kind>". Disabled queries still
// consume their draws, so ablated models share the enabled values.
QueryEmbeddings init_queries(ParameterSet& params, const std::string& prefix, std::size_t c, const QueryFlags& flags,
                          std::uint64_t seed);

inline constexpr double kQueryInitStd = 0.02;

struct MaskDecoder {
  QueryEmbeddings queries;
  std::vector<DecoderLayer> layers;

  static MaskDecoder create(ParameterSet& params, const std::string& prefix, const HeadConfig& config, Rng& rng);
};

// Q' = Norm(SelfAttn(Q) + Q); Q'' = Norm(CrossAttn(Q', F_e + P, F_e) + Q'),
// optionally followed by a feed-forward sublayer, repeated per layer.
std::pair<MaskQuerySet, AttentionRecord> decode(const MaskQuerySet& queries, const EncodedTokens& tokens,
                                                const MaskDecoder& decoder, const HeadConfig& config);

}  // namespace aisf
