#include "aisformer/decoder.hpp"

#include <algorithm>

#include "aisformer/errors.hpp"

namespace aisf {

bool MaskQuerySet::has(MaskKind kind) const { return std::find(kinds.begin(), kinds.end(), kind) != kinds.end(); }

Tensor MaskQuerySet::query(MaskKind kind) const {
  auto it = std::find(kinds.begin(), kinds.end(), kind);
  if (it == kinds.end()) throw ContractError(std::string("query set has no ") + mask_kind_name(kind) + " query");
  const auto row = static_cast<std::size_t>(it - kinds.begin());
  return slice(stacked, 0, row, row + 1);
}

MaskQuerySet QueryEmbeddings::stack() const {
  std::vector<Tensor> rows;
  for (const auto& v : vectors) rows.push_back(reshape(v, {1, v.numel()}));
  return MaskQuerySet{kinds, rows.size() == 1 ? rows.front() : concat(rows, 0)};
}

QueryEmbeddings init_queries(ParameterSet& params, const std::string& prefix, std::size_t c, const QueryFlags& flags,
                          std::uint64_t seed) {
  if (c == 0) throw ConfigError("init_queries: channel count must be positive");
  Rng rng(seed);
  const MaskKind order[] = {MaskKind::occluder, MaskKind::visible, MaskKind::amodal};
  const bool enabled[] = {flags.occluder, flags.visible, true};
  QueryEmbeddings set;
  for (int i = 0; i < 3; ++i) {
    Tensor q = normal_parameter({c}, kQueryInitStd, rng);
    if (!enabled[i]) continue;
    set.kinds.push_back(order[i]);
    set.vectors.push_back(params.add(prefix + "." + mask_kind_name(order[i]), q));
  }
  return set;
}

DecoderLayer DecoderLayer::create(ParameterSet& params, const std::string& prefix, const HeadConfig& config, Rng& rng) {
  DecoderLayer l;
  l.self_attention = MultiHeadAttention::create(params, prefix + ".self_attention", config.channels, config.heads, rng);
  l.norm1 = LayerNorm::create(params, prefix + ".norm1", config.channels);
  l.cross_attention =
      MultiHeadAttention::create(params, prefix + ".cross_attention", config.channels, config.heads, rng);
  l.norm2 = LayerNorm::create(params, prefix + ".norm2", config.channels);
  if (config.decoder_ffn) {
    l.feed_forward = FeedForward::create(params, prefix + ".ffn", config.channels, config.feed_forward_width(), rng);
    l.norm3 = LayerNorm::create(params, prefix + ".norm3", config.channels);
  }
  return l;
}

MaskDecoder MaskDecoder::create(ParameterSet& params, const std::string& prefix, const HeadConfig& config, Rng& rng) {
  MaskDecoder d;
  d.queries = init_queries(params, prefix + ".query", config.channels, config.queries, rng());
  for (std::size_t i = 0; i < config.decoder_layers; ++i) {
    d.layers.push_back(DecoderLayer::create(params, prefix + ".layer" + std::to_string(i), config, rng));
  }
  return d;
}

std::pair<MaskQuerySet, AttentionRecord> decode(const MaskQuerySet& queries, const EncodedTokens& tokens,
                                                const MaskDecoder& decoder, const HeadConfig& config) {
  const std::size_t c = queries.channels();
  if (tokens.tokens.rank() != 2 || tokens.tokens.dim(1) != c || tokens.tokens.dim(0) != tokens.count()) {
    throw DimensionError("decode: tokens " + shape_str(tokens.tokens.shape()) + " do not match query width " +
                         std::to_string(c) + " on a " + std::to_string(tokens.grid_height) + "x" +
                         std::to_string(tokens.grid_width) + " grid");
  }
  const Tensor keys = add(tokens.tokens, positional_encoding_tokens(tokens.grid_height, tokens.grid_width, c));

  AttentionRecord record;
  record.kinds = queries.kinds;
  Tensor q = queries.stacked;
  for (const auto& layer : decoder.layers) {
    AttentionResult self_attn = layer.self_attention(q, q, q);
    Tensor h = add(self_attn.output, q);
    if (config.layer_norm) h = layer.norm1(h);

    AttentionResult cross = layer.cross_attention(h, keys, tokens.tokens);
    Tensor y = add(cross.output, h);
    if (config.layer_norm) y = layer.norm2(y);

    if (layer.feed_forward) {
      y = add(y, (*layer.feed_forward)(y));
      if (config.layer_norm) y = (*layer.norm3)(y);
    }
    record.self_attention_heads.push_back(std::move(self_attn.weights));
    record.cross_attention_heads.push_back(std::move(cross.weights));
    q = std::move(y);
  }
  const auto& last = record.cross_attention_heads.back();
  record.cross_attention = Tensor(last.front().shape(), average_heads(last));
  return {MaskQuerySet{queries.kinds, std::move(q)}, std::move(record)};
}

}  // namespace aisf
