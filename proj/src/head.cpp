#include "aisformer/head.hpp"

namespace aisf {

AisformerHead AisformerHead::create(ParameterSet& params, const HeadConfig& config, std::uint64_t seed) {
  config.validate();
  // Separate streams keep each submodule's initialization independent of
  // which other submodules are enabled.
  Rng seeder(seed);
  Rng encoder_rng(seeder());
  Rng decoder_rng(seeder());
  Rng mlp_rng(seeder());

  AisformerHead head;
  head.config = config;
  head.encoder = RoiEncoder::create(params, "head.encoder", config, encoder_rng);
  head.decoder = MaskDecoder::create(params, "head.decoder", config, decoder_rng);
  if (config.queries.invisible) head.invisible = InvisibleMlp::create(params, "head.invisible", config, mlp_rng);
  return head;
}

HeadOutput forward_full(const Tensor& feature_map, const BoundingBox& box, const AisformerHead& head) {
  Encoding enc = encode(feature_map, box, head.encoder, head.config);
  auto [queries, attention] = decode(head.decoder.queries.stack(), enc.tokens, head.decoder, head.config);
  std::optional<InvisibleEmbedding> inv;
  if (head.invisible) {
    inv = invisible_embed(queries.query(MaskKind::visible), queries.query(MaskKind::amodal), *head.invisible);
  }
  const PerPixelEmbeddings e = per_pixel_embeddings(enc.upsampled, enc.tokens);
  MaskPredictionSet masks = predict_masks(e, queries, inv);
  return HeadOutput{std::move(masks), std::move(attention), std::move(enc)};
}

}  // namespace aisf
