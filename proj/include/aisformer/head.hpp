#pragma once

#include <cstdint>
#include <optional>

#include "aisformer/decoder.hpp"
#include "aisformer/invisible_embedding.hpp"
#include "aisformer/mask_prediction.hpp"
#include "aisformer/roi_encoding.hpp"

namespace aisf {

// All trainable pieces of the mask head, registered under "head.*".
struct AisformerHead {
  HeadConfig config;
  RoiEncoder encoder;
  MaskDecoder decoder;
  std::optional<InvisibleMlp> invisible;

  static AisformerHead create(ParameterSet& params, const HeadConfig& config, std::uint64_t seed);
};

struct HeadOutput {
  MaskPredictionSet masks;
  AttentionRecord attention;
  Encoding encoding;
};

// encode -> decode -> invisible_embed -> per_pixel_embeddings ->
// predict_masks for one box given in feature-map coordinates.
HeadOutput forward_full(const Tensor& feature_map, const BoundingBox& box, const AisformerHead& head);

}  // namespace aisf
