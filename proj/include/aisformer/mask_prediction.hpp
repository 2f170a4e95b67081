#pragma once

#include <array>
#include <optional>
#include <vector>

#include "aisformer/decoder.hpp"
#include "aisformer/invisible_embedding.hpp"
#include "aisformer/roi_encoding.hpp"

namespace aisf {

struct PerPixelEmbeddings {
  Tensor values;  // [C x H_m x W_m]
};

// Unflatten(Flatten(roi) + tokens). `roi_upsampled` is the deconvolved ROI
// feature at mask resolution.
PerPixelEmbeddings per_pixel_embeddings(const RoiFeature& roi_upsampled, const EncodedTokens& tokens);

// Logit maps for the enabled outputs, in (occluder, visible, amodal,
// invisible) order.
struct MaskPredictionSet {
  std::vector<MaskKind> kinds;
  Tensor logits;  // [K x H_m x W_m]

  std::size_t size() const { return kinds.size(); }
  std::size_t height() const { return logits.dim(1); }
  std::size_t width() const { return logits.dim(2); }
  bool has(MaskKind kind) const;
  // [H_m x W_m] logits of one output (differentiable slice).
  Tensor logit_map(MaskKind kind) const;
  // sigmoid of the logits, row-major.
  std::vector<double> probabilities(MaskKind kind) const;
};

// logit_k[y, x] = sum_c e[c, y, x] * embed_k[c] for every enabled query plus
// the invisible embedding when given.
MaskPredictionSet predict_masks(const PerPixelEmbeddings& e, const MaskQuerySet& queries,
                                const std::optional<InvisibleEmbedding>& invisible);

// Binary ground truth at mask resolution, indexed by MaskKind.
struct MaskTargets {
  std::size_t height = 0;
  std::size_t width = 0;
  std::array<std::vector<double>, kMaskKindCount> maps;

  const std::vector<double>& operator[](MaskKind kind) const { return maps[static_cast<std::size_t>(kind)]; }
  std::vector<double>& operator[](MaskKind kind) { return maps[static_cast<std::size_t>(kind)]; }
};

struct MaskLoss {
  Tensor total;
  // Per-output mean cross-entropy, NaN for outputs not predicted.
  std::array<double, kMaskKindCount> per_head{};
};

// Sum over predicted outputs of the per-pixel mean binary cross-entropy, each
// with weight 1. Throws InputError on non-binary targets.
MaskLoss mask_loss(const MaskPredictionSet& pred, const MaskTargets& targets);

}  // namespace aisf
