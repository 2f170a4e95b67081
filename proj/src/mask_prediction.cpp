#include "aisformer/mask_prediction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "aisformer/errors.hpp"

namespace aisf {

PerPixelEmbeddings per_pixel_embeddings(const RoiFeature& roi_upsampled, const EncodedTokens& tokens) {
  const std::size_t c = roi_upsampled.channels(), h = roi_upsampled.height(), w = roi_upsampled.width();
  if (tokens.tokens.rank() != 2 || tokens.tokens.dim(0) != h * w || tokens.tokens.dim(1) != c) {
    throw DimensionError("per_pixel_embeddings: tokens " + shape_str(tokens.tokens.shape()) + " do not match ROI " +
                         shape_str(roi_upsampled.values.shape()));
  }
  const Tensor flat = reshape(roi_upsampled.values, {c, h * w});
  return PerPixelEmbeddings{reshape(add(flat, transpose(tokens.tokens)), {c, h, w})};
}

bool MaskPredictionSet::has(MaskKind kind) const {
  return std::find(kinds.begin(), kinds.end(), kind) != kinds.end();
}

Tensor MaskPredictionSet::logit_map(MaskKind kind) const {
  auto it = std::find(kinds.begin(), kinds.end(), kind);
  if (it == kinds.end()) throw ContractError(std::string("no ") + mask_kind_name(kind) + " mask was predicted");
  const auto k = static_cast<std::size_t>(it - kinds.begin());
  return reshape(slice(logits, 0, k, k + 1), {height(), width()});
}

std::vector<double> MaskPredictionSet::probabilities(MaskKind kind) const {
  NoGradGuard guard;
  const Tensor p = sigmoid(logit_map(kind));
  return {p.data().begin(), p.data().end()};
}

MaskPredictionSet predict_masks(const PerPixelEmbeddings& e, const MaskQuerySet& queries,
                                const std::optional<InvisibleEmbedding>& invisible) {
  if (e.values.rank() != 3) throw DimensionError("predict_masks: embeddings must be [C x H x W]");
  const std::size_t c = e.values.dim(0), h = e.values.dim(1), w = e.values.dim(2);
  if (queries.channels() != c || (invisible && invisible->embedding.numel() != c)) {
    throw DimensionError("predict_masks: query width " + std::to_string(queries.channels()) +
                         " does not match embedding channels " + std::to_string(c));
  }
  MaskPredictionSet out;
  out.kinds = queries.kinds;
  Tensor embeds = queries.stacked;
  if (invisible) {
    embeds = concat({embeds, reshape(invisible->embedding, {1, c})}, 0);
    out.kinds.push_back(MaskKind::invisible);
  }
  out.logits = reshape(matmul(embeds, reshape(e.values, {c, h * w})), {out.kinds.size(), h, w});
  return out;
}

MaskLoss mask_loss(const MaskPredictionSet& pred, const MaskTargets& targets) {
  if (targets.height != pred.height() || targets.width != pred.width()) {
    throw DimensionError("mask_loss: targets " + std::to_string(targets.height) + "x" + std::to_string(targets.width) +
                         " vs predictions " + std::to_string(pred.height()) + "x" + std::to_string(pred.width()));
  }
  const std::size_t n = targets.height * targets.width;
  MaskLoss loss;
  loss.per_head.fill(std::numeric_limits<double>::quiet_NaN());
  std::vector<Tensor> terms;
  for (MaskKind kind : pred.kinds) {
    const auto& t = targets[kind];
    if (t.size() != n) {
      throw DimensionError(std::string("mask_loss: ") + mask_kind_name(kind) + " target has " +
                           std::to_string(t.size()) + " pixels, expected " + std::to_string(n));
    }
    if (std::any_of(t.begin(), t.end(), [](double v) { return v != 0.0 && v != 1.0; })) {
      throw InputError(std::string("mask_loss: ") + mask_kind_name(kind) + " target is not binary");
    }
    Tensor term = binary_cross_entropy_with_logits(pred.logit_map(kind), t);
    loss.per_head[static_cast<std::size_t>(kind)] = term.item();
    terms.push_back(std::move(term));
  }
  Tensor total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = add(total, terms[i]);
  loss.total = std::move(total);
  return loss;
}

}  // namespace aisf
