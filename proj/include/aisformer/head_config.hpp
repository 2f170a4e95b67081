#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "aisformer/tensor.hpp"

namespace aisf {

// The four mask outputs, in the fixed prediction order.
enum class MaskKind { occluder = 0, visible = 1, amodal = 2, invisible = 3 };

inline constexpr std::size_t kMaskKindCount = 4;
const char* mask_kind_name(MaskKind kind);

// Which of the optional outputs are built. The amodal query is always on.
struct QueryFlags {
  bool occluder = true;
  bool visible = true;
  bool invisible = true;

  // Learnable queries in (occluder, visible, amodal) order.
  std::vector<MaskKind> query_kinds() const;
  // All predicted masks; the invisible one is derived, not a query.
  std::vector<MaskKind> mask_kinds() const;
  std::string label() const;
};

struct HeadConfig {
  std::size_t channels = 64;
  std::size_t roi_height = 14;
  std::size_t roi_width = 14;
  std::size_t heads = 1;
  std::size_t encoder_layers = 1;
  std::size_t decoder_layers = 1;
  std::size_t samples_per_bin = 2;
  std::size_t ffn_hidden = 0;  // 0 selects 2 * channels
  bool decoder_ffn = false;
  bool layer_norm = true;
  ActivationKind mlp_activation = ActivationKind::relu;
  QueryFlags queries;

  std::size_t mask_height() const { return 2 * roi_height; }
  std::size_t mask_width() const { return 2 * roi_width; }
  std::size_t token_count() const { return mask_height() * mask_width(); }
  std::size_t feed_forward_width() const { return ffn_hidden ? ffn_hidden : 2 * channels; }

  // Throws ConfigError on non-positive dims, channels not divisible by 4 or
  // by the head count, or an invisible head without the visible query.
  void validate() const;
};

}  // namespace aisf
