#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "aisformer/head.hpp"
#include "aisformer/parameters.hpp"

namespace aisf {

// 2-D convolution of x [C_in x H x W] with weight [C_out x C_in x k x k] and
// bias [C_out], zero padding.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride, std::size_t padding);

enum class BackboneKind { conv, identity };

BackboneKind parse_backbone_kind(const std::string& name);
const char* backbone_kind_name(BackboneKind kind);

// Three 3x3 convolutions (stride 2, 2, 1) lifting the image to C channels at
// 1/4 resolution.
struct ConvBackbone {
  Tensor weights[3];
  Tensor biases[3];

  static ConvBackbone create(ParameterSet& params, std::size_t in_channels, std::size_t out_channels, Rng& rng);
  Tensor operator()(const Tensor& image) const;
};

struct ModelConfig {
  HeadConfig head;
  BackboneKind backbone = BackboneKind::conv;
  std::size_t image_channels = 3;
  std::uint64_t seed = 0;
};

// Backbone plus mask head. Boxes passed to forward_roi are in image pixels.
class AisformerModel {
 public:
  explicit AisformerModel(const ModelConfig& config);

  AisformerModel(const AisformerModel&) = delete;
  AisformerModel& operator=(const AisformerModel&) = delete;
  AisformerModel(AisformerModel&&) = default;

  const ModelConfig& config() const { return config_; }
  const AisformerHead& head() const { return head_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }

  // Image-to-feature-map scale (1/4 for the conv backbone).
  double feature_scale() const;
  Tensor features(const Tensor& image) const;
  HeadOutput forward_roi(const Tensor& features, const BoundingBox& image_box) const;

  // Copies values for every parameter of this model from `source` by name.
  void load_values(const ParameterSet& source);

 private:
  ModelConfig config_;
  ParameterSet params_;
  std::optional<ConvBackbone> backbone_;
  AisformerHead head_;
};

}  // namespace aisf
