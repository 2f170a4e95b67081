#pragma once

#include <vector>

#include "aisformer/head_config.hpp"
#include "aisformer/layers.hpp"
#include "aisformer/parameters.hpp"
#include "aisformer/tensor.hpp"

namespace aisf {

// Axis-aligned box in continuous pixel coordinates: pixel (x, y) covers
// [x, x+1) x [y, y+1).
struct BoundingBox {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  bool valid() const { return x1 > x0 && y1 > y0; }
  BoundingBox scaled(double factor) const { return {x0 * factor, y0 * factor, x1 * factor, y1 * factor}; }
  BoundingBox translated(double dx, double dy) const { return {x0 + dx, y0 + dy, x1 + dx, y1 + dy}; }
};

// Feature volume [C x H x W] for one region of interest.
struct RoiFeature {
  Tensor values;

  std::size_t channels() const { return values.dim(0); }
  std::size_t height() const { return values.dim(1); }
  std::size_t width() const { return values.dim(2); }
};

// Encoder output, one row per spatial position: tokens [(H_m * W_m) x C],
// rows in row-major (y, x) order.
struct EncodedTokens {
  Tensor tokens;
  std::size_t grid_height = 0;
  std::size_t grid_width = 0;

  std::size_t count() const { return grid_height * grid_width; }
};

// ROIAlign: each of the out_h x out_w bins averages samples_per_bin^2
// bilinear samples on a regular grid inside the bin. A sample whose continuous
// position falls outside [0, W] x [0, H] reads 0; inside, the bilinear taps
// are clamped to the border pixels. Differentiable w.r.t. the feature map.
RoiFeature roi_align(const Tensor& feature_map, const BoundingBox& box, std::size_t out_h, std::size_t out_w,
                     std::size_t samples_per_bin);

// Transposed convolution, kernel 2x2, stride 2. weight [C_in x C_out x 2 x 2],
// bias [C_out].
RoiFeature upsample_deconv(const RoiFeature& roi, const Tensor& weight, const Tensor& bias);

// 1x1 convolution. weight [C_out x C_in], bias [C_out].
RoiFeature pointwise_conv(const RoiFeature& roi, const Tensor& weight, const Tensor& bias);

// 2-D sinusoidal encoding, [c x (h * w)]. Channels [0, c/2) encode the column
// index and [c/2, c) the row index; within each half even channels hold
// sin(pos * f_k) and odd channels cos(pos * f_k), f_k = 10000^(-2k / (c/2)).
Tensor positional_encoding(std::size_t h, std::size_t w, std::size_t c);

// Same values laid out token-major, [(h * w) x c].
Tensor positional_encoding_tokens(std::size_t h, std::size_t w, std::size_t c);

// Post-norm transformer encoder layer: self-attention, residual, norm,
// feed-forward, residual, norm.
struct EncoderLayer {
  MultiHeadAttention attention;
  LayerNorm norm1;
  FeedForward feed_forward;
  LayerNorm norm2;

  static EncoderLayer create(ParameterSet& params, const std::string& prefix, const HeadConfig& config, Rng& rng);
};

struct RoiEncoder {
  Tensor deconv_weight;
  Tensor deconv_bias;
  Tensor proj_weight;
  Tensor proj_bias;
  std::vector<EncoderLayer> layers;

  static RoiEncoder create(ParameterSet& params, const std::string& prefix, const HeadConfig& config, Rng& rng);
};

struct Encoding {
  RoiFeature aligned;                            // [C x H_r x W_r]
  RoiFeature upsampled;                          // [C x H_m x W_m], deconvolution output
  EncodedTokens tokens;                          // encoder output
  std::vector<std::vector<Tensor>> attention;    // [layer][head] self-attention weights
};

// Applies one encoder layer to x and records its attention weights.
Tensor encoder_layer_forward(const EncoderLayer& layer, const Tensor& x, bool use_layer_norm,
                             std::vector<Tensor>* attention_out);

// roi_align -> deconvolution -> 1x1 convolution -> flatten -> + positional
// encodings -> encoder layers. The box is in feature-map coordinates.
Encoding encode(const Tensor& feature_map, const BoundingBox& box, const RoiEncoder& encoder,
                const HeadConfig& config);

}  // namespace aisf
