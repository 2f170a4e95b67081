#include "aisformer/roi_encoding.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

#include "aisformer/autograd.hpp"
#include "aisformer/errors.hpp"

namespace aisf {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;
using GradSlots = std::span<std::vector<double>* const>;

struct Tap {
  std::size_t out;
  std::size_t in;
  double weight;
};

// Bilinear taps for one continuous sample position, appended with the given
// weight. Positions outside the map contribute nothing.
void bilinear_taps(double y, double x, std::size_t height, std::size_t width, std::size_t out, double weight,
                   std::vector<Tap>& taps) {
  const double h = static_cast<double>(height), w = static_cast<double>(width);
  if (y < 0.0 || y > h || x < 0.0 || x > w) return;
  // Continuous coordinate -> pixel-center index space.
  double v = std::clamp(y - 0.5, 0.0, h - 1.0);
  double u = std::clamp(x - 0.5, 0.0, w - 1.0);
  const auto y_lo = static_cast<std::size_t>(std::floor(v));
  const auto x_lo = static_cast<std::size_t>(std::floor(u));
  const std::size_t y_hi = std::min(y_lo + 1, height - 1);
  const std::size_t x_hi = std::min(x_lo + 1, width - 1);
  const double ly = v - static_cast<double>(y_lo), lx = u - static_cast<double>(x_lo);
  const double hy = 1.0 - ly, hx = 1.0 - lx;
  taps.push_back({out, y_lo * width + x_lo, weight * hy * hx});
  taps.push_back({out, y_lo * width + x_hi, weight * hy * lx});
  taps.push_back({out, y_hi * width + x_lo, weight * ly * hx});
  taps.push_back({out, y_hi * width + x_hi, weight * ly * lx});
}

void require_feature(const Tensor& t, const char* op) {
  if (t.rank() != 3) throw DimensionError(std::string(op) + ": expected [C x H x W], got " + shape_str(t.shape()));
}

}  // namespace

RoiFeature roi_align(const Tensor& feature_map, const BoundingBox& box, std::size_t out_h, std::size_t out_w,
                     std::size_t samples_per_bin) {
  require_feature(feature_map, "roi_align");
  if (out_h == 0 || out_w == 0 || samples_per_bin == 0) {
    throw InputError("roi_align: output size and samples per bin must be positive");
  }
  const std::size_t channels = feature_map.dim(0), height = feature_map.dim(1), width = feature_map.dim(2);
  const double cx0 = std::clamp(box.x0, 0.0, static_cast<double>(width));
  const double cx1 = std::clamp(box.x1, 0.0, static_cast<double>(width));
  const double cy0 = std::clamp(box.y0, 0.0, static_cast<double>(height));
  const double cy1 = std::clamp(box.y1, 0.0, static_cast<double>(height));
  if (!box.valid() || cx1 <= cx0 || cy1 <= cy0) {
    throw InputError("roi_align: box (" + std::to_string(box.x0) + "," + std::to_string(box.y0) + ")-(" +
                     std::to_string(box.x1) + "," + std::to_string(box.y1) + ") has no area inside the map");
  }

  const double bin_h = box.height() / static_cast<double>(out_h);
  const double bin_w = box.width() / static_cast<double>(out_w);
  const double s = static_cast<double>(samples_per_bin);
  const double sample_weight = 1.0 / (s * s);
  std::vector<Tap> taps;
  taps.reserve(out_h * out_w * samples_per_bin * samples_per_bin * 4);
  for (std::size_t i = 0; i < out_h; ++i) {
    for (std::size_t j = 0; j < out_w; ++j) {
      for (std::size_t a = 0; a < samples_per_bin; ++a) {
        const double y = box.y0 + static_cast<double>(i) * bin_h + (static_cast<double>(a) + 0.5) * bin_h / s;
        for (std::size_t b = 0; b < samples_per_bin; ++b) {
          const double x = box.x0 + static_cast<double>(j) * bin_w + (static_cast<double>(b) + 0.5) * bin_w / s;
          bilinear_taps(y, x, height, width, i * out_w + j, sample_weight, taps);
        }
      }
    }
  }

  const std::size_t in_plane = height * width, out_plane = out_h * out_w;
  auto in = feature_map.data();
  std::vector<double> out(channels * out_plane, 0.0);
  for (std::size_t c = 0; c < channels; ++c) {
    const double* src = in.data() + c * in_plane;
    double* dst = out.data() + c * out_plane;
    for (const auto& t : taps) dst[t.out] += t.weight * src[t.in];
  }
  Tensor values = detail::make_result(
      {channels, out_h, out_w}, std::move(out), {feature_map}, "roi_align",
      [taps = std::move(taps), channels, in_plane, out_plane](const detail::Node& self, GradSlots g) {
        if (!g[0]) return;
        auto& gx = *g[0];
        for (std::size_t c = 0; c < channels; ++c) {
          const double* dy = self.grad.data() + c * out_plane;
          double* dst = gx.data() + c * in_plane;
          for (const auto& t : taps) dst[t.in] += t.weight * dy[t.out];
        }
      });
  return RoiFeature{std::move(values)};
}

RoiFeature upsample_deconv(const RoiFeature& roi, const Tensor& weight, const Tensor& bias) {
  require_feature(roi.values, "upsample_deconv");
  const std::size_t c_in = roi.channels(), h = roi.height(), w = roi.width();
  if (weight.rank() != 4 || weight.dim(0) != c_in || weight.dim(2) != 2 || weight.dim(3) != 2) {
    throw DimensionError("upsample_deconv: weight " + shape_str(weight.shape()) + " does not fit input " +
                         shape_str(roi.values.shape()) + "; expected [C_in x C_out x 2 x 2]");
  }
  const std::size_t c_out = weight.dim(1);
  if (bias.numel() != c_out) {
    throw DimensionError("upsample_deconv: bias " + shape_str(bias.shape()) + " for " + std::to_string(c_out) +
                         " output channels");
  }
  const std::size_t plane = h * w, taps = c_out * 4;
  // Row (co * 4 + a * 2 + b) of `cols` holds the contribution of tap (a, b)
  // to output channel co at every input pixel.
  RowMat cols = ConstMap(weight.data().data(), c_in, taps).transpose() * ConstMap(roi.values.data().data(), c_in, plane);
  const std::size_t oh = 2 * h, ow = 2 * w;
  std::vector<double> out(c_out * oh * ow);
  auto bv = bias.data();
  for (std::size_t co = 0; co < c_out; ++co) {
    for (std::size_t a = 0; a < 2; ++a) {
      for (std::size_t b = 0; b < 2; ++b) {
        const double* row = cols.data() + (co * 4 + a * 2 + b) * plane;
        for (std::size_t i = 0; i < h; ++i) {
          for (std::size_t j = 0; j < w; ++j) {
            out[(co * oh + 2 * i + a) * ow + 2 * j + b] = row[i * w + j] + bv[co];
          }
        }
      }
    }
  }
  Tensor values = detail::make_result(
      {c_out, oh, ow}, std::move(out), {roi.values, weight, bias}, "upsample_deconv",
      [c_in, c_out, h, w, plane, taps](const detail::Node& self, GradSlots g) {
        const std::size_t oh = 2 * h, ow = 2 * w;
        RowMat dcols(taps, plane);
        for (std::size_t co = 0; co < c_out; ++co) {
          for (std::size_t a = 0; a < 2; ++a) {
            for (std::size_t b = 0; b < 2; ++b) {
              double* row = dcols.data() + (co * 4 + a * 2 + b) * plane;
              for (std::size_t i = 0; i < h; ++i) {
                for (std::size_t j = 0; j < w; ++j) row[i * w + j] = self.grad[(co * oh + 2 * i + a) * ow + 2 * j + b];
              }
            }
          }
        }
        if (g[0]) {
          MutMap(g[0]->data(), c_in, plane).noalias() += ConstMap(detail::input_data(self, 1).data(), c_in, taps) * dcols;
        }
        if (g[1]) {
          MutMap(g[1]->data(), c_in, taps).noalias() +=
              ConstMap(detail::input_data(self, 0).data(), c_in, plane) * dcols.transpose();
        }
        if (g[2]) {
          auto& gb = *g[2];
          // Plain loops: Eigen reductions round differently depending on buffer alignment.
          for (std::size_t co = 0; co < c_out; ++co) {
            double acc = 0.0;
            for (Eigen::Index r = static_cast<Eigen::Index>(co * 4); r < static_cast<Eigen::Index>(co * 4 + 4); ++r) {
              for (Eigen::Index j = 0; j < dcols.cols(); ++j) acc += dcols(r, j);
            }
            gb[co] += acc;
          }
        }
      });
  return RoiFeature{std::move(values)};
}

RoiFeature pointwise_conv(const RoiFeature& roi, const Tensor& weight, const Tensor& bias) {
  require_feature(roi.values, "pointwise_conv");
  if (weight.rank() != 2 || weight.dim(1) != roi.channels()) {
    throw DimensionError("pointwise_conv: weight " + shape_str(weight.shape()) + " does not map " +
                         std::to_string(roi.channels()) + " input channels");
  }
  const std::size_t c_out = weight.dim(0), h = roi.height(), w = roi.width();
  if (bias.numel() != c_out) throw DimensionError("pointwise_conv: bias " + shape_str(bias.shape()));
  const Tensor pixels = transpose(reshape(roi.values, {roi.channels(), h * w}));  // [HW x C_in]
  const Tensor mapped = add(matmul(pixels, transpose(weight)), reshape(bias, {1, c_out}));
  return RoiFeature{reshape(transpose(mapped), {c_out, h, w})};
}

Tensor positional_encoding(std::size_t h, std::size_t w, std::size_t c) {
  if (c == 0 || c % 4 != 0) throw ConfigError("positional_encoding: channels must be divisible by 4, got " + std::to_string(c));
  const std::size_t half = c / 2;
  const std::size_t n = h * w;
  std::vector<double> out(c * n);
  for (std::size_t k = 0; k < half / 2; ++k) {
    const double freq = std::pow(10000.0, -2.0 * static_cast<double>(k) / static_cast<double>(half));
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t p = y * w + x;
        const double ax = static_cast<double>(x) * freq, ay = static_cast<double>(y) * freq;
        out[(2 * k) * n + p] = std::sin(ax);
        out[(2 * k + 1) * n + p] = std::cos(ax);
        out[(half + 2 * k) * n + p] = std::sin(ay);
        out[(half + 2 * k + 1) * n + p] = std::cos(ay);
      }
    }
  }
  return Tensor({c, n}, std::move(out));
}

Tensor positional_encoding_tokens(std::size_t h, std::size_t w, std::size_t c) {
  NoGradGuard guard;
  return transpose(positional_encoding(h, w, c));
}

EncoderLayer EncoderLayer::create(ParameterSet& params, const std::string& prefix, const HeadConfig& config, Rng& rng) {
  EncoderLayer l;
  l.attention = MultiHeadAttention::create(params, prefix + ".attention", config.channels, config.heads, rng);
  l.norm1 = LayerNorm::create(params, prefix + ".norm1", config.channels);
  l.feed_forward = FeedForward::create(params, prefix + ".ffn", config.channels, config.feed_forward_width(), rng);
  l.norm2 = LayerNorm::create(params, prefix + ".norm2", config.channels);
  return l;
}

RoiEncoder RoiEncoder::create(ParameterSet& params, const std::string& prefix, const HeadConfig& config, Rng& rng) {
  const std::size_t c = config.channels;
  RoiEncoder e;
  e.deconv_weight = params.add(prefix + ".deconv.weight", xavier_parameter({c, c, 2, 2}, c, c * 4, rng));
  e.deconv_bias = params.add(prefix + ".deconv.bias", constant_parameter({c}, 0.0));
  e.proj_weight = params.add(prefix + ".proj.weight", xavier_parameter({c, c}, c, c, rng));
  e.proj_bias = params.add(prefix + ".proj.bias", constant_parameter({c}, 0.0));
  for (std::size_t i = 0; i < config.encoder_layers; ++i) {
    e.layers.push_back(EncoderLayer::create(params, prefix + ".layer" + std::to_string(i), config, rng));
  }
  return e;
}

Tensor encoder_layer_forward(const EncoderLayer& layer, const Tensor& x, bool use_layer_norm,
                             std::vector<Tensor>* attention_out) {
  AttentionResult attn = layer.attention(x, x, x);
  if (attention_out) *attention_out = std::move(attn.weights);
  Tensor h = add(x, attn.output);
  if (use_layer_norm) h = layer.norm1(h);
  Tensor y = add(h, layer.feed_forward(h));
  if (use_layer_norm) y = layer.norm2(y);
  return y;
}

Encoding encode(const Tensor& feature_map, const BoundingBox& box, const RoiEncoder& encoder,
                const HeadConfig& config) {
  const std::size_t c = config.channels;
  if (feature_map.rank() != 3 || feature_map.dim(0) != c) {
    throw DimensionError("encode: feature map " + shape_str(feature_map.shape()) + " does not have " +
                         std::to_string(c) + " channels");
  }
  Encoding enc;
  enc.aligned = roi_align(feature_map, box, config.roi_height, config.roi_width, config.samples_per_bin);
  enc.upsampled = upsample_deconv(enc.aligned, encoder.deconv_weight, encoder.deconv_bias);
  const RoiFeature projected = pointwise_conv(enc.upsampled, encoder.proj_weight, encoder.proj_bias);

  const std::size_t hm = config.mask_height(), wm = config.mask_width();
  const Tensor flat = transpose(reshape(projected.values, {c, hm * wm}));
  Tensor x = add(flat, positional_encoding_tokens(hm, wm, c));
  for (const auto& layer : encoder.layers) {
    std::vector<Tensor> weights;
    x = encoder_layer_forward(layer, x, config.layer_norm, &weights);
    enc.attention.push_back(std::move(weights));
  }
  enc.tokens = EncodedTokens{std::move(x), hm, wm};
  return enc;
}

}  // namespace aisf
