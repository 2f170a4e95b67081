#include "aisformer/model.hpp"

#include <Eigen/Core>

#include <algorithm>

#include "aisformer/autograd.hpp"
#include "aisformer/errors.hpp"

namespace aisf {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

struct ConvGeometry {
  std::size_t c_in, h, w, k, stride, pad, oh, ow;

  std::size_t rows() const { return c_in * k * k; }
  std::size_t cols() const { return oh * ow; }
};

// cols[(ci * k + ky) * k + kx, oy * ow + ox] = x[ci, oy*s + ky - p, ox*s + kx - p]
void im2col(const double* x, const ConvGeometry& g, double* cols) {
  for (std::size_t ci = 0; ci < g.c_in; ++ci) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        double* row = cols + ((ci * g.k + ky) * g.k + kx) * g.cols();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(g.h) &&
                                ix < static_cast<std::ptrdiff_t>(g.w);
            row[oy * g.ow + ox] = inside ? x[(ci * g.h + static_cast<std::size_t>(iy)) * g.w + static_cast<std::size_t>(ix)] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvGeometry& g, double* x) {
  for (std::size_t ci = 0; ci < g.c_in; ++ci) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const double* row = cols + ((ci * g.k + ky) * g.k + kx) * g.cols();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
            x[(ci * g.h + static_cast<std::size_t>(iy)) * g.w + static_cast<std::size_t>(ix)] += row[oy * g.ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride, std::size_t padding) {
  if (x.rank() != 3 || weight.rank() != 4 || weight.dim(1) != x.dim(0) || weight.dim(2) != weight.dim(3)) {
    throw DimensionError("conv2d: input " + shape_str(x.shape()) + " and weight " + shape_str(weight.shape()) +
                         " are incompatible");
  }
  const std::size_t c_out = weight.dim(0), k = weight.dim(2);
  if (bias.numel() != c_out) throw DimensionError("conv2d: bias " + shape_str(bias.shape()));
  if (stride == 0 || x.dim(1) + 2 * padding < k || x.dim(2) + 2 * padding < k) {
    throw DimensionError("conv2d: kernel does not fit input " + shape_str(x.shape()));
  }
  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), k, stride, padding, 0, 0};
  g.oh = (g.h + 2 * padding - k) / stride + 1;
  g.ow = (g.w + 2 * padding - k) / stride + 1;

  RowMat cols(g.rows(), g.cols());
  im2col(x.data().data(), g, cols.data());
  std::vector<double> out(c_out * g.cols());
  MutMap y(out.data(), c_out, g.cols());
  y.noalias() = ConstMap(weight.data().data(), c_out, g.rows()) * cols;
  auto bv = bias.data();
  for (std::size_t co = 0; co < c_out; ++co) y.row(co).array() += bv[co];

  return detail::make_result(
      {c_out, g.oh, g.ow}, std::move(out), {x, weight, bias}, "conv2d",
      [g, c_out](const detail::Node& self, std::span<std::vector<double>* const> grads) {
        ConstMap dy(self.grad.data(), c_out, g.cols());
        if (grads[1]) {
          RowMat cols(g.rows(), g.cols());
          im2col(detail::input_data(self, 0).data(), g, cols.data());
          MutMap(grads[1]->data(), c_out, g.rows()).noalias() += dy * cols.transpose();
        }
        if (grads[2]) {
          auto& gb = *grads[2];
          // Plain loops: Eigen reductions round differently depending on buffer alignment.
          const double* row = self.grad.data();
          for (std::size_t co = 0; co < c_out; ++co) {
            double acc = 0.0;
            for (std::size_t j = 0; j < g.cols(); ++j) acc += row[co * g.cols() + j];
            gb[co] += acc;
          }
        }
        if (grads[0]) {
          RowMat dcols = ConstMap(detail::input_data(self, 1).data(), c_out, g.rows()).transpose() * dy;
          col2im_add(dcols.data(), g, grads[0]->data());
        }
      });
}

BackboneKind parse_backbone_kind(const std::string& name) {
  if (name == "conv") return BackboneKind::conv;
  if (name == "identity") return BackboneKind::identity;
  throw ConfigError("unknown backbone '" + name + "' (expected conv or identity)");
}

const char* backbone_kind_name(BackboneKind kind) { return kind == BackboneKind::conv ? "conv" : "identity"; }

ConvBackbone ConvBackbone::create(ParameterSet& params, std::size_t in_channels, std::size_t out_channels, Rng& rng) {
  const std::size_t widths[4] = {in_channels, 16, 32, out_channels};
  ConvBackbone b;
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string prefix = "backbone.conv" + std::to_string(i + 1);
    const std::size_t fan_in = widths[i] * 9, fan_out = widths[i + 1] * 9;
    b.weights[i] = params.add(prefix + ".weight", xavier_parameter({widths[i + 1], widths[i], 3, 3}, fan_in, fan_out, rng));
    b.biases[i] = params.add(prefix + ".bias", constant_parameter({widths[i + 1]}, 0.0));
  }
  return b;
}

Tensor ConvBackbone::operator()(const Tensor& image) const {
  Tensor x = relu(conv2d(image, weights[0], biases[0], 2, 1));
  x = relu(conv2d(x, weights[1], biases[1], 2, 1));
  return conv2d(x, weights[2], biases[2], 1, 1);
}

AisformerModel::AisformerModel(const ModelConfig& config) : config_(config) {
  config_.head.validate();
  Rng seeder(config.seed);
  const std::uint64_t backbone_seed = seeder();
  const std::uint64_t head_seed = seeder();
  if (config.backbone == BackboneKind::conv) {
    Rng rng(backbone_seed);
    backbone_ = ConvBackbone::create(params_, config.image_channels, config.head.channels, rng);
  } else if (config.image_channels != config.head.channels) {
    throw ConfigError("identity backbone needs image channels == head channels");
  }
  head_ = AisformerHead::create(params_, config_.head, head_seed);
}

double AisformerModel::feature_scale() const { return backbone_ ? 0.25 : 1.0; }

Tensor AisformerModel::features(const Tensor& image) const {
  if (image.rank() != 3 || image.dim(0) != config_.image_channels) {
    throw DimensionError("model: image " + shape_str(image.shape()) + " does not have " +
                         std::to_string(config_.image_channels) + " channels");
  }
  return backbone_ ? (*backbone_)(image) : image;
}

HeadOutput AisformerModel::forward_roi(const Tensor& features, const BoundingBox& image_box) const {
  return forward_full(features, image_box.scaled(feature_scale()), head_);
}

void AisformerModel::load_values(const ParameterSet& source) {
  for (const auto& [name, t] : params_) {
    const Tensor& src = source.at(name);
    if (src.shape() != t.shape()) {
      throw DimensionError("parameter '" + name + "' has shape " + shape_str(src.shape()) + ", model expects " +
                           shape_str(t.shape()));
    }
    Tensor dst = t;
    std::copy(src.data().begin(), src.data().end(), dst.mutable_data().begin());
  }
}

}  // namespace aisf
