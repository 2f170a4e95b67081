#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "aisformer/roi_encoding.hpp"

namespace aisf::testing {

// Bilinear read at continuous position (y, x) with pixel centers at
// integer + 0.5. Outside [0, H] x [0, W] reads 0; inside, neighbors beyond
// the border repeat the edge pixel.
inline double bilinear_oracle(const Tensor& fm, std::size_t c, double y, double x) {
  const auto h = static_cast<long>(fm.dim(1)), w = static_cast<long>(fm.dim(2));
  if (y < 0.0 || x < 0.0 || y > static_cast<double>(h) || x > static_cast<double>(w)) return 0.0;
  auto pixel = [&](long r, long q) {
    r = std::clamp(r, 0L, h - 1);
    q = std::clamp(q, 0L, w - 1);
    return fm.value(c * static_cast<std::size_t>(h * w) + static_cast<std::size_t>(r * w + q));
  };
  const double py = y - 0.5, px = x - 0.5;
  const long r0 = static_cast<long>(std::floor(py)), q0 = static_cast<long>(std::floor(px));
  const double fy = py - static_cast<double>(r0), fx = px - static_cast<double>(q0);
  return (1 - fy) * ((1 - fx) * pixel(r0, q0) + fx * pixel(r0, q0 + 1)) +
         fy * ((1 - fx) * pixel(r0 + 1, q0) + fx * pixel(r0 + 1, q0 + 1));
}

inline std::vector<double> roi_align_oracle(const Tensor& fm, const BoundingBox& box, std::size_t oh, std::size_t ow,
                                            std::size_t s) {
  std::vector<double> out;
  const double bh = (box.y1 - box.y0) / static_cast<double>(oh), bw = (box.x1 - box.x0) / static_cast<double>(ow);
  for (std::size_t c = 0; c < fm.dim(0); ++c) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        double acc = 0.0;
        for (std::size_t a = 0; a < s; ++a) {
          for (std::size_t b = 0; b < s; ++b) {
            const double y = box.y0 + bh * (static_cast<double>(i) + (static_cast<double>(a) + 0.5) / s);
            const double x = box.x0 + bw * (static_cast<double>(j) + (static_cast<double>(b) + 0.5) / s);
            acc += bilinear_oracle(fm, c, y, x);
          }
        }
        out.push_back(acc / static_cast<double>(s * s));
      }
    }
  }
  return out;
}

// Transposed 2x2 stride-2 convolution by scattering every input pixel.
inline std::vector<double> deconv_oracle(const Tensor& x, const Tensor& w, const Tensor& b) {
  const std::size_t ci = x.dim(0), h = x.dim(1), wd = x.dim(2), co = w.dim(1);
  std::vector<double> out(co * 4 * h * wd, 0.0);
  for (std::size_t o = 0; o < co; ++o) {
    for (std::size_t p = 0; p < 4 * h * wd; ++p) out[o * 4 * h * wd + p] = b.value(o);
  }
  for (std::size_t c = 0; c < ci; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t xx = 0; xx < wd; ++xx) {
        for (std::size_t o = 0; o < co; ++o) {
          for (std::size_t ky = 0; ky < 2; ++ky) {
            for (std::size_t kx = 0; kx < 2; ++kx) {
              out[o * 4 * h * wd + (2 * y + ky) * 2 * wd + 2 * xx + kx] +=
                  x.value((c * h + y) * wd + xx) * w.value(((c * co + o) * 2 + ky) * 2 + kx);
            }
          }
        }
      }
    }
  }
  return out;
}

}  // namespace aisf::testing
