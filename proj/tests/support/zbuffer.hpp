#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "aisformer/dataset.hpp"

namespace aisf::testing {

// Per-pixel depth compositing of a scene, independent of the generator.
struct ZBufferTruth {
  std::vector<std::uint8_t> amodal, visible, occluder;  // row-major
};

inline bool inside_shape(const ShapeSpec& s, double x, double y) {
  const double dx = x - s.center_x, dy = y - s.center_y;
  if (s.kind == ShapeKind::rectangle) return std::abs(dx) <= s.half_width && std::abs(dy) <= s.half_height;
  if (s.kind == ShapeKind::ellipse) {
    return (dx * dx) / (s.half_width * s.half_width) + (dy * dy) / (s.half_height * s.half_height) <= 1.0;
  }
  // Triangle with apex (0, -hh) and base corners (+-hw, +hh).
  if (std::abs(dy) > s.half_height) return false;
  return std::abs(dx) <= s.half_width * ((dy + s.half_height) / (2.0 * s.half_height));
}

// Truth for shape `index`: its occluder is restricted to the tight pixel box
// of its own silhouette.
inline ZBufferTruth zbuffer_truth(const SceneSpec& spec, std::size_t index) {
  const std::size_t w = spec.width, h = spec.height;
  ZBufferTruth t{std::vector<std::uint8_t>(w * h), std::vector<std::uint8_t>(w * h), std::vector<std::uint8_t>(w * h)};
  std::vector<std::uint8_t> nearer(w * h);
  std::size_t x0 = w, x1 = 0, y0 = h, y1 = 0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
      int front = std::numeric_limits<int>::max();
      std::size_t front_index = spec.shapes.size();
      for (std::size_t k = 0; k < spec.shapes.size(); ++k) {
        if (inside_shape(spec.shapes[k], px, py) && spec.shapes[k].depth < front) {
          front = spec.shapes[k].depth;
          front_index = k;
        }
      }
      const std::size_t p = y * w + x;
      t.amodal[p] = inside_shape(spec.shapes[index], px, py);
      t.visible[p] = front_index == index;
      nearer[p] = front_index < spec.shapes.size() && spec.shapes[front_index].depth < spec.shapes[index].depth;
      if (t.amodal[p]) {
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
      }
    }
  }
  for (std::size_t y = y0; y <= y1 && y < h; ++y) {
    for (std::size_t x = x0; x <= x1 && x < w; ++x) t.occluder[y * w + x] = nearer[y * w + x];
  }
  return t;
}

}  // namespace aisf::testing
