#include "aisformer/masks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "aisformer/errors.hpp"

namespace aisf {

namespace {

void require_same_size(const Bitmap& a, const Bitmap& b, const char* op) {
  if (a.height != b.height || a.width != b.width) {
    throw InputError(std::string(op) + ": mask sizes differ (" + std::to_string(a.height) + "x" +
                     std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" + std::to_string(b.width) + ")");
  }
}

template <typename F>
Bitmap combine(const Bitmap& a, const Bitmap& b, const char* op, F f) {
  require_same_size(a, b, op);
  Bitmap out = Bitmap::zeros(a.height, a.width);
  for (std::size_t i = 0; i < out.bits.size(); ++i) out.bits[i] = f(a.bits[i] != 0, b.bits[i] != 0) ? 1 : 0;
  return out;
}

// Zero outside the image, plain bilinear inside.
double bilinear_zero_pad(const Bitmap& m, double v, double u) {
  const double fy = std::floor(v), fx = std::floor(u);
  const double ly = v - fy, lx = u - fx;
  auto px = [&](double y, double x) -> double {
    if (y < 0 || x < 0 || y >= static_cast<double>(m.height) || x >= static_cast<double>(m.width)) return 0.0;
    return m.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
  };
  return (1 - ly) * (1 - lx) * px(fy, fx) + (1 - ly) * lx * px(fy, fx + 1) + ly * (1 - lx) * px(fy + 1, fx) +
         ly * lx * px(fy + 1, fx + 1);
}

}  // namespace

std::size_t Bitmap::area() const {
  return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](std::uint8_t b) { return b != 0; }));
}

Bitmap mask_and(const Bitmap& a, const Bitmap& b) {
  return combine(a, b, "mask_and", [](bool x, bool y) { return x && y; });
}
Bitmap mask_or(const Bitmap& a, const Bitmap& b) {
  return combine(a, b, "mask_or", [](bool x, bool y) { return x || y; });
}
Bitmap mask_and_not(const Bitmap& a, const Bitmap& b) {
  return combine(a, b, "mask_and_not", [](bool x, bool y) { return x && !y; });
}

bool mask_subset(const Bitmap& inner, const Bitmap& outer) {
  require_same_size(inner, outer, "mask_subset");
  for (std::size_t i = 0; i < inner.bits.size(); ++i) {
    if (inner.bits[i] && !outer.bits[i]) return false;
  }
  return true;
}

Bitmap mask_clip(const Bitmap& m, const BoundingBox& box) {
  Bitmap out = Bitmap::zeros(m.height, m.width);
  for (std::size_t y = 0; y < m.height; ++y) {
    const double cy = static_cast<double>(y) + 0.5;
    if (cy < box.y0 || cy > box.y1) continue;
    for (std::size_t x = 0; x < m.width; ++x) {
      const double cx = static_cast<double>(x) + 0.5;
      if (cx >= box.x0 && cx <= box.x1) out.bits[y * m.width + x] = m.at(y, x);
    }
  }
  return out;
}

BoundingBox mask_bounds(const Bitmap& m) {
  std::size_t x0 = m.width, y0 = m.height, x1 = 0, y1 = 0;
  bool any = false;
  for (std::size_t y = 0; y < m.height; ++y) {
    for (std::size_t x = 0; x < m.width; ++x) {
      if (!m.at(y, x)) continue;
      any = true;
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x + 1);
      y1 = std::max(y1, y + 1);
    }
  }
  if (!any) return {};
  return {static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x1), static_cast<double>(y1)};
}

std::size_t RleMask::area() const {
  std::size_t a = 0;
  for (std::size_t i = 1; i < counts.size(); i += 2) a += counts[i];
  return a;
}

RleMask rle_encode(const Bitmap& m) {
  RleMask r{m.height, m.width, {}};
  std::uint8_t current = 0;
  std::uint32_t run = 0;
  for (std::size_t x = 0; x < m.width; ++x) {
    for (std::size_t y = 0; y < m.height; ++y) {
      const std::uint8_t v = m.at(y, x) ? 1 : 0;
      if (v != current) {
        r.counts.push_back(run);
        run = 0;
        current = v;
      }
      ++run;
    }
  }
  r.counts.push_back(run);
  return r;
}

void rle_validate(const RleMask& r) {
  const std::uint64_t total = std::accumulate(r.counts.begin(), r.counts.end(), std::uint64_t{0});
  if (total != static_cast<std::uint64_t>(r.height) * r.width) {
    throw FormatError("RLE counts sum to " + std::to_string(total) + " but the mask is " + std::to_string(r.height) +
                      "x" + std::to_string(r.width));
  }
}

Bitmap rle_decode(const RleMask& r) {
  rle_validate(r);
  Bitmap m = Bitmap::zeros(r.height, r.width);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < r.counts.size(); ++i) {
    const bool on = (i % 2) == 1;
    for (std::uint32_t k = 0; k < r.counts[i]; ++k, ++pos) {
      if (on) m.bits[(pos % r.height) * r.width + pos / r.height] = 1;
    }
  }
  return m;
}

double mask_iou(const RleMask& a, const RleMask& b) {
  if (a.height != b.height || a.width != b.width) {
    throw InputError("mask_iou: sizes differ (" + std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " +
                     std::to_string(b.height) + "x" + std::to_string(b.width) + ")");
  }
  rle_validate(a);
  rle_validate(b);
  std::size_t ia = 0, ib = 0;
  std::uint64_t ra = a.counts.empty() ? 0 : a.counts[0], rb = b.counts.empty() ? 0 : b.counts[0];
  std::uint64_t inter = 0, uni = 0;
  const std::uint64_t total = static_cast<std::uint64_t>(a.height) * a.width;
  std::uint64_t pos = 0;
  while (pos < total) {
    // Skip exhausted runs (zero-length runs included).
    while (ra == 0 && ia + 1 < a.counts.size()) ra = a.counts[++ia];
    while (rb == 0 && ib + 1 < b.counts.size()) rb = b.counts[++ib];
    const std::uint64_t step = std::min(ra, rb);
    const bool va = ia % 2 == 1, vb = ib % 2 == 1;
    if (va && vb) inter += step;
    if (va || vb) uni += step;
    ra -= step;
    rb -= step;
    pos += step;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

Bitmap resample_to_box(const Bitmap& m, const BoundingBox& box, std::size_t h, std::size_t w) {
  if (!box.valid() || h == 0 || w == 0) throw InputError("resample_to_box: degenerate box or output size");
  Bitmap out = Bitmap::zeros(h, w);
  const double bh = box.height() / static_cast<double>(h), bw = box.width() / static_cast<double>(w);
  for (std::size_t i = 0; i < h; ++i) {
    const double v = box.y0 + (static_cast<double>(i) + 0.5) * bh - 0.5;
    for (std::size_t j = 0; j < w; ++j) {
      const double u = box.x0 + (static_cast<double>(j) + 0.5) * bw - 0.5;
      out.set(i, j, bilinear_zero_pad(m, v, u) >= 0.5);
    }
  }
  return out;
}

Bitmap paste_mask(const std::vector<double>& probs, std::size_t h, std::size_t w, const BoundingBox& box,
                  std::size_t image_height, std::size_t image_width, double threshold) {
  if (!box.valid() || probs.size() != h * w || h == 0 || w == 0) {
    throw InputError("paste_mask: degenerate box or probability map size");
  }
  Bitmap out = Bitmap::zeros(image_height, image_width);
  for (std::size_t y = 0; y < image_height; ++y) {
    const double cy = static_cast<double>(y) + 0.5;
    if (cy < box.y0 || cy > box.y1) continue;
    const double v = std::clamp((cy - box.y0) / box.height() * static_cast<double>(h) - 0.5, 0.0, static_cast<double>(h - 1));
    const auto y_lo = static_cast<std::size_t>(v);
    const std::size_t y_hi = std::min(y_lo + 1, h - 1);
    const double ly = v - static_cast<double>(y_lo);
    for (std::size_t x = 0; x < image_width; ++x) {
      const double cx = static_cast<double>(x) + 0.5;
      if (cx < box.x0 || cx > box.x1) continue;
      const double u =
          std::clamp((cx - box.x0) / box.width() * static_cast<double>(w) - 0.5, 0.0, static_cast<double>(w - 1));
      const auto x_lo = static_cast<std::size_t>(u);
      const std::size_t x_hi = std::min(x_lo + 1, w - 1);
      const double lx = u - static_cast<double>(x_lo);
      const double p = (1 - ly) * (1 - lx) * probs[y_lo * w + x_lo] + (1 - ly) * lx * probs[y_lo * w + x_hi] +
                       ly * (1 - lx) * probs[y_hi * w + x_lo] + ly * lx * probs[y_hi * w + x_hi];
      out.set(y, x, p >= threshold);
    }
  }
  return out;
}

}  // namespace aisf
