#pragma once

#include <cstdint>
#include <vector>

#include "aisformer/roi_encoding.hpp"

namespace aisf {

// Binary mask, row-major, one byte (0 or 1) per pixel.
struct Bitmap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> bits;

  static Bitmap zeros(std::size_t height, std::size_t width) { return {height, width, std::vector<std::uint8_t>(height * width, 0)}; }

  std::uint8_t at(std::size_t y, std::size_t x) const { return bits[y * width + x]; }
  void set(std::size_t y, std::size_t x, bool v) { bits[y * width + x] = v ? 1 : 0; }
  std::size_t area() const;
  bool empty() const { return area() == 0; }
  bool operator==(const Bitmap&) const = default;
};

Bitmap mask_and(const Bitmap& a, const Bitmap& b);
Bitmap mask_or(const Bitmap& a, const Bitmap& b);
Bitmap mask_and_not(const Bitmap& a, const Bitmap& b);
bool mask_subset(const Bitmap& inner, const Bitmap& outer);
// Zeroes everything outside the box (pixels whose centers lie outside).
Bitmap mask_clip(const Bitmap& m, const BoundingBox& box);
// Tight box around the set pixels; invalid (all zero) box when empty.
BoundingBox mask_bounds(const Bitmap& m);

// COCO-style uncompressed RLE: alternating 0/1 run lengths over the
// column-major pixel order, starting with a (possibly empty) 0-run.
struct RleMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint32_t> counts;

  std::size_t area() const;
  bool operator==(const RleMask&) const = default;
};

RleMask rle_encode(const Bitmap& m);
// Throws FormatError when the counts do not sum to height * width.
Bitmap rle_decode(const RleMask& r);
void rle_validate(const RleMask& r);

// |a & b| / |a | b| computed on runs; 0 when both are empty. Throws
// InputError on a size mismatch.
double mask_iou(const RleMask& a, const RleMask& b);

// Resamples the box region of `m` to h x w: bilinear value at every bin
// center (zero outside the image), thresholded at 0.5.
Bitmap resample_to_box(const Bitmap& m, const BoundingBox& box, std::size_t h, std::size_t w);

// Inverse of the above for soft predictions: each image pixel whose center
// lies in the box samples `probs` (h x w, row-major) bilinearly with border
// clamping; pixels with value >= threshold are set.
Bitmap paste_mask(const std::vector<double>& probs, std::size_t h, std::size_t w, const BoundingBox& box,
                  std::size_t image_height, std::size_t image_width, double threshold = 0.5);

}  // namespace aisf
