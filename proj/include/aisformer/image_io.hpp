#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "aisformer/tensor.hpp"

namespace aisf {

// 8-bit image, interleaved channels, row-major.
struct Image8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;  // 1 (graymap) or 3 (pixmap)
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const { return pixels[(y * width + x) * channels + c]; }
};

// Binary P5 / P6 with maxval 255. Throws FormatError on malformed input and
// std::runtime_error on IO failure.
Image8 read_pnm(const std::filesystem::path& path);
void write_pnm(const std::filesystem::path& path, const Image8& image);

// [channels x H x W], values scaled to [0, 1].
Tensor image_to_tensor(const Image8& image);

}  // namespace aisf
