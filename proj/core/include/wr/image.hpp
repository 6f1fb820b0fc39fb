#pragma once

#include <cstdint>
#include <vector>

#include "wr/errors.hpp"

namespace wr {

// 8-bit grayscale raster, row-major.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // width * height

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  bool empty() const { return width <= 0 || height <= 0; }

  std::uint8_t at(int x, int y) const {
    return pixels[static_cast<std::size_t>(y) * width + x];
  }
  std::uint8_t& at(int x, int y) {
    return pixels[static_cast<std::size_t>(y) * width + x];
  }

  bool contains(int x, int y) const {
    return x >= 0 && y >= 0 && x < width && y < height;
  }
};

// Foreground mask; foreground = ink = 1. Same dimensions as the source image.
struct BinaryImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;  // 0 or 1, row-major

  BinaryImage() = default;
  BinaryImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), bits(static_cast<std::size_t>(w) * h, fill) {}

  bool empty() const { return width <= 0 || height <= 0; }

  std::uint8_t at(int x, int y) const {
    return bits[static_cast<std::size_t>(y) * width + x];
  }
  std::uint8_t& at(int x, int y) {
    return bits[static_cast<std::size_t>(y) * width + x];
  }

  std::size_t foreground_count() const {
    std::size_t n = 0;
    for (auto b : bits) n += b;
    return n;
  }

  double foreground_ratio() const {
    if (bits.empty()) return 0.0;
    return static_cast<double>(foreground_count()) / static_cast<double>(bits.size());
  }
};

// Renders the mask as black ink on white background.
inline GrayImage to_gray(const BinaryImage& mask) {
  GrayImage g(mask.width, mask.height, 255);
  for (std::size_t i = 0; i < mask.bits.size(); ++i)
    if (mask.bits[i]) g.pixels[i] = 0;
  return g;
}

}  // namespace wr
