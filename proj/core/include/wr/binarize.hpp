#pragma once

#include <string>

#include "wr/image.hpp"

namespace wr {

enum class BinarizeMethod { otsu, sauvola, passthrough };

std::string to_string(BinarizeMethod method);
BinarizeMethod parse_binarize_method(const std::string& name);

// Sauvola parameters used for character crops. Window must be odd.
struct SauvolaParams {
  int window = 31;
  double k = 0.2;
  double r = 128.0;
};

// Produces the ink mask of a grayscale image. Ink is the darker class.
//  otsu        global histogram threshold; a single-class histogram yields
//              an all-background mask.
//  sauvola     local threshold t = m * (1 + k * (s / r - 1)) over a square
//              window clamped at the borders.
//  passthrough source is already binary; pixels below 128 become foreground.
// Throws EmptyImage on a 0x0 input.
BinaryImage binarize(const GrayImage& image, BinarizeMethod method,
                     const SauvolaParams& sauvola = {});

// Otsu threshold over the histogram; returns -1 for a single-class histogram.
int otsu_threshold(const GrayImage& image);

}  // namespace wr
