#pragma once

#include <string>

#include "wr/image.hpp"

namespace wr {

// Decodes PNG/TIFF/JPEG to grayscale. Throws IoError if the file is missing
// or not decodable.
GrayImage load_gray(const std::string& path);

// Encodes as PNG (8-bit grayscale). Parent directory must exist.
// The write is atomic: temp file in the same directory, then rename.
void save_png(const GrayImage& image, const std::string& path);
void save_png(const BinaryImage& mask, const std::string& path);

}  // namespace wr
