#pragma once

#include <string>

#include "wr/corpus.hpp"
#include "wr/image.hpp"

namespace wr {

inline constexpr int kKeypointPatchSize = 32;
inline constexpr int kCharacterCropSize = 64;

enum class CropKind : int { keypoint_patch = 0, character = 1 };

// One sampling unit image. Pixels are grayscale (binary sources render as
// 0 ink / 255 background). keypoint_patch crops are 32x32, character crops
// 64x64.
struct SampleCrop {
  std::string source_doc;
  CropKind kind = CropKind::keypoint_patch;
  GrayImage pixels;
  double origin_x = 0.0;  // keypoint center, or bbox center for characters
  double origin_y = 0.0;
  bool binary_source = false;
};

// 32x32 crop centered at (cx, cy); area outside the image pads with
// background. The center lands at pixel index 16. Throws InvalidParams if
// the center is outside the image.
SampleCrop extract_keypoint_patch(const BinaryImage& image, int cx, int cy);

// Clamps the bbox to the image (clamping logged), pads the content with
// background to a centered square, and resamples to 64x64. Binary input uses
// nearest-neighbor, grayscale uses bilinear. Throws DegenerateBox when the
// clamped bbox has zero area.
SampleCrop extract_character_crop(const BinaryImage& image,
                                  const CharacterAnnotation& ann);
SampleCrop extract_character_crop(const GrayImage& image,
                                  const CharacterAnnotation& ann);

// Clamp helper shared with annotation handling; returns a bbox fully inside
// width x height. Zero-area results are reported via DegenerateBox by the
// crop functions.
BBox clamp_bbox(const BBox& bbox, int width, int height, bool* clamped = nullptr);

}  // namespace wr
