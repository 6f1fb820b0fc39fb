#include "wr/crops.hpp"

#include <algorithm>
#include <cmath>

#include "wr/log.hpp"

namespace wr {

BBox clamp_bbox(const BBox& bbox, int width, int height, bool* clamped) {
  const int x0 = std::max(0, bbox.x);
  const int y0 = std::max(0, bbox.y);
  const int x1 = std::min(width, bbox.x + bbox.width);
  const int y1 = std::min(height, bbox.y + bbox.height);
  BBox out{x0, y0, std::max(0, x1 - x0), std::max(0, y1 - y0)};
  if (clamped)
    *clamped = out.x != bbox.x || out.y != bbox.y || out.width != bbox.width ||
               out.height != bbox.height;
  return out;
}

SampleCrop extract_keypoint_patch(const BinaryImage& image, int cx, int cy) {
  if (image.empty()) throw EmptyImage("extract_keypoint_patch: empty image");
  if (cx < 0 || cy < 0 || cx >= image.width || cy >= image.height)
    throw InvalidParams("extract_keypoint_patch: center outside image");

  SampleCrop crop;
  crop.kind = CropKind::keypoint_patch;
  crop.binary_source = true;
  crop.origin_x = cx;
  crop.origin_y = cy;
  crop.pixels = GrayImage(kKeypointPatchSize, kKeypointPatchSize, 255);
  const int half = kKeypointPatchSize / 2;
  for (int py = 0; py < kKeypointPatchSize; ++py) {
    const int sy = cy - half + py;
    if (sy < 0 || sy >= image.height) continue;
    for (int px = 0; px < kKeypointPatchSize; ++px) {
      const int sx = cx - half + px;
      if (sx < 0 || sx >= image.width) continue;
      crop.pixels.at(px, py) = image.at(sx, sy) ? 0 : 255;
    }
  }
  return crop;
}

namespace {

// Pads `content` (sw x sh, background = 255) to a centered square,
// then resamples to `size` x `size`.
GrayImage square_and_resize(const GrayImage& content, int size, bool nearest) {
  const int sw = content.width, sh = content.height;
  const int side = std::max(sw, sh);
  GrayImage square(side, side, 255);
  const int ox = (side - sw) / 2;
  const int oy = (side - sh) / 2;
  for (int y = 0; y < sh; ++y)
    for (int x = 0; x < sw; ++x) square.at(x + ox, y + oy) = content.at(x, y);

  if (side == size) return square;

  GrayImage out(size, size, 255);
  const double scale = static_cast<double>(side) / size;
  if (nearest) {
    for (int y = 0; y < size; ++y) {
      int sy = std::min(side - 1, static_cast<int>((y + 0.5) * scale));
      for (int x = 0; x < size; ++x) {
        int sx = std::min(side - 1, static_cast<int>((x + 0.5) * scale));
        out.at(x, y) = square.at(sx, sy);
      }
    }
  } else {
    for (int y = 0; y < size; ++y) {
      const double fy = (y + 0.5) * scale - 0.5;
      const int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, side - 1);
      const int y1 = std::min(y0 + 1, side - 1);
      const double wy = std::clamp(fy - y0, 0.0, 1.0);
      for (int x = 0; x < size; ++x) {
        const double fx = (x + 0.5) * scale - 0.5;
        const int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, side - 1);
        const int x1 = std::min(x0 + 1, side - 1);
        const double wx = std::clamp(fx - x0, 0.0, 1.0);
        const double v = (1 - wy) * ((1 - wx) * square.at(x0, y0) + wx * square.at(x1, y0)) +
                         wy * ((1 - wx) * square.at(x0, y1) + wx * square.at(x1, y1));
        out.at(x, y) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
      }
    }
  }
  return out;
}

SampleCrop make_character_crop(const GrayImage& content, const BBox& clamped,
                               bool binary_source) {
  SampleCrop crop;
  crop.kind = CropKind::character;
  crop.binary_source = binary_source;
  crop.origin_x = clamped.x + clamped.width / 2.0;
  crop.origin_y = clamped.y + clamped.height / 2.0;
  crop.pixels = square_and_resize(content, kCharacterCropSize, binary_source);
  return crop;
}

}  // namespace

SampleCrop extract_character_crop(const BinaryImage& image,
                                  const CharacterAnnotation& ann) {
  if (image.empty()) throw EmptyImage("extract_character_crop: empty image");
  bool clamped = false;
  const BBox box = clamp_bbox(ann.bbox, image.width, image.height, &clamped);
  if (clamped)
    log::info("character bbox clamped to image bounds (" + to_string(ann.label) + ")");
  if (box.width <= 0 || box.height <= 0)
    throw DegenerateBox("character bbox has zero area after clamping");

  GrayImage content(box.width, box.height, 255);
  for (int y = 0; y < box.height; ++y)
    for (int x = 0; x < box.width; ++x)
      content.at(x, y) = image.at(box.x + x, box.y + y) ? 0 : 255;
  return make_character_crop(content, box, /*binary_source=*/true);
}

SampleCrop extract_character_crop(const GrayImage& image,
                                  const CharacterAnnotation& ann) {
  if (image.empty()) throw EmptyImage("extract_character_crop: empty image");
  bool clamped = false;
  const BBox box = clamp_bbox(ann.bbox, image.width, image.height, &clamped);
  if (clamped)
    log::info("character bbox clamped to image bounds (" + to_string(ann.label) + ")");
  if (box.width <= 0 || box.height <= 0)
    throw DegenerateBox("character bbox has zero area after clamping");

  GrayImage content(box.width, box.height, 255);
  for (int y = 0; y < box.height; ++y)
    for (int x = 0; x < box.width; ++x)
      content.at(x, y) = image.at(box.x + x, box.y + y);
  return make_character_crop(content, box, /*binary_source=*/false);
}

}  // namespace wr
