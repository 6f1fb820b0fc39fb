#include <doctest.h>

#include <cmath>
#include <cstdlib>

#include "oracles.hpp"
#include "wr/binarize.hpp"
#include "wr/crops.hpp"
#include "wr/rng.hpp"

using namespace wr;

namespace {

// Dark strokes on a noisy bright background, with the exact ink mask kept.
struct NoisyPage {
  GrayImage image;
  BinaryImage truth;
};

NoisyPage make_noisy_page(int width, int height, std::uint64_t seed) {
  NoisyPage page;
  page.image = GrayImage(width, height);
  page.truth = BinaryImage(width, height);
  Rng rng(seed);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double v = 200.0 + rng.normal() * 12.0;
      page.image.at(x, y) = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
    }
  }
  const auto stroke = [&](int x, int y) {
    if (!page.image.contains(x, y)) return;
    const double v = 40.0 + rng.normal() * 12.0;
    page.image.at(x, y) = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
    page.truth.at(x, y) = 1;
  };
  for (int x = 10; x < width - 10; ++x) {
    for (int t = 0; t < 4; ++t) {
      stroke(x, height / 4 + t);
      stroke(x, (3 * height) / 4 + t);
    }
  }
  for (int y = 10; y < height - 10; ++y) {
    for (int t = 0; t < 4; ++t) stroke(width / 2 + t, y);
  }
  return page;
}

}  // namespace

TEST_SUITE("imaging") {

TEST_CASE("otsu separates a perfectly bimodal image") {
  GrayImage img(10, 10);
  for (int i = 0; i < 100; ++i) img.pixels[i] = i < 50 ? 0 : 255;
  const BinaryImage mask = binarize(img, BinarizeMethod::otsu);
  CHECK(mask.foreground_count() == 50);
  // Ink is the darker class.
  CHECK(mask.at(0, 0) == 1);
  CHECK(mask.at(9, 9) == 0);
}

TEST_CASE("constant image binarizes to zero foreground") {
  GrayImage img(8, 8, 77);
  CHECK(binarize(img, BinarizeMethod::otsu).foreground_count() == 0);
  CHECK(otsu_threshold(img) == -1);
}

TEST_CASE("empty image is rejected") {
  CHECK_THROWS_AS(binarize(GrayImage{}, BinarizeMethod::otsu), EmptyImage);
}

TEST_CASE("otsu recovers the ink fraction of a synthetic noisy page") {
  const NoisyPage page = make_noisy_page(160, 120, 99);
  const BinaryImage mask = binarize(page.image, BinarizeMethod::otsu);
  const double truth_ratio = page.truth.foreground_ratio();
  REQUIRE(truth_ratio > 0.0);
  CHECK(mask.foreground_ratio() == doctest::Approx(truth_ratio).epsilon(0.20));
  CHECK(oracle::pixel_f1(mask, page.truth) > 0.9);
}

TEST_CASE("sauvola tracks local contrast on the synthetic page") {
  const NoisyPage page = make_noisy_page(160, 120, 7);
  const BinaryImage mask = binarize(page.image, BinarizeMethod::sauvola);
  CHECK(oracle::pixel_f1(mask, page.truth) > 0.8);
}

TEST_CASE("passthrough is idempotent on binary input") {
  const NoisyPage page = make_noisy_page(64, 64, 3);
  const BinaryImage mask = binarize(page.image, BinarizeMethod::otsu);
  const BinaryImage again = binarize(to_gray(mask), BinarizeMethod::passthrough);
  CHECK(again.bits == mask.bits);
}

TEST_CASE("keypoint patch at the corner pads with background") {
  BinaryImage img(40, 40);
  img.at(0, 0) = 1;
  const SampleCrop crop = extract_keypoint_patch(img, 0, 0);
  CHECK(crop.pixels.width == kKeypointPatchSize);
  CHECK(crop.pixels.height == kKeypointPatchSize);
  // The center of the patch is pixel (16,16) and carries the ink pixel.
  CHECK(crop.pixels.at(16, 16) == 0);
  // Everything left/above the center came from outside the image.
  CHECK(crop.pixels.at(0, 0) == 255);
  CHECK(crop.pixels.at(15, 16) == 255);
}

TEST_CASE("keypoint patch on background has zero foreground") {
  BinaryImage img(64, 64);
  img.at(2, 2) = 1;
  const SampleCrop crop = extract_keypoint_patch(img, 48, 48);
  for (const auto p : crop.pixels.pixels) CHECK(p == 255);
}

TEST_CASE("keypoint patch on a stroke sees ink") {
  BinaryImage img(64, 64);
  for (int x = 8; x < 56; ++x)
    for (int t = 0; t < 3; ++t) img.at(x, 30 + t) = 1;
  const SampleCrop crop = extract_keypoint_patch(img, 32, 31);
  int ink = 0;
  for (const auto p : crop.pixels.pixels) ink += p < 128 ? 1 : 0;
  CHECK(ink > 0);
}

TEST_CASE("keypoint center outside the image is rejected") {
  BinaryImage img(16, 16);
  CHECK_THROWS_AS(extract_keypoint_patch(img, -1, 4), InvalidParams);
  CHECK_THROWS_AS(extract_keypoint_patch(img, 4, 16), InvalidParams);
}

TEST_CASE("64x64 bbox crops without resampling") {
  BinaryImage img(128, 128);
  for (int y = 20; y < 84; ++y)
    for (int x = 30; x < 94; ++x)
      if ((x + y) % 3 == 0) img.at(x, y) = 1;
  CharacterAnnotation ann;
  ann.label = CharLabel::alpha;
  ann.bbox = {30, 20, 64, 64};
  const SampleCrop crop = extract_character_crop(img, ann);
  REQUIRE(crop.pixels.width == kCharacterCropSize);
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      const bool ink = img.at(30 + x, 20 + y) != 0;
      REQUIRE(crop.pixels.at(x, y) == (ink ? 0 : 255));
    }
  }
}

TEST_CASE("32x64 bbox pads 16-pixel bands left and right") {
  BinaryImage img(128, 128);
  for (int y = 10; y < 74; ++y)
    for (int x = 40; x < 72; ++x) img.at(x, y) = 1;
  CharacterAnnotation ann;
  ann.bbox = {40, 10, 32, 64};
  const SampleCrop crop = extract_character_crop(img, ann);
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 16; ++x) {
      REQUIRE(crop.pixels.at(x, y) == 255);
      REQUIRE(crop.pixels.at(63 - x, y) == 255);
    }
    for (int x = 16; x < 48; ++x) REQUIRE(crop.pixels.at(x, y) == 0);
  }
}

TEST_CASE("wide bbox downsampling preserves the ink aspect ratio") {
  BinaryImage img(200, 100);
  // A 80x30 solid ink block inside a 100x50 bbox.
  for (int y = 20; y < 50; ++y)
    for (int x = 30; x < 110; ++x) img.at(x, y) = 1;
  CharacterAnnotation ann;
  ann.bbox = {20, 10, 100, 50};
  const SampleCrop crop = extract_character_crop(img, ann);

  int min_x = 64, max_x = -1, min_y = 64, max_y = -1;
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      if (crop.pixels.at(x, y) < 128) {
        min_x = std::min(min_x, x);
        max_x = std::max(max_x, x);
        min_y = std::min(min_y, y);
        max_y = std::max(max_y, y);
      }
    }
  }
  REQUIRE(max_x >= min_x);
  const double aspect_before = 80.0 / 30.0;
  const double aspect_after =
      static_cast<double>(max_x - min_x + 1) / (max_y - min_y + 1);
  CHECK(std::abs(aspect_after / aspect_before - 1.0) < 0.05);
}

TEST_CASE("degenerate boxes are rejected, partial overlap is clamped") {
  BinaryImage img(50, 50, 1);
  CharacterAnnotation outside;
  outside.bbox = {60, 60, 10, 10};
  CHECK_THROWS_AS(extract_character_crop(img, outside), DegenerateBox);

  bool clamped = false;
  const BBox b = clamp_bbox({-5, -5, 20, 20}, 50, 50, &clamped);
  CHECK(clamped);
  CHECK(b.x == 0);
  CHECK(b.y == 0);
  CHECK(b.width == 15);
  CHECK(b.height == 15);

  CharacterAnnotation partial;
  partial.bbox = {-5, -5, 20, 20};
  CHECK_NOTHROW(extract_character_crop(img, partial));
}

TEST_CASE("crops are bit-identical across repeated extraction") {
  const NoisyPage page = make_noisy_page(96, 96, 21);
  CharacterAnnotation ann;
  ann.bbox = {15, 10, 50, 70};
  const SampleCrop a = extract_character_crop(page.image, ann);
  const SampleCrop b = extract_character_crop(page.image, ann);
  CHECK(a.pixels.pixels == b.pixels.pixels);
}

}  // TEST_SUITE
