#include "wr/binarize.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace wr {

std::string to_string(BinarizeMethod method) {
  switch (method) {
    case BinarizeMethod::otsu: return "otsu";
    case BinarizeMethod::sauvola: return "sauvola";
    case BinarizeMethod::passthrough: return "passthrough";
  }
  return "otsu";
}

BinarizeMethod parse_binarize_method(const std::string& name) {
  if (name == "otsu") return BinarizeMethod::otsu;
  if (name == "sauvola") return BinarizeMethod::sauvola;
  if (name == "passthrough") return BinarizeMethod::passthrough;
  throw ParseError("unknown binarization method \"" + name + "\"");
}

int otsu_threshold(const GrayImage& image) {
  std::array<std::int64_t, 256> hist{};
  for (auto p : image.pixels) ++hist[p];
  const std::int64_t total = static_cast<std::int64_t>(image.pixels.size());

  std::int64_t sum_all = 0;
  for (int v = 0; v < 256; ++v) sum_all += static_cast<std::int64_t>(v) * hist[v];

  std::int64_t w0 = 0;
  std::int64_t sum0 = 0;
  double best_var = 0.0;
  int best_t = -1;
  // Threshold t puts values <= t into the dark (ink) class.
  for (int t = 0; t < 255; ++t) {
    w0 += hist[t];
    if (w0 == 0) continue;
    const std::int64_t w1 = total - w0;
    if (w1 == 0) break;
    sum0 += static_cast<std::int64_t>(t) * hist[t];
    const double mean0 = static_cast<double>(sum0) / static_cast<double>(w0);
    const double mean1 = static_cast<double>(sum_all - sum0) / static_cast<double>(w1);
    const double var = static_cast<double>(w0) * static_cast<double>(w1) *
                       (mean0 - mean1) * (mean0 - mean1);
    if (var > best_var) {
      best_var = var;
      best_t = t;
    }
  }
  return best_t;  // -1 when no split improves on a single class
}

namespace {

BinaryImage binarize_otsu(const GrayImage& image) {
  BinaryImage mask(image.width, image.height);
  const int t = otsu_threshold(image);
  if (t < 0) return mask;  // constant image: all background
  for (std::size_t i = 0; i < image.pixels.size(); ++i)
    mask.bits[i] = image.pixels[i] <= t ? 1 : 0;
  return mask;
}

BinaryImage binarize_sauvola(const GrayImage& image, const SauvolaParams& p) {
  const int w = image.width, h = image.height;
  const int half = p.window / 2;

  // Integral images of values and squares, (w+1) x (h+1).
  std::vector<double> integ(static_cast<std::size_t>(w + 1) * (h + 1), 0.0);
  std::vector<double> integ2(static_cast<std::size_t>(w + 1) * (h + 1), 0.0);
  for (int y = 0; y < h; ++y) {
    double row = 0.0, row2 = 0.0;
    for (int x = 0; x < w; ++x) {
      const double v = image.at(x, y);
      row += v;
      row2 += v * v;
      const std::size_t idx = static_cast<std::size_t>(y + 1) * (w + 1) + (x + 1);
      integ[idx] = integ[idx - (w + 1)] + row;
      integ2[idx] = integ2[idx - (w + 1)] + row2;
    }
  }
  auto window_sum = [&](const std::vector<double>& ii, int x0, int y0, int x1, int y1) {
    // inclusive box [x0,x1] x [y0,y1]
    const std::size_t stride = static_cast<std::size_t>(w + 1);
    return ii[static_cast<std::size_t>(y1 + 1) * stride + (x1 + 1)] -
           ii[static_cast<std::size_t>(y0) * stride + (x1 + 1)] -
           ii[static_cast<std::size_t>(y1 + 1) * stride + x0] +
           ii[static_cast<std::size_t>(y0) * stride + x0];
  };

  BinaryImage mask(w, h);
  for (int y = 0; y < h; ++y) {
    const int y0 = std::max(0, y - half), y1 = std::min(h - 1, y + half);
    for (int x = 0; x < w; ++x) {
      const int x0 = std::max(0, x - half), x1 = std::min(w - 1, x + half);
      const double n = static_cast<double>(x1 - x0 + 1) * (y1 - y0 + 1);
      const double mean = window_sum(integ, x0, y0, x1, y1) / n;
      const double var = window_sum(integ2, x0, y0, x1, y1) / n - mean * mean;
      const double sd = var > 0.0 ? std::sqrt(var) : 0.0;
      const double t = mean * (1.0 + p.k * (sd / p.r - 1.0));
      mask.at(x, y) = image.at(x, y) <= t ? 1 : 0;
    }
  }
  return mask;
}

BinaryImage binarize_passthrough(const GrayImage& image) {
  BinaryImage mask(image.width, image.height);
  for (std::size_t i = 0; i < image.pixels.size(); ++i)
    mask.bits[i] = image.pixels[i] < 128 ? 1 : 0;
  return mask;
}

}  // namespace

BinaryImage binarize(const GrayImage& image, BinarizeMethod method,
                     const SauvolaParams& sauvola) {
  if (image.empty()) throw EmptyImage("binarize: empty image");
  switch (method) {
    case BinarizeMethod::otsu: return binarize_otsu(image);
    case BinarizeMethod::sauvola:
      if (sauvola.window < 1 || sauvola.window % 2 == 0)
        throw InvalidParams("sauvola window must be odd and positive");
      return binarize_sauvola(image, sauvola);
    case BinarizeMethod::passthrough: return binarize_passthrough(image);
  }
  throw InvalidParams("binarize: bad method");
}

}  // namespace wr
