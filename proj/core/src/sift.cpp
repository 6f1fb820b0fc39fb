#include "wr/sift.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "wr/errors.hpp"

namespace wr {

namespace {

constexpr int kBorder = 5;          // extrema scan margin, pixels
constexpr int kMaxRefineSteps = 5;  // subpixel iterations
constexpr int kOriBins = 36;
constexpr double kOriSigmaFactor = 1.5;
constexpr double kOriRadiusFactor = 3.0 * kOriSigmaFactor;
constexpr int kDescrWidth = 4;   // spatial bins per axis
constexpr int kDescrOriBins = 8;
constexpr double kDescrBinScale = 3.0;  // bin width in units of sigma
constexpr double kDescrClip = 0.2;

struct FloatImage {
  int width = 0;
  int height = 0;
  std::vector<float> v;

  FloatImage() = default;
  FloatImage(int w, int h) : width(w), height(h), v(static_cast<std::size_t>(w) * h) {}

  float at(int x, int y) const { return v[static_cast<std::size_t>(y) * width + x]; }
  float& at(int x, int y) { return v[static_cast<std::size_t>(y) * width + x]; }
};

FloatImage to_float(const GrayImage& img) {
  FloatImage out(img.width, img.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    out.v[i] = static_cast<float>(img.pixels[i]) * (1.0f / 255.0f);
  return out;
}

std::vector<float> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
  std::vector<float> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double w = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = static_cast<float>(w);
    sum += w;
  }
  for (auto& w : k) w = static_cast<float>(w / sum);
  return k;
}

// Separable convolution with clamped borders.
FloatImage gaussian_blur(const FloatImage& src, double sigma) {
  if (sigma <= 0.0) return src;
  const auto kernel = gaussian_kernel(sigma);
  const int radius = (static_cast<int>(kernel.size()) - 1) / 2;
  const int w = src.width, h = src.height;

  FloatImage tmp(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int i = -radius; i <= radius; ++i) {
        const int sx = std::clamp(x + i, 0, w - 1);
        acc += kernel[static_cast<std::size_t>(i + radius)] * src.at(sx, y);
      }
      tmp.at(x, y) = acc;
    }
  }
  FloatImage out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int i = -radius; i <= radius; ++i) {
        const int sy = std::clamp(y + i, 0, h - 1);
        acc += kernel[static_cast<std::size_t>(i + radius)] * tmp.at(x, sy);
      }
      out.at(x, y) = acc;
    }
  }
  return out;
}

FloatImage halve(const FloatImage& src) {
  FloatImage out(std::max(1, src.width / 2), std::max(1, src.height / 2));
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) out.at(x, y) = src.at(2 * x, 2 * y);
  return out;
}

}  // namespace

struct SiftEngine::Impl {
  SiftParams params;
  int octaves = 0;
  int levels = 0;  // scales_per_octave + 3 gaussian levels
  std::vector<std::vector<FloatImage>> gauss;  // [octave][level]
  std::vector<double> level_sigma;             // sigma at octave 0, per level

  explicit Impl(const GrayImage& image, const SiftParams& p) : params(p) {
    if (image.empty()) throw EmptyImage("sift: empty image");
    const int s = params.scales_per_octave;
    levels = s + 3;

    const int min_dim = std::min(image.width, image.height);
    octaves = 1;
    while (octaves < params.max_octaves && (min_dim >> octaves) >= 2 * kBorder + 2)
      ++octaves;

    level_sigma.resize(static_cast<std::size_t>(levels));
    for (int i = 0; i < levels; ++i)
      level_sigma[static_cast<std::size_t>(i)] =
          params.base_sigma * std::pow(2.0, static_cast<double>(i) / s);

    gauss.resize(static_cast<std::size_t>(octaves));
    FloatImage base = to_float(image);
    {
      const double target = params.base_sigma;
      const double cur = params.assumed_blur;
      const double delta = std::sqrt(std::max(target * target - cur * cur, 0.01));
      base = gaussian_blur(base, delta);
    }
    for (int o = 0; o < octaves; ++o) {
      auto& level_set = gauss[static_cast<std::size_t>(o)];
      level_set.reserve(static_cast<std::size_t>(levels));
      level_set.push_back(o == 0 ? std::move(base)
                                 : halve(gauss[static_cast<std::size_t>(o - 1)]
                                             [static_cast<std::size_t>(s)]));
      for (int i = 1; i < levels; ++i) {
        const double prev = level_sigma[static_cast<std::size_t>(i - 1)];
        const double next = level_sigma[static_cast<std::size_t>(i)];
        const double delta = std::sqrt(next * next - prev * prev);
        level_set.push_back(gaussian_blur(level_set.back(), delta));
      }
    }
  }

  const FloatImage& level(int octave, int idx) const {
    return gauss[static_cast<std::size_t>(octave)][static_cast<std::size_t>(idx)];
  }

  std::vector<FloatImage> dog_octave(int octave) const {
    std::vector<FloatImage> dog;
    dog.reserve(static_cast<std::size_t>(levels - 1));
    for (int i = 0; i + 1 < levels; ++i) {
      const FloatImage& a = level(octave, i);
      const FloatImage& b = level(octave, i + 1);
      FloatImage d(a.width, a.height);
      for (std::size_t j = 0; j < d.v.size(); ++j) d.v[j] = b.v[j] - a.v[j];
      dog.push_back(std::move(d));
    }
    return dog;
  }

  // Maps an absolute sigma to the closest pyramid cell.
  void locate_scale(double scale, int& octave, int& layer) const {
    const int s = params.scales_per_octave;
    double t = std::log2(std::max(scale, 1e-6) / params.base_sigma);
    int idx = static_cast<int>(std::lround(t * s));
    idx = std::clamp(idx, 0, octaves * s - 1);
    octave = idx / s;
    layer = idx % s + 1;  // descriptor layers sit at 1..s
  }
};

SiftEngine::SiftEngine(const GrayImage& image, const SiftParams& params)
    : impl_(std::make_unique<Impl>(image, params)) {}

SiftEngine::~SiftEngine() = default;

namespace {

struct Extremum {
  int octave, layer, x, y;
  double dx, dy, dlayer, value;
};

// Quadratic interpolation of a DoG extremum (gradient/Hessian from central
// differences). Returns false if the fit diverges or fails the contrast or
// edge tests.
bool refine_extremum(const std::vector<FloatImage>& dog, const SiftParams& p,
                     int layer, int x, int y, Extremum& out) {
  const int w = dog[0].width, h = dog[0].height;
  const int max_layer = static_cast<int>(dog.size()) - 2;

  for (int step = 0; step < kMaxRefineSteps; ++step) {
    const FloatImage& d0 = dog[static_cast<std::size_t>(layer - 1)];
    const FloatImage& d1 = dog[static_cast<std::size_t>(layer)];
    const FloatImage& d2 = dog[static_cast<std::size_t>(layer + 1)];

    const double gx = 0.5 * (d1.at(x + 1, y) - d1.at(x - 1, y));
    const double gy = 0.5 * (d1.at(x, y + 1) - d1.at(x, y - 1));
    const double gs = 0.5 * (d2.at(x, y) - d0.at(x, y));

    const double v = d1.at(x, y);
    const double hxx = d1.at(x + 1, y) + d1.at(x - 1, y) - 2.0 * v;
    const double hyy = d1.at(x, y + 1) + d1.at(x, y - 1) - 2.0 * v;
    const double hss = d2.at(x, y) + d0.at(x, y) - 2.0 * v;
    const double hxy = 0.25 * (d1.at(x + 1, y + 1) - d1.at(x - 1, y + 1) -
                               d1.at(x + 1, y - 1) + d1.at(x - 1, y - 1));
    const double hxs = 0.25 * (d2.at(x + 1, y) - d2.at(x - 1, y) -
                               d0.at(x + 1, y) + d0.at(x - 1, y));
    const double hys = 0.25 * (d2.at(x, y + 1) - d2.at(x, y - 1) -
                               d0.at(x, y + 1) + d0.at(x, y - 1));

    Eigen::Matrix3d H;
    H << hxx, hxy, hxs, hxy, hyy, hys, hxs, hys, hss;
    const Eigen::Vector3d g(gx, gy, gs);
    const double det = H.determinant();
    if (std::abs(det) < 1e-12) return false;
    const Eigen::Vector3d offset = -H.inverse() * g;

    if (std::abs(offset.x()) < 0.5 && std::abs(offset.y()) < 0.5 &&
        std::abs(offset.z()) < 0.5) {
      const double interp = v + 0.5 * g.dot(offset);
      if (std::abs(interp) < p.contrast_threshold) return false;

      // 2x2 spatial Hessian edge test.
      const double tr = hxx + hyy;
      const double det2 = hxx * hyy - hxy * hxy;
      const double r = p.edge_ratio;
      if (det2 <= 0.0 || tr * tr * r >= det2 * (r + 1.0) * (r + 1.0)) return false;

      out.layer = layer;
      out.x = x;
      out.y = y;
      out.dx = offset.x();
      out.dy = offset.y();
      out.dlayer = offset.z();
      out.value = interp;
      return true;
    }

    x += static_cast<int>(std::lround(offset.x()));
    y += static_cast<int>(std::lround(offset.y()));
    layer += static_cast<int>(std::lround(offset.z()));
    if (layer < 1 || layer > max_layer || x < kBorder || x >= w - kBorder ||
        y < kBorder || y >= h - kBorder)
      return false;
  }
  return false;
}

}  // namespace

std::vector<SiftKeypoint> SiftEngine::detect() const {
  const auto& im = *impl_;
  const SiftParams& p = im.params;
  const double prefilter = 0.5 * p.contrast_threshold;
  std::vector<SiftKeypoint> keypoints;

  for (int o = 0; o < im.octaves; ++o) {
    const auto dog = im.dog_octave(o);
    const int w = dog[0].width, h = dog[0].height;
    if (w <= 2 * kBorder || h <= 2 * kBorder) continue;
    const double octave_scale = std::pow(2.0, o);

    for (int layer = 1; layer + 1 < static_cast<int>(dog.size()); ++layer) {
      const FloatImage& d0 = dog[static_cast<std::size_t>(layer - 1)];
      const FloatImage& d1 = dog[static_cast<std::size_t>(layer)];
      const FloatImage& d2 = dog[static_cast<std::size_t>(layer + 1)];
      for (int y = kBorder; y < h - kBorder; ++y) {
        for (int x = kBorder; x < w - kBorder; ++x) {
          const float v = d1.at(x, y);
          if (std::abs(v) <= prefilter) continue;

          bool is_max = true, is_min = true;
          for (int dy = -1; dy <= 1 && (is_max || is_min); ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
              const float n0 = d0.at(x + dx, y + dy);
              const float n1 = d1.at(x + dx, y + dy);
              const float n2 = d2.at(x + dx, y + dy);
              if (dx != 0 || dy != 0) {
                if (v <= n1) is_max = false;
                if (v >= n1) is_min = false;
              }
              if (v <= n0 || v <= n2) is_max = false;
              if (v >= n0 || v >= n2) is_min = false;
            }
          }
          if (!is_max && !is_min) continue;

          Extremum e{o, layer, x, y, 0, 0, 0, 0};
          if (!refine_extremum(dog, p, layer, x, y, e)) continue;

          SiftKeypoint kp;
          kp.x = (e.x + e.dx) * octave_scale;
          kp.y = (e.y + e.dy) * octave_scale;
          kp.scale = p.base_sigma *
                     std::pow(2.0, o + (e.layer + e.dlayer) / p.scales_per_octave);
          keypoints.push_back(kp);
        }
      }
    }
  }

  std::sort(keypoints.begin(), keypoints.end(),
            [](const SiftKeypoint& a, const SiftKeypoint& b) {
              if (a.y != b.y) return a.y < b.y;
              if (a.x != b.x) return a.x < b.x;
              return a.scale < b.scale;
            });
  return keypoints;
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double dominant_orientation(const FloatImage& img, double x, double y, double sigma) {
  double hist[kOriBins] = {};
  const double w_sigma = kOriSigmaFactor * sigma;
  const int radius = std::max(1, static_cast<int>(std::lround(kOriRadiusFactor * sigma)));
  const int cx = static_cast<int>(std::lround(x));
  const int cy = static_cast<int>(std::lround(y));

  for (int i = -radius; i <= radius; ++i) {
    const int py = cy + i;
    if (py < 1 || py >= img.height - 1) continue;
    for (int j = -radius; j <= radius; ++j) {
      const int px = cx + j;
      if (px < 1 || px >= img.width - 1) continue;
      const double dx = img.at(px + 1, py) - img.at(px - 1, py);
      const double dy = img.at(px, py + 1) - img.at(px, py - 1);
      const double mag = std::sqrt(dx * dx + dy * dy);
      if (mag == 0.0) continue;
      const double weight =
          std::exp(-(static_cast<double>(i) * i + static_cast<double>(j) * j) /
                   (2.0 * w_sigma * w_sigma));
      double angle = std::atan2(dy, dx);
      if (angle < 0.0) angle += kTwoPi;
      int bin = static_cast<int>(std::floor(angle / kTwoPi * kOriBins)) % kOriBins;
      hist[bin] += weight * mag;
    }
  }

  // Two smoothing passes over the circular histogram.
  for (int pass = 0; pass < 2; ++pass) {
    double prev = hist[kOriBins - 1];
    double first = hist[0];
    for (int b = 0; b < kOriBins; ++b) {
      const double cur = hist[b];
      const double next = (b + 1 < kOriBins) ? hist[b + 1] : first;
      hist[b] = 0.25 * prev + 0.5 * cur + 0.25 * next;
      prev = cur;
    }
  }

  int best = 0;
  for (int b = 1; b < kOriBins; ++b)
    if (hist[b] > hist[best]) best = b;
  if (hist[best] == 0.0) return 0.0;

  // Parabolic refinement around the peak.
  const double l = hist[(best + kOriBins - 1) % kOriBins];
  const double c = hist[best];
  const double r = hist[(best + 1) % kOriBins];
  double shift = 0.0;
  const double denom = l - 2.0 * c + r;
  if (std::abs(denom) > 1e-12) shift = 0.5 * (l - r) / denom;
  double angle = (best + 0.5 + shift) * (kTwoPi / kOriBins);
  if (angle >= kTwoPi) angle -= kTwoPi;
  if (angle < 0.0) angle += kTwoPi;
  return angle;
}

Eigen::VectorXf descriptor_at(const FloatImage& img, double x, double y,
                              double sigma, double orientation) {
  const int d = kDescrWidth, n = kDescrOriBins;
  const double bin_width = kDescrBinScale * sigma;
  const double cos_t = std::cos(orientation);
  const double sin_t = std::sin(orientation);
  const double bins_radius = (d + 1) * 0.5 * std::numbers::sqrt2;
  const int radius = static_cast<int>(std::lround(bin_width * bins_radius + 0.5));
  const double weight_sigma = 0.5 * d;  // in bin units

  // (d+2)^2 spatial cells x (n+2) orientation cells for interpolation spill.
  std::vector<double> hist(static_cast<std::size_t>((d + 2) * (d + 2) * (n + 2)), 0.0);
  auto hidx = [&](int r, int c, int o) {
    return (static_cast<std::size_t>(r) * (d + 2) + c) * (n + 2) + o;
  };

  const int cx = static_cast<int>(std::lround(x));
  const int cy = static_cast<int>(std::lround(y));

  for (int i = -radius; i <= radius; ++i) {
    const int py = cy + i;
    if (py < 1 || py >= img.height - 1) continue;
    for (int j = -radius; j <= radius; ++j) {
      const int px = cx + j;
      if (px < 1 || px >= img.width - 1) continue;

      const double c_rot = (j * cos_t + i * sin_t) / bin_width;
      const double r_rot = (-j * sin_t + i * cos_t) / bin_width;
      const double rbin = r_rot + d / 2.0 - 0.5;
      const double cbin = c_rot + d / 2.0 - 0.5;
      if (rbin <= -1.0 || rbin >= d || cbin <= -1.0 || cbin >= d) continue;

      const double dx = img.at(px + 1, py) - img.at(px - 1, py);
      const double dy = img.at(px, py + 1) - img.at(px, py - 1);
      const double mag = std::sqrt(dx * dx + dy * dy);
      if (mag == 0.0) continue;
      double angle = std::atan2(dy, dx) - orientation;
      while (angle < 0.0) angle += kTwoPi;
      while (angle >= kTwoPi) angle -= kTwoPi;

      const double obin = angle / kTwoPi * n;
      const double weight =
          std::exp(-(c_rot * c_rot + r_rot * r_rot) / (2.0 * weight_sigma * weight_sigma));
      const double value = weight * mag;

      int r0 = static_cast<int>(std::floor(rbin));
      int c0 = static_cast<int>(std::floor(cbin));
      int o0 = static_cast<int>(std::floor(obin));
      const double fr = rbin - r0;
      const double fc = cbin - c0;
      const double fo = obin - o0;

      // Trilinear scatter; rows/cols are offset by 1 into the padded grid.
      for (int ri = 0; ri <= 1; ++ri) {
        const int rr = r0 + ri + 1;
        if (rr < 0 || rr >= d + 2) continue;
        const double wr = value * (ri ? fr : 1.0 - fr);
        for (int ci = 0; ci <= 1; ++ci) {
          const int cc = c0 + ci + 1;
          if (cc < 0 || cc >= d + 2) continue;
          const double wc = wr * (ci ? fc : 1.0 - fc);
          for (int oi = 0; oi <= 1; ++oi) {
            const int oo = (o0 + oi) % n;
            hist[hidx(rr, cc, oo)] += wc * (oi ? fo : 1.0 - fo);
          }
        }
      }
    }
  }

  Eigen::VectorXd desc(d * d * n);
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c)
      for (int o = 0; o < n; ++o)
        desc[(r * d + c) * n + o] = hist[hidx(r + 1, c + 1, o)];

  // Standard SIFT finalization: l2, clip, l2.
  double norm = desc.norm();
  if (norm > 0.0) {
    desc /= norm;
    for (int i = 0; i < desc.size(); ++i) desc[i] = std::min(desc[i], kDescrClip);
    norm = desc.norm();
    if (norm > 0.0) desc /= norm;
  }

  // RootSIFT: l1 normalization then element-wise square root.
  const double l1 = desc.lpNorm<1>();
  Eigen::VectorXf out(d * d * n);
  if (l1 == 0.0) {
    out.setZero();
    return out;
  }
  for (int i = 0; i < desc.size(); ++i)
    out[i] = static_cast<float>(std::sqrt(desc[i] / l1));
  return out;
}

}  // namespace

Eigen::VectorXf SiftEngine::describe(const SiftKeypoint& kp, bool use_orientation) const {
  const auto& im = *impl_;
  int octave = 0, layer = 0;
  im.locate_scale(kp.scale, octave, layer);
  const double octave_scale = std::pow(2.0, octave);
  const FloatImage& img = im.level(octave, layer);
  const double lx = kp.x / octave_scale;
  const double ly = kp.y / octave_scale;
  const double lsigma = im.level_sigma[static_cast<std::size_t>(layer)];

  double orientation = 0.0;
  if (use_orientation) orientation = dominant_orientation(img, lx, ly, lsigma);
  return descriptor_at(img, lx, ly, lsigma, orientation);
}

std::vector<SiftKeypoint> detect_keypoints(const GrayImage& image,
                                           const SiftParams& params) {
  return SiftEngine(image, params).detect();
}

std::vector<SiftKeypoint> detect_keypoints(const BinaryImage& image,
                                           const SiftParams& params) {
  return SiftEngine(to_gray(image), params).detect();
}

Eigen::VectorXf describe_rootsift(const GrayImage& image, const SiftKeypoint& kp,
                                  bool use_orientation, const SiftParams& params) {
  return SiftEngine(image, params).describe(kp, use_orientation);
}

}  // namespace wr
