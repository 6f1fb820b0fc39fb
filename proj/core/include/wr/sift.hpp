#pragma once

#include <memory>
#include <vector>

#include <Eigen/Core>

#include "wr/image.hpp"

namespace wr {

inline constexpr int kSiftDescriptorDim = 128;

struct SiftKeypoint {
  double x = 0.0;      // page coordinates, subpixel
  double y = 0.0;
  double scale = 0.0;  // Gaussian sigma in page coordinates
};

struct SiftParams {
  int scales_per_octave = 3;
  double base_sigma = 1.6;
  double assumed_blur = 0.5;     // blur already present in the input
  double contrast_threshold = 0.03;  // on DoG values of a [0,1] image
  double edge_ratio = 10.0;
  int max_octaves = 8;
};

// Gaussian scale space over one image; shared by detection and description
// so both read the same smoothed data. Construction builds the pyramid.
class SiftEngine {
 public:
  explicit SiftEngine(const GrayImage& image, const SiftParams& params = {});
  ~SiftEngine();

  SiftEngine(const SiftEngine&) = delete;
  SiftEngine& operator=(const SiftEngine&) = delete;

  // Difference-of-Gaussians extrema, subpixel refined, ordered by
  // (y, x, scale). Empty result for featureless images.
  std::vector<SiftKeypoint> detect() const;

  // 128-dim RootSIFT descriptor: gradient histograms, l1-normalized then
  // element-wise square root, so the result has unit l2 norm. A zero-gradient
  // neighborhood returns the zero vector. With use_orientation the patch is
  // rotated to its dominant gradient orientation, otherwise it is upright.
  Eigen::VectorXf describe(const SiftKeypoint& kp, bool use_orientation) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::vector<SiftKeypoint> detect_keypoints(const GrayImage& image,
                                           const SiftParams& params = {});
std::vector<SiftKeypoint> detect_keypoints(const BinaryImage& image,
                                           const SiftParams& params = {});

Eigen::VectorXf describe_rootsift(const GrayImage& image, const SiftKeypoint& kp,
                                  bool use_orientation = false,
                                  const SiftParams& params = {});

}  // namespace wr
