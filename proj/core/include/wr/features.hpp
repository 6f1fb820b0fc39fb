#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "wr/binarize.hpp"
#include "wr/corpus.hpp"
#include "wr/crops.hpp"
#include "wr/sift.hpp"

namespace wr {

// Where a local feature came from: page coordinates of its sampling unit and
// the unit kind (0 = keypoint patch, 1 = character crop, 2 = page-level
// descriptor). Runs of consecutive identical origins form one sampling unit.
struct FeatureOrigin {
  float x = 0.0f;
  float y = 0.0f;
  std::uint8_t kind = 0;

  bool operator==(const FeatureOrigin&) const = default;
};

inline constexpr std::uint8_t kOriginKeypointPatch = 0;
inline constexpr std::uint8_t kOriginCharacter = 1;
inline constexpr std::uint8_t kOriginPageDescriptor = 2;

// Ordered local features of one document. Rows of `vectors` are descriptors;
// origins run parallel to the rows. Any dim is allowed (imported deep
// features are not 128-dim).
struct LocalFeatureSet {
  std::string doc_id;
  int dim = 0;
  Eigen::MatrixXf vectors;
  std::vector<FeatureOrigin> origins;

  Eigen::Index size() const { return vectors.rows(); }
  bool empty() const { return vectors.rows() == 0; }
};

// Half-open row ranges of consecutive identical origins; each range is one
// sampling unit (a keypoint patch contributes one row, a character crop
// usually several).
std::vector<std::pair<Eigen::Index, Eigen::Index>> sampling_units(
    const LocalFeatureSet& set);

// Binary feature-set file. Layout: magic "WRFEAT01", u32le count, u32le dim,
// then per record f32le x, f32le y, u8 kind, dim f32le values. Import
// rejects non-finite values. expected_dim >= 0 enforces a dimension.
LocalFeatureSet import_features(const std::string& path, int expected_dim = -1);
void export_features(const LocalFeatureSet& set, const std::string& path);

struct ExtractParams {
  BinarizeMethod page_binarize = BinarizeMethod::otsu;
  bool use_orientation = false;         // upright descriptors by default
  double min_patch_foreground = 0.05;   // keypoint patch ink filter
  SiftParams sift;
};

// Keypoint sampling: binarize the page, detect keypoints on the mask, drop
// keypoints whose 32x32 patch is below the ink threshold, one upright
// RootSIFT row per surviving keypoint. Origin = keypoint position.
LocalFeatureSet extract_patch_features(const GrayImage& page,
                                       const std::string& doc_id,
                                       const ExtractParams& params = {},
                                       std::vector<SampleCrop>* crops = nullptr);

// As above but for a page that is already a mask.
LocalFeatureSet extract_patch_features(const BinaryImage& page,
                                       const std::string& doc_id,
                                       const ExtractParams& params = {},
                                       std::vector<SampleCrop>* crops = nullptr);

// Character sampling: crop each annotation from the gray page (bilinear,
// padded square, 64x64), binarize the crop with Sauvola, detect keypoints in
// the crop; a crop with no detections falls back to a 4x4 grid of
// descriptors at scale 1.6. All rows of a crop share origin = bbox center in
// page coordinates. Annotations whose bbox degenerates are skipped with a
// warning.
LocalFeatureSet extract_character_features(
    const GrayImage& page, const std::string& doc_id,
    const std::vector<CharacterAnnotation>& annotations,
    const ExtractParams& params = {}, std::vector<SampleCrop>* crops = nullptr);

// Cluster-id pseudo-classes over patch descriptors, for training an external
// feature network without writer labels.
struct SurrogateLabeling {
  std::vector<SampleCrop> patches;
  std::vector<int> labels;  // cluster index in [0, k)
  int k = 0;
};

// k-means over the descriptor rows (one per patch). Descriptor count must be
// >= k unless cap_k allows shrinking k to the count.
SurrogateLabeling build_surrogate_labels(const Eigen::MatrixXf& descriptors,
                                         std::vector<SampleCrop> patches, int k,
                                         std::uint64_t seed, bool cap_k = false);

// Writes PNG patches plus labels.csv ("patch_path,label") into dir.
void export_surrogate_labels(const SurrogateLabeling& labeling,
                             const std::string& dir);

}  // namespace wr
