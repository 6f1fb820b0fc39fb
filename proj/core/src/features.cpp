#include "wr/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "wr/encoding.hpp"
#include "wr/errors.hpp"
#include "wr/image_io.hpp"
#include "wr/log.hpp"

namespace fs = std::filesystem;

namespace wr {

std::vector<std::pair<Eigen::Index, Eigen::Index>> sampling_units(
    const LocalFeatureSet& set) {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> units;
  const Eigen::Index n = set.size();
  Eigen::Index begin = 0;
  for (Eigen::Index i = 1; i <= n; ++i) {
    if (i == n || !(set.origins[static_cast<std::size_t>(i)] ==
                    set.origins[static_cast<std::size_t>(begin)])) {
      units.emplace_back(begin, i);
      begin = i;
    }
  }
  return units;
}

namespace {

void put_u32le(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
}

void put_f32le(std::vector<unsigned char>& out, float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  put_u32le(out, u);
}

std::uint32_t get_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

float get_f32le(const unsigned char* p) {
  const std::uint32_t u = get_u32le(p);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

constexpr char kMagic[8] = {'W', 'R', 'F', 'E', 'A', 'T', '0', '1'};

}  // namespace

LocalFeatureSet import_features(const std::string& path, int expected_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open feature file: " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  in.close();

  if (buf.size() < 8) throw TruncatedFile(path + ": shorter than the magic");
  if (std::memcmp(buf.data(), kMagic, 8) != 0)
    throw BadMagic(path + ": not a WRFEAT01 file");
  if (buf.size() < 16) throw TruncatedFile(path + ": header incomplete");

  const std::uint32_t count = get_u32le(buf.data() + 8);
  const std::uint32_t dim = get_u32le(buf.data() + 12);
  if (count > 0 && dim == 0) throw DimMismatch(path + ": dim 0 with nonzero count");
  if (expected_dim >= 0 && static_cast<std::uint32_t>(expected_dim) != dim)
    throw DimMismatch(path + ": dim " + std::to_string(dim) + ", expected " +
                      std::to_string(expected_dim));

  const std::size_t record = 9 + 4 * static_cast<std::size_t>(dim);
  const std::size_t expected_size = 16 + record * count;
  if (buf.size() < expected_size)
    throw TruncatedFile(path + ": " + std::to_string(buf.size()) + " bytes, need " +
                        std::to_string(expected_size));
  if (buf.size() > expected_size)
    throw ParseError(path + ": trailing bytes after the last record");

  LocalFeatureSet set;
  set.doc_id = fs::path(path).stem().string();
  set.dim = static_cast<int>(dim);
  set.vectors.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
  set.origins.resize(count);

  const unsigned char* p = buf.data() + 16;
  for (std::uint32_t i = 0; i < count; ++i) {
    FeatureOrigin& o = set.origins[i];
    o.x = get_f32le(p);
    o.y = get_f32le(p + 4);
    o.kind = p[8];
    if (o.kind > kOriginPageDescriptor)
      throw ParseError(path + ": record " + std::to_string(i) + " has kind byte " +
                       std::to_string(int(o.kind)));
    if (!std::isfinite(o.x) || !std::isfinite(o.y))
      throw ValidationError(path + ": non-finite origin in record " + std::to_string(i));
    p += 9;
    for (std::uint32_t j = 0; j < dim; ++j, p += 4) {
      const float v = get_f32le(p);
      if (!std::isfinite(v))
        throw ValidationError(path + ": non-finite value in record " +
                              std::to_string(i));
      set.vectors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
    }
  }
  if (count == 0) log::warn("feature file " + path + " holds no records");
  return set;
}

void export_features(const LocalFeatureSet& set, const std::string& path) {
  if (set.origins.size() != static_cast<std::size_t>(set.vectors.rows()))
    throw ValidationError("feature set " + set.doc_id + ": origin/vector count differ");
  if (set.vectors.rows() > 0 && set.vectors.cols() != set.dim)
    throw ValidationError("feature set " + set.doc_id + ": dim field does not match");
  if (!set.vectors.allFinite())
    throw ValidationError("feature set " + set.doc_id + ": non-finite values");

  const auto n = static_cast<std::uint32_t>(set.vectors.rows());
  const auto dim = static_cast<std::uint32_t>(set.dim);
  std::vector<unsigned char> buf;
  buf.reserve(16 + (9 + 4 * static_cast<std::size_t>(dim)) * n);
  buf.insert(buf.end(), kMagic, kMagic + 8);
  put_u32le(buf, n);
  put_u32le(buf, dim);
  for (std::uint32_t i = 0; i < n; ++i) {
    const FeatureOrigin& o = set.origins[i];
    put_f32le(buf, o.x);
    put_f32le(buf, o.y);
    buf.push_back(o.kind);
    for (std::uint32_t j = 0; j < dim; ++j)
      put_f32le(buf, set.vectors(static_cast<Eigen::Index>(i),
                                 static_cast<Eigen::Index>(j)));
  }

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("short write to " + tmp);
  }
  fs::rename(tmp, path);
}

namespace {

LocalFeatureSet patch_features_from_mask(const BinaryImage& mask,
                                         const std::string& doc_id,
                                         const ExtractParams& params,
                                         std::vector<SampleCrop>* crops) {
  const GrayImage render = to_gray(mask);
  SiftEngine engine(render, params.sift);
  const auto keypoints = engine.detect();

  std::vector<Eigen::VectorXf> rows;
  std::vector<FeatureOrigin> origins;
  rows.reserve(keypoints.size());
  for (const auto& kp : keypoints) {
    const int cx = std::clamp(static_cast<int>(std::lround(kp.x)), 0, mask.width - 1);
    const int cy = std::clamp(static_cast<int>(std::lround(kp.y)), 0, mask.height - 1);
    SampleCrop patch = extract_keypoint_patch(mask, cx, cy);
    int ink = 0;
    for (auto v : patch.pixels.pixels) ink += v < 128;
    const double ratio = double(ink) / double(patch.pixels.pixels.size());
    if (ratio < params.min_patch_foreground) continue;

    rows.push_back(engine.describe(kp, params.use_orientation));
    origins.push_back({static_cast<float>(kp.x), static_cast<float>(kp.y),
                       kOriginKeypointPatch});
    if (crops) {
      patch.source_doc = doc_id;
      crops->push_back(std::move(patch));
    }
  }

  LocalFeatureSet set;
  set.doc_id = doc_id;
  set.dim = kSiftDescriptorDim;
  set.vectors.resize(static_cast<Eigen::Index>(rows.size()), kSiftDescriptorDim);
  for (std::size_t i = 0; i < rows.size(); ++i)
    set.vectors.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  set.origins = std::move(origins);
  if (set.empty()) log::warn("document " + doc_id + ": no keypoint features");
  return set;
}

}  // namespace

LocalFeatureSet extract_patch_features(const GrayImage& page, const std::string& doc_id,
                                       const ExtractParams& params,
                                       std::vector<SampleCrop>* crops) {
  return patch_features_from_mask(binarize(page, params.page_binarize), doc_id,
                                  params, crops);
}

LocalFeatureSet extract_patch_features(const BinaryImage& page,
                                       const std::string& doc_id,
                                       const ExtractParams& params,
                                       std::vector<SampleCrop>* crops) {
  return patch_features_from_mask(page, doc_id, params, crops);
}

LocalFeatureSet extract_character_features(
    const GrayImage& page, const std::string& doc_id,
    const std::vector<CharacterAnnotation>& annotations, const ExtractParams& params,
    std::vector<SampleCrop>* crops) {
  std::vector<Eigen::VectorXf> rows;
  std::vector<FeatureOrigin> origins;

  for (const auto& ann : annotations) {
    SampleCrop crop;
    try {
      crop = extract_character_crop(page, ann);
    } catch (const DegenerateBox& e) {
      log::warn("document " + doc_id + ": skipping annotation (" + e.what() + ")");
      continue;
    }
    crop.source_doc = doc_id;

    const BinaryImage mask = binarize(crop.pixels, BinarizeMethod::sauvola);
    const GrayImage render = to_gray(mask);
    SiftEngine engine(render, params.sift);
    auto keypoints = engine.detect();
    if (keypoints.empty()) {
      // Dense fallback so no annotated character is dropped.
      for (int gy = 0; gy < 4; ++gy)
        for (int gx = 0; gx < 4; ++gx)
          keypoints.push_back({8.0 + 16.0 * gx, 8.0 + 16.0 * gy, 1.6});
    }

    const FeatureOrigin origin{static_cast<float>(crop.origin_x),
                               static_cast<float>(crop.origin_y), kOriginCharacter};
    for (const auto& kp : keypoints) {
      rows.push_back(engine.describe(kp, params.use_orientation));
      origins.push_back(origin);
    }
    if (crops) crops->push_back(std::move(crop));
  }

  LocalFeatureSet set;
  set.doc_id = doc_id;
  set.dim = kSiftDescriptorDim;
  set.vectors.resize(static_cast<Eigen::Index>(rows.size()), kSiftDescriptorDim);
  for (std::size_t i = 0; i < rows.size(); ++i)
    set.vectors.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  set.origins = std::move(origins);
  if (set.empty()) log::warn("document " + doc_id + ": no character features");
  return set;
}

SurrogateLabeling build_surrogate_labels(const Eigen::MatrixXf& descriptors,
                                         std::vector<SampleCrop> patches, int k,
                                         std::uint64_t seed, bool cap_k) {
  if (k < 1) throw InvalidParams("surrogate labels need k >= 1");
  if (descriptors.rows() != static_cast<Eigen::Index>(patches.size()))
    throw ValidationError("descriptor/patch count mismatch");
  if (descriptors.rows() < k) {
    if (!cap_k)
      throw TooFewSamples(std::to_string(descriptors.rows()) +
                          " descriptors for k=" + std::to_string(k));
    log::warn("capping k from " + std::to_string(k) + " to " +
              std::to_string(descriptors.rows()));
    k = static_cast<int>(descriptors.rows());
  }

  const Codebook cb = kmeans_fit(descriptors, k, seed);
  SurrogateLabeling out;
  out.patches = std::move(patches);
  out.labels = kmeans_assign(descriptors, cb);
  out.k = k;
  return out;
}

void export_surrogate_labels(const SurrogateLabeling& labeling, const std::string& dir) {
  if (labeling.labels.size() != labeling.patches.size())
    throw ValidationError("label/patch count mismatch");
  fs::create_directories(dir);

  std::string csv = "patch_path,label\n";
  char name[32];
  for (std::size_t i = 0; i < labeling.patches.size(); ++i) {
    std::snprintf(name, sizeof name, "patch_%06zu.png", i);
    save_png(labeling.patches[i].pixels, (fs::path(dir) / name).string());
    csv += name;
    csv += ',';
    csv += std::to_string(labeling.labels[i]);
    csv += '\n';
  }

  const fs::path csv_path = fs::path(dir) / "labels.csv";
  const fs::path tmp = csv_path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << csv;
  }
  fs::rename(tmp, csv_path);
}

}  // namespace wr
