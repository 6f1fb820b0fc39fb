#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "wr/binarize.hpp"
#include "wr/corpus.hpp"
#include "wr/evaluation.hpp"

namespace wr {

// patches    = page keypoints, the baseline sampling
// characters = annotated character crops
// combined   = characters over a multi-label set
enum class SampleMode { patches, characters, combined };
enum class EncoderKind { vlad, softassign, sum, gmp };

std::string to_string(SampleMode mode);
SampleMode parse_sample_mode(const std::string& name);
std::string to_string(EncoderKind encoder);
EncoderKind parse_encoder(const std::string& name);

struct RunConfig {
  std::string manifest_path;
  SampleMode mode = SampleMode::patches;
  std::set<CharLabel> char_labels;  // defaulted to {kai} for character modes
  Quality max_quality = Quality::BT3;
  EncoderKind encoder = EncoderKind::vlad;
  double alpha = 0.4;
  int k = 32;
  std::uint64_t seed = 1;
  int jobs = 1;
  std::string out_dir;
  std::string features_dir;  // non-empty: import deep features per document
  BinarizeMethod binarize = BinarizeMethod::otsu;
  std::string dump_crops_dir;
  bool include_singletons = false;
  bool cap_k = false;
  int kmeans_sample = 50000;  // codebook training subsample cap
  double gmp_lambda = 1.0;
};

// Canonical JSON of the fields that determine index and descriptor content
// (manifest file digest included; jobs/output paths excluded). Its FNV-1a
// hash is embedded in index metadata and re-checked before evaluation.
std::string config_canonical_json(const RunConfig& config);
std::uint64_t config_hash(const RunConfig& config);
std::string hash_hex(std::uint64_t h);

// Applies mode defaults, resolves paths, loads the manifest, verifies every
// referenced image exists, and returns the manifest with annotations
// filtered to the configured labels and quality.
CorpusManifest validate_config(RunConfig& config);

// Extracts or imports per-document features, fits the codebook when the
// encoder needs one, and writes features/, codebook files, and
// metadata.json under config.out_dir.
void cmd_index(RunConfig config);

struct EvaluateOutputs {
  EvaluationReport report;
  std::vector<std::string> excluded_docs;  // zero sampling units
  std::string summary_text;
};

// Rebuilds page descriptors from one or more index directories (multiple
// directories must share the config up to the seed; metrics are averaged),
// runs leave-one-image-out retrieval, and writes report.json, matrix CSVs
// and summary.txt into out_dir.
EvaluateOutputs cmd_evaluate(const std::vector<std::string>& index_dirs,
                             const std::string& out_dir, bool include_singletons,
                             int jobs);

struct QueryDelta {
  std::string query;
  int first_relevant_a = 0;  // 1-based rank, 0 = no relevant entry
  int first_relevant_b = 0;
  double ap_a = 0.0;  // negative = undefined
  double ap_b = 0.0;
};

struct CompareResult {
  double d_map = 0, d_top1 = 0, d_top5 = 0, d_top10 = 0, d_pr5 = 0, d_pr10 = 0;
  double d_samples_per_page = 0;
  double samples_ratio = 0;  // b over a
  std::vector<QueryDelta> queries;
  std::string text;
};

// Metric deltas (b minus a) and the per-query rank movement between two
// report files over the same document set.
CompareResult cmd_compare(const std::string& report_a, const std::string& report_b);

// Patch extraction over the whole corpus followed by k-means surrogate
// labels; writes the patch PNGs and labels.csv into config.out_dir.
void cmd_surrogate(RunConfig config);

// The fixed-column table evaluation prints and stores.
std::string summary_table(const EvaluationReport& report);

}  // namespace wr
