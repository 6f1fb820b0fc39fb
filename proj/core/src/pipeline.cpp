#include "wr/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>
#include <utility>

#include <nlohmann/json.hpp>

#include "wr/descriptor.hpp"
#include "wr/features.hpp"
#include "wr/image_io.hpp"
#include "wr/log.hpp"
#include "wr/rng.hpp"
#include "wr/version.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace wr {
namespace {

// Softmax temperature used when the soft-assign parameters are constructed
// from a fitted codebook rather than loaded from a trained export.
constexpr double kSoftAssignSharpness = 25.0;

std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_atomic(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp + " for writing");
    out << text;
    if (!out) throw IoError("short write to " + tmp);
  }
  fs::rename(tmp, path);
}

// Index-parallel loop with deterministic work assignment by index; results
// must be written to per-index slots by the callback. The first exception
// is rethrown after all workers finish.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  const int workers = std::max(1, std::min(jobs, static_cast<int>(n)));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

CorpusManifest load_filtered(const RunConfig& config) {
  CorpusManifest manifest = load_manifest(config.manifest_path);
  if (config.mode != SampleMode::patches) {
    manifest = filter_annotations(manifest, config.char_labels, config.max_quality);
  }
  return manifest;
}

LocalFeatureSet slice_unit(const LocalFeatureSet& set, Eigen::Index begin,
                           Eigen::Index end) {
  LocalFeatureSet unit;
  unit.doc_id = set.doc_id;
  unit.dim = set.dim;
  unit.vectors = set.vectors.middleRows(begin, end - begin);
  unit.origins.assign(set.origins.begin() + begin, set.origins.begin() + end);
  return unit;
}

EncodedFeature encode_unit(const LocalFeatureSet& unit, const RunConfig& config,
                           const Codebook* cb, const SoftAssignParams* sap) {
  switch (config.encoder) {
    case EncoderKind::vlad:
      return vlad_encode(unit, *cb);
    case EncoderKind::softassign:
      return soft_assign_encode(unit, *sap);
    case EncoderKind::gmp:
      return gmp_encode(unit, config.gmp_lambda);
    case EncoderKind::sum:
      return sum_encode(unit);
  }
  throw InvalidParams("unhandled encoder kind");
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  try {
    c.alpha = j.at("alpha").get<double>();
    c.binarize = parse_binarize_method(j.at("binarize").get<std::string>());
    c.cap_k = j.at("cap_k").get<bool>();
    for (const auto& name : j.at("chars")) {
      c.char_labels.insert(parse_char_label(name.get<std::string>()));
    }
    c.encoder = parse_encoder(j.at("encoder").get<std::string>());
    c.features_dir = j.at("features_dir").get<std::string>();
    c.gmp_lambda = j.at("gmp_lambda").get<double>();
    c.k = j.at("k").get<int>();
    c.kmeans_sample = j.at("kmeans_sample").get<int>();
    c.manifest_path = j.at("manifest").get<std::string>();
    const int q = j.at("max_quality").get<int>();
    if (q < 1 || q > 3) throw ParseError("max_quality out of range");
    c.max_quality = static_cast<Quality>(q);
    c.mode = parse_sample_mode(j.at("mode").get<std::string>());
    c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("index metadata is malformed: ") + e.what());
  }
  return c;
}

std::string canonical_without_seed(const std::string& canonical) {
  json j = json::parse(canonical);
  j["seed"] = 0;
  return j.dump();
}

struct DocBuild {
  PageDescriptor raw;
  std::size_t units = 0;
  bool empty = false;
};

// Per-unit encoding followed by page-level aggregation for one document.
DocBuild build_document(const LocalFeatureSet& set, const RunConfig& config,
                        const Codebook* cb, const SoftAssignParams* sap) {
  DocBuild out;
  const auto units = sampling_units(set);
  if (units.empty()) {
    out.empty = true;
    return out;
  }
  std::vector<EncodedFeature> encoded;
  encoded.reserve(units.size());
  for (const auto& [begin, end] : units) {
    encoded.push_back(encode_unit(slice_unit(set, begin, end), config, cb, sap));
  }
  out.raw = aggregate(encoded, set.doc_id);
  out.units = units.size();
  return out;
}

int first_relevant_rank(const RankedList& rl) {
  for (std::size_t i = 0; i < rl.entries.size(); ++i) {
    if (rl.entries[i].relevant) return static_cast<int>(i) + 1;
  }
  return 0;
}

double ap_or_negative(const RankedList& rl) {
  try {
    return average_precision(rl);
  } catch (const NoRelevant&) {
    return -1.0;
  }
}

}  // namespace

std::string to_string(SampleMode mode) {
  switch (mode) {
    case SampleMode::patches: return "patches";
    case SampleMode::characters: return "characters";
    case SampleMode::combined: return "combined";
  }
  return "?";
}

SampleMode parse_sample_mode(const std::string& name) {
  if (name == "patches") return SampleMode::patches;
  if (name == "characters") return SampleMode::characters;
  if (name == "combined") return SampleMode::combined;
  throw ParseError("unknown sampling mode '" + name +
                   "' (expected patches, characters or combined)");
}

std::string to_string(EncoderKind encoder) {
  switch (encoder) {
    case EncoderKind::vlad: return "vlad";
    case EncoderKind::softassign: return "softassign";
    case EncoderKind::sum: return "sum";
    case EncoderKind::gmp: return "gmp";
  }
  return "?";
}

EncoderKind parse_encoder(const std::string& name) {
  if (name == "vlad") return EncoderKind::vlad;
  if (name == "softassign") return EncoderKind::softassign;
  if (name == "sum") return EncoderKind::sum;
  if (name == "gmp") return EncoderKind::gmp;
  throw ParseError("unknown encoder '" + name +
                   "' (expected vlad, softassign, sum or gmp)");
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_canonical_json(const RunConfig& config) {
  const std::string manifest_bytes = read_file_bytes(config.manifest_path);
  json j;
  j["alpha"] = config.alpha;
  j["binarize"] = to_string(config.binarize);
  j["cap_k"] = config.cap_k;
  json chars = json::array();
  for (const CharLabel label : config.char_labels) chars.push_back(to_string(label));
  j["chars"] = chars;
  j["encoder"] = to_string(config.encoder);
  j["features_dir"] = config.features_dir;
  j["gmp_lambda"] = config.gmp_lambda;
  j["k"] = config.k;
  j["kmeans_sample"] = config.kmeans_sample;
  j["manifest"] = config.manifest_path;
  j["manifest_fnv"] = hash_hex(fnv1a64(manifest_bytes));
  j["max_quality"] = static_cast<int>(config.max_quality);
  j["mode"] = to_string(config.mode);
  j["seed"] = config.seed;
  return j.dump();
}

std::uint64_t config_hash(const RunConfig& config) {
  return fnv1a64(config_canonical_json(config));
}

CorpusManifest validate_config(RunConfig& config) {
  if (config.manifest_path.empty()) {
    throw ValidationError("a manifest path is required");
  }
  if (!fs::exists(config.manifest_path)) {
    throw ValidationError("manifest not found: " + config.manifest_path);
  }
  config.manifest_path = fs::weakly_canonical(config.manifest_path).string();
  if (!(config.alpha > 0.0) || config.alpha > 1.0) {
    throw InvalidParams("alpha must be in (0, 1]");
  }
  if (config.k < 1) throw InvalidParams("k must be >= 1");
  if (config.kmeans_sample < 1) throw InvalidParams("kmeans sample cap must be >= 1");
  if (config.jobs < 1) throw InvalidParams("jobs must be >= 1");
  if (config.gmp_lambda < 0.0) throw InvalidParams("gmp lambda must be >= 0");

  if (config.mode == SampleMode::patches) {
    if (!config.char_labels.empty()) {
      log::warn("character labels are ignored in patches mode");
      config.char_labels.clear();
    }
  } else if (config.char_labels.empty()) {
    config.char_labels.insert(CharLabel::kai);
  }

  CorpusManifest manifest = load_filtered(config);
  if (manifest.documents.empty()) {
    throw ValidationError("manifest lists no documents: " + config.manifest_path);
  }

  if (!config.features_dir.empty()) {
    if (!fs::is_directory(config.features_dir)) {
      throw ValidationError("feature directory not found: " + config.features_dir);
    }
    config.features_dir = fs::weakly_canonical(config.features_dir).string();
    for (const DocumentRecord& doc : manifest.documents) {
      const fs::path p = fs::path(config.features_dir) / (doc.doc_id + ".wrfeat");
      if (!fs::exists(p)) {
        throw ValidationError("no feature file for document '" + doc.doc_id +
                              "': " + p.string());
      }
    }
  } else {
    for (const DocumentRecord& doc : manifest.documents) {
      const std::string p = resolve_image_path(config.manifest_path, doc.image_path);
      if (!fs::exists(p)) {
        throw ValidationError("image for document '" + doc.doc_id +
                              "' not found: " + p);
      }
      if (config.binarize == BinarizeMethod::passthrough && !doc.pre_binarized) {
        throw ValidationError(
            "passthrough binarization requires pre-binarized sources, but '" +
            doc.doc_id + "' is not");
      }
    }
  }

  if (config.mode != SampleMode::patches) {
    for (const DocumentRecord& doc : manifest.documents) {
      const auto it = manifest.annotations.find(doc.doc_id);
      if (it == manifest.annotations.end() || it->second.empty()) {
        log::warn("document '" + doc.doc_id +
                  "' has no matching character annotations and will yield an "
                  "empty page");
      }
    }
  }
  return manifest;
}

void cmd_index(RunConfig config) {
  const CorpusManifest corpus = validate_config(config);
  if (config.out_dir.empty()) {
    throw ValidationError("an output directory is required");
  }
  const std::string canonical = config_canonical_json(config);
  const std::string hash = hash_hex(fnv1a64(canonical));

  fs::create_directories(config.out_dir);
  const fs::path features_out = fs::path(config.out_dir) / "features";
  fs::create_directories(features_out);

  const std::size_t n = corpus.documents.size();
  const bool want_crops = !config.dump_crops_dir.empty();
  std::vector<LocalFeatureSet> sets(n);
  std::vector<std::vector<SampleCrop>> crops(n);

  parallel_for(n, config.jobs, [&](std::size_t i) {
    const DocumentRecord& doc = corpus.documents[i];
    std::vector<SampleCrop>* crop_sink = want_crops ? &crops[i] : nullptr;
    if (!config.features_dir.empty()) {
      const fs::path p = fs::path(config.features_dir) / (doc.doc_id + ".wrfeat");
      sets[i] = import_features(p.string());
      sets[i].doc_id = doc.doc_id;
      return;
    }
    const GrayImage page =
        load_gray(resolve_image_path(config.manifest_path, doc.image_path));
    ExtractParams params;
    if (config.mode == SampleMode::patches) {
      params.page_binarize =
          doc.pre_binarized ? BinarizeMethod::passthrough : config.binarize;
      sets[i] = extract_patch_features(page, doc.doc_id, params, crop_sink);
    } else {
      static const std::vector<CharacterAnnotation> kNone;
      const auto it = corpus.annotations.find(doc.doc_id);
      const auto& anns = it == corpus.annotations.end() ? kNone : it->second;
      sets[i] = extract_character_features(page, doc.doc_id, anns, params, crop_sink);
    }
  });

  // All documents must agree on the descriptor dimension.
  int dim = -1;
  for (const auto& set : sets) {
    if (set.empty()) continue;
    if (dim < 0) {
      dim = set.dim;
    } else if (set.dim != dim) {
      throw DimMismatch("documents disagree on feature dimension (" +
                        std::to_string(dim) + " vs " + std::to_string(set.dim) +
                        " in '" + set.doc_id + "')");
    }
  }
  if (dim < 0) {
    throw TooFewSamples("no document produced any local features");
  }

  json doc_meta = json::array();
  Eigen::Index total_rows = 0;
  std::size_t total_units = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (sets[i].empty()) {
      sets[i].dim = dim;
      sets[i].vectors.resize(0, dim);
      log::warn("document '" + corpus.documents[i].doc_id +
                "' contributed no sampling units; writing an empty feature set");
    }
    const fs::path p = features_out / (sets[i].doc_id + ".wrfeat");
    export_features(sets[i], p.string());
    const std::size_t units = sampling_units(sets[i]).size();
    total_rows += sets[i].size();
    total_units += units;
    doc_meta.push_back({{"doc_id", sets[i].doc_id},
                        {"writer_id", corpus.documents[i].writer_id},
                        {"rows", sets[i].size()},
                        {"units", units}});
  }

  if (want_crops) {
    for (std::size_t i = 0; i < n; ++i) {
      const fs::path dir = fs::path(config.dump_crops_dir) / sets[i].doc_id;
      fs::create_directories(dir);
      for (std::size_t c = 0; c < crops[i].size(); ++c) {
        char name[32];
        std::snprintf(name, sizeof name, "crop_%05zu.png", c);
        save_png(crops[i][c].pixels, (dir / name).string());
      }
    }
    log::info("crop dump written to " + config.dump_crops_dir);
  }

  int effective_k = config.k;
  const bool needs_codebook = config.encoder == EncoderKind::vlad ||
                              config.encoder == EncoderKind::softassign;
  if (needs_codebook) {
    if (total_rows == 0) {
      throw TooFewSamples("cannot fit a codebook without local features");
    }
    Eigen::MatrixXf all(total_rows, dim);
    Eigen::Index row = 0;
    for (const auto& set : sets) {
      if (set.empty()) continue;
      all.middleRows(row, set.size()) = set.vectors;
      row += set.size();
    }
    Eigen::MatrixXf train;
    if (all.rows() > config.kmeans_sample) {
      const Eigen::Index stride =
          (all.rows() + config.kmeans_sample - 1) / config.kmeans_sample;
      const Eigen::Index kept = (all.rows() + stride - 1) / stride;
      train.resize(kept, dim);
      for (Eigen::Index r = 0; r < kept; ++r) train.row(r) = all.row(r * stride);
      log::info("codebook training subsampled to " + std::to_string(kept) +
            " of " + std::to_string(all.rows()) + " descriptors");
    } else {
      train = std::move(all);
    }
    if (train.rows() < config.k) {
      if (!config.cap_k) {
        throw TooFewSamples("codebook needs at least k=" + std::to_string(config.k) +
                            " descriptors, got " + std::to_string(train.rows()) +
                            " (use cap_k to shrink)");
      }
      effective_k = static_cast<int>(train.rows());
      log::warn("k capped to " + std::to_string(effective_k) +
                " by the available descriptor count");
    }
    const Codebook cb =
        kmeans_fit(train, effective_k, derive_seed(config.seed, "codebook"));
    save_codebook(cb, (fs::path(config.out_dir) / "codebook.json").string());
    if (config.encoder == EncoderKind::softassign) {
      const SoftAssignParams params = sharpened_params(cb, kSoftAssignSharpness);
      save_soft_assign_params(
          params, (fs::path(config.out_dir) / "soft_assign.json").string());
    }
  }

  json meta;
  meta["tool_version"] = kVersion;
  meta["feature_format"] = std::string(kFeatureMagic);
  meta["codebook_format"] = std::string(kCodebookFormat);
  meta["config_hash"] = hash;
  meta["config"] = json::parse(canonical);
  meta["effective_k"] = needs_codebook ? json(effective_k) : json(nullptr);
  meta["documents"] = doc_meta;
  write_text_atomic((fs::path(config.out_dir) / "metadata.json").string(),
                    meta.dump(2) + "\n");

  log::info("indexed " + std::to_string(n) + " documents, " +
            std::to_string(total_rows) + " local features, " +
            std::to_string(total_units) + " sampling units -> " + config.out_dir);
}

EvaluateOutputs cmd_evaluate(const std::vector<std::string>& index_dirs,
                             const std::string& out_dir, bool include_singletons,
                             int jobs) {
  if (index_dirs.empty()) {
    throw ValidationError("at least one index directory is required");
  }
  if (out_dir.empty()) throw ValidationError("an output directory is required");
  if (jobs < 1) throw InvalidParams("jobs must be >= 1");

  std::vector<EvaluationReport> reports;
  std::vector<PageDescriptor> first_powered;
  std::vector<std::string> first_ids;
  Eigen::MatrixXd first_sims;
  std::map<std::string, std::string> first_writers;
  std::vector<std::string> first_excluded;
  std::string ref_config;

  for (std::size_t run = 0; run < index_dirs.size(); ++run) {
    const std::string& dir = index_dirs[run];
    const fs::path meta_path = fs::path(dir) / "metadata.json";
    if (!fs::exists(meta_path)) {
      throw ValidationError("not an index directory (no metadata.json): " + dir);
    }
    json meta;
    try {
      meta = json::parse(read_file_bytes(meta_path.string()));
    } catch (const json::exception& e) {
      throw ParseError("cannot parse " + meta_path.string() + ": " + e.what());
    }
    if (!meta.contains("config") || !meta.contains("config_hash")) {
      throw ParseError("index metadata lacks config fields: " + meta_path.string());
    }
    const RunConfig config = config_from_json(meta["config"]);
    const std::string canonical = config_canonical_json(config);
    const std::string stored_hash = meta["config_hash"].get<std::string>();
    if (hash_hex(fnv1a64(canonical)) != stored_hash) {
      throw IndexMismatch(
          "stored config hash does not match the index inputs for " + dir +
          " (the manifest or config changed since indexing)");
    }
    const std::string seedless = canonical_without_seed(canonical);
    if (run == 0) {
      ref_config = seedless;
    } else if (seedless != ref_config) {
      throw ValidationError("index configs differ beyond the seed: " + dir);
    }

    const CorpusManifest corpus = load_filtered(config);

    Codebook cb;
    SoftAssignParams sap;
    if (config.encoder == EncoderKind::vlad ||
        config.encoder == EncoderKind::softassign) {
      const fs::path cb_path = fs::path(dir) / "codebook.json";
      if (!fs::exists(cb_path)) {
        throw IndexMismatch("index has no codebook.json: " + dir);
      }
      cb = load_codebook(cb_path.string());
      if (config.encoder == EncoderKind::softassign) {
        const fs::path sa_path = fs::path(dir) / "soft_assign.json";
        if (!fs::exists(sa_path)) {
          throw IndexMismatch("index has no soft_assign.json: " + dir);
        }
        sap = load_soft_assign_params(sa_path.string());
      }
    }

    const std::size_t n = corpus.documents.size();
    std::vector<LocalFeatureSet> sets(n);
    parallel_for(n, jobs, [&](std::size_t i) {
      const fs::path p =
          fs::path(dir) / "features" / (corpus.documents[i].doc_id + ".wrfeat");
      if (!fs::exists(p)) {
        throw IndexMismatch("index is missing features for document '" +
                            corpus.documents[i].doc_id + "': " + p.string());
      }
      sets[i] = import_features(p.string());
      sets[i].doc_id = corpus.documents[i].doc_id;
    });

    std::vector<DocBuild> built(n);
    parallel_for(n, jobs, [&](std::size_t i) {
      built[i] = build_document(sets[i], config, &cb, &sap);
    });

    std::vector<PageDescriptor> raw;
    std::map<std::string, double> units_per_doc;
    std::vector<std::string> excluded;
    for (std::size_t i = 0; i < n; ++i) {
      if (built[i].empty) {
        excluded.push_back(corpus.documents[i].doc_id);
        log::warn("document '" + corpus.documents[i].doc_id +
                  "' has no sampling units and is excluded from evaluation");
        continue;
      }
      units_per_doc[corpus.documents[i].doc_id] =
          static_cast<double>(built[i].units);
      raw.push_back(std::move(built[i].raw));
    }

    std::vector<PageDescriptor> powered;
    powered.reserve(raw.size());
    for (const auto& d : raw) powered.push_back(power_normalize(d, config.alpha));
    // The whitening model is re-fit for every query on the remaining pages:
    // a single fit over a corpus smaller than the descriptor length would
    // collapse every pairwise cosine to -1/(n-1) (see
    // leave_one_out_similarities) and erase the ranking signal.
    const Eigen::MatrixXd sims = leave_one_out_similarities(powered, jobs);
    std::vector<std::string> doc_ids;
    doc_ids.reserve(powered.size());
    for (const auto& d : powered) doc_ids.push_back(d.doc_id);

    reports.push_back(
        evaluate(corpus, doc_ids, sims, include_singletons, units_per_doc));

    if (run == 0) {
      first_powered = powered;
      first_ids = doc_ids;
      first_sims = sims;
      first_excluded = excluded;
      for (const auto& d : powered) {
        first_writers[d.doc_id] = writer_of(corpus, d.doc_id);
      }
    }
  }

  EvaluateOutputs out;
  out.report = reports.size() == 1 ? reports.front() : average_reports(reports);
  out.excluded_docs = first_excluded;

  fs::create_directories(out_dir);
  save_report_json(out.report, (fs::path(out_dir) / "report.json").string());
  // The exported vectors are the power-normalized page descriptors — the
  // stage entering per-query whitening; there is no single whitened set.
  export_descriptors_csv(first_powered,
                         (fs::path(out_dir) / "descriptors.csv").string());
  // Per-query refits leave the similarities slightly asymmetric; the matrix
  // artifact averages both directions of each pair.
  const Eigen::MatrixXd symmetric = 0.5 * (first_sims + first_sims.transpose());
  save_matrix_csv(writer_similarity_matrix(first_ids, symmetric, first_writers),
                  (fs::path(out_dir) / "similarity_matrix.csv").string());
  save_matrix_csv(confusion_matrix(first_ids, first_sims, first_writers),
                  (fs::path(out_dir) / "confusion_matrix.csv").string());

  std::ostringstream summary;
  summary << summary_table(out.report);
  summary << "scored queries: " << out.report.scored_queries << " ("
          << out.report.singleton_queries << " singleton"
          << (out.report.include_singletons ? " included" : " excluded") << ")\n";
  if (!out.excluded_docs.empty()) {
    summary << "documents without sampling units:";
    for (const auto& id : out.excluded_docs) summary << ' ' << id;
    summary << '\n';
  }
  if (out.report.averaged_over > 1) {
    summary << "averaged over " << out.report.averaged_over << " runs\n";
  }
  out.summary_text = summary.str();
  write_text_atomic((fs::path(out_dir) / "summary.txt").string(), out.summary_text);
  return out;
}

std::string summary_table(const EvaluationReport& report) {
  char header[160];
  char values[160];
  std::snprintf(header, sizeof header, "%7s %7s %7s %7s %7s %7s  %s\n", "Top-1",
                "Top-5", "Top-10", "Pr@5", "Pr@10", "mAP", "Samples/page");
  std::snprintf(values, sizeof values,
                "%7.1f %7.1f %7.1f %7.1f %7.1f %7.1f  %12.1f\n",
                100.0 * report.top1, 100.0 * report.top5, 100.0 * report.top10,
                100.0 * report.pr5, 100.0 * report.pr10, 100.0 * report.map,
                report.samples_per_page);
  return std::string(header) + values;
}

CompareResult cmd_compare(const std::string& report_a, const std::string& report_b) {
  const EvaluationReport a = load_report_json(report_a);
  const EvaluationReport b = load_report_json(report_b);

  std::map<std::string, const RankedList*> b_queries;
  for (const auto& rl : b.per_query) b_queries[rl.query] = &rl;
  if (a.per_query.size() != b.per_query.size()) {
    throw CorpusMismatch("reports cover different query sets");
  }
  for (const auto& rl : a.per_query) {
    if (!b_queries.count(rl.query)) {
      throw CorpusMismatch("reports cover different query sets ('" + rl.query +
                           "' is missing from one)");
    }
  }

  CompareResult r;
  r.d_map = b.map - a.map;
  r.d_top1 = b.top1 - a.top1;
  r.d_top5 = b.top5 - a.top5;
  r.d_top10 = b.top10 - a.top10;
  r.d_pr5 = b.pr5 - a.pr5;
  r.d_pr10 = b.pr10 - a.pr10;
  r.d_samples_per_page = b.samples_per_page - a.samples_per_page;
  r.samples_ratio = a.samples_per_page > 0.0
                        ? b.samples_per_page / a.samples_per_page
                        : std::numeric_limits<double>::quiet_NaN();

  for (const auto& rl : a.per_query) {
    const RankedList& other = *b_queries.at(rl.query);
    QueryDelta q;
    q.query = rl.query;
    q.first_relevant_a = first_relevant_rank(rl);
    q.first_relevant_b = first_relevant_rank(other);
    q.ap_a = ap_or_negative(rl);
    q.ap_b = ap_or_negative(other);
    r.queries.push_back(std::move(q));
  }

  std::ostringstream text;
  char line[160];
  text << "              a        b    delta\n";
  const auto row = [&](const char* name, double va, double vb, bool percent) {
    const double s = percent ? 100.0 : 1.0;
    std::snprintf(line, sizeof line, "%-12s %8.2f %8.2f %+8.2f\n", name, s * va,
                  s * vb, s * (vb - va));
    text << line;
  };
  row("mAP", a.map, b.map, true);
  row("Top-1", a.top1, b.top1, true);
  row("Top-5", a.top5, b.top5, true);
  row("Top-10", a.top10, b.top10, true);
  row("Pr@5", a.pr5, b.pr5, true);
  row("Pr@10", a.pr10, b.pr10, true);
  row("Samples/page", a.samples_per_page, b.samples_per_page, false);
  if (std::isfinite(r.samples_ratio)) {
    std::snprintf(line, sizeof line, "sample ratio (b/a): %.4f\n", r.samples_ratio);
    text << line;
  }
  int moved = 0;
  for (const auto& q : r.queries) {
    if (q.first_relevant_a != q.first_relevant_b) ++moved;
  }
  text << "queries with first-relevant rank changes: " << moved << " of "
       << r.queries.size() << "\n";
  for (const auto& q : r.queries) {
    if (q.first_relevant_a == q.first_relevant_b) continue;
    std::snprintf(line, sizeof line, "  %-24s %4d -> %4d\n", q.query.c_str(),
                  q.first_relevant_a, q.first_relevant_b);
    text << line;
  }
  r.text = text.str();
  return r;
}

void cmd_surrogate(RunConfig config) {
  config.mode = SampleMode::patches;
  const CorpusManifest corpus = validate_config(config);
  if (config.out_dir.empty()) {
    throw ValidationError("an output directory is required");
  }
  if (!config.features_dir.empty()) {
    throw ValidationError("surrogate labeling works on extracted patches, not "
                          "imported features");
  }

  const std::size_t n = corpus.documents.size();
  std::vector<LocalFeatureSet> sets(n);
  std::vector<std::vector<SampleCrop>> crops(n);
  parallel_for(n, config.jobs, [&](std::size_t i) {
    const DocumentRecord& doc = corpus.documents[i];
    const GrayImage page =
        load_gray(resolve_image_path(config.manifest_path, doc.image_path));
    ExtractParams params;
    params.page_binarize =
        doc.pre_binarized ? BinarizeMethod::passthrough : config.binarize;
    sets[i] = extract_patch_features(page, doc.doc_id, params, &crops[i]);
  });

  Eigen::Index total = 0;
  int dim = -1;
  for (const auto& set : sets) {
    total += set.size();
    if (!set.empty()) dim = set.dim;
  }
  if (total == 0) {
    throw TooFewSamples("no patches were extracted from the corpus");
  }
  Eigen::MatrixXf all(total, dim);
  std::vector<SampleCrop> all_crops;
  all_crops.reserve(static_cast<std::size_t>(total));
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!sets[i].empty()) {
      all.middleRows(row, sets[i].size()) = sets[i].vectors;
      row += sets[i].size();
    }
    all_crops.insert(all_crops.end(), crops[i].begin(), crops[i].end());
  }
  if (all_crops.size() != static_cast<std::size_t>(total)) {
    throw ValidationError("patch bookkeeping mismatch between crops and rows");
  }

  const SurrogateLabeling labeling =
      build_surrogate_labels(all, std::move(all_crops), config.k,
                             derive_seed(config.seed, "surrogate"), config.cap_k);
  export_surrogate_labels(labeling, config.out_dir);
  log::info("surrogate labels for " + std::to_string(total) + " patches (k=" +
            std::to_string(labeling.k) + ") -> " + config.out_dir);
}

}  // namespace wr
