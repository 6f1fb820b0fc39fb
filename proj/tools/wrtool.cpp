// Command-line front end: synthetic corpus generation, feature indexing,
// retrieval evaluation, report comparison and surrogate labeling.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "wr/log.hpp"
#include "wr/pipeline.hpp"
#include "wr/synth.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

std::set<wr::CharLabel> parse_labels(const std::vector<std::string>& names) {
  std::set<wr::CharLabel> labels;
  for (const auto& name : names) {
    if (name == "all") {
      for (int i = 0; i < wr::kNumCharLabels; ++i) {
        labels.insert(static_cast<wr::CharLabel>(i));
      }
      continue;
    }
    labels.insert(wr::parse_char_label(name));
  }
  return labels;
}

int run_synth(const wr::SynthParams& params, const std::string& out_dir) {
  const wr::CorpusManifest manifest = wr::generate_corpus(params, out_dir);
  std::cout << "wrote " << manifest.documents.size() << " pages for "
            << wr::writer_ids(manifest).size() << " writers under " << out_dir
            << "\n"
            << "manifest: "
            << (std::filesystem::path(out_dir) / "manifest.json").string()
            << "\n";
  return 0;
}

int run_compare(const std::string& report_a, const std::string& report_b,
                const std::string& out_path) {
  const wr::CompareResult result = wr::cmd_compare(report_a, report_b);
  std::cout << result.text;
  if (!out_path.empty()) {
    nlohmann::ordered_json j;
    j["delta"] = {{"map", result.d_map},
                  {"top1", result.d_top1},
                  {"top5", result.d_top5},
                  {"top10", result.d_top10},
                  {"pr5", result.d_pr5},
                  {"pr10", result.d_pr10},
                  {"samples_per_page", result.d_samples_per_page}};
    j["samples_ratio"] = result.samples_ratio;
    nlohmann::ordered_json queries = nlohmann::ordered_json::array();
    for (const auto& q : result.queries) {
      queries.push_back({{"query", q.query},
                         {"first_relevant_a", q.first_relevant_a},
                         {"first_relevant_b", q.first_relevant_b},
                         {"ap_a", q.ap_a},
                         {"ap_b", q.ap_b}});
    }
    j["queries"] = queries;
    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) throw wr::IoError("cannot open " + out_path + " for writing");
    out << j.dump(2) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"writer retrieval over character and patch sampling"};
  app.require_subcommand(1);

  bool quiet = false;
  bool verbose = false;
  app.add_flag("-q,--quiet", quiet, "warnings and errors only");
  app.add_flag("--verbose", verbose, "debug logging");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic labeled corpus");
  wr::SynthParams sp;
  std::string synth_out;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--writers", sp.n_writers, "number of writers");
  synth->add_option("--docs", sp.docs_per_writer, "documents per writer");
  synth->add_option("--seed", sp.seed, "corpus seed");
  synth->add_option("--lines", sp.lines_per_page, "text lines per page");
  synth->add_option("--width", sp.page_width, "page width in px");
  synth->add_option("--height", sp.page_height, "page height in px");
  synth->add_option("--spread", sp.profile_spread, "writer style spread");
  synth->add_option("--bt2", sp.occlusion_bt2, "fraction of partly damaged targets");
  synth->add_option("--bt3", sp.occlusion_bt3, "fraction of heavily damaged targets");
  synth->add_option("--forced-bt1", sp.forced_bt1_per_page,
                    "pristine target instances guaranteed per page");
  synth->add_option("--subset", sp.subset_name, "subset name in the manifest");

  // shared run configuration (index, surrogate)
  wr::RunConfig config;
  std::string mode_name = "patches";
  std::string encoder_name = "vlad";
  std::string binarize_name = "otsu";
  std::vector<std::string> char_names;
  int quality = 3;

  auto* index = app.add_subcommand("index", "extract features and fit the codebook");
  index->add_option("--manifest", config.manifest_path, "corpus manifest")->required();
  index->add_option("--out", config.out_dir, "index output directory")->required();
  index->add_option("--mode", mode_name, "patches | characters | combined");
  index->add_option("--chars", char_names,
                    "character labels for character modes (or 'all')")
      ->delimiter(',');
  index->add_option("--quality", quality, "worst annotation tier to keep (1-3)")
      ->check(CLI::Range(1, 3));
  index->add_option("--encoder", encoder_name, "vlad | softassign | sum | gmp");
  index->add_option("--alpha", config.alpha, "power normalization exponent");
  index->add_option("--k", config.k, "codebook size");
  index->add_option("--seed", config.seed, "run seed");
  index->add_option("--jobs", config.jobs, "worker threads");
  index->add_option("--features-dir", config.features_dir,
                    "import per-document feature files instead of extracting");
  index->add_option("--binarize", binarize_name, "otsu | sauvola | passthrough");
  index->add_option("--dump-crops", config.dump_crops_dir,
                    "write sampled crops as PNGs here");
  index->add_flag("--cap-k", config.cap_k, "shrink k to the descriptor count");
  index->add_option("--kmeans-sample", config.kmeans_sample,
                    "codebook training subsample cap");
  index->add_option("--gmp-lambda", config.gmp_lambda,
                    "ridge strength for the gmp encoder");

  auto* evaluate = app.add_subcommand("evaluate", "rank and score an index");
  std::vector<std::string> index_dirs;
  std::string eval_out;
  bool include_singletons = false;
  int eval_jobs = 1;
  evaluate->add_option("--index", index_dirs,
                       "index directory (repeat to average over seeds)")
      ->required();
  evaluate->add_option("--out", eval_out, "report output directory")->required();
  evaluate->add_flag("--include-singletons", include_singletons,
                     "score single-document writers as misses");
  evaluate->add_option("--jobs", eval_jobs, "worker threads");

  auto* compare = app.add_subcommand("compare", "diff two evaluation reports");
  std::string report_a, report_b, compare_out;
  compare->add_option("report_a", report_a, "baseline report.json")->required();
  compare->add_option("report_b", report_b, "candidate report.json")->required();
  compare->add_option("--out", compare_out, "write the deltas as JSON");

  auto* surrogate =
      app.add_subcommand("surrogate", "cluster patches into pseudo-classes");
  surrogate->add_option("--manifest", config.manifest_path, "corpus manifest")
      ->required();
  surrogate->add_option("--out", config.out_dir, "label output directory")
      ->required();
  surrogate->add_option("--k", config.k, "number of pseudo-classes");
  surrogate->add_option("--seed", config.seed, "clustering seed");
  surrogate->add_option("--jobs", config.jobs, "worker threads");
  surrogate->add_option("--binarize", binarize_name, "otsu | sauvola | passthrough");
  surrogate->add_flag("--cap-k", config.cap_k, "shrink k to the patch count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  if (quiet) wr::log::min_level() = wr::log::Level::warn;
  if (verbose) wr::log::min_level() = wr::log::Level::debug;

  try {
    if (app.got_subcommand(synth)) return run_synth(sp, synth_out);
    if (app.got_subcommand(compare)) return run_compare(report_a, report_b, compare_out);

    config.mode = wr::parse_sample_mode(mode_name);
    config.encoder = wr::parse_encoder(encoder_name);
    config.binarize = wr::parse_binarize_method(binarize_name);
    config.char_labels = parse_labels(char_names);
    config.max_quality = static_cast<wr::Quality>(quality);

    if (app.got_subcommand(index)) {
      wr::cmd_index(config);
      return 0;
    }
    if (app.got_subcommand(evaluate)) {
      const wr::EvaluateOutputs out =
          wr::cmd_evaluate(index_dirs, eval_out, include_singletons, eval_jobs);
      std::cout << out.summary_text;
      return 0;
    }
    if (app.got_subcommand(surrogate)) {
      wr::cmd_surrogate(config);
      return 0;
    }
  } catch (const wr::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const wr::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const wr::InvalidParams& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const wr::UnknownDocument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const wr::CorpusMismatch& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const wr::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
