#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "wr/corpus.hpp"
#include "wr/descriptor.hpp"

namespace wr {

struct RankedEntry {
  std::string doc_id;
  double similarity = 0.0;
  bool relevant = false;
};

// Full gallery ordering for one query: similarity descending, ties broken by
// doc_id ascending, query itself excluded.
struct RankedList {
  std::string query;
  std::vector<RankedEntry> entries;
};

// a.b / (|a||b|); 0 with a warning when either norm vanishes.
double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// writers maps doc_id -> writer_id; relevance = same writer as the query.
RankedList rank(const PageDescriptor& query,
                const std::vector<PageDescriptor>& gallery,
                const std::map<std::string, std::string>& writers);

// Mean over relevant positions i (1-based) of precision at i. Throws
// NoRelevant when the list has no relevant entry.
double average_precision(const RankedList& rl);

// 1 iff any of the first k entries is relevant.
int top_k(const RankedList& rl, int k);

// Relevant count among the first min(k, size) entries, over a denominator
// that stays k.
double precision_at_k(const RankedList& rl, int k);

struct EvaluationReport {
  double map = 0.0;
  double top1 = 0.0, top5 = 0.0, top10 = 0.0;
  double pr5 = 0.0, pr10 = 0.0;
  double samples_per_page = 0.0;
  int scored_queries = 0;      // queries entering the averages
  int singleton_queries = 0;   // queries whose writer has no other document
  bool include_singletons = false;
  int averaged_over = 1;       // > 1 for multi-seed means
  std::vector<RankedList> per_query;  // every query, excluded ones included
};

// Leave-one-image-out retrieval over one descriptor per document. Queries
// without any same-writer gallery document are excluded from the averages
// unless include_singletons (then they score 0). units_per_doc feeds the
// samples_per_page mean; pass the sampling-unit counts from extraction.
EvaluationReport evaluate(const CorpusManifest& corpus,
                          const std::vector<PageDescriptor>& descriptors,
                          bool include_singletons = false,
                          const std::map<std::string, double>& units_per_doc = {});

// Same protocol over a precomputed document-by-document similarity matrix
// (row = query, columns ordered like doc_ids, diagonal ignored). This is
// the entry point when similarities do not come from one shared embedding,
// e.g. when the whitening model is re-fit per query.
EvaluationReport evaluate(const CorpusManifest& corpus,
                          const std::vector<std::string>& doc_ids,
                          const Eigen::MatrixXd& similarities,
                          bool include_singletons = false,
                          const std::map<std::string, double>& units_per_doc = {});

// Square writer-by-writer matrix; NaN marks undefined cells (written as
// "NA" in CSV).
struct WriterMatrix {
  std::vector<std::string> writers;
  Eigen::MatrixXd values;
};

// Mean pairwise cosine between documents of writer i and writer j, same
// document pairs excluded. The diagonal of a single-document writer is NaN.
WriterMatrix writer_similarity_matrix(
    const std::vector<PageDescriptor>& descriptors,
    const std::map<std::string, std::string>& writers);

// The same aggregation over a precomputed similarity matrix.
WriterMatrix writer_similarity_matrix(
    const std::vector<std::string>& doc_ids,
    const Eigen::MatrixXd& similarities,
    const std::map<std::string, std::string>& writers);

// Counts of top-1 attributions: row = true writer, column = writer of the
// most similar gallery document.
WriterMatrix confusion_matrix(const std::vector<PageDescriptor>& descriptors,
                              const std::map<std::string, std::string>& writers);

WriterMatrix confusion_matrix(const std::vector<std::string>& doc_ids,
                              const Eigen::MatrixXd& similarities,
                              const std::map<std::string, std::string>& writers);

void save_matrix_csv(const WriterMatrix& m, const std::string& path);

// Report round-trip (JSON, UTF-8); the loaded report replays the metrics and
// per-query rankings exactly.
void save_report_json(const EvaluationReport& report, const std::string& path);
EvaluationReport load_report_json(const std::string& path);

// Plain mean of the metric fields across seeds. All reports must cover the
// same query set (else CorpusMismatch); per-query lists are taken from the
// first report.
EvaluationReport average_reports(const std::vector<EvaluationReport>& reports);

}  // namespace wr
