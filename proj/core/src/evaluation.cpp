#include "wr/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

#include <nlohmann/json.hpp>

#include "wr/log.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace wr {

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size())
    throw DimMismatch("cosine over lengths " + std::to_string(a.size()) + " and " +
                      std::to_string(b.size()));
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) {
    log::warn("cosine against a zero vector, returning 0");
    return 0.0;
  }
  return a.dot(b) / (na * nb);
}

RankedList rank(const PageDescriptor& query,
                const std::vector<PageDescriptor>& gallery,
                const std::map<std::string, std::string>& writers) {
  const auto writer_it = writers.find(query.doc_id);
  if (writer_it == writers.end())
    throw UnknownDocument("no writer for query " + query.doc_id);
  const std::string& query_writer = writer_it->second;

  RankedList rl;
  rl.query = query.doc_id;
  rl.entries.reserve(gallery.size());
  for (const auto& d : gallery) {
    if (d.doc_id == query.doc_id)
      throw ValidationError("gallery contains the query " + query.doc_id);
    const auto it = writers.find(d.doc_id);
    if (it == writers.end())
      throw UnknownDocument("no writer for gallery document " + d.doc_id);
    rl.entries.push_back({d.doc_id, cosine_similarity(query.vector, d.vector),
                          it->second == query_writer});
  }
  std::sort(rl.entries.begin(), rl.entries.end(),
            [](const RankedEntry& a, const RankedEntry& b) {
              if (a.similarity != b.similarity) return a.similarity > b.similarity;
              return a.doc_id < b.doc_id;
            });
  return rl;
}

double average_precision(const RankedList& rl) {
  double sum = 0.0;
  int relevant = 0;
  for (std::size_t i = 0; i < rl.entries.size(); ++i) {
    if (!rl.entries[i].relevant) continue;
    ++relevant;
    sum += double(relevant) / double(i + 1);
  }
  if (relevant == 0)
    throw NoRelevant("query " + rl.query + " has no relevant document");
  return sum / relevant;
}

int top_k(const RankedList& rl, int k) {
  if (k < 1) throw InvalidParams("top_k needs k >= 1");
  const std::size_t limit = std::min(rl.entries.size(), static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < limit; ++i)
    if (rl.entries[i].relevant) return 1;
  return 0;
}

double precision_at_k(const RankedList& rl, int k) {
  if (k < 1) throw InvalidParams("precision_at_k needs k >= 1");
  const std::size_t limit = std::min(rl.entries.size(), static_cast<std::size_t>(k));
  int relevant = 0;
  for (std::size_t i = 0; i < limit; ++i) relevant += rl.entries[i].relevant;
  return double(relevant) / double(k);
}

namespace {

// Pairwise cosines of one shared embedding; the bridge from the descriptor
// entry points to the matrix-driven core.
Eigen::MatrixXd cosine_matrix(const std::vector<PageDescriptor>& descriptors) {
  const Eigen::Index n = static_cast<Eigen::Index>(descriptors.size());
  Eigen::MatrixXd s(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    s(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v =
          cosine_similarity(descriptors[static_cast<std::size_t>(i)].vector,
                            descriptors[static_cast<std::size_t>(j)].vector);
      s(i, j) = v;
      s(j, i) = v;
    }
  }
  return s;
}

std::vector<std::string> ids_of(const std::vector<PageDescriptor>& descriptors) {
  std::vector<std::string> ids;
  ids.reserve(descriptors.size());
  for (const auto& d : descriptors) ids.push_back(d.doc_id);
  return ids;
}

void check_matrix_shape(const std::vector<std::string>& doc_ids,
                        const Eigen::MatrixXd& similarities) {
  const Eigen::Index n = static_cast<Eigen::Index>(doc_ids.size());
  if (similarities.rows() != n || similarities.cols() != n)
    throw DimMismatch("similarity matrix is " + std::to_string(similarities.rows()) +
                      "x" + std::to_string(similarities.cols()) + " for " +
                      std::to_string(n) + " documents");
}

// Row q of the similarity matrix ordered like rank(): similarity descending,
// doc_id ascending on ties, the query itself excluded.
RankedList rank_row(std::size_t q, const std::vector<std::string>& doc_ids,
                    const Eigen::MatrixXd& similarities,
                    const std::map<std::string, std::string>& writers) {
  const std::string& query_writer = writers.at(doc_ids[q]);
  RankedList rl;
  rl.query = doc_ids[q];
  rl.entries.reserve(doc_ids.size() - 1);
  for (std::size_t j = 0; j < doc_ids.size(); ++j) {
    if (j == q) continue;
    rl.entries.push_back({doc_ids[j],
                          similarities(static_cast<Eigen::Index>(q),
                                       static_cast<Eigen::Index>(j)),
                          writers.at(doc_ids[j]) == query_writer});
  }
  std::sort(rl.entries.begin(), rl.entries.end(),
            [](const RankedEntry& a, const RankedEntry& b) {
              if (a.similarity != b.similarity) return a.similarity > b.similarity;
              return a.doc_id < b.doc_id;
            });
  return rl;
}

std::map<std::string, std::string> writers_of(const CorpusManifest& corpus,
                                              const std::vector<std::string>& doc_ids) {
  std::map<std::string, std::string> writers;
  for (const auto& id : doc_ids) {
    if (writers.count(id))
      throw ValidationError("duplicate descriptor for document " + id);
    writers[id] = writer_of(corpus, id);
  }
  return writers;
}

}  // namespace

EvaluationReport evaluate(const CorpusManifest& corpus,
                          const std::vector<PageDescriptor>& descriptors,
                          bool include_singletons,
                          const std::map<std::string, double>& units_per_doc) {
  return evaluate(corpus, ids_of(descriptors), cosine_matrix(descriptors),
                  include_singletons, units_per_doc);
}

EvaluationReport evaluate(const CorpusManifest& corpus,
                          const std::vector<std::string>& doc_ids,
                          const Eigen::MatrixXd& similarities,
                          bool include_singletons,
                          const std::map<std::string, double>& units_per_doc) {
  check_matrix_shape(doc_ids, similarities);
  const std::map<std::string, std::string> writers = writers_of(corpus, doc_ids);

  EvaluationReport report;
  report.include_singletons = include_singletons;

  double sum_ap = 0.0, sum_top1 = 0.0, sum_top5 = 0.0, sum_top10 = 0.0;
  double sum_pr5 = 0.0, sum_pr10 = 0.0;
  int scored = 0;

  for (std::size_t q = 0; q < doc_ids.size(); ++q) {
    RankedList rl = rank_row(q, doc_ids, similarities, writers);
    const bool has_relevant =
        std::any_of(rl.entries.begin(), rl.entries.end(),
                    [](const RankedEntry& e) { return e.relevant; });

    if (!has_relevant) {
      ++report.singleton_queries;
      if (include_singletons) {
        // Scored as a miss everywhere.
        ++scored;
      }
    } else {
      sum_ap += average_precision(rl);
      sum_top1 += top_k(rl, 1);
      sum_top5 += top_k(rl, 5);
      sum_top10 += top_k(rl, 10);
      sum_pr5 += precision_at_k(rl, 5);
      sum_pr10 += precision_at_k(rl, 10);
      ++scored;
    }
    report.per_query.push_back(std::move(rl));
  }

  report.scored_queries = scored;
  if (scored > 0) {
    report.map = sum_ap / scored;
    report.top1 = sum_top1 / scored;
    report.top5 = sum_top5 / scored;
    report.top10 = sum_top10 / scored;
    report.pr5 = sum_pr5 / scored;
    report.pr10 = sum_pr10 / scored;
  } else {
    log::warn("no scorable queries (every writer has a single document)");
  }

  if (!units_per_doc.empty()) {
    double sum_units = 0.0;
    int counted = 0;
    for (const auto& id : doc_ids) {
      const auto it = units_per_doc.find(id);
      if (it == units_per_doc.end()) continue;
      sum_units += it->second;
      ++counted;
    }
    if (counted > 0) report.samples_per_page = sum_units / counted;
  }
  return report;
}

namespace {

std::vector<std::string> writer_order(
    const std::vector<std::string>& doc_ids,
    const std::map<std::string, std::string>& writers) {
  std::vector<std::string> order;
  std::set<std::string> seen;
  for (const auto& id : doc_ids) {
    const auto it = writers.find(id);
    if (it == writers.end())
      throw UnknownDocument("no writer for document " + id);
    if (seen.insert(it->second).second) order.push_back(it->second);
  }
  return order;
}

}  // namespace

WriterMatrix writer_similarity_matrix(
    const std::vector<PageDescriptor>& descriptors,
    const std::map<std::string, std::string>& writers) {
  return writer_similarity_matrix(ids_of(descriptors), cosine_matrix(descriptors),
                                  writers);
}

WriterMatrix writer_similarity_matrix(
    const std::vector<std::string>& doc_ids,
    const Eigen::MatrixXd& similarities,
    const std::map<std::string, std::string>& writers) {
  if (doc_ids.size() < 2)
    throw ValidationError("similarity matrix needs at least 2 documents");
  check_matrix_shape(doc_ids, similarities);
  WriterMatrix m;
  m.writers = writer_order(doc_ids, writers);
  const int w = static_cast<int>(m.writers.size());
  std::map<std::string, int> index;
  for (int i = 0; i < w; ++i) index[m.writers[static_cast<std::size_t>(i)]] = i;

  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(w, w);
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(w, w);
  for (std::size_t a = 0; a < doc_ids.size(); ++a) {
    const int wa = index.at(writers.at(doc_ids[a]));
    for (std::size_t b = 0; b < doc_ids.size(); ++b) {
      if (a == b) continue;
      const int wb = index.at(writers.at(doc_ids[b]));
      sums(wa, wb) += similarities(static_cast<Eigen::Index>(a),
                                   static_cast<Eigen::Index>(b));
      counts(wa, wb) += 1.0;
    }
  }
  m.values.resize(w, w);
  for (int i = 0; i < w; ++i)
    for (int j = 0; j < w; ++j)
      m.values(i, j) = counts(i, j) > 0.0
                           ? sums(i, j) / counts(i, j)
                           : std::numeric_limits<double>::quiet_NaN();
  return m;
}

WriterMatrix confusion_matrix(const std::vector<PageDescriptor>& descriptors,
                              const std::map<std::string, std::string>& writers) {
  return confusion_matrix(ids_of(descriptors), cosine_matrix(descriptors), writers);
}

WriterMatrix confusion_matrix(const std::vector<std::string>& doc_ids,
                              const Eigen::MatrixXd& similarities,
                              const std::map<std::string, std::string>& writers) {
  if (doc_ids.size() < 2)
    throw ValidationError("confusion matrix needs at least 2 documents");
  check_matrix_shape(doc_ids, similarities);
  WriterMatrix m;
  m.writers = writer_order(doc_ids, writers);
  const int w = static_cast<int>(m.writers.size());
  std::map<std::string, int> index;
  for (int i = 0; i < w; ++i) index[m.writers[static_cast<std::size_t>(i)]] = i;
  m.values = Eigen::MatrixXd::Zero(w, w);

  for (std::size_t q = 0; q < doc_ids.size(); ++q) {
    const RankedList rl = rank_row(q, doc_ids, similarities, writers);
    const int truth = index.at(writers.at(doc_ids[q]));
    const int predicted = index.at(writers.at(rl.entries.front().doc_id));
    m.values(truth, predicted) += 1.0;
  }
  return m;
}

void save_matrix_csv(const WriterMatrix& m, const std::string& path) {
  std::string text = "writer";
  for (const auto& w : m.writers) text += "," + w;
  text += '\n';
  char buf[40];
  for (Eigen::Index i = 0; i < m.values.rows(); ++i) {
    text += m.writers[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < m.values.cols(); ++j) {
      if (std::isnan(m.values(i, j))) {
        text += ",NA";
      } else {
        std::snprintf(buf, sizeof buf, ",%.17g", m.values(i, j));
        text += buf;
      }
    }
    text += '\n';
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out << text;
  }
  fs::rename(tmp, path);
}

void save_report_json(const EvaluationReport& report, const std::string& path) {
  ordered_json queries = ordered_json::array();
  for (const auto& rl : report.per_query) {
    ordered_json entries = ordered_json::array();
    bool any_relevant = false;
    for (const auto& e : rl.entries) {
      entries.push_back(ordered_json{{"doc_id", e.doc_id},
                                     {"similarity", e.similarity},
                                     {"relevant", e.relevant}});
      any_relevant = any_relevant || e.relevant;
    }
    ordered_json q{{"query", rl.query}};
    if (any_relevant)
      q["average_precision"] = average_precision(rl);
    else
      q["average_precision"] = nullptr;
    q["entries"] = std::move(entries);
    queries.push_back(std::move(q));
  }

  ordered_json j{
      {"metrics",
       ordered_json{{"map", report.map},
                    {"top1", report.top1},
                    {"top5", report.top5},
                    {"top10", report.top10},
                    {"pr5", report.pr5},
                    {"pr10", report.pr10}}},
      {"samples_per_page", report.samples_per_page},
      {"scored_queries", report.scored_queries},
      {"singleton_queries", report.singleton_queries},
      {"include_singletons", report.include_singletons},
      {"averaged_over", report.averaged_over},
      {"queries", std::move(queries)}};

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out << j.dump(2) << '\n';
  }
  fs::rename(tmp, path);
}

EvaluationReport load_report_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  ordered_json j;
  try {
    j = ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }

  EvaluationReport report;
  try {
    const auto& metrics = j.at("metrics");
    report.map = metrics.at("map").get<double>();
    report.top1 = metrics.at("top1").get<double>();
    report.top5 = metrics.at("top5").get<double>();
    report.top10 = metrics.at("top10").get<double>();
    report.pr5 = metrics.at("pr5").get<double>();
    report.pr10 = metrics.at("pr10").get<double>();
    report.samples_per_page = j.at("samples_per_page").get<double>();
    report.scored_queries = j.at("scored_queries").get<int>();
    report.singleton_queries = j.at("singleton_queries").get<int>();
    report.include_singletons = j.at("include_singletons").get<bool>();
    report.averaged_over = j.value("averaged_over", 1);
    for (const auto& q : j.at("queries")) {
      RankedList rl;
      rl.query = q.at("query").get<std::string>();
      for (const auto& e : q.at("entries"))
        rl.entries.push_back({e.at("doc_id").get<std::string>(),
                              e.at("similarity").get<double>(),
                              e.at("relevant").get<bool>()});
      report.per_query.push_back(std::move(rl));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return report;
}

EvaluationReport average_reports(const std::vector<EvaluationReport>& reports) {
  if (reports.empty()) throw InvalidParams("nothing to average");
  std::set<std::string> base;
  for (const auto& rl : reports.front().per_query) base.insert(rl.query);
  for (const auto& r : reports) {
    std::set<std::string> qs;
    for (const auto& rl : r.per_query) qs.insert(rl.query);
    if (qs != base) throw CorpusMismatch("reports cover different query sets");
  }

  EvaluationReport out = reports.front();
  out.map = out.top1 = out.top5 = out.top10 = out.pr5 = out.pr10 = 0.0;
  out.samples_per_page = 0.0;
  for (const auto& r : reports) {
    out.map += r.map;
    out.top1 += r.top1;
    out.top5 += r.top5;
    out.top10 += r.top10;
    out.pr5 += r.pr5;
    out.pr10 += r.pr10;
    out.samples_per_page += r.samples_per_page;
  }
  const double n = static_cast<double>(reports.size());
  out.map /= n;
  out.top1 /= n;
  out.top5 /= n;
  out.top10 /= n;
  out.pr5 /= n;
  out.pr10 /= n;
  out.samples_per_page /= n;
  out.averaged_over = static_cast<int>(reports.size());
  return out;
}

}  // namespace wr
