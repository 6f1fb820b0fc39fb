#include "wr/corpus.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "wr/log.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace wr {

const std::array<std::string, kNumCharLabels>& char_label_names() {
  static const std::array<std::string, kNumCharLabels> names = {
      "kai",    "alpha", "beta", "gamma",   "delta", "epsilon", "zeta",
      "eta",    "theta", "iota", "kappa",   "lambda", "mu",     "nu",
      "xi",     "omicron", "pi", "rho",     "sigma", "tau",     "upsilon",
      "phi",    "chi",   "psi",  "omega"};
  return names;
}

std::string to_string(CharLabel label) {
  return char_label_names()[static_cast<int>(label)];
}

CharLabel parse_char_label(const std::string& name) {
  const auto& names = char_label_names();
  for (int i = 0; i < kNumCharLabels; ++i)
    if (names[i] == name) return static_cast<CharLabel>(i);
  throw ParseError("unknown character label \"" + name + "\"");
}

const DocumentRecord* CorpusManifest::find(const std::string& doc_id) const {
  for (const auto& d : documents)
    if (d.doc_id == doc_id) return &d;
  return nullptr;
}

namespace {

// "Writer_N" import convention: prefix before the last underscore.
std::string writer_from_doc_id(const std::string& doc_id) {
  auto pos = doc_id.rfind('_');
  if (pos == std::string::npos || pos == 0)
    throw ValidationError("document \"" + doc_id +
                          "\" has no writer_id and no Writer_N style id to derive one from");
  return doc_id.substr(0, pos);
}

Quality parse_quality(const json& v, const std::string& ctx) {
  if (!v.is_number_integer())
    throw ParseError(ctx + ": quality must be an integer 1|2|3");
  int q = v.get<int>();
  if (q < 1 || q > 3) throw ValidationError(ctx + ": quality out of range 1..3");
  return static_cast<Quality>(q);
}

}  // namespace

CorpusManifest parse_manifest(const std::string& json_text,
                              const std::string& base_hint) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ParseError(base_hint + ": " + e.what());
  }
  if (!root.is_object()) throw ParseError(base_hint + ": manifest root must be an object");

  CorpusManifest m;
  m.subset_name = root.value("subset", std::string{});

  if (!root.contains("documents") || !root["documents"].is_array())
    throw ParseError(base_hint + ": missing \"documents\" array");
  if (root["documents"].empty()) throw ValidationError("empty corpus");

  std::unordered_set<std::string> seen_ids;
  for (const auto& d : root["documents"]) {
    if (!d.is_object()) throw ParseError(base_hint + ": document entry must be an object");
    DocumentRecord rec;
    if (!d.contains("doc_id") || !d["doc_id"].is_string())
      throw ParseError(base_hint + ": document missing string \"doc_id\"");
    rec.doc_id = d["doc_id"].get<std::string>();
    if (rec.doc_id.empty()) throw ValidationError("empty doc_id");
    if (!seen_ids.insert(rec.doc_id).second)
      throw ValidationError("duplicate doc_id \"" + rec.doc_id + "\"");
    rec.writer_id = d.value("writer_id", std::string{});
    if (rec.writer_id.empty()) rec.writer_id = writer_from_doc_id(rec.doc_id);
    rec.image_path = d.value("image", std::string{});
    rec.pre_binarized = d.value("pre_binarized", false);
    m.documents.push_back(std::move(rec));
  }

  if (root.contains("annotations")) {
    const auto& anns = root["annotations"];
    if (!anns.is_object())
      throw ParseError(base_hint + ": \"annotations\" must map doc_id to a list");
    for (auto it = anns.begin(); it != anns.end(); ++it) {
      const std::string& doc_id = it.key();
      if (seen_ids.find(doc_id) == seen_ids.end())
        throw ValidationError("annotations reference unknown document \"" + doc_id + "\"");
      if (!it.value().is_array())
        throw ParseError(base_hint + ": annotations for \"" + doc_id + "\" must be a list");
      std::vector<CharacterAnnotation> list;
      for (const auto& a : it.value()) {
        const std::string ctx = base_hint + ": annotation in \"" + doc_id + "\"";
        if (!a.is_object() || !a.contains("label") || !a["label"].is_string())
          throw ParseError(ctx + " missing string \"label\"");
        CharacterAnnotation ann;
        ann.label = parse_char_label(a["label"].get<std::string>());
        if (!a.contains("bbox") || !a["bbox"].is_array() || a["bbox"].size() != 4)
          throw ParseError(ctx + " needs \"bbox\": [x, y, w, h]");
        const auto& bb = a["bbox"];
        for (const auto& c : bb)
          if (!c.is_number_integer()) throw ParseError(ctx + ": bbox entries must be integers");
        ann.bbox = BBox{bb[0].get<int>(), bb[1].get<int>(), bb[2].get<int>(), bb[3].get<int>()};
        if (ann.bbox.width <= 0 || ann.bbox.height <= 0)
          throw ValidationError(ctx + ": bbox width and height must be positive");
        if (a.contains("quality")) {
          ann.quality = parse_quality(a["quality"], ctx);
        } else {
          if (ann.label == CharLabel::kai)
            throw ValidationError(ctx + ": kai annotations require a quality tag");
          ann.quality = Quality::BT1;
        }
        list.push_back(ann);
      }
      if (!list.empty()) m.annotations[doc_id] = std::move(list);
    }
  }

  if (root.contains("writers")) {
    if (!root["writers"].is_number_integer())
      throw ParseError(base_hint + ": \"writers\" must be an integer");
    const int declared = root["writers"].get<int>();
    std::set<std::string> distinct;
    for (const auto& d : m.documents) distinct.insert(d.writer_id);
    if (declared != static_cast<int>(distinct.size()))
      throw ValidationError("manifest declares " + std::to_string(declared) +
                            " writers but documents have " +
                            std::to_string(distinct.size()));
  }
  return m;
}

CorpusManifest load_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest \"" + path + "\"");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_manifest(buf.str(), path);
}

std::string manifest_to_json(const CorpusManifest& manifest) {
  json root;
  root["subset"] = manifest.subset_name;
  root["documents"] = json::array();
  for (const auto& d : manifest.documents) {
    root["documents"].push_back({{"doc_id", d.doc_id},
                                 {"writer_id", d.writer_id},
                                 {"image", d.image_path},
                                 {"pre_binarized", d.pre_binarized}});
  }
  json anns = json::object();
  for (const auto& [doc_id, list] : manifest.annotations) {
    json arr = json::array();
    for (const auto& a : list) {
      arr.push_back({{"label", to_string(a.label)},
                     {"bbox", {a.bbox.x, a.bbox.y, a.bbox.width, a.bbox.height}},
                     {"quality", static_cast<int>(a.quality)}});
    }
    anns[doc_id] = std::move(arr);
  }
  root["annotations"] = std::move(anns);
  return root.dump(2) + "\n";
}

void save_manifest(const CorpusManifest& manifest, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write \"" + tmp + "\"");
    out << manifest_to_json(manifest);
  }
  fs::rename(tmp, path);
}

std::string resolve_image_path(const std::string& manifest_path,
                               const std::string& image_path) {
  fs::path img(image_path);
  if (img.is_absolute()) return image_path;
  return (fs::path(manifest_path).parent_path() / img).string();
}

CorpusManifest filter_annotations(const CorpusManifest& manifest,
                                  const std::set<CharLabel>& labels,
                                  Quality max_quality) {
  if (labels.empty()) throw ValidationError("filter_annotations: empty label set");
  CorpusManifest out;
  out.subset_name = manifest.subset_name;
  out.documents = manifest.documents;
  for (const auto& [doc_id, list] : manifest.annotations) {
    std::vector<CharacterAnnotation> kept;
    for (const auto& a : list)
      if (labels.count(a.label) &&
          static_cast<int>(a.quality) <= static_cast<int>(max_quality))
        kept.push_back(a);
    if (!kept.empty()) out.annotations[doc_id] = std::move(kept);
  }
  return out;
}

std::string writer_of(const CorpusManifest& manifest, const std::string& doc_id) {
  const DocumentRecord* rec = manifest.find(doc_id);
  if (!rec) throw UnknownDocument("unknown document \"" + doc_id + "\"");
  return rec->writer_id;
}

std::vector<std::string> writer_ids(const CorpusManifest& manifest) {
  std::vector<std::string> out;
  for (const auto& d : manifest.documents)
    if (std::find(out.begin(), out.end(), d.writer_id) == out.end())
      out.push_back(d.writer_id);
  return out;
}

}  // namespace wr
