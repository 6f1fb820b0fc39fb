#pragma once

#include <array>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "wr/errors.hpp"

namespace wr {

// The 25 annotation classes: the kai trigram plus the 24 Greek letters.
enum class CharLabel : int {
  kai = 0,
  alpha, beta, gamma, delta, epsilon, zeta, eta, theta, iota, kappa,
  lambda, mu, nu, xi, omicron, pi, rho, sigma, tau, upsilon, phi,
  chi, psi, omega,
};

inline constexpr int kNumCharLabels = 25;

const std::array<std::string, kNumCharLabels>& char_label_names();
std::string to_string(CharLabel label);
// Throws ParseError for unknown label strings.
CharLabel parse_char_label(const std::string& name);

// Preservation tiers, best to worst. BT1 = pristine, BT2 = partly damaged,
// BT3 = unreadable without context. Ordering BT1 < BT2 < BT3; a maximum
// quality of BT2 selects {BT1, BT2}.
enum class Quality : int { BT1 = 1, BT2 = 2, BT3 = 3 };

struct BBox {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;
};

struct CharacterAnnotation {
  CharLabel label = CharLabel::kai;
  BBox bbox;
  Quality quality = Quality::BT1;
};

// One writing sample.
struct DocumentRecord {
  std::string doc_id;
  std::string writer_id;
  std::string image_path;
  bool pre_binarized = false;
};

struct CorpusManifest {
  std::string subset_name;
  std::vector<DocumentRecord> documents;
  std::map<std::string, std::vector<CharacterAnnotation>> annotations;

  const DocumentRecord* find(const std::string& doc_id) const;
};

// Loads and validates a manifest JSON file. Image paths are kept verbatim;
// relative paths are interpreted against the manifest's directory by
// resolve_image_path(). Missing writer_id falls back to the "Writer_N"
// filename convention (doc_id prefix before the last underscore).
// Image files themselves are not stat'ed here.
CorpusManifest load_manifest(const std::string& path);

// Parses manifest JSON from a string; base_hint only used in error messages.
CorpusManifest parse_manifest(const std::string& json_text,
                              const std::string& base_hint = "<string>");

void save_manifest(const CorpusManifest& manifest, const std::string& path);
std::string manifest_to_json(const CorpusManifest& manifest);

// Joins a possibly relative image path with the manifest's directory.
std::string resolve_image_path(const std::string& manifest_path,
                               const std::string& image_path);

// Keeps exactly the annotations with label in `labels` and
// quality <= max_quality. Documents are unchanged.
CorpusManifest filter_annotations(const CorpusManifest& manifest,
                                  const std::set<CharLabel>& labels,
                                  Quality max_quality);

// Writer of a document; throws UnknownDocument.
std::string writer_of(const CorpusManifest& manifest, const std::string& doc_id);

// Distinct writer ids in first-appearance order over `documents`.
std::vector<std::string> writer_ids(const CorpusManifest& manifest);

}  // namespace wr
