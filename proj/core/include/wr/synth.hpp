#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "wr/corpus.hpp"
#include "wr/image.hpp"

namespace wr {

// One scribal hand. letterform_seed fixes this writer's private deformation
// of every glyph class, so shape is consistent within a writer and different
// between writers; the scalar fields control slant, ink weight and line flow.
struct SynthWriterProfile {
  std::string writer_id;
  double slant_deg = 0.0;
  double stroke_width = 3.0;       // px
  double glyph_jitter = 0.012;     // per-instance vertex noise, glyph units
  double baseline_wobble = 2.0;    // px amplitude
  double deform_scale = 0.055;     // per-writer letterform offset sigma
  std::uint64_t letterform_seed = 0;
};

struct SynthParams {
  int n_writers = 2;
  int docs_per_writer = 2;
  std::uint64_t seed = 17;
  int page_width = 1240;
  int page_height = 960;
  int lines_per_page = 13;
  double glyph_height = 40.0;          // px
  double profile_spread = 1.0;         // scales inter-writer separation
  double occlusion_bt2 = 0.18;         // share of kai instances damaged lightly
  double occlusion_bt3 = 0.12;         // share damaged heavily
  int forced_bt1_per_page = 2;         // leading kai instances kept pristine
  std::string subset_name = "synthetic";
};

// Polyline glyph skeletons in the unit square (y down). aspect is the glyph
// box width/height ratio. The kai class is the three-letter ligature.
using Stroke = std::vector<std::array<double, 2>>;
struct GlyphSkeleton {
  std::vector<Stroke> strokes;
  double aspect = 0.62;
};
const GlyphSkeleton& glyph_skeleton(CharLabel label);

std::vector<SynthWriterProfile> make_writer_profiles(int n, std::uint64_t seed,
                                                     double spread = 1.0);

// One rendered page with its ground truth.
struct SynthPage {
  GrayImage image;
  BinaryImage truth_ink;  // exact ink mask before any binarization
  std::vector<CharacterAnnotation> annotations;
};

// Deterministic for (profile, params, page_seed). Every line carries exactly
// one kai; every annotation keeps at least one ink pixel, occlusion included.
SynthPage render_page(const SynthWriterProfile& profile, const SynthParams& params,
                      std::uint64_t page_seed);

// Renders n_writers x docs_per_writer pages into out_dir as PNG files plus a
// manifest.json next to them, and returns the manifest. Image paths in the
// manifest are relative to out_dir.
CorpusManifest generate_corpus(const SynthParams& params, const std::string& out_dir);

}  // namespace wr
