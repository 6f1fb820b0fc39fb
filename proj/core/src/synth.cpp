#include "wr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numbers>

#include "wr/image_io.hpp"
#include "wr/log.hpp"
#include "wr/rng.hpp"

namespace fs = std::filesystem;

namespace wr {

namespace {

constexpr double kBaselineV = 0.78;   // baseline height inside the glyph box
constexpr double kWobblePeriod = 260; // px
constexpr double kInkLevel = 25.0;
constexpr double kPaperLevel = 212.0;

Stroke arc(double cx, double cy, double rx, double ry, double a0_deg, double a1_deg,
           int n = 12) {
  Stroke s;
  s.reserve(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i <= n; ++i) {
    const double t =
        (a0_deg + (a1_deg - a0_deg) * i / n) * std::numbers::pi / 180.0;
    s.push_back({cx + rx * std::cos(t), cy + ry * std::sin(t)});
  }
  return s;
}

GlyphSkeleton make_letter(CharLabel label) {
  GlyphSkeleton g;
  g.aspect = 0.62;
  switch (label) {
    case CharLabel::alpha:
      g.strokes.push_back(arc(0.40, 0.55, 0.26, 0.23, 20, 340));
      g.strokes.push_back({{0.66, 0.36}, {0.74, 0.55}, {0.70, 0.74}, {0.80, 0.76}});
      break;
    case CharLabel::beta:
      g.strokes.push_back({{0.24, 0.98}, {0.22, 0.30}, {0.26, 0.14}});
      g.strokes.push_back(arc(0.26, 0.30, 0.22, 0.17, -90, 90));
      g.strokes.push_back(arc(0.26, 0.62, 0.27, 0.17, -90, 90));
      break;
    case CharLabel::gamma:
      g.strokes.push_back({{0.15, 0.32}, {0.48, 0.72}});
      g.strokes.push_back({{0.82, 0.32}, {0.52, 0.74}, {0.50, 0.92}, {0.56, 1.00}});
      break;
    case CharLabel::delta:
      g.strokes.push_back(arc(0.48, 0.60, 0.24, 0.20, -40, 280));
      g.strokes.push_back({{0.67, 0.43}, {0.55, 0.28}, {0.62, 0.14}, {0.78, 0.12}});
      break;
    case CharLabel::epsilon:
      g.strokes.push_back(arc(0.58, 0.44, 0.22, 0.13, -60, -300));
      g.strokes.push_back(arc(0.58, 0.67, 0.24, 0.14, -60, -300));
      break;
    case CharLabel::zeta:
      g.strokes.push_back({{0.30, 0.16}, {0.72, 0.16}});
      g.strokes.push_back({{0.72, 0.16}, {0.40, 0.46}, {0.32, 0.68},
                           {0.48, 0.82}, {0.62, 0.90}, {0.58, 1.00}});
      break;
    case CharLabel::eta:
      g.strokes.push_back({{0.22, 0.34}, {0.24, 0.78}});
      g.strokes.push_back(arc(0.47, 0.50, 0.24, 0.18, 180, 360));
      g.strokes.push_back({{0.71, 0.50}, {0.72, 1.00}});
      break;
    case CharLabel::theta:
      g.strokes.push_back(arc(0.50, 0.55, 0.26, 0.33, 0, 360, 16));
      g.strokes.push_back({{0.30, 0.55}, {0.70, 0.55}});
      break;
    case CharLabel::iota:
      g.aspect = 0.40;
      g.strokes.push_back({{0.50, 0.34}, {0.48, 0.70}, {0.54, 0.78}, {0.62, 0.74}});
      break;
    case CharLabel::kappa:
      g.strokes.push_back({{0.24, 0.16}, {0.26, 0.78}});
      g.strokes.push_back({{0.70, 0.34}, {0.34, 0.56}, {0.26, 0.56}});
      g.strokes.push_back({{0.40, 0.52}, {0.66, 0.78}});
      break;
    case CharLabel::lambda:
      g.strokes.push_back({{0.22, 0.14}, {0.40, 0.36}, {0.74, 0.78}});
      g.strokes.push_back({{0.52, 0.50}, {0.24, 0.78}});
      break;
    case CharLabel::mu:
      g.aspect = 0.72;
      g.strokes.push_back({{0.20, 0.34}, {0.22, 1.00}});
      g.strokes.push_back({{0.22, 0.62}, {0.34, 0.40}, {0.48, 0.36},
                           {0.58, 0.46}, {0.60, 0.70}, {0.74, 0.78}});
      break;
    case CharLabel::nu:
      g.strokes.push_back({{0.20, 0.34}, {0.44, 0.78}});
      g.strokes.push_back({{0.44, 0.78}, {0.72, 0.48}, {0.78, 0.34}});
      break;
    case CharLabel::xi:
      g.strokes.push_back({{0.66, 0.14}, {0.36, 0.20}, {0.30, 0.32}, {0.52, 0.40},
                           {0.34, 0.48}, {0.28, 0.62}, {0.50, 0.70}, {0.62, 0.78},
                           {0.66, 0.90}, {0.56, 1.00}});
      break;
    case CharLabel::omicron:
      g.strokes.push_back(arc(0.50, 0.55, 0.25, 0.23, 0, 360, 14));
      break;
    case CharLabel::pi:
      g.aspect = 0.80;
      g.strokes.push_back({{0.14, 0.34}, {0.86, 0.34}});
      g.strokes.push_back({{0.32, 0.34}, {0.30, 0.78}});
      g.strokes.push_back({{0.66, 0.34}, {0.68, 0.72}, {0.76, 0.78}});
      break;
    case CharLabel::rho:
      g.aspect = 0.55;
      g.strokes.push_back(arc(0.46, 0.52, 0.24, 0.21, 0, 360, 14));
      g.strokes.push_back({{0.23, 0.52}, {0.22, 1.00}});
      break;
    case CharLabel::sigma:
      g.strokes.push_back(arc(0.44, 0.56, 0.23, 0.21, 0, 360, 14));
      g.strokes.push_back({{0.46, 0.35}, {0.84, 0.32}});
      break;
    case CharLabel::tau:
      g.strokes.push_back({{0.20, 0.34}, {0.80, 0.34}});
      g.strokes.push_back({{0.50, 0.34}, {0.48, 0.70}, {0.56, 0.78}});
      break;
    case CharLabel::upsilon:
      g.strokes.push_back(arc(0.46, 0.48, 0.26, 0.17, 200, -20));
      g.strokes.push_back({{0.72, 0.42}, {0.78, 0.34}});
      break;
    case CharLabel::phi:
      g.aspect = 0.72;
      g.strokes.push_back(arc(0.50, 0.55, 0.28, 0.20, 0, 360, 14));
      g.strokes.push_back({{0.52, 0.16}, {0.50, 1.00}});
      break;
    case CharLabel::chi:
      g.strokes.push_back({{0.20, 0.34}, {0.50, 0.66}, {0.78, 1.00}});
      g.strokes.push_back({{0.78, 0.34}, {0.50, 0.66}, {0.22, 1.00}});
      break;
    case CharLabel::psi:
      g.aspect = 0.72;
      g.strokes.push_back(arc(0.50, 0.40, 0.27, 0.22, 200, -20));
      g.strokes.push_back({{0.50, 0.14}, {0.50, 1.00}});
      break;
    case CharLabel::omega:
      g.aspect = 0.80;
      g.strokes.push_back(arc(0.32, 0.52, 0.17, 0.24, 200, -20));
      g.strokes.push_back(arc(0.68, 0.52, 0.17, 0.24, 200, -20));
      break;
    case CharLabel::kai:
      break;  // composed below
  }
  return g;
}

GlyphSkeleton make_kai() {
  // kappa + alpha + iota composed into one wide box.
  GlyphSkeleton g;
  g.aspect = 1.9;
  const struct {
    CharLabel label;
    double off, width;
  } bands[] = {{CharLabel::kappa, 0.00, 0.32},
               {CharLabel::alpha, 0.33, 0.33},
               {CharLabel::iota, 0.70, 0.26}};
  for (const auto& band : bands) {
    for (const auto& stroke : make_letter(band.label).strokes) {
      Stroke s;
      s.reserve(stroke.size());
      for (const auto& p : stroke) s.push_back({band.off + p[0] * band.width, p[1]});
      g.strokes.push_back(std::move(s));
    }
  }
  return g;
}

}  // namespace

const GlyphSkeleton& glyph_skeleton(CharLabel label) {
  static const auto table = [] {
    std::array<GlyphSkeleton, kNumCharLabels> t;
    for (int i = 0; i < kNumCharLabels; ++i) {
      const auto l = static_cast<CharLabel>(i);
      t[static_cast<std::size_t>(i)] = l == CharLabel::kai ? make_kai() : make_letter(l);
    }
    return t;
  }();
  return table[static_cast<std::size_t>(label)];
}

std::vector<SynthWriterProfile> make_writer_profiles(int n, std::uint64_t seed,
                                                     double spread) {
  if (n < 1) throw InvalidParams("need at least one writer profile");
  if (spread <= 0.0) throw InvalidParams("profile spread must be positive");
  std::vector<SynthWriterProfile> profiles(static_cast<std::size_t>(n));
  char id[16];
  for (int i = 0; i < n; ++i) {
    std::snprintf(id, sizeof id, "w%02d", i);
    auto& p = profiles[static_cast<std::size_t>(i)];
    p.writer_id = id;
    p.slant_deg = (n == 1 ? 0.0 : -18.0 + 36.0 * i / (n - 1)) * std::min(spread, 1.5);
    // Golden-ratio strides decorrelate the remaining scalars from the slant.
    const auto frac = [](double v) { return v - std::floor(v); };
    p.stroke_width = 2.3 + 2.0 * frac(0.6180339887 * (i + 1));
    p.baseline_wobble = 1.2 + 1.6 * frac(0.7548776662 * (i + 1));
    p.glyph_jitter = 0.012;
    p.deform_scale = 0.055 * spread;
    p.letterform_seed = derive_seed(seed, "letterform:" + p.writer_id);
  }
  return profiles;
}

namespace {

// Cheap position-keyed texture so paper and ink are not flat fields. Pure
// function of (x, y, salt): the pixel noise never touches the layout rng.
std::uint8_t textured(int x, int y, std::uint64_t salt, double base, int range) {
  std::uint64_t h = salt;
  h = fnv1a64(&x, sizeof x, h);
  h = fnv1a64(&y, sizeof y, h);
  return static_cast<std::uint8_t>(base + double(h % static_cast<std::uint64_t>(range)));
}

struct GlyphExtent {
  int min_x = 1 << 30, min_y = 1 << 30, max_x = -1, max_y = -1;
  int anchor_x = -1, anchor_y = -1;

  void update(int x, int y) {
    min_x = std::min(min_x, x);
    min_y = std::min(min_y, y);
    max_x = std::max(max_x, x);
    max_y = std::max(max_y, y);
    if (anchor_x < 0) {
      anchor_x = x;
      anchor_y = y;
    }
  }
  bool any() const { return max_x >= 0; }
};

void stamp_disc(GrayImage& img, BinaryImage& truth, double cx, double cy, double r,
                std::uint64_t salt, bool ink, GlyphExtent* ext) {
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - r)));
  const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(cx + r)));
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - r)));
  const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(cy + r)));
  const double r2 = r * r;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - cx, dy = y - cy;
      if (dx * dx + dy * dy > r2) continue;
      if (ink) {
        img.at(x, y) = textured(x, y, salt, kInkLevel, 14);
        truth.at(x, y) = 1;
        if (ext) ext->update(x, y);
      } else {
        img.at(x, y) = textured(x, y, salt, kPaperLevel, 20);
        truth.at(x, y) = 0;
      }
    }
  }
}

void stamp_polyline(GrayImage& img, BinaryImage& truth, const Stroke& pts, double r,
                    std::uint64_t salt, GlyphExtent* ext) {
  if (pts.size() == 1) {
    stamp_disc(img, truth, pts[0][0], pts[0][1], r, salt, true, ext);
    return;
  }
  const double step = std::max(0.35 * r, 0.4);
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const double ax = pts[i][0], ay = pts[i][1];
    const double bx = pts[i + 1][0], by = pts[i + 1][1];
    const double len = std::hypot(bx - ax, by - ay);
    const int steps = std::max(1, static_cast<int>(std::ceil(len / step)));
    for (int s = 0; s <= steps; ++s) {
      const double t = double(s) / steps;
      stamp_disc(img, truth, ax + t * (bx - ax), ay + t * (by - ay), r, salt, true,
                 ext);
    }
  }
}

struct GlyphRecord {
  CharLabel label = CharLabel::kai;
  BBox bbox;
  Quality quality = Quality::BT1;
  int anchor_x = 0, anchor_y = 0;
};

std::size_t count_ink(const BinaryImage& truth, const BBox& b) {
  std::size_t n = 0;
  for (int y = b.y; y < b.y + b.height; ++y)
    for (int x = b.x; x < b.x + b.width; ++x) n += truth.at(x, y);
  return n;
}

std::vector<std::pair<int, int>> ink_pixels(const BinaryImage& truth, const BBox& b) {
  std::vector<std::pair<int, int>> px;
  for (int y = b.y; y < b.y + b.height; ++y)
    for (int x = b.x; x < b.x + b.width; ++x)
      if (truth.at(x, y)) px.emplace_back(x, y);
  return px;
}

// Writer-deformed skeletons: one fixed vertex offset field per glyph class.
std::array<GlyphSkeleton, kNumCharLabels> deform_skeletons(
    const SynthWriterProfile& profile) {
  std::array<GlyphSkeleton, kNumCharLabels> out;
  for (int c = 0; c < kNumCharLabels; ++c) {
    const auto label = static_cast<CharLabel>(c);
    GlyphSkeleton g = glyph_skeleton(label);
    Rng rng(derive_seed(profile.letterform_seed, to_string(label)));
    const double limit = 2.4 * profile.deform_scale;
    for (auto& stroke : g.strokes)
      for (auto& p : stroke) {
        p[0] += std::clamp(rng.normal() * profile.deform_scale, -limit, limit);
        p[1] += std::clamp(rng.normal() * profile.deform_scale, -limit, limit);
      }
    out[static_cast<std::size_t>(c)] = std::move(g);
  }
  return out;
}

}  // namespace

SynthPage render_page(const SynthWriterProfile& profile, const SynthParams& params,
                      std::uint64_t page_seed) {
  const int W = params.page_width, H = params.page_height;
  if (W < 200 || H < 200) throw InvalidParams("page smaller than 200x200");
  if (params.lines_per_page < 1) throw InvalidParams("lines_per_page must be >= 1");

  SynthPage page;
  page.image = GrayImage(W, H);
  page.truth_ink = BinaryImage(W, H, 0);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      page.image.at(x, y) = textured(x, y, page_seed, kPaperLevel, 20);

  Rng rng(page_seed);
  const auto skeletons = deform_skeletons(profile);
  const double tan_slant = std::tan(profile.slant_deg * std::numbers::pi / 180.0);
  const double pitch = (H - 120.0) / params.lines_per_page;
  const double x_limit = W - 70.0;
  std::vector<GlyphRecord> records;

  for (int line = 0; line < params.lines_per_page; ++line) {
    const double baseline = 60.0 + pitch * (line + 0.8);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    double pen = 60.0;
    const std::size_t kai_slot = rng.uniform_index(3);
    bool kai_done = false;

    for (std::size_t word_idx = 0;; ++word_idx) {
      const bool is_kai = !kai_done && word_idx == kai_slot;
      std::vector<CharLabel> word;
      if (is_kai) {
        word.push_back(CharLabel::kai);
      } else {
        const std::size_t len = 2 + rng.uniform_index(4);
        for (std::size_t i = 0; i < len; ++i)
          word.push_back(static_cast<CharLabel>(1 + rng.uniform_index(24)));
      }

      double estimate = 0.5 * params.glyph_height;
      for (auto l : word)
        estimate += params.glyph_height * (glyph_skeleton(l).aspect + 0.16);
      if (pen + estimate > x_limit && !is_kai) break;

      for (auto label : word) {
        const auto& skel = skeletons[static_cast<std::size_t>(label)];
        const double hg = params.glyph_height * (1.0 + (rng.uniform() - 0.5) * 0.08);
        const double width = hg * skel.aspect;
        const double radius =
            0.5 * profile.stroke_width * (1.0 + (rng.uniform() - 0.5) * 0.12);
        const double dy = profile.baseline_wobble *
                          std::sin(2.0 * std::numbers::pi * (pen + 0.5 * width) /
                                       kWobblePeriod +
                                   phase);
        GlyphExtent ext;
        for (const auto& stroke : skel.strokes) {
          Stroke placed;
          placed.reserve(stroke.size());
          for (const auto& p : stroke) {
            const double u = p[0] + rng.normal() * profile.glyph_jitter;
            const double v = p[1] + rng.normal() * profile.glyph_jitter;
            const double gy = (v - kBaselineV) * hg;
            const double gx = u * width - gy * tan_slant;
            placed.push_back({pen + gx, baseline + dy + gy});
          }
          stamp_polyline(page.image, page.truth_ink, placed, radius, page_seed, &ext);
        }
        if (ext.any()) {
          GlyphRecord rec;
          rec.label = label;
          rec.bbox.x = std::max(0, ext.min_x - 2);
          rec.bbox.y = std::max(0, ext.min_y - 2);
          rec.bbox.width = std::min(W, ext.max_x + 3) - rec.bbox.x;
          rec.bbox.height = std::min(H, ext.max_y + 3) - rec.bbox.y;
          rec.anchor_x = ext.anchor_x;
          rec.anchor_y = ext.anchor_y;
          records.push_back(rec);
        }
        pen += width + 0.16 * hg;
      }
      pen += 0.5 * params.glyph_height;
      if (is_kai) kai_done = true;
    }
  }

  // Damage simulation: paper-colored discs eat into some kai instances.
  int kai_seen = 0;
  for (auto& rec : records) {
    if (rec.label != CharLabel::kai) continue;
    ++kai_seen;
    if (kai_seen <= params.forced_bt1_per_page) continue;
    const double draw = rng.uniform();
    double target = 0.0;
    if (draw < params.occlusion_bt3) {
      rec.quality = Quality::BT3;
      target = 0.50 + 0.15 * rng.uniform();
    } else if (draw < params.occlusion_bt3 + params.occlusion_bt2) {
      rec.quality = Quality::BT2;
      target = 0.25 + 0.15 * rng.uniform();
    } else {
      continue;
    }

    const std::size_t initial = count_ink(page.truth_ink, rec.bbox);
    if (initial < 2) continue;
    for (int attempt = 0; attempt < 80; ++attempt) {
      const std::size_t remaining = count_ink(page.truth_ink, rec.bbox);
      if (remaining <= 1) break;
      if (double(initial - remaining) / double(initial) >= target) break;
      const auto px = ink_pixels(page.truth_ink, rec.bbox);
      const auto& hit = px[rng.uniform_index(px.size())];
      const double r = profile.stroke_width * (1.1 + 0.9 * rng.uniform());
      stamp_disc(page.image, page.truth_ink, hit.first, hit.second, r, page_seed,
                 false, nullptr);
    }
  }

  // Guarantee: every annotation keeps at least one ink pixel.
  for (const auto& rec : records) {
    if (count_ink(page.truth_ink, rec.bbox) > 0) continue;
    GlyphExtent ext;
    stamp_disc(page.image, page.truth_ink, rec.anchor_x, rec.anchor_y,
               std::max(1.2, 0.5 * profile.stroke_width), page_seed, true, &ext);
    log::debug("restored ink inside an emptied annotation");
  }

  page.annotations.reserve(records.size());
  for (const auto& rec : records)
    page.annotations.push_back({rec.label, rec.bbox, rec.quality});
  return page;
}

CorpusManifest generate_corpus(const SynthParams& params, const std::string& out_dir) {
  if (params.n_writers < 2) throw InvalidParams("corpus needs at least 2 writers");
  if (params.docs_per_writer < 1)
    throw InvalidParams("corpus needs at least 1 document per writer");
  if (params.occlusion_bt2 < 0 || params.occlusion_bt3 < 0 ||
      params.occlusion_bt2 + params.occlusion_bt3 > 1.0)
    throw InvalidParams("occlusion fractions must be in [0,1] and sum to <= 1");

  fs::create_directories(out_dir);
  const auto profiles =
      make_writer_profiles(params.n_writers, params.seed, params.profile_spread);

  CorpusManifest manifest;
  manifest.subset_name = params.subset_name;
  for (const auto& profile : profiles) {
    for (int d = 0; d < params.docs_per_writer; ++d) {
      const std::string doc_id = profile.writer_id + "_" + std::to_string(d);
      const SynthPage page =
          render_page(profile, params, derive_seed(params.seed, "page:" + doc_id));
      const std::string image_name = doc_id + ".png";
      save_png(page.image, (fs::path(out_dir) / image_name).string());
      manifest.documents.push_back({doc_id, profile.writer_id, image_name, false});
      if (!page.annotations.empty()) manifest.annotations[doc_id] = page.annotations;
    }
  }
  save_manifest(manifest, (fs::path(out_dir) / "manifest.json").string());
  return manifest;
}

}  // namespace wr
