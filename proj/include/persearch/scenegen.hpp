#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "persearch/oracle.hpp"
#include "persearch/ppm.hpp"
#include "persearch/rng.hpp"
#include "persearch/scene.hpp"

namespace persearch {

// ------------------------------------------------------------------ palette

struct PaletteColor {
  const char* name;
  std::uint8_t r, g, b;
};

inline constexpr std::array<PaletteColor, 8> kPalette = {{
    {"red", 220, 40, 40},
    {"blue", 45, 60, 220},
    {"green", 40, 170, 60},
    {"yellow", 235, 220, 50},
    {"orange", 240, 140, 30},
    {"purple", 150, 60, 200},
    {"cyan", 60, 200, 220},
    {"pink", 240, 120, 180},
}};

inline constexpr int kPaletteSize = static_cast<int>(kPalette.size());

// ------------------------------------------------------------------- params

struct SceneGenParams {
  ImageExtent extent{128, 128};
  int min_figures = 1;
  int max_figures = 4;
  double min_frac = kDefaultMinFrac;  // generated targets stay above this
  // Every scene is checked solvable: the greedy reference policy must reach
  // IoU >= 0.5 on the target from the full-image box under this rollout
  // configuration. Unsolvable layouts are regenerated.
  bool verify_solvable = true;
  EnvConfig solvability{};
};

// Figure height as a fraction of the image height, per size class. The bands
// keep targets reachable from the full-image box well inside the episode step
// budget (validated by the greedy reference policy) while leaving room to
// pack several figures per scene.
inline constexpr double kFigureHeightLo[3] = {0.32, 0.40, 0.50};
inline constexpr double kFigureHeightHi[3] = {0.38, 0.47, 0.60};
inline constexpr double kFigureAspectLo = 0.58;  // width / height
inline constexpr double kFigureAspectHi = 0.72;
inline constexpr double kShirtFraction = 0.45;   // top part of the body box

// Placement rules. All figures keep a margin from the borders (edge-hugging
// targets leave the greedy policy no strictly improving first step). The
// target is additionally pulled toward the image middle: lateral targets sit
// in the inner part of their third and vertically near the center band,
// which is where greedy ascent stays reliable.
inline constexpr double kEdgeMarginFrac = 0.06;
inline constexpr double kTargetBandPull = 0.3;  // trim of the outer band edge
inline constexpr double kTargetYLo = 0.38;      // y-center band, fraction of H
inline constexpr double kTargetYHi = 0.62;

// -------------------------------------------------------------- description

inline std::string describe_target(const FigureSpec& fig) {
  std::string s = "a ";
  s += size_word(fig.size);
  s += " person wearing a ";
  s += kPalette[fig.shirt_color].name;
  s += " shirt and ";
  s += kPalette[fig.pants_color].name;
  s += " pants on the ";
  s += position_word(fig.position);
  return s;
}

// --------------------------------------------------------------- generation

namespace detail {

struct IntBox {
  int x0, y0, x1, y1;
};

inline bool overlaps_with_gap(const IntBox& a, const IntBox& b, int gap) {
  return a.x0 - gap < b.x1 && b.x0 - gap < a.x1 && a.y0 - gap < b.y1 &&
         b.y0 - gap < a.y1;
}

inline void paint_rect(Image& img, int x0, int y0, int x1, int y1,
                       const PaletteColor& color) {
  const float r = static_cast<float>(color.r) / 255.0f;
  const float g = static_cast<float>(color.g) / 255.0f;
  const float b = static_cast<float>(color.b) / 255.0f;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      img.at(x, y, 0) = r;
      img.at(x, y, 1) = g;
      img.at(x, y, 2) = b;
    }
}

}  // namespace detail

// Deterministic synthetic scene: gray noise background plus 1-4 non-overlapping
// two-block person figures. One figure is the described target; its body box is
// the ground truth. Throws if no valid layout is found after bounded retries.
inline Scene generate_scene(std::uint64_t seed, const SceneGenParams& params,
                            std::string id = "") {
  require_valid(params.extent);
  if (params.min_figures < 1 || params.max_figures < params.min_figures)
    throw std::invalid_argument("figure count range must satisfy 1 <= min <= max");
  Rng rng(seed);
  const int W = params.extent.width;
  const int H = params.extent.height;

  Scene scene;
  scene.id = id.empty() ? "scene-" + std::to_string(seed) : std::move(id);
  scene.extent = params.extent;
  scene.image = Image(W, H);

  // Background: per-pixel mid-gray noise, distinct from the saturated palette.
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const float v =
          static_cast<float>(80 + rng.uniform_int(96)) / 255.0f;
      scene.image.at(x, y, 0) = v;
      scene.image.at(x, y, 1) = v;
      scene.image.at(x, y, 2) = v;
    }

  const int n_figures =
      params.min_figures +
      static_cast<int>(rng.uniform_int(
          static_cast<std::uint64_t>(params.max_figures - params.min_figures + 1)));

  constexpr int kLayoutAttempts = 40;
  constexpr int kTriesPerCount = 4;
  constexpr int kPlaceAttempts = 120;
  constexpr int kGapPx = 2;
  const int x_margin =
      std::max(kGapPx, static_cast<int>(std::lround(kEdgeMarginFrac * W)));
  const int y_margin =
      std::max(kGapPx, static_cast<int>(std::lround(kEdgeMarginFrac * H)));

  // Place n figures; the figure at target_idx gets the solvability-friendly
  // bands. Returns an empty vector when the layout does not pack.
  const auto try_layout = [&](int n, int target_idx) -> std::vector<FigureSpec> {
    std::vector<FigureSpec> figures;
    std::vector<detail::IntBox> placed;
    for (int i = 0; i < n; ++i) {
      const bool is_target = i == target_idx;
      FigureSpec fig;
      fig.is_target = is_target;
      fig.size = static_cast<SizeClass>(rng.uniform_int(3));
      fig.shirt_color = static_cast<int>(rng.uniform_int(kPaletteSize));
      fig.pants_color = static_cast<int>(rng.uniform_int(kPaletteSize));
      const int si = static_cast<int>(fig.size);
      const int h_px = static_cast<int>(std::lround(
          H * rng.uniform(kFigureHeightLo[si], kFigureHeightHi[si])));
      const int w_px = std::max(
          4, static_cast<int>(std::lround(
                 h_px * rng.uniform(kFigureAspectLo, kFigureAspectHi))));

      bool placed_ok = false;
      for (int t = 0; t < kPlaceAttempts && !placed_ok; ++t) {
        const PositionWord word = static_cast<PositionWord>(rng.uniform_int(3));
        // x-center band for the position word, intersected with feasibility.
        int band_lo = (static_cast<int>(word) * W) / 3;
        int band_hi = ((static_cast<int>(word) + 1) * W) / 3 - 1;
        if (is_target) {
          const int trim =
              static_cast<int>(kTargetBandPull * (band_hi - band_lo));
          if (word == PositionWord::kLeft) band_lo += trim;
          if (word == PositionWord::kRight) band_hi -= trim;
        }
        const int lo = std::max(band_lo, w_px / 2 + x_margin);
        const int hi = std::min(band_hi, W - (w_px - w_px / 2) - x_margin);
        if (lo > hi) continue;
        const int cx = lo + static_cast<int>(rng.uniform_int(
                                static_cast<std::uint64_t>(hi - lo + 1)));
        int cy_lo = h_px / 2 + y_margin;
        int cy_hi = H - (h_px - h_px / 2) - y_margin;
        if (is_target) {
          const int tight_lo =
              std::max(cy_lo, static_cast<int>(std::lround(kTargetYLo * H)));
          const int tight_hi =
              std::min(cy_hi, static_cast<int>(std::lround(kTargetYHi * H)));
          if (tight_lo <= tight_hi) {
            cy_lo = tight_lo;
            cy_hi = tight_hi;
          }
        }
        if (cy_lo > cy_hi) continue;
        const int cy = cy_lo + static_cast<int>(rng.uniform_int(
                                   static_cast<std::uint64_t>(cy_hi - cy_lo + 1)));
        detail::IntBox box{cx - w_px / 2, cy - h_px / 2, 0, 0};
        box.x1 = box.x0 + w_px;
        box.y1 = box.y0 + h_px;
        bool clash = false;
        for (const auto& other : placed)
          if (detail::overlaps_with_gap(box, other, kGapPx)) {
            clash = true;
            break;
          }
        if (clash) continue;
        fig.body = {static_cast<double>(box.x0), static_cast<double>(box.y0),
                    static_cast<double>(box.x1), static_cast<double>(box.y1)};
        // Position word recorded from the actual center's image third.
        fig.position = static_cast<PositionWord>(std::min(2, (cx * 3) / W));
        placed.push_back(box);
        figures.push_back(fig);
        placed_ok = true;
      }
      if (!placed_ok) return {};
    }
    return figures;
  };

  std::vector<FigureSpec> figures;
  int target = -1;
  for (int attempt = 0; attempt < kLayoutAttempts && target < 0; ++attempt) {
    // Dense layouts may not pack; fall back to fewer figures (still within
    // the configured range).
    std::vector<FigureSpec> candidate;
    int target_idx = -1;
    for (int n = n_figures; n >= params.min_figures && candidate.empty(); --n)
      for (int t = 0; t < kTriesPerCount && candidate.empty(); ++t) {
        target_idx = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n)));
        candidate = try_layout(n, target_idx);
      }
    if (candidate.empty()) continue;
    if (params.verify_solvable) {
      Scene probe;
      probe.extent = params.extent;
      probe.ground_truth = candidate[static_cast<std::size_t>(target_idx)].body;
      if (!greedy_rollout(probe, params.solvability).reached) continue;
    }
    figures = std::move(candidate);
    target = target_idx;
  }
  if (target < 0)
    throw std::runtime_error("scene generation: no solvable layout for " +
                             std::to_string(n_figures) + " figures in " +
                             std::to_string(W) + "x" + std::to_string(H));

  // Every distractor must differ from the target in at least one described
  // attribute; reroll the shirt color where a full clash occurs.
  const FigureSpec& tgt = figures[static_cast<std::size_t>(target)];
  for (int i = 0; i < static_cast<int>(figures.size()); ++i) {
    if (i == target) continue;
    FigureSpec& fig = figures[static_cast<std::size_t>(i)];
    if (fig.size == tgt.size && fig.shirt_color == tgt.shirt_color &&
        fig.pants_color == tgt.pants_color && fig.position == tgt.position) {
      int c = static_cast<int>(rng.uniform_int(kPaletteSize - 1));
      if (c >= tgt.shirt_color) ++c;
      fig.shirt_color = c;
    }
  }

  for (const FigureSpec& fig : figures) {
    const int x0 = static_cast<int>(fig.body.x_min);
    const int y0 = static_cast<int>(fig.body.y_min);
    const int x1 = static_cast<int>(fig.body.x_max);
    const int y1 = static_cast<int>(fig.body.y_max);
    const int shirt_end =
        y0 + static_cast<int>(std::lround(kShirtFraction * (y1 - y0)));
    detail::paint_rect(scene.image, x0, y0, x1, shirt_end,
                       kPalette[fig.shirt_color]);
    detail::paint_rect(scene.image, x0, shirt_end, x1, y1,
                       kPalette[fig.pants_color]);
  }

  scene.figures = std::move(figures);
  const FigureSpec& chosen = scene.figures[static_cast<std::size_t>(target)];
  scene.ground_truth = chosen.body;
  scene.description = describe_target(chosen);
  return scene;
}

inline std::vector<Scene> generate_dataset(std::uint64_t seed, int count,
                                           const SceneGenParams& params = {}) {
  if (count <= 0) throw std::invalid_argument("dataset count must be positive");
  std::vector<Scene> scenes;
  scenes.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "scene_%04d", i);
    scenes.push_back(generate_scene(derive_seed(seed, static_cast<std::uint64_t>(i)),
                                    params, id));
  }
  return scenes;
}

// ----------------------------------------------------------------- datasets
//
// A dataset directory holds manifest.tsv (one record per scene: id, image
// path, ground truth box, description, figure records) and images/*.ppm.

namespace detail {

inline std::string encode_figures(const std::vector<FigureSpec>& figures) {
  std::string out;
  char buf[192];
  for (std::size_t i = 0; i < figures.size(); ++i) {
    const FigureSpec& f = figures[i];
    std::snprintf(buf, sizeof buf, "%d,%d,%d,%d,%d,%.17g,%.17g,%.17g,%.17g",
                  static_cast<int>(f.size), f.shirt_color, f.pants_color,
                  static_cast<int>(f.position), f.is_target ? 1 : 0,
                  f.body.x_min, f.body.y_min, f.body.x_max, f.body.y_max);
    if (i) out += ';';
    out += buf;
  }
  return out;
}

inline std::vector<FigureSpec> decode_figures(const std::string& s) {
  std::vector<FigureSpec> figures;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ';')) {
    FigureSpec f;
    int size = 0, position = 0, is_target = 0;
    if (std::sscanf(item.c_str(), "%d,%d,%d,%d,%d,%lf,%lf,%lf,%lf", &size,
                    &f.shirt_color, &f.pants_color, &position, &is_target,
                    &f.body.x_min, &f.body.y_min, &f.body.x_max,
                    &f.body.y_max) != 9)
      throw std::runtime_error("malformed figure record: " + item);
    f.size = static_cast<SizeClass>(size);
    f.position = static_cast<PositionWord>(position);
    f.is_target = is_target != 0;
    figures.push_back(f);
  }
  return figures;
}

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return fields;
}

}  // namespace detail

inline void save_dataset(const std::vector<Scene>& scenes,
                         const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "images");
  std::ofstream manifest(dir / "manifest.tsv");
  if (!manifest)
    throw std::runtime_error("cannot write manifest in " + dir.string());
  for (const Scene& scene : scenes) {
    const std::string rel = "images/" + scene.id + ".ppm";
    write_ppm(dir / rel, scene.image);
    manifest << scene.id << '\t' << rel << '\t'
             << box_to_string(scene.ground_truth) << '\t' << scene.description
             << '\t' << detail::encode_figures(scene.figures) << '\n';
  }
  if (!manifest)
    throw std::runtime_error("manifest write failed in " + dir.string());
}

inline std::vector<Scene> load_dataset(const std::filesystem::path& dir) {
  const std::filesystem::path manifest_path = dir / "manifest.tsv";
  std::ifstream manifest(manifest_path);
  if (!manifest)
    throw std::runtime_error("cannot open manifest: " + manifest_path.string());
  std::vector<Scene> scenes;
  std::string line;
  int line_no = 0;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = detail::split_tabs(line);
    if (fields.size() != 5)
      throw std::runtime_error("manifest line " + std::to_string(line_no) +
                               ": expected 5 tab-separated fields, got " +
                               std::to_string(fields.size()));
    Scene scene;
    scene.id = fields[0];
    const std::filesystem::path image_path = dir / fields[1];
    if (!std::filesystem::exists(image_path))
      throw std::runtime_error("missing image file: " + image_path.string());
    scene.image = read_ppm(image_path);
    scene.extent = scene.image.extent();
    scene.ground_truth = box_from_string(fields[2]);
    scene.description = fields[3];
    scene.figures = detail::decode_figures(fields[4]);
    scenes.push_back(std::move(scene));
  }
  return scenes;
}

}  // namespace persearch
