#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "persearch/env.hpp"
#include "persearch/rng.hpp"
#include "persearch/scene.hpp"

namespace persearch {

inline constexpr int kHistoryDim = kHistoryLen * kNumActions;  // 90

enum class QueryMode : int { kRegular = 0, kRandom = 1, kNone = 2 };

inline const char* query_mode_name(QueryMode m) {
  switch (m) {
    case QueryMode::kRegular: return "regular";
    case QueryMode::kRandom: return "random";
    case QueryMode::kNone: return "none";
  }
  return "invalid";
}

inline QueryMode query_mode_from_name(const std::string& name) {
  if (name == "regular") return QueryMode::kRegular;
  if (name == "random") return QueryMode::kRandom;
  if (name == "none") return QueryMode::kNone;
  throw std::invalid_argument("unknown query mode: " + name);
}

struct EncoderConfig {
  int d_img = 768;       // built-in pooled encoder requires region_grid^2 * 3
  int d_query = 100;
  int region_grid = 16;
  QueryMode query_mode = QueryMode::kRegular;
};

// ------------------------------------------------------------------ history

// 90-D concatenation of one-hot encodings of the previous 10 actions; slot 0
// (the most recent action) occupies entries [0, 9).
inline std::vector<double> encode_history(const std::vector<Action>& history) {
  std::vector<double> out(kHistoryDim, 0.0);
  const int n = std::min<int>(kHistoryLen, static_cast<int>(history.size()));
  for (int i = 0; i < n; ++i)
    out[static_cast<std::size_t>(i) * kNumActions +
        action_index(history[static_cast<std::size_t>(i)])] = 1.0;
  return out;
}

// ------------------------------------------------------------------- region

// Built-in region encoder: crop the box (rounded to pixels, at least 1x1),
// average-pool to region_grid x region_grid per channel, flatten row-major
// with channels interleaved. Values stay in [0, 1].
inline std::vector<double> encode_region(const Scene& scene,
                                         const BoundingBox& box,
                                         const EncoderConfig& cfg) {
  require_valid(box);
  if (!box_inside(box, scene.extent))
    throw std::invalid_argument("region box lies outside the image: " +
                                box_to_string(box));
  const int grid = cfg.region_grid;
  if (grid < 1) throw std::invalid_argument("region_grid must be positive");
  if (cfg.d_img != grid * grid * 3)
    throw std::invalid_argument(
        "built-in region encoder requires D_img = region_grid^2 * 3");

  const int W = scene.extent.width;
  const int H = scene.extent.height;
  int x0 = static_cast<int>(std::lround(box.x_min));
  int x1 = static_cast<int>(std::lround(box.x_max));
  int y0 = static_cast<int>(std::lround(box.y_min));
  int y1 = static_cast<int>(std::lround(box.y_max));
  x0 = std::clamp(x0, 0, W - 1);
  y0 = std::clamp(y0, 0, H - 1);
  x1 = std::clamp(x1, x0 + 1, W);
  y1 = std::clamp(y1, y0 + 1, H);
  const int cw = x1 - x0;
  const int ch = y1 - y0;

  std::vector<double> out(static_cast<std::size_t>(cfg.d_img), 0.0);
  for (int gy = 0; gy < grid; ++gy) {
    const int ys = y0 + static_cast<int>((static_cast<long long>(gy) * ch) / grid);
    const int ye = y0 + static_cast<int>(
                            (static_cast<long long>(gy + 1) * ch + grid - 1) / grid);
    for (int gx = 0; gx < grid; ++gx) {
      const int xs = x0 + static_cast<int>((static_cast<long long>(gx) * cw) / grid);
      const int xe = x0 + static_cast<int>(
                              (static_cast<long long>(gx + 1) * cw + grid - 1) / grid);
      double sum[3] = {0.0, 0.0, 0.0};
      for (int y = ys; y < ye; ++y)
        for (int x = xs; x < xe; ++x)
          for (int c = 0; c < 3; ++c) sum[c] += scene.image.at(x, y, c);
      const double inv = 1.0 / (static_cast<double>(ye - ys) * (xe - xs));
      const std::size_t base =
          (static_cast<std::size_t>(gy) * grid + gx) * 3;
      out[base + 0] = sum[0] * inv;
      out[base + 1] = sum[1] * inv;
      out[base + 2] = sum[2] * inv;
    }
  }
  return out;
}

// -------------------------------------------------------------------- query

namespace detail {
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}
}  // namespace detail

// Hashed bag of lowercase word tokens, L2-normalized. Deterministic; distinct
// descriptions map to distinct, stable directions with high probability.
inline std::vector<double> encode_query(std::string_view description, int d_query) {
  if (d_query < 1) throw std::invalid_argument("d_query must be positive");
  std::vector<double> out(static_cast<std::size_t>(d_query), 0.0);
  std::string token;
  bool any = false;
  const auto flush = [&] {
    if (token.empty()) return;
    out[detail::fnv1a64(token) % static_cast<std::uint64_t>(d_query)] += 1.0;
    any = true;
    token.clear();
  };
  for (char ch : description) {
    const unsigned char u = static_cast<unsigned char>(ch);
    if (std::isalnum(u))
      token.push_back(static_cast<char>(std::tolower(u)));
    else
      flush();
  }
  flush();
  if (!any)
    throw std::invalid_argument("description has no word tokens: \"" +
                                std::string(description) + "\"");
  double norm = 0.0;
  for (double v : out) norm += v * v;
  norm = std::sqrt(norm);
  for (double& v : out) v /= norm;
  return out;
}

inline std::vector<double> zero_query(int d_query) {
  return std::vector<double>(static_cast<std::size_t>(d_query), 0.0);
}

// Query vector for one episode. Regular encodes the scene's own description;
// random encodes the description of a different scene drawn from `pool`
// (falls back to the scene's own when the pool has no other entry); none is
// the zero vector.
inline std::vector<double> make_query(const Scene& scene,
                                      const std::vector<Scene>& pool,
                                      std::size_t self_index, QueryMode mode,
                                      int d_query, Rng& rng) {
  switch (mode) {
    case QueryMode::kNone:
      return zero_query(d_query);
    case QueryMode::kRegular:
      return encode_query(scene.description, d_query);
    case QueryMode::kRandom: {
      if (pool.size() < 2) return encode_query(scene.description, d_query);
      std::uint64_t j = rng.uniform_int(pool.size() - 1);
      if (j >= self_index) ++j;
      return encode_query(pool[static_cast<std::size_t>(j)].description, d_query);
    }
  }
  throw std::invalid_argument("invalid query mode");
}

// ------------------------------------------------------- precomputed regions

// Region feature table for externally computed embeddings (the 4096-D
// profile). File format: header "D_img N", then N lines of
// "scene_id x_min y_min x_max y_max f_0 ... f_{D_img-1}".
class PrecomputedFeatures {
 public:
  static std::string key(const std::string& scene_id, const BoundingBox& box) {
    char buf[192];
    std::snprintf(buf, sizeof buf, "|%.4f %.4f %.4f %.4f", box.x_min, box.y_min,
                  box.x_max, box.y_max);
    return scene_id + buf;
  }

  int d_img() const { return d_img_; }
  std::size_t size() const { return table_.size(); }

  void insert(const std::string& scene_id, const BoundingBox& box,
              std::vector<double> values) {
    if (d_img_ == 0) d_img_ = static_cast<int>(values.size());
    if (static_cast<int>(values.size()) != d_img_)
      throw std::invalid_argument("feature length mismatch");
    table_[key(scene_id, box)] = std::move(values);
  }

  const std::vector<double>* find(const std::string& scene_id,
                                  const BoundingBox& box) const {
    const auto it = table_.find(key(scene_id, box));
    return it == table_.end() ? nullptr : &it->second;
  }

  static PrecomputedFeatures load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
      throw std::runtime_error("cannot open feature file: " + path.string());
    PrecomputedFeatures feats;
    std::size_t count = 0;
    {
      std::string header;
      if (!std::getline(in, header))
        throw std::runtime_error("feature file is empty: " + path.string());
      std::istringstream hs(header);
      if (!(hs >> feats.d_img_ >> count) || feats.d_img_ < 1)
        throw std::runtime_error("malformed feature file header: " + header);
    }
    std::string line;
    for (std::size_t i = 0; i < count; ++i) {
      if (!std::getline(in, line))
        throw std::runtime_error("feature file truncated at record " +
                                 std::to_string(i + 1));
      std::istringstream ls(line);
      std::string scene_id;
      BoundingBox box;
      if (!(ls >> scene_id >> box.x_min >> box.y_min >> box.x_max >> box.y_max))
        throw std::runtime_error("malformed feature record " +
                                 std::to_string(i + 1));
      std::vector<double> values(static_cast<std::size_t>(feats.d_img_));
      for (double& v : values)
        if (!(ls >> v))
          throw std::runtime_error("feature record " + std::to_string(i + 1) +
                                   " has fewer than " +
                                   std::to_string(feats.d_img_) + " values");
      feats.table_[key(scene_id, box)] = std::move(values);
    }
    return feats;
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out)
      throw std::runtime_error("cannot write feature file: " + path.string());
    out << d_img_ << " " << table_.size() << "\n";
    char buf[48];
    for (const auto& [k, values] : table_) {
      const std::size_t bar = k.rfind('|');
      out << k.substr(0, bar) << " " << k.substr(bar + 1);
      for (double v : values) {
        std::snprintf(buf, sizeof buf, " %.17g", v);
        out << buf;
      }
      out << "\n";
    }
  }

 private:
  int d_img_ = 0;
  std::unordered_map<std::string, std::vector<double>> table_;
};

// ------------------------------------------------------------ state encoder

// Pluggable encoder to the fixed concatenation [region | query | history].
// When a precomputed feature table is attached it replaces the built-in
// pooled region encoder.
struct StateEncoder {
  EncoderConfig cfg{};
  const PrecomputedFeatures* features = nullptr;

  int dim() const { return cfg.d_img + cfg.d_query + kHistoryDim; }

  std::vector<double> region(const Scene& scene, const BoundingBox& box) const {
    if (features) {
      if (features->d_img() != cfg.d_img)
        throw std::invalid_argument("feature table D_img does not match config");
      const std::vector<double>* v = features->find(scene.id, box);
      if (!v)
        throw std::runtime_error("no precomputed feature for scene " + scene.id +
                                 " box " + box_to_string(box));
      return *v;
    }
    return encode_region(scene, box, cfg);
  }

  std::vector<double> encode(const Scene& scene, const EnvState& state,
                             std::span<const double> query) const {
    if (static_cast<int>(query.size()) != cfg.d_query)
      throw std::invalid_argument("query vector length does not match D_query");
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(dim()));
    const std::vector<double> reg = region(scene, state.box);
    out.insert(out.end(), reg.begin(), reg.end());
    out.insert(out.end(), query.begin(), query.end());
    const std::vector<double> hist = encode_history(state.history);
    out.insert(out.end(), hist.begin(), hist.end());
    return out;
  }
};

// Concatenated state encoding for the regular/none query modes. The random
// mode needs a description pool and a seeded draw; use make_query + the
// StateEncoder for that path.
inline std::vector<double> encode_state(const Scene& scene, const EnvState& state,
                                        const EncoderConfig& cfg) {
  if (cfg.query_mode == QueryMode::kRandom)
    throw std::invalid_argument(
        "random query mode requires a description pool; use make_query");
  StateEncoder enc{cfg, nullptr};
  const std::vector<double> query = cfg.query_mode == QueryMode::kNone
                                        ? zero_query(cfg.d_query)
                                        : encode_query(scene.description, cfg.d_query);
  return enc.encode(scene, state, query);
}

}  // namespace persearch
