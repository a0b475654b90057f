#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "persearch/scene.hpp"

namespace persearch {

// Binary portable pixmap (P6, maxval 255) writer/reader.

inline void write_ppm(const std::filesystem::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(img.width) * 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = std::min(1.0f, std::max(0.0f, img.at(x, y, c)));
        row[static_cast<std::size_t>(x) * 3 + c] =
            static_cast<unsigned char>(std::lround(v * 255.0f));
      }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

namespace detail {
inline int ppm_next_int(std::istream& in, const std::string& path) {
  // Skips whitespace and '#' comments between header tokens.
  int ch = in.get();
  while (ch != EOF && (std::isspace(ch) || ch == '#')) {
    if (ch == '#')
      while (ch != EOF && ch != '\n') ch = in.get();
    ch = in.get();
  }
  if (ch == EOF || !std::isdigit(ch))
    throw std::runtime_error("malformed pixmap header: " + path);
  long v = 0;
  while (ch != EOF && std::isdigit(ch)) {
    v = v * 10 + (ch - '0');
    ch = in.get();
  }
  if (ch != EOF) in.unget();
  return static_cast<int>(v);
}
}  // namespace detail

inline Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open image file: " + path.string());
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (magic[0] != 'P' || magic[1] != '6')
    throw std::runtime_error("not a binary pixmap (P6): " + path.string());
  const int w = detail::ppm_next_int(in, path.string());
  const int h = detail::ppm_next_int(in, path.string());
  const int maxval = detail::ppm_next_int(in, path.string());
  if (w <= 0 || h <= 0 || maxval != 255)
    throw std::runtime_error("unsupported pixmap geometry in " + path.string());
  in.get();  // single whitespace byte after maxval
  Image img(w, h);
  std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
  for (int y = 0; y < h; ++y) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size()));
    if (!in) throw std::runtime_error("truncated pixmap: " + path.string());
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(x, y, c) =
            static_cast<float>(row[static_cast<std::size_t>(x) * 3 + c]) / 255.0f;
  }
  return img;
}

}  // namespace persearch
