#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "persearch/geometry.hpp"

namespace persearch {

// Interleaved RGB raster, values in [0, 1]. Generated pixels are always exact
// multiples of 1/255 so the 8-bit pixmap round trip is lossless.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> px;  // (y * width + x) * 3 + c

  Image() = default;
  Image(int w, int h) : width(w), height(h), px(static_cast<std::size_t>(w) * h * 3, 0.0f) {}

  float& at(int x, int y, int c) {
    return px[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  float at(int x, int y, int c) const {
    return px[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  ImageExtent extent() const { return {width, height}; }
};

enum class SizeClass : int { kSmall = 0, kMedium = 1, kLarge = 2 };
enum class PositionWord : int { kLeft = 0, kCenter = 1, kRight = 2 };

inline constexpr const char* size_word(SizeClass s) {
  switch (s) {
    case SizeClass::kSmall: return "small";
    case SizeClass::kMedium: return "medium";
    case SizeClass::kLarge: return "large";
  }
  return "invalid";
}

inline constexpr const char* position_word(PositionWord p) {
  switch (p) {
    case PositionWord::kLeft: return "left";
    case PositionWord::kCenter: return "center";
    case PositionWord::kRight: return "right";
  }
  return "invalid";
}

// One rendered person figure: a shirt block atop a pants block inside `body`.
// Colors are indices into the scenegen palette.
struct FigureSpec {
  BoundingBox body;
  int shirt_color = 0;
  int pants_color = 0;
  SizeClass size = SizeClass::kMedium;
  PositionWord position = PositionWord::kCenter;
  bool is_target = false;

  bool operator==(const FigureSpec&) const = default;
};

struct Scene {
  std::string id;
  ImageExtent extent;
  Image image;
  BoundingBox ground_truth;
  std::string description;
  std::vector<FigureSpec> figures;
};

}  // namespace persearch
