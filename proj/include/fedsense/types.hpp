#pragma once

#include <cmath>

namespace fedsense {

enum class Label { NoiseOnly, SignalPresent };

constexpr bool is_present(Label label) { return label == Label::SignalPresent; }

// Planar position in meters.
struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

inline double distance(const Point& a, const Point& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

}  // namespace fedsense
