#pragma once

#include <algorithm>
#include <cmath>

namespace carfluents {

/// Integer cell coordinate on a pyramid level.
struct Cell {
  int x = 0;
  int y = 0;
  bool operator==(const Cell&) const = default;
};

/// Axis-aligned box in pixels, top-left origin.
struct BoxF {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double area() const { return (w > 0.0 && h > 0.0) ? w * h : 0.0; }
  double cx() const { return x + 0.5 * w; }
  double cy() const { return y + 0.5 * h; }
  double x2() const { return x + w; }
  double y2() const { return y + h; }
  bool operator==(const BoxF&) const = default;
};

inline double intersection_area(const BoxF& a, const BoxF& b) {
  const double ix = std::min(a.x2(), b.x2()) - std::max(a.x, b.x);
  const double iy = std::min(a.y2(), b.y2()) - std::max(a.y, b.y);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  return ix * iy;
}

/// Intersection over union; degenerate boxes give 0.
inline double box_iou(const BoxF& a, const BoxF& b) {
  const double inter = intersection_area(a, b);
  if (inter <= 0.0) return 0.0;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

}  // namespace carfluents
