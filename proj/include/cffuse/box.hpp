#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

namespace cffuse {

/// Axis-aligned box in image pixels with a detection score and class.
struct Box {
  double x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;
  double score = 1.0;
  int class_id = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return std::max(0.0, width()) * std::max(0.0, height()); }
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }
  bool valid() const { return x2 > x1 && y2 > y1 && score >= 0.0 && score <= 1.0; }
};

/// A box attached to the image it was predicted on (or annotated in).
struct Detection {
  std::size_t image_id = 0;
  Box box;
};

using DetectionSet = std::vector<Detection>;

/// Intersection over union; 0 for disjoint or degenerate boxes.
inline double iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

}  // namespace cffuse
