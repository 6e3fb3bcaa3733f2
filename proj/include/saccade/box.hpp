#pragma once

#include <algorithm>

namespace saccade {

/// Axis-aligned box in input-image pixel coordinates.
struct Box {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const {
    return std::max(0.0, width()) * std::max(0.0, height());
  }
  double center_x() const { return 0.5 * (x_min + x_max); }
  double center_y() const { return 0.5 * (y_min + y_max); }
};

/// Ground-truth annotation: class index plus box extent.
struct GtBox {
  int class_id = 0;
  Box box;
};

/// Intersection over union; 0 for disjoint boxes.
inline double iou(const Box& a, const Box& b) {
  const double ix = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double iy = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

inline Box clip_box(const Box& b, double w, double h) {
  return Box{std::clamp(b.x_min, 0.0, w), std::clamp(b.y_min, 0.0, h),
             std::clamp(b.x_max, 0.0, w), std::clamp(b.y_max, 0.0, h)};
}

}  // namespace saccade
