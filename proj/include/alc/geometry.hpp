// Copyright 2026 The alc Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace alc {

/// Axis-aligned rectangle in continuous pixel coordinates, (x, y) = top-left.
/// Width and height are strictly positive; degenerate boxes cannot be built.
class Box {
 public:
  Box(double x, double y, double w, double h) : x_(x), y_(y), w_(w), h_(h) {
    if (!(std::isfinite(x) && std::isfinite(y) && std::isfinite(w) && std::isfinite(h)))
      throw std::invalid_argument("box coordinates must be finite");
    if (!(w > 0.0) || !(h > 0.0))
      throw std::invalid_argument("box must have positive width and height, got w=" +
                                  std::to_string(w) + " h=" + std::to_string(h));
  }

  /// Builds from corner form; throws when x1 <= x0 or y1 <= y0.
  static Box from_corners(double x0, double y0, double x1, double y1) {
    return Box(x0, y0, x1 - x0, y1 - y0);
  }

  double x() const noexcept { return x_; }
  double y() const noexcept { return y_; }
  double w() const noexcept { return w_; }
  double h() const noexcept { return h_; }
  double right() const noexcept { return x_ + w_; }
  double bottom() const noexcept { return y_ + h_; }
  double cx() const noexcept { return x_ + 0.5 * w_; }
  double cy() const noexcept { return y_ + 0.5 * h_; }
  double area() const noexcept { return w_ * h_; }

  bool contains(const Box& o) const noexcept {
    return o.x_ >= x_ && o.y_ >= y_ && o.right() <= right() && o.bottom() <= bottom();
  }

  friend bool operator==(const Box&, const Box&) = default;

 private:
  double x_, y_, w_, h_;
};

inline double intersection_area(const Box& a, const Box& b) noexcept {
  const double iw = std::min(a.right(), b.right()) - std::max(a.x(), b.x());
  const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.y(), b.y());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  return iw * ih;
}

inline double iou(const Box& a, const Box& b) noexcept {
  const double inter = intersection_area(a, b);
  if (inter <= 0.0) return 0.0;
  return inter / (a.area() + b.area() - inter);
}

/// |numerator ∩ denominator| / |denominator|. Not symmetric: this is the
/// fraction of `denominator_box` covered by `numerator_box`.
inline double overlap_fraction(const Box& numerator_box, const Box& denominator_box) noexcept {
  return intersection_area(numerator_box, denominator_box) / denominator_box.area();
}

/// Smallest box containing both. Width and height are nudged up by an ulp
/// where needed so that containment survives floating-point rounding.
inline Box hull(const Box& a, const Box& b) {
  const double x0 = std::min(a.x(), b.x()), y0 = std::min(a.y(), b.y());
  const double x1 = std::max(a.right(), b.right()), y1 = std::max(a.bottom(), b.bottom());
  double w = x1 - x0, h = y1 - y0;
  while (x0 + w < x1) w = std::nextafter(w, INFINITY);
  while (y0 + h < y1) h = std::nextafter(h, INFINITY);
  return Box(x0, y0, w, h);
}

/// Chebyshev gap between two boxes; 0 when they touch or overlap.
inline double gap(const Box& a, const Box& b) noexcept {
  const double gx = std::max(0.0, std::max(a.x(), b.x()) - std::min(a.right(), b.right()));
  const double gy = std::max(0.0, std::max(a.y(), b.y()) - std::min(a.bottom(), b.bottom()));
  return std::max(gx, gy);
}

}  // namespace alc
