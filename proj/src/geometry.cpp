#include "hoidet/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hoidet/errors.hpp"

namespace hoidet {

namespace {
double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }
}  // namespace

void GaussianBox::validate() const {
  for (double v : var)
    if (!(v > 0.0))
      throw NonPositiveVariance("box variance must be positive, got " + std::to_string(v));
}

double box_area(const Box& b) {
  return std::max(0.0, b.x2 - b.x1) * std::max(0.0, b.y2 - b.y1);
}

Point box_center(const Box& b) { return {0.5 * (b.x1 + b.x2), 0.5 * (b.y1 + b.y2)}; }

bool box_well_formed(const Box& b) {
  return std::isfinite(b.x1) && std::isfinite(b.y1) && std::isfinite(b.x2) &&
         std::isfinite(b.y2) && b.x1 <= b.x2 && b.y1 <= b.y2;
}

double l1_box(const Box& a, const Box& b) {
  return std::fabs(a.x1 - b.x1) + std::fabs(a.y1 - b.y1) + std::fabs(a.x2 - b.x2) +
         std::fabs(a.y2 - b.y2);
}

Box offsets_to_box(const Point& ref, const BoxOffsets& o) {
  Box b;
  b.x1 = clamp01(ref.x - o.l);
  b.x2 = clamp01(ref.x + o.r);
  b.y1 = clamp01(ref.y - o.t);
  b.y2 = clamp01(ref.y + o.b);
  // negative offsets can invert an edge pair; collapse instead of crossing
  b.x2 = std::max(b.x2, b.x1);
  b.y2 = std::max(b.y2, b.y1);
  return b;
}

BoxOffsets box_to_offsets(const Box& b, const Point& ref) {
  return {ref.x - b.x1, b.x2 - ref.x, ref.y - b.y1, b.y2 - ref.y};
}

double box_gap(const Box& a, const Box& b) {
  const double gx = std::max(0.0, std::max(a.x1, b.x1) - std::min(a.x2, b.x2));
  const double gy = std::max(0.0, std::max(a.y1, b.y1) - std::min(a.y2, b.y2));
  return std::hypot(gx, gy);
}

double iou(const Box& a, const Box& b) {
  const double ix = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double iy = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  const double inter = std::max(0.0, ix) * std::max(0.0, iy);
  const double uni = box_area(a) + box_area(b) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double giou(const Box& a, const Box& b) {
  const double ix = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double iy = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  const double inter = std::max(0.0, ix) * std::max(0.0, iy);
  const double uni = box_area(a) + box_area(b) - inter;
  const double hull = (std::max(a.x2, b.x2) - std::min(a.x1, b.x1)) *
                      (std::max(a.y2, b.y2) - std::min(a.y1, b.y1));
  const double overlap = uni > 0.0 ? inter / uni : 0.0;
  return hull > 0.0 ? overlap - (hull - uni) / hull : overlap;
}

}  // namespace hoidet
