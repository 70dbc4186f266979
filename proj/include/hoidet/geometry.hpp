#pragma once

// Axis-aligned boxes in normalized [0,1] image coordinates, the center-based
// offset parameterization used by the box heads, and overlap measures.

#include <array>

namespace hoidet {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

// corners, x1 <= x2 and y1 <= y2 for well-formed boxes
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;
};

// distances from a reference point to the left/right/top/bottom edges;
// predicted offsets are nonnegative by construction, derived targets may go
// negative when the reference point lies outside the box
struct BoxOffsets {
  double l = 0.0;
  double r = 0.0;
  double t = 0.0;
  double b = 0.0;
};

// per-offset Gaussian: mean and variance for each of (l, r, t, b)
struct GaussianBox {
  std::array<double, 4> mu{};   // l, r, t, b
  std::array<double, 4> var{};  // each must be > 0

  // throws NonPositiveVariance if any variance fails to be positive
  void validate() const;
};

double box_area(const Box& b);
Point box_center(const Box& b);
bool box_well_formed(const Box& b);

// corner-space L1 distance, the regression metric used in matching and loss
double l1_box(const Box& a, const Box& b);

// corners from a reference point and edge offsets, clamped into [0,1]
Box offsets_to_box(const Point& ref, const BoxOffsets& o);

// signed edge distances seen from `ref`; inverse of offsets_to_box whenever
// ref lies inside the (unclamped) box
BoxOffsets box_to_offsets(const Box& b, const Point& ref);

// Euclidean separation between box hulls; 0 when they touch or overlap
double box_gap(const Box& a, const Box& b);

// |a∩b| / |a∪b|; 0 when the union has no area
double iou(const Box& a, const Box& b);

// iou minus (hull \ union) / hull, in [-1, 1]
double giou(const Box& a, const Box& b);

}  // namespace hoidet
