#pragma once

#include <array>

namespace groundloop {

// Axis-aligned box in normalized image coordinates ([0,1] per axis).
// A box is only guaranteed valid after is_valid() says so; raw policy output
// is carried in the same type and may be degenerate.
struct BBox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }

  friend bool operator==(const BBox&, const BBox&) = default;
};

// True iff 0 <= x1 < x2 <= 1 and 0 <= y1 < y2 <= 1. Total over any input,
// including NaN (which is never valid).
bool is_valid(const BBox& b);

// Throws a contract error for invalid boxes.
double iou(const BBox& a, const BBox& b);
double generalized_iou(const BBox& a, const BBox& b);
double area_ratio(const BBox& b);

// Smallest box containing both.
BBox enclosing(const BBox& a, const BBox& b);
// Overlap area; zero for disjoint boxes.
double intersection_area(const BBox& a, const BBox& b);
// a is inside b (closed containment).
bool contains(const BBox& outer, const BBox& inner);

// The crop operator's output: the padded, clamped region plus what produced it.
struct CropRegion {
  BBox box;
  BBox source_box;
  double margin = 0.0;
};

// Expands every side outward by margin * (that axis' side length), then
// clamps to the unit square.
CropRegion pad_and_clamp(const BBox& b, double margin);

}  // namespace groundloop
