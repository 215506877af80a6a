#include "groundloop/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "groundloop/error.hpp"

namespace groundloop {

bool is_valid(const BBox& b) {
  return 0.0 <= b.x1 && b.x1 < b.x2 && b.x2 <= 1.0 && 0.0 <= b.y1 &&
         b.y1 < b.y2 && b.y2 <= 1.0;
}

double intersection_area(const BBox& a, const BBox& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

BBox enclosing(const BBox& a, const BBox& b) {
  return {std::min(a.x1, b.x1), std::min(a.y1, b.y1), std::max(a.x2, b.x2),
          std::max(a.y2, b.y2)};
}

bool contains(const BBox& outer, const BBox& inner) {
  return outer.x1 <= inner.x1 && outer.y1 <= inner.y1 &&
         inner.x2 <= outer.x2 && inner.y2 <= outer.y2;
}

double iou(const BBox& a, const BBox& b) {
  require(is_valid(a) && is_valid(b), "iou: invalid box");
  if (a == b) return 1.0;
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double generalized_iou(const BBox& a, const BBox& b) {
  require(is_valid(a) && is_valid(b), "generalized_iou: invalid box");
  if (a == b) return 1.0;
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  const double hull = enclosing(a, b).area();
  return inter / uni - (hull - uni) / hull;
}

double area_ratio(const BBox& b) {
  require(is_valid(b), "area_ratio: invalid box");
  return b.area();
}

CropRegion pad_and_clamp(const BBox& b, double margin) {
  require(is_valid(b), "pad_and_clamp: invalid box");
  require(margin >= 0.0, "pad_and_clamp: negative margin");
  const double px = margin * b.width();
  const double py = margin * b.height();
  CropRegion out;
  out.source_box = b;
  out.margin = margin;
  out.box = {std::max(0.0, b.x1 - px), std::max(0.0, b.y1 - py),
             std::min(1.0, b.x2 + px), std::min(1.0, b.y2 + py)};
  return out;
}

}  // namespace groundloop
