#pragma once

#include <string>

namespace hart {

// Axis-aligned rectangle in image pixel coordinates, top-left origin.
// Boxes may extend beyond image bounds (objects leave the frame).
struct BoundingBox {
  double x = 0.0;
  double y = 0.0;
  double w = 1.0;
  double h = 1.0;

  double area() const { return w * h; }
  double cx() const { return x + 0.5 * w; }
  double cy() const { return y + 0.5 * h; }
  bool finite() const;
  std::string str() const;
};

double intersection_area(const BoundingBox& a, const BoundingBox& b);

// Standard IoU in [0, 1]; 0 for disjoint boxes.
double iou(const BoundingBox& a, const BoundingBox& b);

}  // namespace hart
