#include "hart/box.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace hart {

bool BoundingBox::finite() const {
  return std::isfinite(x) && std::isfinite(y) && std::isfinite(w) && std::isfinite(h);
}

std::string BoundingBox::str() const {
  std::ostringstream os;
  os << "(" << x << ", " << y << ", " << w << ", " << h << ")";
  return os.str();
}

double intersection_area(const BoundingBox& a, const BoundingBox& b) {
  const double iw = std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x);
  const double ih = std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  return iw * ih;
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

}  // namespace hart
