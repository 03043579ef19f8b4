#include "plastiq/geometry.hpp"

#include <algorithm>
#include <cstdio>
#include <utility>

namespace plastiq {

bool BBox::valid() const {
  return 0.0 <= x_min && x_min <= x_max && x_max <= 1.0 && 0.0 <= y_min &&
         y_min <= y_max && y_max <= 1.0;
}

Orientation::Orientation(int code) : code_(code) {
  if (!is_valid_code(code)) {
    throw GeometryError("invalid orientation code " + std::to_string(code) +
                        " (expected 1..8)");
  }
}

double intersection_area(const BBox& a, const BBox& b) {
  const double w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

double iou(const BBox& a, const BBox& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

PixelBox to_pixel(const BBox& box, ImageDims dims) {
  const double w = dims.width;
  const double h = dims.height;
  return {box.x_min * w, box.y_min * h, box.x_max * w, box.y_max * h};
}

BBox from_pixel(const PixelBox& pbox, ImageDims dims) {
  if (!dims.valid()) throw GeometryError("image dims must be positive");
  const double w = dims.width;
  const double h = dims.height;
  if (pbox.left < 0.0 || pbox.top < 0.0 || pbox.right > w ||
      pbox.bottom > h) {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "pixel box (%g,%g,%g,%g) out of bounds for %dx%d image",
                  pbox.left, pbox.top, pbox.right, pbox.bottom, dims.width,
                  dims.height);
    throw GeometryError(buf);
  }
  if (pbox.left > pbox.right || pbox.top > pbox.bottom) {
    throw GeometryError("pixel box corners are inverted");
  }
  return {pbox.left / w, pbox.top / h, pbox.right / w, pbox.bottom / h};
}

BBox remap_resize(const BBox& box, ImageDims from, ImageDims to) {
  if (!from.valid() || !to.valid()) {
    throw GeometryError("image dims must be positive");
  }
  return box;
}

BBox flip_h(const BBox& box) {
  return {1.0 - box.x_max, box.y_min, 1.0 - box.x_min, box.y_max};
}

BBox flip_v(const BBox& box) {
  return {box.x_min, 1.0 - box.y_max, box.x_max, 1.0 - box.y_min};
}

namespace {

std::pair<double, double> orient_point(double x, double y, int code) {
  switch (code) {
    case 1: return {x, y};
    case 2: return {1.0 - x, y};
    case 3: return {1.0 - x, 1.0 - y};
    case 4: return {x, 1.0 - y};
    case 5: return {y, x};
    case 6: return {1.0 - y, x};
    case 7: return {1.0 - y, 1.0 - x};
    case 8: return {y, 1.0 - x};
  }
  throw GeometryError("invalid orientation code " + std::to_string(code));
}

}  // namespace

BBox remap_orientation(const BBox& box, Orientation o) {
  if (o.code() == 1) return box;
  const auto [ax, ay] = orient_point(box.x_min, box.y_min, o.code());
  const auto [bx, by] = orient_point(box.x_max, box.y_max, o.code());
  return {std::min(ax, bx), std::min(ay, by), std::max(ax, bx),
          std::max(ay, by)};
}

ImageDims oriented_dims(ImageDims dims, Orientation o) {
  if (o.swaps_axes()) return {dims.height, dims.width};
  return dims;
}

BBox clamp_marginal(const BBox& box, double tolerance) {
  auto snap = [tolerance, &box](double v) {
    if (v < -tolerance || v > 1.0 + tolerance) {
      throw GeometryError("box " + to_string(box) + " lies outside [0,1]");
    }
    return std::clamp(v, 0.0, 1.0);
  };
  BBox out{snap(box.x_min), snap(box.y_min), snap(box.x_max), snap(box.y_max)};
  if (out.x_min > out.x_max || out.y_min > out.y_max) {
    throw GeometryError("box " + to_string(box) + " has inverted corners");
  }
  return out;
}

std::string to_string(const BBox& box) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "(%.6f,%.6f,%.6f,%.6f)", box.x_min,
                box.y_min, box.x_max, box.y_max);
  return buf;
}

}  // namespace plastiq
