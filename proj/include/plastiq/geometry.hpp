#pragma once

#include <stdexcept>
#include <string>

namespace plastiq {

class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Axis-aligned box in normalized corner form. Origin is the top-left
/// corner of the image, x grows rightward and y grows downward.
struct BBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }

  /// True when 0 <= min <= max <= 1 on both axes.
  bool valid() const;

  friend bool operator==(const BBox&, const BBox&) = default;
};

/// Box in pixel units. Coordinates stay real-valued until serialization.
struct PixelBox {
  double left = 0.0;
  double top = 0.0;
  double right = 0.0;
  double bottom = 0.0;

  friend bool operator==(const PixelBox&, const PixelBox&) = default;
};

struct ImageDims {
  int width = 1;
  int height = 1;

  bool valid() const { return width >= 1 && height >= 1; }
  friend bool operator==(const ImageDims&, const ImageDims&) = default;
};

/// EXIF orientation tag: how the stored raster must be transformed to be
/// displayed upright.
///   1 identity            2 mirror horizontal
///   3 rotate 180          4 mirror vertical
///   5 transpose           6 rotate 90 clockwise
///   7 transverse          8 rotate 90 counter-clockwise
class Orientation {
 public:
  constexpr Orientation() = default;
  explicit Orientation(int code);

  constexpr int code() const { return code_; }
  /// Cases 5..8 exchange width and height.
  constexpr bool swaps_axes() const { return code_ >= 5; }

  static bool is_valid_code(int code) { return code >= 1 && code <= 8; }

  friend bool operator==(const Orientation&, const Orientation&) = default;

 private:
  int code_ = 1;
};

double intersection_area(const BBox& a, const BBox& b);

/// Intersection over union. Returns 0 when the union has zero area.
double iou(const BBox& a, const BBox& b);

/// Height-correct normalized-to-pixel scaling: x by width, y by height.
PixelBox to_pixel(const BBox& box, ImageDims dims);

/// Inverse of to_pixel. Throws GeometryError when the box leaves the image
/// or is inverted.
BBox from_pixel(const PixelBox& pbox, ImageDims dims);

/// Normalized coordinates are invariant under a plain stretch, so the box is
/// returned unchanged; dims are still validated.
BBox remap_resize(const BBox& box, ImageDims from, ImageDims to);

BBox flip_h(const BBox& box);
BBox flip_v(const BBox& box);

/// Maps a box drawn on the stored raster onto the upright raster obtained by
/// applying orientation `o`.
BBox remap_orientation(const BBox& box, Orientation o);

/// Dimensions of the upright raster for a stored raster of `dims`.
ImageDims oriented_dims(ImageDims dims, Orientation o);

/// Snaps coordinates within `tolerance` of [0,1] back into range. Throws
/// GeometryError on larger violations or inverted corners.
BBox clamp_marginal(const BBox& box, double tolerance = 1e-6);

std::string to_string(const BBox& box);

}  // namespace plastiq
