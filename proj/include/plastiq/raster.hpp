#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "plastiq/geometry.hpp"

namespace plastiq {

class RasterError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};
static_assert(sizeof(Rgb) == 3, "PPM I/O copies Rgb arrays as raw bytes");

/// Row-major 8-bit RGB image.
class Raster {
 public:
  Raster() = default;
  explicit Raster(ImageDims dims, Rgb fill = {});
  Raster(ImageDims dims, std::vector<Rgb> pixels);

  ImageDims dims() const { return dims_; }
  int width() const { return dims_.width; }
  int height() const { return dims_.height; }

  Rgb& at(int x, int y) { return pixels_[index(x, y)]; }
  const Rgb& at(int x, int y) const { return pixels_[index(x, y)]; }

  std::span<Rgb> pixels() { return pixels_; }
  std::span<const Rgb> pixels() const { return pixels_; }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(dims_.width) +
           static_cast<std::size_t>(x);
  }

  ImageDims dims_{1, 1};
  std::vector<Rgb> pixels_{Rgb{}};
};

// Binary PPM (P6, maxval 255). Header comments are accepted on read.

Raster decode_ppm(std::string_view bytes);
std::string encode_ppm(const Raster& raster);

Raster read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Raster& raster);

/// Reads only the header; cheap way to learn image dims.
ImageDims read_ppm_dims(const std::filesystem::path& path);

}  // namespace plastiq
