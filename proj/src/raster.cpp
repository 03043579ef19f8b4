#include "plastiq/raster.hpp"

#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>

namespace plastiq {

Raster::Raster(ImageDims dims, Rgb fill) : dims_(dims) {
  if (!dims.valid()) throw RasterError("raster dims must be positive");
  pixels_.assign(static_cast<std::size_t>(dims.width) * dims.height, fill);
}

Raster::Raster(ImageDims dims, std::vector<Rgb> pixels)
    : dims_(dims), pixels_(std::move(pixels)) {
  if (!dims.valid()) throw RasterError("raster dims must be positive");
  if (pixels_.size() != static_cast<std::size_t>(dims.width) * dims.height) {
    throw RasterError("pixel count does not match raster dims");
  }
}

namespace {

struct PpmHeader {
  ImageDims dims;
  std::size_t data_offset = 0;
};

class HeaderScanner {
 public:
  explicit HeaderScanner(std::string_view bytes) : bytes_(bytes) {}

  std::string_view token() {
    skip_space_and_comments();
    const std::size_t start = pos_;
    while (pos_ < bytes_.size() &&
           !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      ++pos_;
    }
    return bytes_.substr(start, pos_ - start);
  }

  std::optional<long> number() {
    const auto t = token();
    if (t.empty() || t.size() > 9) return std::nullopt;
    long v = 0;
    for (char c : t) {
      if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
      v = v * 10 + (c - '0');
    }
    return v;
  }

  // Exactly one whitespace byte separates maxval from the pixel data.
  std::size_t data_start() const { return pos_ + 1; }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

PpmHeader parse_header(std::string_view bytes) {
  HeaderScanner scan(bytes);
  if (scan.token() != "P6") throw RasterError("not a binary PPM (P6) image");
  const auto w = scan.number();
  const auto h = scan.number();
  const auto maxval = scan.number();
  if (!w || !h || !maxval || *w < 1 || *h < 1) {
    throw RasterError("malformed PPM header");
  }
  if (*maxval != 255) throw RasterError("only 8-bit PPM (maxval 255) supported");
  return {{static_cast<int>(*w), static_cast<int>(*h)}, scan.data_start()};
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RasterError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

Raster decode_ppm(std::string_view bytes) {
  const auto header = parse_header(bytes);
  const std::size_t count =
      static_cast<std::size_t>(header.dims.width) * header.dims.height;
  if (header.data_offset > bytes.size() ||
      bytes.size() - header.data_offset < count * 3) {
    throw RasterError("truncated PPM pixel data");
  }
  std::vector<Rgb> pixels(count);
  std::memcpy(pixels.data(), bytes.data() + header.data_offset, count * 3);
  return Raster(header.dims, std::move(pixels));
}

std::string encode_ppm(const Raster& raster) {
  std::string out = "P6\n" + std::to_string(raster.width()) + " " +
                    std::to_string(raster.height()) + "\n255\n";
  const auto px = raster.pixels();
  const std::size_t header = out.size();
  out.resize(header + px.size() * 3);
  std::memcpy(out.data() + header, px.data(), px.size() * 3);
  return out;
}

Raster read_ppm(const std::filesystem::path& path) {
  try {
    return decode_ppm(slurp(path));
  } catch (const RasterError& e) {
    throw RasterError(path.string() + ": " + e.what());
  }
}

void write_ppm(const std::filesystem::path& path, const Raster& raster) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RasterError("cannot write " + path.string());
  const auto bytes = encode_ppm(raster);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw RasterError("write failed for " + path.string());
}

ImageDims read_ppm_dims(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RasterError("cannot open " + path.string());
  std::string head(512, '\0');
  in.read(head.data(), static_cast<std::streamsize>(head.size()));
  head.resize(static_cast<std::size_t>(in.gcount()));
  return parse_header(head).dims;
}

}  // namespace plastiq
