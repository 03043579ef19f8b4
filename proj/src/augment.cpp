#include "plastiq/augment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <mutex>
#include <random>
#include <thread>

#include <json.hpp>

#include "plastiq/rng.hpp"

namespace plastiq {

namespace {

std::uint8_t clamp_channel(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

// Destination of stored pixel (x, y) in the upright raster.
std::pair<int, int> orient_pixel(int x, int y, int w, int h, int code) {
  switch (code) {
    case 2: return {w - 1 - x, y};
    case 3: return {w - 1 - x, h - 1 - y};
    case 4: return {x, h - 1 - y};
    case 5: return {y, x};
    case 6: return {h - 1 - y, x};
    case 7: return {h - 1 - y, w - 1 - x};
    case 8: return {y, w - 1 - x};
    default: return {x, y};
  }
}

}  // namespace

OrientedImage auto_orient(const Raster& raster, Orientation o,
                          std::vector<GroundTruth> truths) {
  for (auto& t : truths) t.box = remap_orientation(t.box, o);
  if (o.code() == 1) return {raster, std::move(truths)};

  const int w = raster.width();
  const int h = raster.height();
  Raster out(oriented_dims(raster.dims(), o));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto [ux, uy] = orient_pixel(x, y, w, h, o.code());
      out.at(ux, uy) = raster.at(x, y);
    }
  }
  return {std::move(out), std::move(truths)};
}

Raster resize_stretch(const Raster& raster, ImageDims to) {
  if (!to.valid()) throw RasterError("resize target dims must be positive");
  if (to == raster.dims()) return raster;
  const auto sw = static_cast<std::int64_t>(raster.width());
  const auto sh = static_cast<std::int64_t>(raster.height());
  std::vector<int> src_x(static_cast<std::size_t>(to.width));
  for (int x = 0; x < to.width; ++x) {
    src_x[static_cast<std::size_t>(x)] = static_cast<int>(x * sw / to.width);
  }
  Raster out(to);
  for (int y = 0; y < to.height; ++y) {
    const int sy = static_cast<int>(y * sh / to.height);
    for (int x = 0; x < to.width; ++x) {
      out.at(x, y) = raster.at(src_x[static_cast<std::size_t>(x)], sy);
    }
  }
  return out;
}

Raster flip_raster_h(const Raster& raster) {
  Raster out(raster.dims());
  const int w = raster.width();
  for (int y = 0; y < raster.height(); ++y) {
    for (int x = 0; x < w; ++x) out.at(w - 1 - x, y) = raster.at(x, y);
  }
  return out;
}

Raster flip_raster_v(const Raster& raster) {
  Raster out(raster.dims());
  const int h = raster.height();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < raster.width(); ++x) {
      out.at(x, h - 1 - y) = raster.at(x, y);
    }
  }
  return out;
}

Raster jitter_brightness(const Raster& raster, double factor) {
  if (!(factor > 0.0)) throw RasterError("brightness factor must be positive");
  Raster out = raster;
  for (auto& p : out.pixels()) {
    p = {clamp_channel(p.r * factor), clamp_channel(p.g * factor),
         clamp_channel(p.b * factor)};
  }
  return out;
}

Raster jitter_saturation(const Raster& raster, double factor) {
  if (!(factor >= 0.0)) {
    throw RasterError("saturation factor must be nonnegative");
  }
  Raster out = raster;
  for (auto& p : out.pixels()) {
    const double luma = static_cast<double>(
        std::lround(0.299 * p.r + 0.587 * p.g + 0.114 * p.b));
    auto mix = [&](std::uint8_t c) {
      return clamp_channel(luma + factor * (c - luma));
    };
    p = {mix(p.r), mix(p.g), mix(p.b)};
  }
  return out;
}

Raster preprocess(const Raster& raster, Orientation o, ImageDims target) {
  return resize_stretch(auto_orient(raster, o, {}).raster, target);
}

void AugmentSpec::validate() const {
  auto check_range = [](const FactorRange& r, const char* what) {
    if (!(r.lo > 0.0) || r.lo > r.hi) {
      throw DatasetError(std::string(what) + " range must satisfy 0 < lo <= hi");
    }
  };
  check_range(brightness, "brightness");
  check_range(saturation, "saturation");
  if (flip_h_prob < 0.0 || flip_h_prob > 1.0 || flip_v_prob < 0.0 ||
      flip_v_prob > 1.0) {
    throw DatasetError("flip probabilities must lie in [0,1]");
  }
  if (copies_per_image < 0) {
    throw DatasetError("copies_per_image must be nonnegative");
  }
}

AugmentDraw draw_augmentation(const AugmentSpec& spec,
                              const std::string& image_id, int copy_index) {
  std::uint64_t key = splitmix64(spec.seed);
  key = splitmix64(key ^ fnv1a64(image_id));
  key = splitmix64(key ^ static_cast<std::uint64_t>(copy_index));
  std::mt19937_64 rng(key);
  AugmentDraw draw;
  draw.brightness = uniform_real(rng, spec.brightness.lo, spec.brightness.hi);
  draw.saturation = uniform_real(rng, spec.saturation.lo, spec.saturation.hi);
  draw.flip_h = unit_real(rng) < spec.flip_h_prob;
  draw.flip_v = unit_real(rng) < spec.flip_v_prob;
  return draw;
}

OrientedImage apply_augmentation(const Raster& raster, Orientation o,
                                 const std::vector<GroundTruth>& truths,
                                 const AugmentDraw& draw) {
  auto img = auto_orient(raster, o, truths);
  img.raster = jitter_saturation(jitter_brightness(img.raster, draw.brightness),
                                 draw.saturation);
  if (draw.flip_h) {
    img.raster = flip_raster_h(img.raster);
    for (auto& t : img.truths) t.box = flip_h(t.box);
  }
  if (draw.flip_v) {
    img.raster = flip_raster_v(img.raster);
    for (auto& t : img.truths) t.box = flip_v(t.box);
  }
  return img;
}

std::string augmented_id(const std::string& image_id, int copy_index) {
  return image_id + "#aug" + std::to_string(copy_index);
}

std::string augmented_path(const std::string& path, int copy_index) {
  std::filesystem::path p(path);
  const auto name = p.stem().string() + "_aug" + std::to_string(copy_index) + ".ppm";
  return p.replace_filename(name).generic_string();
}

AugmentResult augment_dataset(const DatasetManifest& manifest,
                              const RasterLoader& load, const RasterSink& sink,
                              const AugmentSpec& spec, unsigned threads) {
  spec.validate();
  for (const auto& image : manifest.images) {
    if (image.id.find("#aug") != std::string::npos) {
      throw DatasetError("image id '" + image.id +
                         "' already carries an #aug suffix");
    }
  }

  const bool tagged = std::any_of(manifest.images.begin(), manifest.images.end(),
                                  [](const AnnotatedImage& im) { return im.split.has_value(); });
  auto eligible = [&](const AnnotatedImage& image) {
    return !(spec.train_only && tagged) || image.split == Split::kTrain;
  };

  const std::size_t n = manifest.images.size();
  std::vector<std::vector<AnnotatedImage>> copies(n);
  std::vector<std::vector<AugmentProvenance>> prov(n);

  auto process = [&](std::size_t i) {
    const auto& image = manifest.images[i];
    if (spec.copies_per_image == 0 || !eligible(image)) return;
    Raster raster;
    try {
      raster = load(image);
    } catch (const std::exception& e) {
      throw DatasetError("cannot load raster for image '" + image.id +
                         "': " + e.what());
    }
    for (int k = 1; k <= spec.copies_per_image; ++k) {
      const auto draw = draw_augmentation(spec, image.id, k);
      auto out = apply_augmentation(raster, image.orientation, image.truths, draw);
      AnnotatedImage entry;
      entry.id = augmented_id(image.id, k);
      entry.path = augmented_path(image.path, k);
      entry.dims = out.raster.dims();
      entry.truths = std::move(out.truths);
      entry.split = image.split;
      if (sink) sink(entry, out.raster);
      prov[i].push_back({entry.id, image.id, k, draw});
      copies[i].push_back(std::move(entry));
    }
  };

  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) process(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            process(i);
          } catch (...) {
            std::lock_guard lock(failure_mu);
            if (!failure) failure = std::current_exception();
            next = n;
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }

  AugmentResult result;
  result.manifest.name = manifest.name;
  result.manifest.classes = manifest.classes;
  for (std::size_t i = 0; i < n; ++i) {
    result.manifest.images.push_back(manifest.images[i]);
    for (auto& c : copies[i]) result.manifest.images.push_back(std::move(c));
    for (auto& p : prov[i]) result.provenance.push_back(std::move(p));
  }
  result.manifest.validate();
  return result;
}

std::string provenance_json(const AugmentSpec& spec,
                            const std::vector<AugmentProvenance>& provenance) {
  nlohmann::ordered_json doc;
  doc["seed"] = spec.seed;
  doc["copies_per_image"] = spec.copies_per_image;
  doc["brightness_range"] = {spec.brightness.lo, spec.brightness.hi};
  doc["saturation_range"] = {spec.saturation.lo, spec.saturation.hi};
  doc["flip_h_prob"] = spec.flip_h_prob;
  doc["flip_v_prob"] = spec.flip_v_prob;
  auto& items = doc["augmented"] = nlohmann::ordered_json::array();
  for (const auto& p : provenance) {
    nlohmann::ordered_json item;
    item["id"] = p.id;
    item["source"] = p.source_id;
    item["copy"] = p.copy_index;
    item["brightness"] = p.draw.brightness;
    item["saturation"] = p.draw.saturation;
    item["flip_h"] = p.draw.flip_h;
    item["flip_v"] = p.draw.flip_v;
    items.push_back(std::move(item));
  }
  return doc.dump(2) + "\n";
}

}  // namespace plastiq
