#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "plastiq/dataset.hpp"
#include "plastiq/raster.hpp"

namespace plastiq {

inline constexpr ImageDims kModelInputDims{416, 416};

struct OrientedImage {
  Raster raster;
  std::vector<GroundTruth> truths;
};

/// Rotates/mirrors the raster upright and remaps its boxes to match.
OrientedImage auto_orient(const Raster& raster, Orientation o,
                          std::vector<GroundTruth> truths);

/// Nearest-neighbor plain stretch (no letterboxing).
Raster resize_stretch(const Raster& raster, ImageDims to);

Raster flip_raster_h(const Raster& raster);
Raster flip_raster_v(const Raster& raster);

/// c -> clamp(round(c * factor), 0, 255). factor must be > 0.
Raster jitter_brightness(const Raster& raster, double factor);

/// Interpolates each channel against the pixel's integer luma:
/// c -> clamp(round(L + factor * (c - L))). factor 0 is grayscale.
Raster jitter_saturation(const Raster& raster, double factor);

/// Auto-orient followed by a stretch to `target`.
Raster preprocess(const Raster& raster, Orientation o,
                  ImageDims target = kModelInputDims);

struct FactorRange {
  double lo = 0.7;
  double hi = 1.3;
};

struct AugmentSpec {
  FactorRange brightness;
  FactorRange saturation;
  double flip_h_prob = 0.5;
  double flip_v_prob = 0.0;
  int copies_per_image = 2;
  std::uint64_t seed = 0;
  /// With split tags present, only train images receive copies.
  bool train_only = true;

  void validate() const;
};

/// Parameters drawn for one augmented copy.
struct AugmentDraw {
  double brightness = 1.0;
  double saturation = 1.0;
  bool flip_h = false;
  bool flip_v = false;

  friend bool operator==(const AugmentDraw&, const AugmentDraw&) = default;
};

/// Draws are a pure function of (seed, image_id, copy_index); execution
/// order never affects them.
AugmentDraw draw_augmentation(const AugmentSpec& spec,
                              const std::string& image_id, int copy_index);

/// Applies one draw: auto-orient, brightness, saturation, then flips.
OrientedImage apply_augmentation(const Raster& raster, Orientation o,
                                 const std::vector<GroundTruth>& truths,
                                 const AugmentDraw& draw);

struct AugmentProvenance {
  std::string id;
  std::string source_id;
  int copy_index = 0;
  AugmentDraw draw;
};

struct AugmentResult {
  DatasetManifest manifest;
  std::vector<AugmentProvenance> provenance;
};

using RasterLoader = std::function<Raster(const AnnotatedImage&)>;
/// Receives each augmented image entry together with its pixels.
using RasterSink = std::function<void(const AnnotatedImage&, const Raster&)>;

std::string augmented_id(const std::string& image_id, int copy_index);
std::string augmented_path(const std::string& path, int copy_index);

/// Appends `copies_per_image` jittered copies after each eligible image.
/// `threads` > 1 processes images in parallel; output is identical.
AugmentResult augment_dataset(const DatasetManifest& manifest,
                              const RasterLoader& load, const RasterSink& sink,
                              const AugmentSpec& spec, unsigned threads = 1);

/// Sidecar JSON listing factors and flips per augmented id.
std::string provenance_json(const AugmentSpec& spec,
                            const std::vector<AugmentProvenance>& provenance);

}  // namespace plastiq
