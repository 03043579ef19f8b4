#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "plastiq/augment.hpp"
#include "plastiq/backend.hpp"
#include "plastiq/bench_stats.hpp"

namespace plastiq {

inline constexpr int kDefaultBatchSize = 32;

struct FrameSource {
  std::string image_id;
  std::filesystem::path path;
  Orientation orientation;
};

/// Frames in manifest order; relative paths resolve against `image_root`.
std::vector<FrameSource> frames_from_manifest(const DatasetManifest& manifest,
                                              const std::filesystem::path& image_root);

/// Frame list: one image path per line, order = frame order. The image id of
/// each frame is the path as written.
std::vector<FrameSource> parse_frame_list(std::string_view text,
                                          const std::filesystem::path& base_dir);

struct PipelineConfig {
  int batch_size = kDefaultBatchSize;
  double confidence_threshold = kDefaultConfidenceThreshold;
  ImageDims resize = kModelInputDims;
  unsigned preprocess_threads = 1;
  /// When set, preprocessed frames are written here as PPM and the staged
  /// path is what the detector receives.
  std::optional<std::filesystem::path> staging_dir;
};

struct FrameRecord {
  std::uint64_t frame_id = 0;
  std::string image_id;
  FrameStatus status = FrameStatus::kOk;
  /// Detections at or above the confidence threshold.
  std::vector<Detection> detections;
  double decode_ms = 0.0;
  double preprocess_ms = 0.0;
  double infer_ms = 0.0;
  /// From the start of the frame's decode to the arrival of its response.
  double total_ms = 0.0;
};

struct QuantificationSummary {
  std::size_t total_detections = 0;
  std::size_t frames_with_plastic = 0;
  /// detections per frame -> number of frames
  std::map<std::size_t, std::size_t> histogram;
  /// Running detection total after each frame, frame order.
  std::vector<std::size_t> cumulative;

  friend bool operator==(const QuantificationSummary&,
                         const QuantificationSummary&) = default;
};

struct StreamResult {
  std::vector<FrameRecord> records;
  BenchStats stats;
  QuantificationSummary summary;
  /// Set when the detector session failed; records then cover only the
  /// frames processed before the failure.
  std::optional<std::string> error;
};

StreamResult run_stream(std::span<const FrameSource> source, Detector& detector,
                        const PipelineConfig& config = {});

QuantificationSummary summarize(std::span<const FrameRecord> records);

/// Timing CSV, one row per frame in frame order.
std::string emit_timeseries(std::span<const FrameRecord> records);

std::string bench_stats_json(const BenchStats& stats);
BenchStats parse_bench_stats_json(std::string_view text);
std::string summary_json(const QuantificationSummary& summary);

}  // namespace plastiq
