#pragma once

#include <cstddef>
#include <optional>
#include <span>

namespace plastiq {

/// Aggregate timing of a streamed run. Every timing field is empty when no
/// frame completed.
struct BenchStats {
  std::size_t frames = 0;
  std::size_t failed_frames = 0;
  int batch_size = 0;
  /// Wall-clock run time divided by frame count, preprocessing included.
  std::optional<double> mean_ms_per_img;
  std::optional<double> p50_ms;
  std::optional<double> p95_ms;
  std::optional<double> throughput_fps;
  std::optional<double> mean_decode_ms;
  std::optional<double> mean_preprocess_ms;
  std::optional<double> mean_infer_ms;
};

/// Nearest-rank percentile, q in [0,100]. Empty input yields nullopt.
std::optional<double> percentile(std::span<const double> values, double q);

}  // namespace plastiq
