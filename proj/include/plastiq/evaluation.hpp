#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "plastiq/bench_stats.hpp"
#include "plastiq/dataset.hpp"

namespace plastiq {

class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kDefaultIouThreshold = 0.5;
inline constexpr double kDefaultConfidenceThreshold = 0.5;

/// A detection tagged with the image it was made on.
struct ImageDetection {
  std::string image_id;
  Detection det;

  friend bool operator==(const ImageDetection&, const ImageDetection&) = default;
};

/// Detection file: JSON lines of
/// {"image_id","class","x_min","y_min","x_max","y_max","score"}.
std::vector<ImageDetection> parse_detections_jsonl(std::string_view text);
std::string write_detections_jsonl(std::span<const ImageDetection> detections);

struct Match {
  std::size_t det_index = 0;
  std::optional<std::size_t> truth_index;
  double iou = 0.0;
};

/// Greedy matching for one image. Detections are visited by descending
/// score (ties keep input order); each takes the unmatched same-class truth
/// with the highest IoU if that IoU reaches `iou_threshold`. The result is
/// indexed by detection input position.
std::vector<Match> match_detections(std::span<const Detection> dets,
                                    std::span<const GroundTruth> truths,
                                    double iou_threshold);

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  friend bool operator==(const ConfusionCounts&,
                         const ConfusionCounts&) = default;
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
};

/// Drops detections scoring below `confidence_threshold`, then matches.
ConfusionCounts confusion_at(std::span<const Detection> dets,
                             std::span<const GroundTruth> truths,
                             double iou_threshold, double confidence_threshold);

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
};

/// 0/0 gives 1 for both members when there are no truths and no detections;
/// otherwise an undefined member is 0.
PrecisionRecall precision_recall(const ConfusionCounts& c);

double f1_score(double precision, double recall);

/// One image's worth of evaluation input.
struct ImageEval {
  std::vector<Detection> dets;
  std::vector<GroundTruth> truths;
};

struct PrSample {
  double threshold = 0.0;  // score of the detection that produced the sample
  double recall = 0.0;
  double precision = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
};

struct PrCurve {
  std::vector<PrSample> samples;
  double iou_threshold = kDefaultIouThreshold;
  std::size_t total_truths = 0;
};

/// Score sweep over all detections of all images, one sample per detection.
/// Throws EvaluationError when there are no truths.
PrCurve pr_curve(std::span<const ImageEval> images, double iou_threshold);

std::string pr_curve_csv(const PrCurve& curve);

struct ApMode {
  enum class Kind { kContinuous, kNPoint };
  Kind kind = Kind::kContinuous;
  int points = 0;

  static ApMode continuous() { return {}; }
  static ApMode n_point(int n) { return {Kind::kNPoint, n}; }
};

/// Area under the monotone precision envelope. Continuous mode integrates
/// the step function exactly; n-point mode averages the envelope at n evenly
/// spaced recalls 0, 1/(n-1), ..., 1.
double average_precision(const PrCurve& curve, ApMode mode = ApMode::continuous());

struct EvalReport {
  std::map<int, double> ap_per_class;
  double mean_ap = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  ConfusionCounts counts;
  double iou_threshold = kDefaultIouThreshold;
  double confidence_threshold = kDefaultConfidenceThreshold;
  /// Per-class curves, kept for CSV export.
  std::map<int, PrCurve> curves;
};

/// Scores `detections` against `manifest`. mAP averages AP over classes
/// that have at least one truth; the sweep uses every detection while the
/// operating-point metrics use only those at or above
/// `confidence_threshold`.
EvalReport evaluate(const DatasetManifest& manifest,
                    std::span<const ImageDetection> detections,
                    double iou_threshold = kDefaultIouThreshold,
                    double confidence_threshold = kDefaultConfidenceThreshold);

std::string report_json(const EvalReport& report);
EvalReport parse_report_json(std::string_view text);

// Table rendering

struct NamedReport {
  std::string network;
  EvalReport report;
};

struct DeviceLatency {
  std::string device;
  BenchStats stats;
};

struct NamedLatency {
  std::string network;
  std::vector<DeviceLatency> devices;
};

struct RenderedTables {
  std::string text;
  std::string csv;
};

/// Detection table (Network | mAP | F1 | Precision, mAP in percent) and
/// latency table (Network | one ms/img column per device). Either list may
/// be empty but not both.
RenderedTables render_report(std::span<const NamedReport> reports,
                             std::span<const NamedLatency> latencies);

}  // namespace plastiq
