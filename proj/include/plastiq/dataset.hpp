#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "plastiq/geometry.hpp"

namespace plastiq {

inline constexpr std::string_view kDefaultClassName = "trash_plastic";

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Darknet label parse failure. `line()` is 1-based.
class LabelParseError : public DatasetError {
 public:
  LabelParseError(std::size_t line, const std::string& what)
      : DatasetError("line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Manifest schema violation; `path()` locates the offending field, e.g.
/// `images[3].truths[0].x_min`.
class SchemaError : public DatasetError {
 public:
  SchemaError(std::string path, const std::string& what)
      : DatasetError(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

struct GroundTruth {
  BBox box;
  int class_id = 0;

  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

struct Detection {
  BBox box;
  int class_id = 0;
  double score = 0.0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

enum class Split { kTrain, kVal, kTest };

std::string_view to_string(Split split);
std::optional<Split> parse_split(std::string_view text);

struct AnnotatedImage {
  std::string id;
  std::string path;
  ImageDims dims;
  Orientation orientation;
  std::vector<GroundTruth> truths;
  std::optional<Split> split;

  friend bool operator==(const AnnotatedImage&,
                         const AnnotatedImage&) = default;
};

struct DatasetManifest {
  std::string name;
  std::vector<std::string> classes{std::string(kDefaultClassName)};
  std::vector<AnnotatedImage> images;

  const AnnotatedImage* find(std::string_view image_id) const;

  /// Checks unique ids and class names, valid non-degenerate boxes, known
  /// class ids, and split tags covering all images or none.
  void validate() const;

  friend bool operator==(const DatasetManifest&,
                         const DatasetManifest&) = default;
};

// Darknet labels: one `class cx cy w h` line per box, normalized center form.

std::vector<GroundTruth> parse_darknet_labels(std::string_view label_text);
std::string write_darknet_labels(const std::vector<GroundTruth>& truths);

struct ManifestOptions {
  /// Reject unknown fields instead of ignoring them.
  bool strict = true;
};

DatasetManifest load_manifest(std::string_view text,
                              const ManifestOptions& options = {});

/// Canonical serialization: fixed key order, 6-decimal floats, one image per
/// line, newline-terminated.
std::string save_manifest(const DatasetManifest& manifest);

struct SplitFractions {
  double train = 0.0;
  double val = 0.0;
  double test = 0.0;
};

/// Assigns a split tag to every image. Counts for val and test are the
/// rounded fractions of the image count; train receives the remainder.
/// Deterministic for a given seed.
DatasetManifest split_dataset(const DatasetManifest& manifest,
                              SplitFractions fractions, std::uint64_t seed);

}  // namespace plastiq
