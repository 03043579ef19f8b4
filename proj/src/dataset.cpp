#include "plastiq/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>
#include <unordered_set>

#include <json.hpp>

#include "plastiq/rng.hpp"

namespace plastiq {

using nlohmann::json;

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

std::optional<Split> parse_split(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "val") return Split::kVal;
  if (text == "test") return Split::kTest;
  return std::nullopt;
}

const AnnotatedImage* DatasetManifest::find(std::string_view image_id) const {
  for (const auto& image : images) {
    if (image.id == image_id) return &image;
  }
  return nullptr;
}

void DatasetManifest::validate() const {
  std::set<std::string_view> class_names;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (!class_names.insert(classes[i]).second) {
      throw SchemaError("classes[" + std::to_string(i) + "]",
                        "duplicate class name '" + classes[i] + "'");
    }
  }
  std::unordered_set<std::string_view> ids;
  std::size_t tagged = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& image = images[i];
    const std::string where = "images[" + std::to_string(i) + "]";
    if (image.id.empty()) throw SchemaError(where + ".id", "empty image id");
    if (!ids.insert(image.id).second) {
      throw SchemaError(where + ".id", "duplicate image id '" + image.id + "'");
    }
    if (!image.dims.valid()) {
      throw SchemaError(where + ".width", "image dims must be positive");
    }
    for (std::size_t t = 0; t < image.truths.size(); ++t) {
      const auto& truth = image.truths[t];
      const std::string twhere = where + ".truths[" + std::to_string(t) + "]";
      if (truth.class_id < 0 ||
          static_cast<std::size_t>(truth.class_id) >= classes.size()) {
        throw SchemaError(twhere + ".class",
                          "unknown class id " + std::to_string(truth.class_id));
      }
      if (!truth.box.valid()) {
        throw SchemaError(twhere, "invalid box " + to_string(truth.box));
      }
      if (truth.box.area() <= 0.0) {
        throw SchemaError(twhere, "degenerate box " + to_string(truth.box));
      }
    }
    if (image.split) ++tagged;
  }
  if (tagged != 0 && tagged != images.size()) {
    throw SchemaError("images", "split tags must cover every image or none");
  }
}

// ---------------------------------------------------------------------------
// Darknet

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (pos < line.size()) {
    const auto start = line.find_first_not_of(" \t", pos);
    if (start == std::string_view::npos) break;
    auto end = line.find_first_of(" \t", start);
    if (end == std::string_view::npos) end = line.size();
    fields.push_back(line.substr(start, end - start));
    pos = end;
  }
  return fields;
}

template <typename T>
std::optional<T> parse_number(std::string_view text) {
  T value{};
  const char* begin = text.data();
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) return std::nullopt;
  }
  return value;
}

// Formats with six decimals and never emits "-0.000000".
std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  if (std::string_view(buf) == "-0.000000") return "0.000000";
  return buf;
}

}  // namespace

std::vector<GroundTruth> parse_darknet_labels(std::string_view label_text) {
  std::vector<GroundTruth> truths;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= label_text.size()) {
    auto nl = label_text.find('\n', pos);
    if (nl == std::string_view::npos) nl = label_text.size();
    const auto line = trim(label_text.substr(pos, nl - pos));
    ++line_no;
    pos = nl + 1;
    if (line.empty()) continue;

    const auto fields = split_fields(line);
    if (fields.size() != 5) {
      throw LabelParseError(line_no, "expected 5 fields, got " +
                                         std::to_string(fields.size()));
    }
    const auto cls = parse_number<int>(fields[0]);
    if (!cls || *cls < 0) {
      throw LabelParseError(line_no, "invalid class id '" +
                                         std::string(fields[0]) + "'");
    }
    std::array<double, 4> v{};
    static constexpr const char* kNames[] = {"cx", "cy", "w", "h"};
    for (int i = 0; i < 4; ++i) {
      const auto parsed = parse_number<double>(fields[i + 1]);
      if (!parsed) {
        throw LabelParseError(line_no, std::string("non-numeric ") +
                                           kNames[i] + " '" +
                                           std::string(fields[i + 1]) + "'");
      }
      if (*parsed < 0.0 || *parsed > 1.0) {
        throw LabelParseError(line_no, std::string(kNames[i]) +
                                           " outside [0,1]");
      }
      v[i] = *parsed;
    }
    const auto [cx, cy, w, h] = v;
    if (w <= 0.0) throw LabelParseError(line_no, "degenerate width");
    if (h <= 0.0) throw LabelParseError(line_no, "degenerate height");

    const BBox raw{cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0};
    try {
      truths.push_back({clamp_marginal(raw), *cls});
    } catch (const GeometryError& e) {
      throw LabelParseError(line_no, e.what());
    }
  }
  return truths;
}

std::string write_darknet_labels(const std::vector<GroundTruth>& truths) {
  std::string out;
  for (const auto& t : truths) {
    const BBox& b = t.box;
    out += std::to_string(t.class_id);
    out += ' ' + fixed6((b.x_min + b.x_max) / 2.0);
    out += ' ' + fixed6((b.y_min + b.y_max) / 2.0);
    out += ' ' + fixed6(b.width());
    out += ' ' + fixed6(b.height());
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifest

namespace {

class ManifestReader {
 public:
  explicit ManifestReader(const ManifestOptions& options) : options_(options) {}

  DatasetManifest read(const json& root) {
    expect_object(root, "$");
    check_keys(root, "$", {"name", "classes", "images"});
    DatasetManifest m;
    m.name = require_string(root, "name", "$");
    m.classes.clear();
    const json& classes = require(root, "classes", "$");
    if (!classes.is_array()) throw SchemaError("classes", "expected array");
    for (std::size_t i = 0; i < classes.size(); ++i) {
      if (!classes[i].is_string()) {
        throw SchemaError("classes[" + std::to_string(i) + "]",
                          "expected string");
      }
      m.classes.push_back(classes[i].get<std::string>());
    }
    if (m.classes.empty()) throw SchemaError("classes", "no classes declared");

    const json& images = require(root, "images", "$");
    if (!images.is_array()) throw SchemaError("images", "expected array");
    m.images.reserve(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
      m.images.push_back(read_image(images[i], "images[" + std::to_string(i) + "]"));
    }
    m.validate();
    return m;
  }

 private:
  AnnotatedImage read_image(const json& node, const std::string& where) {
    expect_object(node, where);
    check_keys(node, where,
               {"id", "path", "width", "height", "orientation", "truths",
                "split"});
    AnnotatedImage image;
    image.id = require_string(node, "id", where);
    image.path = require_string(node, "path", where);
    image.dims.width = require_int(node, "width", where);
    image.dims.height = require_int(node, "height", where);
    if (node.contains("orientation")) {
      const int code = require_int(node, "orientation", where);
      if (!Orientation::is_valid_code(code)) {
        throw SchemaError(where + ".orientation",
                          "orientation must be in 1..8");
      }
      image.orientation = Orientation(code);
    }
    const json& truths = require(node, "truths", where);
    if (!truths.is_array()) throw SchemaError(where + ".truths", "expected array");
    for (std::size_t t = 0; t < truths.size(); ++t) {
      image.truths.push_back(
          read_truth(truths[t], where + ".truths[" + std::to_string(t) + "]"));
    }
    if (node.contains("split")) {
      const auto tag = require_string(node, "split", where);
      image.split = parse_split(tag);
      if (!image.split) {
        throw SchemaError(where + ".split", "unknown split '" + tag + "'");
      }
    }
    return image;
  }

  GroundTruth read_truth(const json& node, const std::string& where) {
    expect_object(node, where);
    check_keys(node, where, {"class", "x_min", "y_min", "x_max", "y_max"});
    GroundTruth truth;
    truth.class_id = require_int(node, "class", where);
    const BBox raw{require_double(node, "x_min", where),
                   require_double(node, "y_min", where),
                   require_double(node, "x_max", where),
                   require_double(node, "y_max", where)};
    try {
      truth.box = clamp_marginal(raw);
    } catch (const GeometryError& e) {
      throw SchemaError(where, e.what());
    }
    return truth;
  }

  static void expect_object(const json& node, const std::string& where) {
    if (!node.is_object()) throw SchemaError(where, "expected object");
  }

  void check_keys(const json& node, const std::string& where,
                  std::initializer_list<std::string_view> allowed) const {
    if (!options_.strict) return;
    for (const auto& [key, value] : node.items()) {
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
        throw SchemaError(where == "$" ? key : where + "." + key,
                          "unknown field");
      }
    }
  }

  static const json& require(const json& node, const char* key,
                             const std::string& where) {
    const auto it = node.find(key);
    if (it == node.end()) throw SchemaError(join(where, key), "missing field");
    return *it;
  }

  static std::string require_string(const json& node, const char* key,
                                    const std::string& where) {
    const json& v = require(node, key, where);
    if (!v.is_string()) throw SchemaError(join(where, key), "expected string");
    return v.get<std::string>();
  }

  static int require_int(const json& node, const char* key,
                         const std::string& where) {
    const json& v = require(node, key, where);
    if (!v.is_number_integer()) {
      throw SchemaError(join(where, key), "expected integer");
    }
    return v.get<int>();
  }

  static double require_double(const json& node, const char* key,
                               const std::string& where) {
    const json& v = require(node, key, where);
    if (!v.is_number()) throw SchemaError(join(where, key), "expected number");
    return v.get<double>();
  }

  static std::string join(const std::string& where, const char* key) {
    return where == "$" ? std::string(key) : where + "." + key;
  }

  ManifestOptions options_;
};

std::string quoted(const std::string& s) { return json(s).dump(); }

}  // namespace

DatasetManifest load_manifest(std::string_view text,
                              const ManifestOptions& options) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError("$", std::string("malformed JSON: ") + e.what());
  }
  return ManifestReader(options).read(root);
}

std::string save_manifest(const DatasetManifest& manifest) {
  std::string out = "{\n  \"name\": " + quoted(manifest.name) +
                    ",\n  \"classes\": [";
  for (std::size_t i = 0; i < manifest.classes.size(); ++i) {
    if (i) out += ", ";
    out += quoted(manifest.classes[i]);
  }
  out += "],\n  \"images\": [";
  for (std::size_t i = 0; i < manifest.images.size(); ++i) {
    const auto& image = manifest.images[i];
    out += i ? ",\n    " : "\n    ";
    out += "{\"id\": " + quoted(image.id);
    out += ", \"path\": " + quoted(image.path);
    out += ", \"width\": " + std::to_string(image.dims.width);
    out += ", \"height\": " + std::to_string(image.dims.height);
    out += ", \"orientation\": " + std::to_string(image.orientation.code());
    out += ", \"truths\": [";
    for (std::size_t t = 0; t < image.truths.size(); ++t) {
      const auto& truth = image.truths[t];
      if (t) out += ", ";
      out += "{\"class\": " + std::to_string(truth.class_id);
      out += ", \"x_min\": " + fixed6(truth.box.x_min);
      out += ", \"y_min\": " + fixed6(truth.box.y_min);
      out += ", \"x_max\": " + fixed6(truth.box.x_max);
      out += ", \"y_max\": " + fixed6(truth.box.y_max) + "}";
    }
    out += "]";
    if (image.split) {
      out += ", \"split\": \"" + std::string(to_string(*image.split)) + "\"";
    }
    out += "}";
  }
  out += manifest.images.empty() ? "]\n}\n" : "\n  ]\n}\n";
  return out;
}

// ---------------------------------------------------------------------------
// Splitting

DatasetManifest split_dataset(const DatasetManifest& manifest,
                              SplitFractions fractions, std::uint64_t seed) {
  const auto& f = fractions;
  if (f.train < 0.0 || f.val < 0.0 || f.test < 0.0) {
    throw DatasetError("split fractions must be nonnegative");
  }
  const double sum = f.train + f.val + f.test;
  if (sum > 1.0 + 1e-9) throw DatasetError("split fractions exceed 1");
  if (sum < 1.0 - 1e-9) throw DatasetError("split fractions sum below 1");

  const std::size_t n = manifest.images.size();
  auto val_count = static_cast<std::size_t>(std::llround(f.val * n));
  auto test_count = static_cast<std::size_t>(std::llround(f.test * n));
  // Rounding both half-up can overshoot by one when train is ~0.
  while (val_count + test_count > n) {
    if (test_count >= val_count && test_count > 0) {
      --test_count;
    } else {
      --val_count;
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = uniform_index(rng, i);
    std::swap(order[i - 1], order[j]);
  }

  DatasetManifest out = manifest;
  for (std::size_t k = 0; k < n; ++k) {
    Split tag = Split::kTrain;
    if (k < val_count) {
      tag = Split::kVal;
    } else if (k < val_count + test_count) {
      tag = Split::kTest;
    }
    out.images[order[k]].split = tag;
  }
  return out;
}

}  // namespace plastiq
