#include "plastiq/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <unordered_map>

#include <json.hpp>

namespace plastiq {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Detection file

std::vector<ImageDetection> parse_detections_jsonl(std::string_view text) {
  std::vector<ImageDetection> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const auto line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;

    const auto fail = [line_no](const std::string& what) {
      return EvaluationError("detections line " + std::to_string(line_no) +
                             ": " + what);
    };
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error&) {
      throw fail("malformed JSON");
    }
    if (!obj.is_object()) throw fail("expected object");
    try {
      ImageDetection d;
      d.image_id = obj.at("image_id").get<std::string>();
      d.det.class_id = obj.at("class").get<int>();
      d.det.score = obj.at("score").get<double>();
      const BBox raw{obj.at("x_min").get<double>(), obj.at("y_min").get<double>(),
                     obj.at("x_max").get<double>(), obj.at("y_max").get<double>()};
      d.det.box = clamp_marginal(raw);
      if (d.det.score < 0.0 || d.det.score > 1.0) {
        throw fail("score outside [0,1]");
      }
      out.push_back(std::move(d));
    } catch (const json::exception& e) {
      throw fail(e.what());
    } catch (const GeometryError& e) {
      throw fail(e.what());
    }
  }
  return out;
}

std::string write_detections_jsonl(std::span<const ImageDetection> detections) {
  std::string out;
  char buf[256];
  for (const auto& d : detections) {
    std::snprintf(buf, sizeof(buf),
                  ",\"class\":%d,\"x_min\":%.6f,\"y_min\":%.6f,\"x_max\":%.6f,"
                  "\"y_max\":%.6f,\"score\":%.6f}\n",
                  d.det.class_id, d.det.box.x_min, d.det.box.y_min,
                  d.det.box.x_max, d.det.box.y_max, d.det.score);
    out += "{\"image_id\":" + json(d.image_id).dump() + buf;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Matching and counts

std::vector<Match> match_detections(std::span<const Detection> dets,
                                    std::span<const GroundTruth> truths,
                                    double iou_threshold) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].score > dets[b].score;
  });

  std::vector<Match> matches(dets.size());
  std::vector<bool> taken(truths.size(), false);
  for (const std::size_t d : order) {
    matches[d].det_index = d;
    double best = -1.0;
    std::optional<std::size_t> best_truth;
    for (std::size_t t = 0; t < truths.size(); ++t) {
      if (taken[t] || truths[t].class_id != dets[d].class_id) continue;
      const double v = iou(dets[d].box, truths[t].box);
      if (v > best) {
        best = v;
        best_truth = t;
      }
    }
    if (best_truth && best >= iou_threshold) {
      taken[*best_truth] = true;
      matches[d].truth_index = best_truth;
      matches[d].iou = best;
    }
  }
  return matches;
}

ConfusionCounts confusion_at(std::span<const Detection> dets,
                             std::span<const GroundTruth> truths,
                             double iou_threshold, double confidence_threshold) {
  std::vector<Detection> kept;
  for (const auto& d : dets) {
    if (d.score >= confidence_threshold) kept.push_back(d);
  }
  ConfusionCounts c;
  for (const auto& m : match_detections(kept, truths, iou_threshold)) {
    if (m.truth_index) {
      ++c.tp;
    } else {
      ++c.fp;
    }
  }
  c.fn = truths.size() - c.tp;
  return c;
}

PrecisionRecall precision_recall(const ConfusionCounts& c) {
  if (c.tp + c.fp + c.fn == 0) return {1.0, 1.0};
  PrecisionRecall pr;
  if (c.tp + c.fp > 0) {
    pr.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  }
  if (c.tp + c.fn > 0) {
    pr.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  }
  return pr;
}

double f1_score(double precision, double recall) {
  const double sum = precision + recall;
  if (sum <= 0.0) return 0.0;
  return 2.0 * precision * recall / sum;
}

// ---------------------------------------------------------------------------
// Curve and AP

PrCurve pr_curve(std::span<const ImageEval> images, double iou_threshold) {
  struct Scored {
    double score;
    bool tp;
  };
  std::vector<Scored> all;
  std::size_t total_truths = 0;
  for (const auto& image : images) {
    total_truths += image.truths.size();
    const auto matches = match_detections(image.dets, image.truths, iou_threshold);
    for (std::size_t d = 0; d < image.dets.size(); ++d) {
      all.push_back({image.dets[d].score, matches[d].truth_index.has_value()});
    }
  }
  if (total_truths == 0) {
    throw EvaluationError("PR curve undefined without ground-truth boxes");
  }
  std::stable_sort(all.begin(), all.end(),
                   [](const Scored& a, const Scored& b) { return a.score > b.score; });

  PrCurve curve;
  curve.iou_threshold = iou_threshold;
  curve.total_truths = total_truths;
  curve.samples.reserve(all.size());
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (const auto& s : all) {
    s.tp ? ++tp : ++fp;
    curve.samples.push_back(
        {s.score, static_cast<double>(tp) / static_cast<double>(total_truths),
         static_cast<double>(tp) / static_cast<double>(tp + fp), tp, fp});
  }
  return curve;
}

std::string pr_curve_csv(const PrCurve& curve) {
  std::string out = "threshold,recall,precision\n";
  char buf[96];
  for (const auto& s : curve.samples) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f\n", s.threshold, s.recall,
                  s.precision);
    out += buf;
  }
  return out;
}

double average_precision(const PrCurve& curve, ApMode mode) {
  const auto& samples = curve.samples;
  if (samples.empty()) throw EvaluationError("cannot integrate an empty PR curve");

  // envelope[i] = max precision over samples i.. (recall is nondecreasing
  // along the sweep, so this is the max over recall >= recall[i]).
  std::vector<double> envelope(samples.size());
  double running = 0.0;
  for (std::size_t i = samples.size(); i-- > 0;) {
    running = std::max(running, samples[i].precision);
    envelope[i] = running;
  }

  if (mode.kind == ApMode::Kind::kContinuous) {
    if (curve.total_truths == 0) {
      // Hand-built curve without counts: integrate the stored ratios.
      long double area = 0.0L;
      double prev_recall = 0.0;
      for (std::size_t i = 0; i < samples.size(); ++i) {
        area += static_cast<long double>(samples[i].recall - prev_recall) * envelope[i];
        prev_recall = samples[i].recall;
      }
      return static_cast<double>(area);
    }
    // Rebuild the envelope from the counts so each step is tp / (tp + fp)
    // rounded once, in extended precision, instead of once per operation.
    std::vector<long double> exact(samples.size());
    long double best = 0.0L;
    for (std::size_t i = samples.size(); i-- > 0;) {
      const auto& s = samples[i];
      const std::size_t n = s.tp + s.fp;
      if (n) best = std::max(best, static_cast<long double>(s.tp) / n);
      exact[i] = best;
    }
    long double weighted = 0.0L;
    std::size_t prev_tp = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      weighted += static_cast<long double>(samples[i].tp - prev_tp) * exact[i];
      prev_tp = samples[i].tp;
    }
    return static_cast<double>(weighted / curve.total_truths);
  }

  if (mode.points < 2) throw EvaluationError("n-point AP needs n >= 2");
  double sum = 0.0;
  std::size_t i = 0;
  for (int k = 0; k < mode.points; ++k) {
    const double r = static_cast<double>(k) / (mode.points - 1);
    while (i < samples.size() && samples[i].recall < r) ++i;
    if (i < samples.size()) sum += envelope[i];
  }
  return sum / mode.points;
}

// ---------------------------------------------------------------------------
// Report

EvalReport evaluate(const DatasetManifest& manifest,
                    std::span<const ImageDetection> detections,
                    double iou_threshold, double confidence_threshold) {
  std::unordered_map<std::string_view, std::size_t> index;
  for (std::size_t i = 0; i < manifest.images.size(); ++i) {
    index.emplace(manifest.images[i].id, i);
  }
  std::vector<std::vector<Detection>> per_image(manifest.images.size());
  for (const auto& d : detections) {
    const auto it = index.find(d.image_id);
    if (it == index.end()) {
      throw EvaluationError("detection references unknown image id '" +
                            d.image_id + "'");
    }
    per_image[it->second].push_back(d.det);
  }

  EvalReport report;
  report.iou_threshold = iou_threshold;
  report.confidence_threshold = confidence_threshold;

  for (std::size_t c = 0; c < manifest.classes.size(); ++c) {
    const int cls = static_cast<int>(c);
    std::vector<ImageEval> images(manifest.images.size());
    std::size_t truths = 0;
    for (std::size_t i = 0; i < manifest.images.size(); ++i) {
      for (const auto& t : manifest.images[i].truths) {
        if (t.class_id == cls) images[i].truths.push_back(t);
      }
      for (const auto& d : per_image[i]) {
        if (d.class_id == cls) images[i].dets.push_back(d);
      }
      truths += images[i].truths.size();
    }
    if (truths == 0) continue;
    auto curve = pr_curve(images, iou_threshold);
    report.ap_per_class[cls] =
        curve.samples.empty() ? 0.0 : average_precision(curve);
    report.curves.emplace(cls, std::move(curve));
  }
  if (!report.ap_per_class.empty()) {
    double sum = 0.0;
    for (const auto& [cls, ap] : report.ap_per_class) sum += ap;
    report.mean_ap = sum / static_cast<double>(report.ap_per_class.size());
  }

  for (std::size_t i = 0; i < manifest.images.size(); ++i) {
    report.counts += confusion_at(per_image[i], manifest.images[i].truths,
                                  iou_threshold, confidence_threshold);
  }
  const auto pr = precision_recall(report.counts);
  report.precision = pr.precision;
  report.recall = pr.recall;
  report.f1 = f1_score(pr.precision, pr.recall);
  return report;
}

std::string report_json(const EvalReport& report) {
  nlohmann::ordered_json doc;
  doc["map"] = report.mean_ap;
  doc["f1"] = report.f1;
  doc["precision"] = report.precision;
  doc["recall"] = report.recall;
  doc["tp"] = report.counts.tp;
  doc["fp"] = report.counts.fp;
  doc["fn"] = report.counts.fn;
  doc["iou_threshold"] = report.iou_threshold;
  doc["confidence_threshold"] = report.confidence_threshold;
  auto& ap = doc["ap_per_class"] = nlohmann::ordered_json::object();
  for (const auto& [cls, v] : report.ap_per_class) ap[std::to_string(cls)] = v;
  return doc.dump(2) + "\n";
}

EvalReport parse_report_json(std::string_view text) {
  try {
    const auto doc = json::parse(text);
    EvalReport r;
    r.mean_ap = doc.at("map").get<double>();
    r.f1 = doc.at("f1").get<double>();
    r.precision = doc.at("precision").get<double>();
    r.recall = doc.value("recall", 0.0);
    r.counts.tp = doc.value("tp", std::size_t{0});
    r.counts.fp = doc.value("fp", std::size_t{0});
    r.counts.fn = doc.value("fn", std::size_t{0});
    r.iou_threshold = doc.value("iou_threshold", kDefaultIouThreshold);
    r.confidence_threshold =
        doc.value("confidence_threshold", kDefaultConfidenceThreshold);
    if (doc.contains("ap_per_class")) {
      for (const auto& [k, v] : doc["ap_per_class"].items()) {
        r.ap_per_class[std::stoi(k)] = v.get<double>();
      }
    }
    return r;
  } catch (const std::exception& e) {
    throw EvaluationError(std::string("malformed report JSON: ") + e.what());
  }
}

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

using Table = std::vector<std::vector<std::string>>;

std::string aligned(const Table& rows) {
  std::vector<std::size_t> widths;
  for (const auto& row : rows) {
    widths.resize(std::max(widths.size(), row.size()), 0);
    for (std::size_t c = 0; c < row.size(); ++c) {
      widths[c] = std::max(widths[c], row[c].size());
    }
  }
  std::string out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::string line;
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      if (c) line += " | ";
      line += rows[r][c];
      if (c + 1 < rows[r].size()) line.append(widths[c] - rows[r][c].size(), ' ');
    }
    out += line + "\n";
    if (r == 0) {
      std::string rule;
      for (std::size_t c = 0; c < widths.size(); ++c) {
        if (c) rule += "-+-";
        rule.append(widths[c], '-');
      }
      out += rule + "\n";
    }
  }
  return out;
}

std::string csv(const Table& rows) {
  std::string out;
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out += ',';
      const bool quote = row[c].find_first_of(",\"\n") != std::string::npos;
      if (quote) {
        out += '"';
        for (char ch : row[c]) {
          if (ch == '"') out += '"';
          out += ch;
        }
        out += '"';
      } else {
        out += row[c];
      }
    }
    out += '\n';
  }
  return out;
}

}  // namespace

RenderedTables render_report(std::span<const NamedReport> reports,
                             std::span<const NamedLatency> latencies) {
  if (reports.empty() && latencies.empty()) {
    throw EvaluationError("nothing to render");
  }
  RenderedTables out;
  if (!reports.empty()) {
    Table t{{"Network", "mAP", "F1", "Precision"}};
    for (const auto& r : reports) {
      t.push_back({r.network, fmt("%.1f", r.report.mean_ap * 100.0),
                   fmt("%.2f", r.report.f1), fmt("%.2f", r.report.precision)});
    }
    out.text += aligned(t);
    out.csv += csv(t);
  }
  if (!latencies.empty()) {
    std::vector<std::string> devices;
    for (const auto& row : latencies) {
      for (const auto& d : row.devices) {
        if (std::find(devices.begin(), devices.end(), d.device) == devices.end()) {
          devices.push_back(d.device);
        }
      }
    }
    Table t{{"Network"}};
    t[0].insert(t[0].end(), devices.begin(), devices.end());
    for (const auto& row : latencies) {
      std::vector<std::string> cells{row.network};
      for (const auto& dev : devices) {
        const auto it = std::find_if(row.devices.begin(), row.devices.end(),
                                     [&](const DeviceLatency& d) { return d.device == dev; });
        if (it == row.devices.end() || !it->stats.mean_ms_per_img) {
          cells.push_back("-");
        } else {
          cells.push_back(fmt("%.1f", *it->stats.mean_ms_per_img));
        }
      }
      t.push_back(std::move(cells));
    }
    if (!out.text.empty()) {
      out.text += "\n";
      out.csv += "\n";
    }
    out.text += aligned(t);
    out.csv += csv(t);
  }
  return out;
}

}  // namespace plastiq
