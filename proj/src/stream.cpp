#include "plastiq/stream.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <thread>

#include <json.hpp>

namespace plastiq {

namespace fs = std::filesystem;

std::optional<double> percentile(std::span<const double> values, double q) {
  if (values.empty()) return std::nullopt;
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const auto n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::size_t>(std::ceil(q / 100.0 * n));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

std::vector<FrameSource> frames_from_manifest(const DatasetManifest& manifest,
                                              const fs::path& image_root) {
  std::vector<FrameSource> frames;
  frames.reserve(manifest.images.size());
  for (const auto& image : manifest.images) {
    fs::path p(image.path);
    if (p.is_relative()) p = image_root / p;
    frames.push_back({image.id, p, image.orientation});
  }
  return frames;
}

std::vector<FrameSource> parse_frame_list(std::string_view text,
                                          const fs::path& base_dir) {
  std::vector<FrameSource> frames;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = text.substr(pos, nl - pos);
    pos = nl + 1;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) {
      line.remove_suffix(1);
    }
    if (line.empty()) continue;
    fs::path p{std::string(line)};
    if (p.is_relative()) p = base_dir / p;
    frames.push_back({std::string(line), p, Orientation{}});
  }
  return frames;
}

namespace {

using Ms = std::chrono::duration<double, std::milli>;

struct Prepared {
  bool ok = false;
  Clock::time_point start{};
  double decode_ms = 0.0;
  double preprocess_ms = 0.0;
  DetectRequest request;
};

Prepared prepare(const FrameSource& frame, std::uint64_t frame_id,
                 const PipelineConfig& config) {
  Prepared p;
  p.start = Clock::now();
  p.request.frame_id = frame_id;
  p.request.image_id = frame.image_id;
  p.request.path = frame.path.string();
  Raster raster;
  try {
    raster = read_ppm(frame.path);
  } catch (const RasterError&) {
    p.decode_ms = Ms(Clock::now() - p.start).count();
    return p;
  }
  const auto decoded = Clock::now();
  p.decode_ms = Ms(decoded - p.start).count();
  Raster ready = preprocess(raster, frame.orientation, config.resize);
  p.request.dims = ready.dims();
  if (config.staging_dir) {
    const auto staged = *config.staging_dir / ("frame_" + std::to_string(frame_id) + ".ppm");
    write_ppm(staged, ready);
    p.request.path = staged.string();
  } else {
    p.request.dims = raster.dims();
  }
  p.preprocess_ms = Ms(Clock::now() - decoded).count();
  p.ok = true;
  return p;
}

void prepare_batch(std::span<const FrameSource> frames, std::uint64_t first_id,
                   const PipelineConfig& config, std::vector<Prepared>& out) {
  out.assign(frames.size(), {});
  const unsigned threads =
      std::min<unsigned>(std::max(1u, config.preprocess_threads),
                         static_cast<unsigned>(frames.size()));
  if (threads <= 1) {
    for (std::size_t i = 0; i < frames.size(); ++i) {
      out[i] = prepare(frames[i], first_id + i, config);
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < frames.size(); i = next++) {
        out[i] = prepare(frames[i], first_id + i, config);
      }
    });
  }
  for (auto& th : pool) th.join();
}

BenchStats compute_stats(std::span<const FrameRecord> records, double wall_ms,
                         int batch_size) {
  BenchStats s;
  s.batch_size = batch_size;
  s.frames = records.size();
  std::vector<double> totals;
  double decode = 0.0;
  double pre = 0.0;
  double infer = 0.0;
  std::size_t inferred = 0;
  for (const auto& r : records) {
    decode += r.decode_ms;
    pre += r.preprocess_ms;
    if (r.status == FrameStatus::kOk) {
      totals.push_back(r.total_ms);
      infer += r.infer_ms;
      ++inferred;
    } else {
      ++s.failed_frames;
    }
  }
  if (records.empty()) return s;
  const auto n = static_cast<double>(records.size());
  s.mean_ms_per_img = wall_ms / n;
  if (*s.mean_ms_per_img > 0.0) s.throughput_fps = 1000.0 / *s.mean_ms_per_img;
  s.mean_decode_ms = decode / n;
  s.mean_preprocess_ms = pre / n;
  if (inferred > 0) s.mean_infer_ms = infer / static_cast<double>(inferred);
  s.p50_ms = percentile(totals, 50.0);
  s.p95_ms = percentile(totals, 95.0);
  return s;
}

}  // namespace

StreamResult run_stream(std::span<const FrameSource> source, Detector& detector,
                        const PipelineConfig& config) {
  if (config.batch_size < 1) throw std::invalid_argument("batch size must be positive");
  if (config.staging_dir) fs::create_directories(*config.staging_dir);

  StreamResult result;
  result.records.reserve(source.size());
  const auto run_start = Clock::now();
  std::vector<Prepared> prepared;
  std::vector<DetectRequest> requests;

  for (std::size_t first = 0; first < source.size() && !result.error;
       first += static_cast<std::size_t>(config.batch_size)) {
    const auto count =
        std::min(source.size() - first, static_cast<std::size_t>(config.batch_size));
    prepare_batch(source.subspan(first, count), first, config, prepared);

    requests.clear();
    for (const auto& p : prepared) {
      if (p.ok) requests.push_back(p.request);
    }
    std::vector<DetectOutcome> outcomes;
    try {
      outcomes = detector.detect_batch(requests);
      result.error = detector.session_error();
    } catch (const SessionError& e) {
      result.error = e.what();
      break;
    }

    std::size_t k = 0;
    for (std::size_t i = 0; i < count; ++i) {
      const auto& p = prepared[i];
      FrameRecord rec;
      rec.frame_id = first + i;
      rec.image_id = source[first + i].image_id;
      rec.decode_ms = p.decode_ms;
      rec.preprocess_ms = p.preprocess_ms;
      if (!p.ok) {
        rec.status = FrameStatus::kFailed;
        rec.total_ms = p.decode_ms + p.preprocess_ms;
      } else {
        const auto& o = outcomes[k++];
        rec.status = o.status;
        rec.infer_ms = o.model_latency_ms;
        rec.total_ms = std::max(Ms(o.completed - p.start).count(),
                                p.decode_ms + p.preprocess_ms);
        for (const auto& d : o.detections) {
          if (d.score >= config.confidence_threshold) rec.detections.push_back(d);
        }
      }
      result.records.push_back(std::move(rec));
    }
  }

  const double wall_ms = Ms(Clock::now() - run_start).count();
  result.stats = compute_stats(result.records, wall_ms, config.batch_size);
  result.summary = summarize(result.records);
  return result;
}

QuantificationSummary summarize(std::span<const FrameRecord> records) {
  QuantificationSummary s;
  s.cumulative.reserve(records.size());
  for (const auto& r : records) {
    if (r.status == FrameStatus::kOk) {
      const auto n = r.detections.size();
      ++s.histogram[n];
      s.total_detections += n;
      if (n > 0) ++s.frames_with_plastic;
    }
    s.cumulative.push_back(s.total_detections);
  }
  return s;
}

std::string emit_timeseries(std::span<const FrameRecord> records) {
  std::string out =
      "frame_id,image_id,n_detections,preprocess_ms,infer_ms,total_ms,decode_ms,status\n";
  char buf[160];
  for (const auto& r : records) {
    std::string id = r.image_id;
    if (id.find_first_of(",\"\n") != std::string::npos) {
      std::string q = "\"";
      for (char c : id) {
        if (c == '"') q += '"';
        q += c;
      }
      id = q + "\"";
    }
    const bool ok = r.status == FrameStatus::kOk;
    const std::string n = ok ? std::to_string(r.detections.size()) : "";
    std::snprintf(buf, sizeof(buf), ",%.3f,%.3f,%.3f,%.3f,", r.preprocess_ms,
                  r.infer_ms, r.total_ms, r.decode_ms);
    out += std::to_string(r.frame_id) + "," + id + "," + n + buf +
           std::string(to_string(r.status)) + "\n";
  }
  return out;
}

namespace {

nlohmann::ordered_json opt(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

std::optional<double> read_opt(const nlohmann::json& doc, const char* key) {
  const auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) return std::nullopt;
  return it->get<double>();
}

}  // namespace

std::string bench_stats_json(const BenchStats& s) {
  nlohmann::ordered_json doc;
  doc["frames"] = s.frames;
  doc["failed_frames"] = s.failed_frames;
  doc["batch_size"] = s.batch_size;
  doc["mean_ms_per_img"] = opt(s.mean_ms_per_img);
  doc["p50_ms"] = opt(s.p50_ms);
  doc["p95_ms"] = opt(s.p95_ms);
  doc["throughput_fps"] = opt(s.throughput_fps);
  doc["mean_decode_ms"] = opt(s.mean_decode_ms);
  doc["mean_preprocess_ms"] = opt(s.mean_preprocess_ms);
  doc["mean_infer_ms"] = opt(s.mean_infer_ms);
  return doc.dump(2) + "\n";
}

BenchStats parse_bench_stats_json(std::string_view text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    BenchStats s;
    s.frames = doc.value("frames", std::size_t{0});
    s.failed_frames = doc.value("failed_frames", std::size_t{0});
    s.batch_size = doc.value("batch_size", 0);
    s.mean_ms_per_img = read_opt(doc, "mean_ms_per_img");
    s.p50_ms = read_opt(doc, "p50_ms");
    s.p95_ms = read_opt(doc, "p95_ms");
    s.throughput_fps = read_opt(doc, "throughput_fps");
    s.mean_decode_ms = read_opt(doc, "mean_decode_ms");
    s.mean_preprocess_ms = read_opt(doc, "mean_preprocess_ms");
    s.mean_infer_ms = read_opt(doc, "mean_infer_ms");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("malformed bench stats JSON: ") + e.what());
  }
}

std::string summary_json(const QuantificationSummary& s) {
  nlohmann::ordered_json doc;
  doc["total_detections"] = s.total_detections;
  doc["frames_with_plastic"] = s.frames_with_plastic;
  auto& hist = doc["histogram"] = nlohmann::ordered_json::object();
  for (const auto& [n, frames] : s.histogram) hist[std::to_string(n)] = frames;
  doc["cumulative"] = s.cumulative;
  return doc.dump(2) + "\n";
}

}  // namespace plastiq
