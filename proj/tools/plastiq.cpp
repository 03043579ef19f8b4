// plastiq: dataset conversion, augmentation, evaluation and streaming bench.
//
// Exit codes: 0 success, 1 data error, 2 usage error.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "plastiq/augment.hpp"
#include "plastiq/backend.hpp"
#include "plastiq/dataset.hpp"
#include "plastiq/evaluation.hpp"
#include "plastiq/raster.hpp"
#include "plastiq/stream.hpp"

namespace fs = std::filesystem;
using namespace plastiq;

namespace {

constexpr int kExitData = 1;
constexpr int kExitUsage = 2;

/// Bad flag combination or value detected after parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::uint64_t seed = 0;
  bool strict = false;
  fs::path output_dir = ".";
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + p.string());
}

fs::path out_path(const Globals& g, const std::string& given, const char* fallback) {
  if (!given.empty()) return given;
  return g.output_dir / fallback;
}

DatasetManifest read_manifest(const fs::path& p, const Globals& g) {
  try {
    return load_manifest(read_file(p), ManifestOptions{g.strict});
  } catch (const SchemaError& e) {
    throw DatasetError(p.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// convert

struct ConvertArgs {
  std::string from;
  std::string to;
  fs::path input;
  std::string output;
  int width = kModelInputDims.width;
  int height = kModelInputDims.height;
  std::string name;
};

std::vector<std::string> read_class_names(const fs::path& dir) {
  for (const char* candidate : {"classes.txt", "obj.names"}) {
    const auto p = dir / candidate;
    if (!fs::exists(p)) continue;
    std::vector<std::string> names;
    std::istringstream in(read_file(p));
    for (std::string line; std::getline(in, line);) {
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
      if (!line.empty()) names.push_back(line);
    }
    if (!names.empty()) return names;
  }
  return {std::string(kDefaultClassName)};
}

int darknet_to_manifest(const ConvertArgs& a, const Globals& g) {
  if (!fs::is_directory(a.input)) throw UsageError("darknet input must be a directory");
  std::vector<fs::path> labels;
  for (const auto& entry : fs::directory_iterator(a.input)) {
    const auto& p = entry.path();
    if (entry.is_regular_file() && p.extension() == ".txt" && p.filename() != "classes.txt") {
      labels.push_back(p);
    }
  }
  std::sort(labels.begin(), labels.end());

  DatasetManifest m;
  m.name = a.name.empty() ? a.input.filename().string() : a.name;
  m.classes = read_class_names(a.input);
  std::size_t failures = 0;
  for (const auto& label : labels) {
    AnnotatedImage im;
    im.id = label.stem().string();
    im.path = im.id + ".ppm";
    const auto image = a.input / im.path;
    try {
      im.dims = fs::exists(image) ? read_ppm_dims(image) : ImageDims{a.width, a.height};
      im.truths = parse_darknet_labels(read_file(label));
    } catch (const std::exception& e) {
      std::cerr << label.string() << ": " << e.what() << "\n";
      ++failures;
      continue;
    }
    m.images.push_back(std::move(im));
  }
  if (failures) {
    std::cerr << failures << " label file(s) failed to parse\n";
    return kExitData;
  }
  m.validate();
  const auto out = out_path(g, a.output, "manifest.json");
  write_file(out, save_manifest(m));
  std::cout << "wrote " << m.images.size() << " images to " << out.string() << "\n";
  return 0;
}

int manifest_to_darknet(const ConvertArgs& a, const Globals& g) {
  const auto m = read_manifest(a.input, g);
  const fs::path dir = a.output.empty() ? g.output_dir : fs::path(a.output);
  fs::create_directories(dir);
  for (const auto& im : m.images) {
    const auto stem = fs::path(im.path).stem().string();
    write_file(dir / (stem + ".txt"), write_darknet_labels(im.truths));
  }
  std::string names;
  for (const auto& c : m.classes) names += c + "\n";
  write_file(dir / "classes.txt", names);
  std::cout << "wrote " << m.images.size() << " label files to " << dir.string() << "\n";
  return 0;
}

int cmd_convert(const ConvertArgs& a, const Globals& g) {
  if (a.from == "darknet" && a.to == "manifest") return darknet_to_manifest(a, g);
  if (a.from == "manifest" && a.to == "darknet") return manifest_to_darknet(a, g);
  if (a.from == a.to) throw UsageError("--from and --to must differ");
  throw UsageError("unknown format; expected darknet or manifest");
}

// ---------------------------------------------------------------------------
// split

struct SplitArgs {
  fs::path manifest;
  std::string output;
  SplitFractions fractions;
};

int cmd_split(const SplitArgs& a, const Globals& g) {
  const auto m = read_manifest(a.manifest, g);
  const auto out = split_dataset(m, a.fractions, g.seed);
  std::size_t counts[3] = {0, 0, 0};
  for (const auto& im : out.images) ++counts[static_cast<int>(*im.split)];
  const auto path = out_path(g, a.output, "split.json");
  write_file(path, save_manifest(out));
  std::cout << "train " << counts[0] << ", val " << counts[1] << ", test " << counts[2]
            << " -> " << path.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// augment

struct AugmentArgs {
  fs::path manifest;
  std::string image_root;
  std::string output;
  AugmentSpec spec;
  std::vector<double> brightness{0.7, 1.3};
  std::vector<double> saturation{0.7, 1.3};
  bool all_splits = false;
  unsigned threads = 1;
};

int cmd_augment(AugmentArgs a, const Globals& g) {
  const auto m = read_manifest(a.manifest, g);
  const fs::path root =
      a.image_root.empty() ? a.manifest.parent_path() : fs::path(a.image_root);
  a.spec.seed = g.seed;
  a.spec.brightness = {a.brightness[0], a.brightness[1]};
  a.spec.saturation = {a.saturation[0], a.saturation[1]};
  a.spec.train_only = !a.all_splits;
  try {
    a.spec.validate();
  } catch (const DatasetError& e) {
    throw UsageError(e.what());
  }

  fs::create_directories(g.output_dir);
  auto resolve = [&](const std::string& p) {
    const fs::path path(p);
    return path.is_relative() ? root / path : path;
  };
  const auto result = augment_dataset(
      m, [&](const AnnotatedImage& im) { return read_ppm(resolve(im.path)); },
      [&](const AnnotatedImage& im, const Raster& r) { write_ppm(g.output_dir / im.path, r); },
      a.spec, a.threads);

  // Originals stay where they are; point the new manifest at them.
  auto out = result.manifest;
  const auto out_abs = fs::absolute(g.output_dir);
  for (auto& im : out.images) {
    if (im.id.find("#aug") != std::string::npos) continue;
    im.path = fs::absolute(resolve(im.path)).lexically_relative(out_abs).generic_string();
  }
  const auto path = out_path(g, a.output, "augmented.json");
  write_file(path, save_manifest(out));
  write_file(g.output_dir / "augment_provenance.json",
             provenance_json(a.spec, result.provenance));
  std::cout << m.images.size() << " -> " << out.images.size() << " images, manifest "
            << path.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
  fs::path manifest;
  fs::path detections;
  double iou = kDefaultIouThreshold;
  double conf = kDefaultConfidenceThreshold;
  std::string network = "model";
  std::string ap_mode = "continuous";
};

ApMode parse_ap_mode(const std::string& s) {
  if (s == "continuous") return ApMode::continuous();
  if (s == "11") return ApMode::n_point(11);
  if (s == "101") return ApMode::n_point(101);
  throw UsageError("--ap-mode must be continuous, 11 or 101");
}

int cmd_evaluate(const EvaluateArgs& a, const Globals& g) {
  const auto mode = parse_ap_mode(a.ap_mode);
  const auto m = read_manifest(a.manifest, g);
  const auto dets = parse_detections_jsonl(read_file(a.detections));
  auto report = evaluate(m, dets, a.iou, a.conf);
  if (mode.kind != ApMode::Kind::kContinuous && !report.ap_per_class.empty()) {
    double sum = 0.0;
    for (auto& [cls, ap] : report.ap_per_class) {
      ap = average_precision(report.curves.at(cls), mode);
      sum += ap;
    }
    report.mean_ap = sum / static_cast<double>(report.ap_per_class.size());
  }

  fs::create_directories(g.output_dir);
  write_file(g.output_dir / "report.json", report_json(report));
  for (const auto& [cls, curve] : report.curves) {
    const std::string name =
        report.curves.size() == 1 ? "pr_curve.csv" : "pr_curve_class" + std::to_string(cls) + ".csv";
    write_file(g.output_dir / name, pr_curve_csv(curve));
  }
  const std::vector<NamedReport> rows{{a.network, report}};
  const auto tables = render_report(rows, {});
  write_file(g.output_dir / "detection_table.csv", tables.csv);
  std::cout << tables.text;
  return 0;
}

// ---------------------------------------------------------------------------
// bench / stream

struct RunArgs {
  std::string manifest;
  std::string frames;
  std::string image_root;
  std::string replay;
  double delay_ms = 0.0;
  std::string endpoint;
  int batch = kDefaultBatchSize;
  double conf = kDefaultConfidenceThreshold;
  int resize = kModelInputDims.width;
  unsigned threads = 1;
  int timeout_ms = 5000;
  std::string staging;
  std::string network = "model";
  std::string device = "cpu";
};

std::vector<FrameSource> load_frames(const RunArgs& a, const Globals& g) {
  if (a.manifest.empty() == a.frames.empty()) {
    throw UsageError("give exactly one of --manifest or --frames");
  }
  if (!a.manifest.empty()) {
    const fs::path p(a.manifest);
    const fs::path root = a.image_root.empty() ? p.parent_path() : fs::path(a.image_root);
    return frames_from_manifest(read_manifest(p, g), root);
  }
  const fs::path p(a.frames);
  const fs::path root = a.image_root.empty() ? p.parent_path() : fs::path(a.image_root);
  return parse_frame_list(read_file(p), root);
}

std::unique_ptr<Detector> make_detector(const RunArgs& a) {
  if (a.replay.empty() == a.endpoint.empty()) {
    throw UsageError("give exactly one of --replay or --endpoint");
  }
  if (!a.replay.empty()) {
    const auto dets = parse_detections_jsonl(read_file(a.replay));
    return std::make_unique<ReplayBackend>(
        dets, ReplayConfig{std::chrono::duration<double, std::milli>(a.delay_ms)});
  }
  ExternalConfig config;
  config.window = static_cast<std::size_t>(a.batch);
  config.timeout = std::chrono::milliseconds(a.timeout_ms);
  try {
    return make_external_backend(a.endpoint, config);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

StreamResult run(const RunArgs& a, const Globals& g) {
  if (a.batch < 1) throw UsageError("--batch must be positive");
  const auto frames = load_frames(a, g);
  auto detector = make_detector(a);
  PipelineConfig config;
  config.batch_size = a.batch;
  config.confidence_threshold = a.conf;
  config.resize = {a.resize, a.resize};
  config.preprocess_threads = a.threads;
  if (!a.staging.empty()) config.staging_dir = fs::path(a.staging);
  return run_stream(frames, *detector, config);
}

int cmd_bench(const RunArgs& a, const Globals& g) {
  const auto r = run(a, g);
  fs::create_directories(g.output_dir);
  write_file(g.output_dir / "bench_stats.json", bench_stats_json(r.stats));
  const std::vector<NamedLatency> rows{{a.network, {{a.device, r.stats}}}};
  const auto tables = render_report({}, rows);
  write_file(g.output_dir / "latency_table.csv", tables.csv);
  std::cout << tables.text;
  if (r.stats.frames) {
    std::printf("frames %zu, failed %zu, p50 %.3f ms, p95 %.3f ms, %.1f fps\n", r.stats.frames,
                r.stats.failed_frames, r.stats.p50_ms.value_or(0.0),
                r.stats.p95_ms.value_or(0.0), r.stats.throughput_fps.value_or(0.0));
  }
  if (r.error) {
    std::cerr << "detector session failed: " << *r.error << "\n";
    return kExitData;
  }
  return 0;
}

int cmd_stream(const RunArgs& a, const Globals& g) {
  const auto r = run(a, g);
  fs::create_directories(g.output_dir);
  write_file(g.output_dir / "timeseries.csv", emit_timeseries(r.records));
  write_file(g.output_dir / "summary.json", summary_json(r.summary));
  write_file(g.output_dir / "bench_stats.json", bench_stats_json(r.stats));
  std::cout << "frames " << r.records.size() << ", with plastic " << r.summary.frames_with_plastic
            << ", detections " << r.summary.total_detections << "\n";
  if (r.error) {
    std::cerr << "detector session failed: " << *r.error << "\n";
    return kExitData;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// report

struct ReportArgs {
  std::vector<std::string> evals;
  std::vector<std::string> benches;
};

std::pair<std::string, std::string> split_once(const std::string& s, char sep,
                                               const char* what) {
  const auto pos = s.find(sep);
  if (pos == std::string::npos || pos == 0 || pos + 1 == s.size()) {
    throw UsageError(std::string("expected ") + what + ", got '" + s + "'");
  }
  return {s.substr(0, pos), s.substr(pos + 1)};
}

int cmd_report(const ReportArgs& a, const Globals& g) {
  if (a.evals.empty() && a.benches.empty()) throw UsageError("nothing to report");
  std::vector<NamedReport> reports;
  for (const auto& spec : a.evals) {
    const auto [name, path] = split_once(spec, '=', "NETWORK=report.json");
    reports.push_back({name, parse_report_json(read_file(path))});
  }
  std::vector<NamedLatency> latencies;
  for (const auto& spec : a.benches) {
    const auto [label, path] = split_once(spec, '=', "NETWORK@DEVICE=bench_stats.json");
    const auto [name, device] = split_once(label, '@', "NETWORK@DEVICE");
    auto it = std::find_if(latencies.begin(), latencies.end(),
                           [&](const NamedLatency& l) { return l.network == name; });
    if (it == latencies.end()) {
      latencies.push_back({name, {}});
      it = latencies.end() - 1;
    }
    it->devices.push_back({device, parse_bench_stats_json(read_file(path))});
  }
  const auto tables = render_report(reports, latencies);
  fs::create_directories(g.output_dir);
  write_file(g.output_dir / "report.csv", tables.csv);
  std::cout << tables.text;
  return 0;
}

void add_run_options(CLI::App* sub, RunArgs& a) {
  sub->add_option("--manifest", a.manifest, "Dataset manifest supplying the frames");
  sub->add_option("--frames", a.frames, "Frame list, one image path per line");
  sub->add_option("--image-root", a.image_root, "Directory relative image paths resolve against");
  sub->add_option("--replay", a.replay, "Detection file served by the replay backend");
  sub->add_option("--delay-ms", a.delay_ms, "Artificial replay delay per frame")
      ->check(CLI::NonNegativeNumber);
  sub->add_option("--endpoint", a.endpoint, "External detector: exec:<cmd> or tcp:<host>:<port>");
  sub->add_option("--batch", a.batch, "Batch size and pipelining window")->capture_default_str();
  sub->add_option("--conf", a.conf, "Confidence threshold")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  sub->add_option("--resize", a.resize, "Square model input size")->capture_default_str()->check(CLI::PositiveNumber);
  sub->add_option("--threads", a.threads, "Preprocessing threads")->capture_default_str();
  sub->add_option("--timeout-ms", a.timeout_ms, "Per-frame timeout for external detectors")
      ->capture_default_str()->check(CLI::PositiveNumber);
  sub->add_option("--staging-dir", a.staging, "Write preprocessed frames here and send those");
  sub->add_option("--network", a.network, "Row label")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Marine plastic detection toolkit"};
  app.require_subcommand(1);
  // Global flags may follow the subcommand.
  app.fallthrough();
  Globals g;
  std::string output_dir = ".";
  app.add_option("--seed", g.seed, "Seed for splitting and augmentation")->capture_default_str();
  app.add_flag("--strict", g.strict, "Reject unknown manifest fields");
  app.add_option("--output-dir", output_dir, "Directory for output files")->capture_default_str();

  ConvertArgs convert;
  auto* c = app.add_subcommand("convert", "Convert between darknet labels and a manifest");
  c->add_option("--from", convert.from, "darknet or manifest")->required();
  c->add_option("--to", convert.to, "darknet or manifest")->required();
  c->add_option("input", convert.input, "Darknet directory or manifest file")->required()->check(CLI::ExistingPath);
  c->add_option("-o,--output", convert.output, "Output manifest file or label directory");
  c->add_option("--width", convert.width, "Image width when no PPM is present")->capture_default_str()->check(CLI::PositiveNumber);
  c->add_option("--height", convert.height, "Image height when no PPM is present")->capture_default_str()->check(CLI::PositiveNumber);
  c->add_option("--name", convert.name, "Dataset name (default: directory name)");

  SplitArgs split;
  auto* s = app.add_subcommand("split", "Assign train/val/test tags");
  s->add_option("manifest", split.manifest)->required()->check(CLI::ExistingFile);
  s->add_option("-o,--output", split.output, "Output manifest (default: split.json)");
  s->add_option("--train", split.fractions.train)->required()->check(CLI::Range(0.0, 1.0));
  s->add_option("--val", split.fractions.val)->required()->check(CLI::Range(0.0, 1.0));
  s->add_option("--test", split.fractions.test)->required()->check(CLI::Range(0.0, 1.0));

  AugmentArgs augment;
  auto* a = app.add_subcommand("augment", "Append jittered copies of training images");
  a->add_option("manifest", augment.manifest)->required()->check(CLI::ExistingFile);
  a->add_option("--image-root", augment.image_root, "Directory relative image paths resolve against");
  a->add_option("-o,--output", augment.output, "Output manifest (default: augmented.json)");
  a->add_option("--copies", augment.spec.copies_per_image)->capture_default_str()->check(CLI::NonNegativeNumber);
  a->add_option("--brightness", augment.brightness, "Factor range LO HI")->expected(2)->capture_default_str();
  a->add_option("--saturation", augment.saturation, "Factor range LO HI")->expected(2)->capture_default_str();
  a->add_option("--flip-h", augment.spec.flip_h_prob, "Horizontal flip probability")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  a->add_option("--flip-v", augment.spec.flip_v_prob, "Vertical flip probability")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  a->add_flag("--all-splits", augment.all_splits, "Augment val and test images too");
  a->add_option("--threads", augment.threads)->capture_default_str();

  EvaluateArgs eval;
  auto* e = app.add_subcommand("evaluate", "Score detections against a manifest");
  e->add_option("manifest", eval.manifest)->required()->check(CLI::ExistingFile);
  e->add_option("detections", eval.detections)->required()->check(CLI::ExistingFile);
  e->add_option("--iou", eval.iou)->capture_default_str()->check(CLI::Range(0.0, 1.0));
  e->add_option("--conf", eval.conf)->capture_default_str()->check(CLI::Range(0.0, 1.0));
  e->add_option("--network", eval.network, "Row label")->capture_default_str();
  e->add_option("--ap-mode", eval.ap_mode, "continuous, 11 or 101")->capture_default_str();

  RunArgs bench;
  auto* b = app.add_subcommand("bench", "Measure ms/img through a detector");
  add_run_options(b, bench);
  b->add_option("--device", bench.device, "Column label")->capture_default_str();

  RunArgs stream;
  auto* st = app.add_subcommand("stream", "Stream frames and quantify detections");
  add_run_options(st, stream);

  ReportArgs report;
  auto* r = app.add_subcommand("report", "Render detection and latency tables");
  r->add_option("--eval", report.evals, "NETWORK=report.json (repeatable)");
  r->add_option("--bench", report.benches, "NETWORK@DEVICE=bench_stats.json (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return kExitUsage;
  }
  g.output_dir = output_dir;

  try {
    if (*c) return cmd_convert(convert, g);
    if (*s) return cmd_split(split, g);
    if (*a) return cmd_augment(augment, g);
    if (*e) return cmd_evaluate(eval, g);
    if (*b) return cmd_bench(bench, g);
    if (*st) return cmd_stream(stream, g);
    if (*r) return cmd_report(report, g);
  } catch (const UsageError& ex) {
    std::cerr << "usage error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
