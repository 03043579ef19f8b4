#include <doctest.h>

#include <algorithm>
#include <random>

#include "plastiq/evaluation.hpp"
#include "support/eval_fixture.hpp"
#include "support/oracles.hpp"
#include "support/temp_dir.hpp"

using namespace plastiq;
using doctest::Approx;

namespace {

const BBox kTruthA{0.1, 0.1, 0.3, 0.3};
const BBox kTruthB{0.6, 0.6, 0.8, 0.8};

// [0.9 TP, 0.8 FP, 0.7 TP] over two truths.
std::vector<ImageEval> hand_instance() {
  ImageEval im;
  im.truths = {{kTruthA, 0}, {kTruthB, 0}};
  im.dets = {{kTruthA, 0, 0.9}, {{0.4, 0.0, 0.5, 0.1}, 0, 0.8}, {kTruthB, 0, 0.7}};
  return {im};
}

std::string fixture(const char* name) {
  return testing::read_text(std::filesystem::path(PLASTIQ_FIXTURE_DIR) / name);
}

}  // namespace

TEST_CASE("match_detections is greedy by score") {
  const std::vector<GroundTruth> truths{{kTruthA, 0}};
  const std::vector<Detection> dets{{{0.11, 0.1, 0.3, 0.3}, 0, 0.6}, {kTruthA, 0, 0.9}};
  const auto m = match_detections(dets, truths, 0.5);
  REQUIRE(m.size() == 2);
  CHECK_FALSE(m[0].truth_index.has_value());
  REQUIRE(m[1].truth_index.has_value());
  CHECK(*m[1].truth_index == 0);
  CHECK(m[1].iou == 1.0);
}

TEST_CASE("match_detections respects class and threshold") {
  const std::vector<GroundTruth> truths{{kTruthA, 1}};
  CHECK_FALSE(match_detections(std::vector<Detection>{{kTruthA, 0, 0.9}}, truths, 0.5)[0]
                  .truth_index);
  // IoU 1/7 is below 0.5 and above 0.1.
  const std::vector<Detection> loose{{{0.2, 0.2, 0.4, 0.4}, 1, 0.9}};
  CHECK_FALSE(match_detections(loose, truths, 0.5)[0].truth_index);
  CHECK(match_detections(loose, truths, 0.1)[0].truth_index);
}

TEST_CASE("confusion_at examples") {
  const std::vector<GroundTruth> three{{kTruthA, 0}, {kTruthB, 0}, {{0.4, 0.4, 0.5, 0.5}, 0}};
  CHECK(confusion_at({}, three, 0.5, 0.5) == ConfusionCounts{0, 0, 3});

  std::vector<Detection> perfect;
  for (const auto& t : three) perfect.push_back({t.box, 0, 0.9});
  CHECK(confusion_at(perfect, three, 0.5, 0.5) == ConfusionCounts{3, 0, 0});

  const std::vector<GroundTruth> one{{kTruthA, 0}};
  const std::vector<Detection> low{{kTruthA, 0, 0.49}};
  CHECK(confusion_at(low, one, 0.5, 0.5) == ConfusionCounts{0, 0, 1});
  const std::vector<Detection> edge{{kTruthA, 0, 0.5}};
  CHECK(confusion_at(edge, one, 0.5, 0.5) == ConfusionCounts{1, 0, 0});
}

TEST_CASE("precision_recall conventions") {
  auto pr = precision_recall({8, 2, 2});
  CHECK(pr.precision == Approx(0.8));
  CHECK(pr.recall == Approx(0.8));
  pr = precision_recall({0, 0, 0});
  CHECK(pr.precision == 1.0);
  CHECK(pr.recall == 1.0);
  pr = precision_recall({0, 5, 3});
  CHECK(pr.precision == 0.0);
  CHECK(pr.recall == 0.0);
  pr = precision_recall({0, 0, 3});
  CHECK(pr.precision == 0.0);
  CHECK(pr.recall == 0.0);
}

TEST_CASE("f1 examples and bounds") {
  CHECK(f1_score(0.5, 0.5) == Approx(0.5));
  CHECK(f1_score(1, 0) == 0.0);
  CHECK(f1_score(0, 0) == 0.0);
  CHECK(std::abs(f1_score(0.93, 0.8534) - 0.890) <= 0.001);
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 10000; ++i) {
    const double p = u(rng);
    const double r = u(rng);
    REQUIRE(f1_score(p, r) == f1_score(r, p));
    REQUIRE(f1_score(p, r) <= 2 * std::min(p, r) + 1e-15);
  }
}

TEST_CASE("pr_curve examples") {
  ImageEval single;
  single.truths = {{kTruthA, 0}};
  single.dets = {{kTruthA, 0, 0.8}};
  const auto one = pr_curve(std::vector<ImageEval>{single}, 0.5);
  REQUIRE(one.samples.size() == 1);
  CHECK(one.samples[0].recall == 1.0);
  CHECK(one.samples[0].precision == 1.0);
  CHECK(average_precision(one) == 1.0);

  const auto curve = pr_curve(hand_instance(), 0.5);
  REQUIRE(curve.samples.size() == 3);
  CHECK(curve.total_truths == 2);
  CHECK(curve.samples[0].recall == 0.5);
  CHECK(curve.samples[0].precision == 1.0);
  CHECK(curve.samples[1].recall == 0.5);
  CHECK(curve.samples[1].precision == 0.5);
  CHECK(curve.samples[2].recall == 1.0);
  CHECK(curve.samples[2].precision == 2.0 / 3.0);
  CHECK(curve.samples[0].threshold == 0.9);
  CHECK(curve.samples[2].tp == 2);
  CHECK(curve.samples[2].fp == 1);
  // 0.5 * 1 + 0.5 * 2/3, rounded once.
  CHECK(average_precision(curve) == 5.0 / 6.0);
}

TEST_CASE("pr_curve agrees with threshold enumeration on the hand instance") {
  oracle::Instance inst;
  inst.images = hand_instance();
  const auto points = oracle::threshold_points(inst, 0.5);
  REQUIRE(points.size() == 3);
  // ascending thresholds: 0.7, 0.8, 0.9
  CHECK(points[0] == std::pair{1.0, 2.0 / 3.0});
  CHECK(points[1] == std::pair{0.5, 0.5});
  CHECK(points[2] == std::pair{0.5, 1.0});
  CHECK(std::abs(oracle::brute_force_ap(inst, 0.5) - 5.0 / 6.0) <= 1e-9);
}

TEST_CASE("all false positives give zero precision and AP") {
  ImageEval im;
  im.truths = {{kTruthA, 0}};
  im.dets = {{kTruthB, 0, 0.9}, {{0.4, 0.4, 0.5, 0.5}, 0, 0.7}};
  const auto curve = pr_curve(std::vector<ImageEval>{im}, 0.5);
  for (const auto& s : curve.samples) CHECK(s.precision == 0.0);
  CHECK(average_precision(curve) == 0.0);
  CHECK(average_precision(curve, ApMode::n_point(11)) == 0.0);
}

TEST_CASE("pr_curve and average_precision errors") {
  ImageEval im;
  im.dets = {{kTruthA, 0, 0.9}};
  CHECK_THROWS_AS(pr_curve(std::vector<ImageEval>{im}, 0.5), EvaluationError);
  CHECK_THROWS_AS(average_precision(PrCurve{}), EvaluationError);
}

TEST_CASE("n-point AP on the hand instance") {
  const auto curve = pr_curve(hand_instance(), 0.5);
  // Envelope is 1 on [0, 0.5] and 2/3 on (0.5, 1].
  // 11 points: r = 0..0.5 (6 samples) at 1, 0.6..1.0 (5 samples) at 2/3.
  CHECK(average_precision(curve, ApMode::n_point(11)) ==
        Approx((6.0 + 5.0 * 2.0 / 3.0) / 11.0).epsilon(1e-12));
  // 101 points: 51 at 1, 50 at 2/3.
  CHECK(average_precision(curve, ApMode::n_point(101)) ==
        Approx((51.0 + 50.0 * 2.0 / 3.0) / 101.0).epsilon(1e-12));
}

TEST_CASE("continuous AP matches the brute-force oracle") {
  std::mt19937_64 rng(22);
  for (int i = 0; i < 150; ++i) {
    const auto inst = oracle::random_instance(rng, 20, 10);
    const auto curve = pr_curve(inst.images, 0.5);
    const double expect = curve.samples.empty() ? 0.0 : oracle::brute_force_ap(inst, 0.5);
    const double got = curve.samples.empty() ? 0.0 : average_precision(curve);
    INFO("instance " << i);
    REQUIRE(std::abs(got - expect) <= 1e-9);
  }
}

TEST_CASE("AP envelope properties") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    auto inst = oracle::random_instance(rng, 20, 10);
    auto curve = pr_curve(inst.images, 0.5);
    if (curve.samples.empty()) continue;
    const double ap = average_precision(curve);
    double max_p = 0.0;
    for (const auto& s : curve.samples) max_p = std::max(max_p, s.precision);
    REQUIRE(ap <= max_p + 1e-12);

    // A zero-score false positive lands at the end of the sweep. Its box is
    // far too small to reach IoU 0.5 with any truth.
    auto& im = inst.images[rng() % inst.images.size()];
    im.dets.push_back({{0.0, 0.0, 1e-3, 1e-3}, 0, 0.0});
    REQUIRE(average_precision(pr_curve(inst.images, 0.5)) == ap);

    // Permuting detections with distinct scores changes nothing.
    auto shuffled = inst;
    for (auto& s : shuffled.images) std::shuffle(s.dets.begin(), s.dets.end(), rng);
    const auto a = pr_curve(inst.images, 0.5);
    const auto b = pr_curve(shuffled.images, 0.5);
    REQUIRE(a.samples.size() == b.samples.size());
    for (std::size_t k = 0; k < a.samples.size(); ++k) {
      REQUIRE(a.samples[k].recall == b.samples[k].recall);
      REQUIRE(a.samples[k].precision == b.samples[k].precision);
    }

    // tp + fn always equals the truth count.
    const double conf = u(rng);
    for (const auto& e : inst.images) {
      const auto c = confusion_at(e.dets, e.truths, 0.5, conf);
      REQUIRE(c.tp + c.fn == e.truths.size());
    }
  }
}

TEST_CASE("AP is 1 exactly when every truth is found before any false positive") {
  ImageEval im;
  im.truths = {{kTruthA, 0}, {kTruthB, 0}};
  im.dets = {{kTruthA, 0, 0.9}, {kTruthB, 0, 0.8}, {{0.4, 0.4, 0.5, 0.5}, 0, 0.7}};
  CHECK(average_precision(pr_curve(std::vector<ImageEval>{im}, 0.5)) == 1.0);
  im.dets[2].score = 0.85;
  CHECK(average_precision(pr_curve(std::vector<ImageEval>{im}, 0.5)) < 1.0);
}

TEST_CASE("evaluate on a perfect detector") {
  const auto manifest = load_manifest(fixture("eval_manifest.json"));
  const auto perfect = parse_detections_jsonl(fixture("perfect_detections.jsonl"));
  const auto r = evaluate(manifest, perfect);
  CHECK(r.mean_ap == 1.0);
  CHECK(r.f1 == 1.0);
  CHECK(r.precision == 1.0);
  CHECK(r.recall == 1.0);
  CHECK(r.counts == ConfusionCounts{218, 0, 0});
}

TEST_CASE("evaluate on the bundled fixture") {
  const auto manifest = load_manifest(fixture("eval_manifest.json"));
  const auto dets = parse_detections_jsonl(fixture("eval_detections.jsonl"));
  const auto r = evaluate(manifest, dets, 0.5, 0.5);
  CHECK(r.counts == ConfusionCounts{186, 14, 32});
  CHECK(r.precision == Approx(0.93).epsilon(1e-12));
  CHECK(std::abs(r.precision - 0.93) <= 0.005);
  CHECK(r.recall == Approx(186.0 / 218.0));
  CHECK(r.f1 == Approx(2 * 0.93 * (186.0 / 218.0) / (0.93 + 186.0 / 218.0)));
  CHECK(std::abs(r.f1 - 0.89) < 0.005);
  REQUIRE(r.ap_per_class.size() == 1);
  CHECK(r.mean_ap == r.ap_per_class.at(0));
  CHECK(r.mean_ap > 0.8);
  CHECK(r.mean_ap < 1.0);
}

TEST_CASE("bundled fixture files match the generator") {
  const auto fx = testing::make_eval_fixture();
  CHECK(fixture("eval_manifest.json") == save_manifest(fx.manifest));
  CHECK(fixture("eval_detections.jsonl") == write_detections_jsonl(fx.detections));
  CHECK(fixture("perfect_detections.jsonl") == write_detections_jsonl(fx.perfect));
}

TEST_CASE("evaluate with no detections") {
  const auto manifest = load_manifest(fixture("eval_manifest.json"));
  const auto r = evaluate(manifest, {});
  CHECK(r.mean_ap == 0.0);
  CHECK(r.recall == 0.0);
  CHECK(r.precision == 0.0);
  CHECK(r.f1 == 0.0);
  CHECK(r.counts == ConfusionCounts{0, 0, 218});
}

TEST_CASE("evaluate is invariant to detection order") {
  const auto manifest = load_manifest(fixture("eval_manifest.json"));
  auto dets = parse_detections_jsonl(fixture("eval_detections.jsonl"));
  const auto a = evaluate(manifest, dets);
  std::mt19937_64 rng(24);
  std::shuffle(dets.begin(), dets.end(), rng);
  const auto b = evaluate(manifest, dets);
  CHECK(a.mean_ap == b.mean_ap);
  CHECK(a.counts == b.counts);
  CHECK(a.f1 == b.f1);
}

TEST_CASE("evaluate averages AP over classes with truths") {
  DatasetManifest m;
  m.classes = {"a", "b", "c"};
  AnnotatedImage im;
  im.id = "x";
  im.path = "x.ppm";
  im.dims = {10, 10};
  im.truths = {{kTruthA, 0}, {kTruthB, 1}};
  m.images.push_back(im);
  const std::vector<ImageDetection> dets{{"x", {kTruthA, 0, 0.9}},
                                         {"x", {{0.4, 0.4, 0.5, 0.5}, 1, 0.9}},
                                         {"x", {kTruthB, 2, 0.8}}};
  const auto r = evaluate(m, dets);
  REQUIRE(r.ap_per_class.size() == 2);
  CHECK(r.ap_per_class.at(0) == 1.0);
  CHECK(r.ap_per_class.at(1) == 0.0);
  CHECK(r.mean_ap == 0.5);
  CHECK(r.counts == ConfusionCounts{1, 2, 1});
}

TEST_CASE("evaluate rejects unknown image ids") {
  const auto manifest = load_manifest(fixture("eval_manifest.json"));
  const std::vector<ImageDetection> dets{{"nope", {kTruthA, 0, 0.9}}};
  CHECK_THROWS_AS(evaluate(manifest, dets), EvaluationError);
}

TEST_CASE("detection jsonl round trip and errors") {
  const std::vector<ImageDetection> dets{{"a", {{0.1, 0.2, 0.3, 0.4}, 0, 0.5}},
                                         {"b", {{0, 0, 1, 1}, 2, 0.25}}};
  const auto text = write_detections_jsonl(dets);
  CHECK(text ==
        "{\"image_id\":\"a\",\"class\":0,\"x_min\":0.100000,\"y_min\":0.200000,"
        "\"x_max\":0.300000,\"y_max\":0.400000,\"score\":0.500000}\n"
        "{\"image_id\":\"b\",\"class\":2,\"x_min\":0.000000,\"y_min\":0.000000,"
        "\"x_max\":1.000000,\"y_max\":1.000000,\"score\":0.250000}\n");
  CHECK(parse_detections_jsonl(text) == dets);
  CHECK(parse_detections_jsonl("\n").empty());
  CHECK_THROWS_AS(parse_detections_jsonl("{\"image_id\":\"a\"}\n"), EvaluationError);
  CHECK_THROWS_AS(parse_detections_jsonl("not json\n"), EvaluationError);
  CHECK_THROWS_AS(
      parse_detections_jsonl("{\"image_id\":\"a\",\"class\":0,\"x_min\":0.5,\"y_min\":0,"
                             "\"x_max\":0.1,\"y_max\":1,\"score\":0.5}"),
      EvaluationError);
}

TEST_CASE("report json round trip") {
  const auto manifest = load_manifest(fixture("eval_manifest.json"));
  const auto dets = parse_detections_jsonl(fixture("eval_detections.jsonl"));
  const auto r = evaluate(manifest, dets);
  const auto back = parse_report_json(report_json(r));
  CHECK(back.mean_ap == Approx(r.mean_ap).epsilon(1e-6));
  CHECK(back.precision == Approx(r.precision).epsilon(1e-6));
  CHECK(back.counts == r.counts);
  CHECK(back.ap_per_class.size() == r.ap_per_class.size());
}

TEST_CASE("pr curve csv") {
  const auto csv = pr_curve_csv(pr_curve(hand_instance(), 0.5));
  CHECK(csv.rfind("threshold,recall,precision\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}

TEST_CASE("render_report reproduces the published rows") {
  EvalReport r;
  r.mean_ap = 0.85;
  r.f1 = 0.89;
  r.precision = 0.93;
  BenchStats p100;
  p100.mean_ms_per_img = 2.8;
  BenchStats v100;
  v100.mean_ms_per_img = 1.4;
  const std::vector<NamedReport> reports{{"YOLOv5s", r}};
  const std::vector<NamedLatency> lat{{"YOLOv5s", {{"P100", p100}, {"V100", v100}}}};
  const auto out = render_report(reports, lat);
  CHECK(out.text ==
        "Network | mAP  | F1   | Precision\n"
        "--------+------+------+----------\n"
        "YOLOv5s | 85.0 | 0.89 | 0.93\n"
        "\n"
        "Network | P100 | V100\n"
        "--------+------+-----\n"
        "YOLOv5s | 2.8  | 1.4\n");
  CHECK(out.csv ==
        "Network,mAP,F1,Precision\nYOLOv5s,85.0,0.89,0.93\n\nNetwork,P100,V100\nYOLOv5s,2.8,1.4\n");

  const auto only = render_report(reports, {});
  CHECK(std::count(only.csv.begin(), only.csv.end(), '\n') == 2);
  CHECK_THROWS_AS(render_report({}, {}), EvaluationError);

  const std::vector<NamedLatency> partial{{"A", {{"P100", p100}}}, {"B", {{"V100", v100}}}};
  CHECK(render_report({}, partial).csv == "Network,P100,V100\nA,2.8,-\nB,-,1.4\n");
}
