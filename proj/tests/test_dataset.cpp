#include <doctest.h>

#include <chrono>
#include <random>
#include <set>

#include "plastiq/dataset.hpp"
#include "support/oracles.hpp"

using namespace plastiq;
using doctest::Approx;

namespace {

DatasetManifest synthetic_manifest(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  DatasetManifest m;
  m.name = "synthetic";
  for (std::size_t i = 0; i < n; ++i) {
    AnnotatedImage im;
    im.id = "img_" + std::to_string(i);
    im.path = "images/" + im.id + ".ppm";
    im.dims = {416, 416};
    im.orientation = Orientation(static_cast<int>(rng() % 8) + 1);
    for (std::uint64_t t = 0; t < rng() % 4; ++t) {
      im.truths.push_back({oracle::random_box(rng), 0});
    }
    m.images.push_back(std::move(im));
  }
  return m;
}

}  // namespace

TEST_CASE("parse_darknet_labels examples") {
  auto t = parse_darknet_labels("0 0.5 0.5 1 1");
  REQUIRE(t.size() == 1);
  CHECK(t[0].class_id == 0);
  CHECK(t[0].box == BBox{0, 0, 1, 1});

  t = parse_darknet_labels("0 0.3 0.4 0.2 0.2\n");
  REQUIRE(t.size() == 1);
  CHECK(t[0].box.x_min == Approx(0.2));
  CHECK(t[0].box.y_min == Approx(0.3));
  CHECK(t[0].box.x_max == Approx(0.4));
  CHECK(t[0].box.y_max == Approx(0.5));
}

TEST_CASE("parse_darknet_labels keeps line order and skips blank lines") {
  const auto t = parse_darknet_labels("1 0.2 0.2 0.1 0.1\n\n0 0.7 0.7 0.2 0.2\r\n");
  REQUIRE(t.size() == 2);
  CHECK(t[0].class_id == 1);
  CHECK(t[1].class_id == 0);
}

TEST_CASE("parse_darknet_labels errors carry line numbers") {
  auto line_of = [](const char* text) -> std::size_t {
    try {
      parse_darknet_labels(text);
    } catch (const LabelParseError& e) {
      return e.line();
    }
    return 0;
  };
  CHECK(line_of("0 0.5 0.5 0 0.1") == 1);
  CHECK(line_of("0 0.5 0.5 0.1 0.1\n0 0.5 0.5 0.1") == 2);
  CHECK(line_of("0 0.5 0.5 0.1 0.1\n\n0 0.5 abc 0.1 0.1") == 3);
  CHECK(line_of("0 0.5 0.5 1.5 0.1") == 1);
  CHECK(line_of("x 0.5 0.5 0.1 0.1") == 1);
  CHECK(line_of("-1 0.5 0.5 0.1 0.1") == 1);
  CHECK(line_of("0 0.5 0.5 0.1 -0.1") == 1);
  // Center and size in range, corners well outside the image.
  CHECK(line_of("0 0.9 0.5 0.4 0.1") == 1);
}

TEST_CASE("marginal overshoot is clamped, real overshoot rejected") {
  const auto t = parse_darknet_labels("0 0.9500004 0.5 0.1 0.2");
  REQUIRE(t.size() == 1);
  CHECK(t[0].box.x_max == 1.0);
  CHECK_THROWS_AS(parse_darknet_labels("0 0.951 0.5 0.1 0.2"), LabelParseError);
}

TEST_CASE("write_darknet_labels examples") {
  CHECK(write_darknet_labels({{{0, 0, 1, 1}, 0}}) == "0 0.500000 0.500000 1.000000 1.000000\n");
  CHECK(write_darknet_labels({{{0.2, 0.3, 0.4, 0.5}, 0}}) ==
        "0 0.300000 0.400000 0.200000 0.200000\n");
  CHECK(write_darknet_labels({}).empty());
}

TEST_CASE("darknet round trip within 1e-6") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<GroundTruth> truths;
    for (std::uint64_t i = 0; i < rng() % 6; ++i) {
      truths.push_back({oracle::random_box(rng, 0.01), static_cast<int>(rng() % 3)});
    }
    const auto back = parse_darknet_labels(write_darknet_labels(truths));
    REQUIRE(back.size() == truths.size());
    for (std::size_t i = 0; i < truths.size(); ++i) {
      REQUIRE(back[i].class_id == truths[i].class_id);
      const auto& a = back[i].box;
      const auto& b = truths[i].box;
      // center/size quantized to 1e-6 give corners within 1e-6
      REQUIRE(std::abs(a.x_min - b.x_min) <= 1e-6 + 1e-12);
      REQUIRE(std::abs(a.x_max - b.x_max) <= 1e-6 + 1e-12);
      REQUIRE(std::abs(a.y_min - b.y_min) <= 1e-6 + 1e-12);
      REQUIRE(std::abs(a.y_max - b.y_max) <= 1e-6 + 1e-12);
    }
  }
}

TEST_CASE("minimal manifest loads and saves byte-identically") {
  const std::string text =
      "{\n  \"name\": \"tiny\",\n  \"classes\": [\"trash_plastic\"],\n  \"images\": [\n"
      "    {\"id\": \"a\", \"path\": \"a.ppm\", \"width\": 416, \"height\": 416, "
      "\"orientation\": 1, \"truths\": []}\n  ]\n}\n";
  const auto m = load_manifest(text);
  CHECK(m.name == "tiny");
  REQUIRE(m.images.size() == 1);
  CHECK(m.images[0].truths.empty());
  CHECK(save_manifest(m) == text);
}

TEST_CASE("manifest canonical form is stable across save/load cycles") {
  auto m = split_dataset(synthetic_manifest(50, 22), {0.6, 0.2, 0.2}, 3);
  m.classes.push_back("other \"quoted\"");
  m.images[0].truths.push_back({{0.1, 0.1, 0.2, 0.2}, 1});
  const auto once = save_manifest(m);
  const auto twice = save_manifest(load_manifest(once));
  CHECK(once == twice);
  CHECK(save_manifest(load_manifest(twice)) == twice);
  CHECK(once.back() == '\n');
}

TEST_CASE("empty manifest round trip") {
  DatasetManifest m;
  m.name = "empty";
  const auto text = save_manifest(m);
  CHECK(load_manifest(text) == m);
  CHECK(save_manifest(load_manifest(text)) == text);
}

TEST_CASE("manifest schema errors name the offending field") {
  auto error_path = [](const std::string& text, ManifestOptions opt = {}) -> std::string {
    try {
      load_manifest(text, opt);
    } catch (const SchemaError& e) {
      return e.path();
    }
    return "<none>";
  };
  const std::string head = R"({"name":"m","classes":["trash_plastic"],"images":[)";
  const std::string good_img =
      R"({"id":"a","path":"a.ppm","width":4,"height":4,"orientation":1,"truths":[]})";

  CHECK(error_path(head + good_img + "," + good_img + "]}") == "images[1].id");
  CHECK(error_path(head + R"({"id":"a","path":"a.ppm","width":4,"height":4,"truths":[{"class":0,"x_min":0.1,"y_min":0.1,"x_max":"x","y_max":0.2}]}]})") ==
        "images[0].truths[0].x_max");
  CHECK(error_path(head + R"({"id":"a","path":"a.ppm","width":4,"truths":[]}]})") ==
        "images[0].height");
  CHECK(error_path(head + R"({"id":"a","path":"a.ppm","width":4,"height":4,"truths":[],"colour":1}]})") ==
        "images[0].colour");
  CHECK(error_path(head + R"({"id":"a","path":"a.ppm","width":4,"height":4,"truths":[{"class":3,"x_min":0.1,"y_min":0.1,"x_max":0.2,"y_max":0.2}]}]})") ==
        "images[0].truths[0].class");
  CHECK(error_path(head + R"({"id":"a","path":"a.ppm","width":4,"height":4,"truths":[{"class":0,"x_min":0.1,"y_min":0.1,"x_max":0.1,"y_max":0.2}]}]})") ==
        "images[0].truths[0]");
  CHECK(error_path(head + R"({"id":"a","path":"a.ppm","width":4,"height":4,"orientation":9,"truths":[]}]})") ==
        "images[0].orientation");
  CHECK(error_path(head + R"({"id":"a","path":"a.ppm","width":4,"height":4,"truths":[],"split":"holdout"}]})") ==
        "images[0].split");
  CHECK(error_path(head + good_img + R"(,{"id":"b","path":"b.ppm","width":4,"height":4,"truths":[],"split":"val"}]})") ==
        "images");
  CHECK(error_path(R"({"name":"m","classes":["a","a"],"images":[]})") == "classes[1]");
  CHECK(error_path("{not json") == "$");
}

TEST_CASE("duplicate image id error names the id") {
  const std::string img = R"({"id":"dup_7","path":"a.ppm","width":4,"height":4,"truths":[]})";
  const std::string text =
      R"({"name":"m","classes":["trash_plastic"],"images":[)" + img + "," + img + "]}";
  CHECK_THROWS_WITH_AS(load_manifest(text), doctest::Contains("dup_7"), SchemaError);
}

TEST_CASE("lenient mode ignores unknown fields") {
  const std::string text =
      R"({"name":"m","classes":["trash_plastic"],"extra":true,"images":[{"id":"a","path":"a.ppm","width":4,"height":4,"truths":[],"note":"x"}]})";
  CHECK_THROWS_AS(load_manifest(text), SchemaError);
  const auto m = load_manifest(text, {.strict = false});
  CHECK(m.images.size() == 1);
}

TEST_CASE("3200-image manifest loads in under a second") {
  const auto text = save_manifest(synthetic_manifest(3200, 23));
  const auto start = std::chrono::steady_clock::now();
  const auto m = load_manifest(text);
  const auto elapsed = std::chrono::steady_clock::now() - start;
  CHECK(m.images.size() == 3200);
  CHECK(elapsed < std::chrono::seconds(1));
}

TEST_CASE("split_dataset examples") {
  const auto m = synthetic_manifest(10, 24);
  const auto s = split_dataset(m, {0.8, 0.1, 0.1}, 7);
  std::map<Split, int> counts;
  for (const auto& im : s.images) counts[*im.split]++;
  CHECK(counts[Split::kTrain] == 8);
  CHECK(counts[Split::kVal] == 1);
  CHECK(counts[Split::kTest] == 1);
  CHECK(split_dataset(m, {0.8, 0.1, 0.1}, 7) == s);

  const auto all = split_dataset(m, {1, 0, 0}, 1);
  for (const auto& im : all.images) CHECK(im.split == Split::kTrain);

  CHECK_THROWS_WITH_AS(split_dataset(m, {0.5, 0.6, 0}, 1), doctest::Contains("exceed"),
                       DatasetError);
  CHECK_THROWS_AS(split_dataset(m, {0.5, 0.2, 0}, 1), DatasetError);
  CHECK_THROWS_AS(split_dataset(m, {1.2, -0.2, 0}, 1), DatasetError);
}

TEST_CASE("split_dataset is exhaustive, disjoint, and seed-reproducible") {
  std::mt19937_64 rng(25);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = rng() % 60;
    const auto m = synthetic_manifest(n, trial);
    const double a = static_cast<double>(rng() % 100) / 100.0;
    const double b = static_cast<double>(rng() % 100) / 100.0 * (1.0 - a);
    const SplitFractions f{1.0 - a - b, a, b};
    const std::uint64_t seed = rng();
    const auto s = split_dataset(m, f, seed);
    REQUIRE(s == split_dataset(m, f, seed));
    REQUIRE(s.images.size() == n);
    std::size_t val = 0, test = 0;
    for (std::size_t i = 0; i < n; ++i) {
      REQUIRE(s.images[i].split.has_value());
      REQUIRE(s.images[i].id == m.images[i].id);
      val += s.images[i].split == Split::kVal;
      test += s.images[i].split == Split::kTest;
    }
    if (val + test < n || n == 0) {
      REQUIRE(static_cast<double>(val) == std::llround(f.val * n));
      REQUIRE(static_cast<double>(test) == std::llround(f.test * n));
    }
    REQUIRE_NOTHROW(s.validate());
  }
}

TEST_CASE("different seeds give different assignments") {
  const auto m = synthetic_manifest(40, 26);
  CHECK_FALSE(split_dataset(m, {0.5, 0.25, 0.25}, 1) == split_dataset(m, {0.5, 0.25, 0.25}, 2));
}
