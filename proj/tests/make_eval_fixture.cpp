// Regenerates the bundled evaluation fixture:
//   make_eval_fixture <output-dir>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "support/eval_fixture.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_eval_fixture <output-dir>\n";
    return 2;
  }
  const std::filesystem::path dir = argv[1];
  std::filesystem::create_directories(dir);
  const auto fx = plastiq::testing::make_eval_fixture();
  std::ofstream(dir / "eval_manifest.json") << plastiq::save_manifest(fx.manifest);
  std::ofstream(dir / "eval_detections.jsonl") << plastiq::write_detections_jsonl(fx.detections);
  std::ofstream(dir / "perfect_detections.jsonl") << plastiq::write_detections_jsonl(fx.perfect);
  return 0;
}
