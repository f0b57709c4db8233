#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "strokediff/sketch.hpp"

namespace strokediff {

struct DatasetSplit {
  std::vector<Sketch> train;
  std::vector<Sketch> validation;
  std::vector<Sketch> test;
  // Empty when unlabeled; otherwise parallel to the sketch vectors.
  std::vector<int> train_labels;
  std::vector<int> validation_labels;
  std::vector<int> test_labels;
  std::vector<std::string> class_names;

  bool labeled() const { return !class_names.empty(); }
  std::size_t total() const { return train.size() + validation.size() + test.size(); }
};

enum class ToyShape { kLines, kCircles, kPolygons, kZigzags, kTwoClass };

ToyShape parse_toy_shape(const std::string& name);
std::string to_string(ToyShape shape);

struct ToyDatasetOptions {
  ToyShape shape = ToyShape::kCircles;
  int n = 100;
  int length = 32;
  double noise = 0.0;
  std::uint64_t seed = 0;
};

// Deterministic in `seed`. Sketches are resampled to `length` points and fit
// to [0, 1]^2. Split 80/10/10 after a seeded shuffle.
DatasetSplit generate_toy_dataset(const ToyDatasetOptions& options);

// Single shapes, exposed for tests and corruption experiments.
Sketch make_circle(double cx, double cy, double radius, double start_angle, bool clockwise);
Sketch make_zigzag(int teeth, double amplitude, double rotation);

struct DatasetManifestInfo {
  std::string generator;  // e.g. "toy:circles"
  int target_len = 0;
  double scale_box = 1.0;
  std::uint64_t seed = 0;
  double noise = 0.0;
};

// Directory layout: manifest.json + train/validation/test .jsonl files.
void save_dataset(const std::filesystem::path& dir, const DatasetSplit& split, const DatasetManifestInfo& info);
DatasetSplit load_dataset(const std::filesystem::path& dir);

}  // namespace strokediff
