#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "strokediff/dataset.hpp"
#include "strokediff/model.hpp"

namespace strokediff {

struct CdCurve {
  std::vector<double> factors;
  std::vector<double> mean_cd;  // parallel to factors
};

// Mean CD between each sketch's points and its DDIM reconstruction at each
// length factor. Per-item start noise is keyed by the item's content, and
// items are processed in content order, so the result does not depend on
// the order of `test`.
CdCurve cd_vs_rate_curve(const DiffusionModel& model, const std::vector<Sketch>& test,
                         const std::vector<double>& factors, int ddim_steps, std::uint64_t seed);

// Mean CD between each sketch and an unconditional DDIM sample of the same
// length drawn with the same per-item start noise.
double unconditional_cd(const DiffusionModel& model, const std::vector<Sketch>& test, int ddim_steps,
                        std::uint64_t seed);

// Content hash of a sketch (coordinates and pen bits).
std::uint64_t sketch_hash(const Sketch& sketch);

struct ClassifierConfig {
  int hidden = 32;
  int features = 32;
  int epochs = 30;
  int batch_size = 32;
  double lr = 3e-3;
  double min_accuracy = 0.95;
  std::uint64_t seed = 0;
};

// Bidirectional GRU classifier over velocity/position sequences with a
// tanh feature layer and linear logits.
class ToyClassifier {
 public:
  ToyClassifier() = default;
  ToyClassifier(const ClassifierConfig& config, int classes, double velocity_scale);

  int classes() const { return classes_; }
  int feature_dim() const { return config_.features; }
  double test_accuracy() const { return test_accuracy_; }

  Matrix features(const std::vector<Sketch>& sketches) const;  // (N, feature_dim)
  std::vector<int> predict(const std::vector<Sketch>& sketches) const;
  double accuracy(const std::vector<Sketch>& sketches, const std::vector<int>& labels) const;

 private:
  friend ToyClassifier train_toy_classifier(const DatasetSplit&, const ClassifierConfig&);
  ad::Var logits(ad::Tape& tape, const std::vector<Sketch>& sketches, ad::Var* feats) const;

  ClassifierConfig config_;
  int classes_ = 0;
  double velocity_scale_ = 1.0;
  SequenceEncoder encoder_;
  ad::ParameterStore head_;
  double test_accuracy_ = 0.0;
};

// Trains on the train split and measures the test split. Throws
// HarnessError when test accuracy is below config.min_accuracy.
ToyClassifier train_toy_classifier(const DatasetSplit& dataset, const ClassifierConfig& config = {});

struct FrechetResult {
  double distance = 0.0;
  bool jittered = false;  // 1e-6 was added to both covariance diagonals
};

// ||mu1 - mu2||^2 + tr(S1 + S2 - 2 (S1 S2)^(1/2)) between Gaussians fitted to
// the rows of a and b. Needs >= 32 rows per side.
FrechetResult frechet_distance(const Matrix& a, const Matrix& b);
FrechetResult frechet_feature_distance(const std::vector<Sketch>& samples, const std::vector<Sketch>& reference,
                                       const ToyClassifier& classifier);

// Share of implicit-conditioning outputs at step t_c that the classifier
// assigns to their condition's label, over n_per_item draws per item.
double class_consistency(const DiffusionModel& model, const ToyClassifier& classifier,
                         const std::vector<Sketch>& conditions, const std::vector<int>& labels, int t_c,
                         int n_per_item, std::uint64_t seed);

// Mean over sketches of the mean squared second difference of positions.
double abstraction_energy(const std::vector<Sketch>& sketches);

// Single-stroke Gaussian random walks, scaled to the unit box.
std::vector<Sketch> random_walk_sketches(int count, int length, std::uint64_t seed);

struct MetricReport {
  std::map<std::string, double> metrics;
  CdCurve cd_curve;
  std::string checkpoint;  // fingerprint
  std::uint64_t seed = 0;
  std::vector<std::string> notes;

  nlohmann::json to_json() const;
  std::string to_csv() const;  // metric,value rows then factor,cd rows
};

}  // namespace strokediff
