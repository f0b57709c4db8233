#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "strokediff/autodiff.hpp"
#include "strokediff/batch.hpp"
#include "strokediff/dataset.hpp"
#include "strokediff/errors.hpp"
#include "strokediff/model.hpp"

namespace strokediff {

struct TrainConfig {
  int epochs = 50;
  int batch_size = 64;
  double lr0 = 6e-3;
  double lr_decay = 0.9997;  // per epoch
  double weight_decay = 1e-4;
  double grad_clip = 1.0;  // global norm; <= 0 disables
  std::uint64_t seed = 0;
  ConditionMode mode = ConditionMode::kNone;
  int T = 1000;
  double sigma_scale = 0.8;
  // Coordinate channels are scaled to this RMS over the training set;
  // <= 0 leaves them unscaled.
  double velocity_rms = 1.0;
  int val_repeats = 4;             // Monte-Carlo passes for validation loss
  // Sampling-rate augmentation: every epoch each training sketch is
  // resampled to round(u * |X|) points with u ~ U[rate_min, rate_max].
  // The default 1, 1 trains on the sketches as given.
  double rate_min = 1.0;
  double rate_max = 1.0;
  EstimatorConfig estimator;
  SequenceEncoderConfig sequence_encoder;
  SetEncoderConfig set_encoder;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

// gamma_e = lr0 * lr_decay^e
double lr_at_epoch(int epoch, const TrainConfig& config);

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct Checkpoint {
  DiffusionModel model;
  TrainConfig config;
  int epoch = 0;
  std::vector<EpochRecord> history;
};

// Fresh model for a configuration (random weights, no data statistics).
DiffusionModel init_model(const TrainConfig& config);

// Scale taking the RMS of the coordinate channels over `sketches` to `target_rms`.
double fit_velocity_scale(const std::vector<Sketch>& sketches, double target_rms = 1.0);

// Builds a padded model-space batch from clean sketches.
SketchBatch make_training_batch(const DiffusionModel& model, const std::vector<Sketch>& sketches);

// Noise-prediction objective on a tape: one (t, eps) draw per item, squared
// error averaged over each item's valid elements and 3 channels, then over
// the batch. Latent codes come from the clean items, or from `condition`
// when given (the same items at another sampling rate). Returns a (1, 1) node.
ad::Var loss_simple(ad::Tape& tape, const DiffusionModel& model, const SketchBatch& batch, Rng& rng,
                    const SketchBatch* condition = nullptr);
double loss_simple_value(const DiffusionModel& model, const SketchBatch& batch, Rng& rng);

// Optional estimator override for loss checks: receives the noisy batch and
// the true noise and returns predictions (B items of (L_max, 3)).
using EpsOracle = std::function<std::vector<Matrix>(const std::vector<Matrix>& vt, const std::vector<Matrix>& eps)>;
double loss_simple_with(const DiffusionModel& model, const SketchBatch& batch, Rng& rng, const EpsOracle& oracle);

// Parameters the optimiser updates for this model (estimator + encoder).
std::vector<ad::ParameterStore*> trainable_stores(DiffusionModel& model);

class AdamW {
 public:
  AdamW(double weight_decay, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<ad::ParameterStore*>& stores, double lr);

 private:
  double weight_decay_, beta1_, beta2_, eps_;
  long step_count_ = 0;
  std::vector<Matrix> m_, v_;
};

// Scales gradients in place so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_grad_norm(const std::vector<ad::ParameterStore*>& stores, double max_norm);

struct FitResult {
  Checkpoint final;
  Checkpoint best;  // lowest validation loss
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Thrown when the loss becomes non-finite; carries the last finite state.
class DivergenceError : public TrainingError {
 public:
  DivergenceError(const std::string& what, std::shared_ptr<Checkpoint> last_finite)
      : TrainingError(what), last_finite_(std::move(last_finite)) {}
  const std::shared_ptr<Checkpoint>& last_finite() const { return last_finite_; }

 private:
  std::shared_ptr<Checkpoint> last_finite_;
};

FitResult fit(const DatasetSplit& dataset, const TrainConfig& config, const EpochCallback& on_epoch = {});

// Rounds every weight to 32-bit float, the precision checkpoints store.
void round_to_storage_precision(DiffusionModel& model);

struct GradientCheckOptions {
  double step = 1e-4;
  double tolerance = 1e-3;      // max relative error per coordinate
  double pass_fraction = 0.99;  // share of probed coordinates within tolerance
  int max_per_parameter = 24;   // probed coordinates per parameter array
  double abs_floor = 1e-8;      // denominator floor for relative error
  std::uint64_t seed = 0;
};

struct GradientProbe {
  std::string parameter;
  Eigen::Index index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradientReport {
  std::vector<GradientProbe> probes;
  int passed = 0;
  double max_rel_error = 0.0;
  double pass_rate() const { return probes.empty() ? 0.0 : static_cast<double>(passed) / probes.size(); }
  bool ok = false;
  std::vector<GradientProbe> worst(std::size_t n) const;
};

// Analytic gradients of loss_simple against central finite differences.
// The (t, eps) draw is frozen by reseeding for every evaluation.
GradientReport check_gradients(DiffusionModel& model, const SketchBatch& batch, const GradientCheckOptions& options);

// Throws GradientCheckError naming the worst coordinates unless report.ok.
void require_gradients(const GradientReport& report);

}  // namespace strokediff
