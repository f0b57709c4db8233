#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "strokediff/diffusion.hpp"
#include "strokediff/networks.hpp"
#include "strokediff/sketch.hpp"

namespace strokediff {

enum class ConditionMode { kNone, kSequence, kSet };

ConditionMode parse_condition_mode(const std::string& name);
std::string to_string(ConditionMode mode);

// Everything needed to run the reverse process: schedule, noise estimator,
// the optional encoder and the data normalisation.
struct DiffusionModel {
  ConditionMode mode = ConditionMode::kNone;
  NoiseSchedule schedule;
  NoiseEstimator estimator;
  std::optional<SequenceEncoder> sequence_encoder;
  std::optional<SetEncoder> set_encoder;
  // Coordinate channels are multiplied by this before diffusion and divided
  // after sampling. The pen channel is never scaled.
  double velocity_scale = 1.0;
  int train_length = 32;

  int latent_dim() const { return estimator.config().latent_dim; }
};

// Velocities in the space the estimator sees.
Matrix to_model_space(const VelocitySequence& v, double velocity_scale);
Matrix from_model_space(const Matrix& values, double velocity_scale);

// Point sets are translated so their bounding box starts at the origin.
Matrix normalize_point_set(const Matrix& points);

// Latent code of a clean sequence (sequence-encoder models).
RowVector encode_sequence(const DiffusionModel& model, const VelocitySequence& v);
// Latent code of a point set (set-encoder models). Throws ContractError below 2 points.
RowVector encode_set(const DiffusionModel& model, const PointSet& points);
// Whichever encoder the model has, applied to a sketch.
RowVector encode_sketch(const DiffusionModel& model, const Sketch& sketch);

enum class SamplerKind { kDdpm, kDdim };
SamplerKind parse_sampler(const std::string& name);
std::string to_string(SamplerKind kind);

// Called after every reverse step with the batch at step `t_prev`; may edit it.
using StepHook = std::function<void(std::vector<Matrix>& batch, int t_prev, Rng& rng)>;

struct ChainOptions {
  SamplerKind sampler = SamplerKind::kDdim;
  int steps = 50;            // DDIM visits; ignored by DDPM, which takes every step
  double sigma_scale = 0.8;  // DDPM reverse variance multiplier
  int start_step = -1;       // -1 = schedule.T
};

// Runs the reverse process on a batch of equal-length model-space
// sequences starting at `start_step`. z is (B, latent) or nullptr.
std::vector<Matrix> reverse_chain(const DiffusionModel& model, std::vector<Matrix> start, const ChainOptions& options,
                                  const Matrix* z, Rng& rng, const StepHook& hook = {});

// Model-space V_0 back to an absolute sketch: pen quantized, coordinates
// unscaled and integrated from `origin`.
Sketch decode_sequence(const DiffusionModel& model, const Matrix& v0, double origin_x, double origin_y);

struct SampleOptions {
  SamplerKind sampler = SamplerKind::kDdim;
  int steps = 50;
  std::optional<double> sigma_scale;  // defaults to the schedule's
};

// Draws V_T ~ N(0, I) of the given length per item, runs the chain and
// returns re-centred sketches (bounding box at the origin).
std::vector<Sketch> sample(const DiffusionModel& model, int count, int length, const SampleOptions& options,
                           const Matrix* z, Rng& rng);

// Same, from caller-provided V_T states.
std::vector<Sketch> sample_from(const DiffusionModel& model, std::vector<Matrix> v_start,
                                const SampleOptions& options, const Matrix* z, Rng& rng);

}  // namespace strokediff
