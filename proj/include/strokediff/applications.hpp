#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "strokediff/model.hpp"

namespace strokediff {

// Length L' = round(length_factor * |V|) decode of E_V(V). The output is
// placed with its bounding box at the input's bounding-box corner.
Sketch reconstruct(const DiffusionModel& model, const Sketch& input, double length_factor,
                   const SampleOptions& options, Rng& rng);

// Batched form; items sharing an output length share one reverse chain.
std::vector<Sketch> reconstruct_many(const DiffusionModel& model, const std::vector<Sketch>& inputs,
                                     double length_factor, const SampleOptions& options, Rng& rng);

// Forward-noises the condition to step t_c and runs the DDPM chain down
// to 0, `count` times in one batch. Outputs are translated onto the
// condition's centroid. t_c = 0 returns copies of the condition. Conditional models are
// steered by the condition's own latent code.
std::vector<Sketch> implicit_condition(const DiffusionModel& model, const Sketch& condition, int t_c, int count,
                                       Rng& rng);

// implicit_condition with one output; the corrupted sketch is the condition.
Sketch heal(const DiffusionModel& model, const Sketch& corrupted, int t_h, Rng& rng);

// round(fraction * T), the step used by --tc-frac / --th-frac style options.
int step_from_fraction(const NoiseSchedule& schedule, double fraction);

// DDIM decode of z = (1 - delta) E_V(V1) + delta E_V(V2) from V_T = 0.
// length <= 0 selects max(|V1|, |V2|).
Sketch interpolate_latent(const DiffusionModel& model, const Sketch& first, const Sketch& second, double delta,
                          int steps, int length = 0);

// Moving average of width omega along rows, edges replicated.
Matrix temporal_lowpass(const Matrix& x, int omega);

// X - lowpass(X) + lowpass(X_ref) on the coordinate columns.
Matrix ilvr_correct(const Matrix& x, const Matrix& x_ref, int omega);

// Low-frequency substitution during conditional DDPM sampling: after every
// reverse step the proposal's positions keep their high band and take the
// low band of the reference, forward-noised to the same step with fresh
// noise. The reference is resampled to |base| points; pen bits come from
// the proposal.
Sketch ilvr_mix(const DiffusionModel& model, const Sketch& base, const Sketch& reference, int omega, Rng& rng);

// Unconditional DDPM samples with reverse variance k * beta_tilde.
std::vector<Sketch> abstract_sample(const DiffusionModel& model, double k, int count, int length, Rng& rng);

// DDPM samples conditioned on a point set's latent code; outputs are
// placed at the set's bounding-box corner. length <= 0 uses the model's
// training length.
std::vector<Sketch> vectorize(const DiffusionModel& model, const PointSet& points, int count, Rng& rng,
                              int length = 0);

// Drawing-order signature: per stroke, the coarse grid cells of its first
// and last point. Sketches tracing the same shape in another order or
// direction hash differently.
std::uint64_t topology_hash(const Sketch& sketch, int grid = 3);

// Index of each point's stroke, for colouring by drawing order.
std::vector<int> stroke_index(const Sketch& sketch);

}  // namespace strokediff
