#pragma once

#include <string>
#include <vector>

#include "strokediff/autodiff.hpp"
#include "strokediff/rng.hpp"

namespace strokediff {

// Sinusoidal embedding of a diffusion step: entry 2i is sin(t / 10000^(2i/dim)),
// entry 2i+1 the matching cosine. Throws ConfigError for odd `dim`.
RowVector time_embedding(int t, int dim);
Matrix time_embedding_rows(const std::vector<int>& steps, int dim);

// Uniform(-bound, bound) initialisation.
Matrix uniform_init(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng);

// Reads a parameter onto a tape: differentiable when the tape records,
// a plain constant otherwise.
ad::Var bind(ad::Tape& tape, const ad::Parameter& p);

struct Linear {
  std::string prefix;

  static Linear create(ad::ParameterStore& store, const std::string& prefix, int in, int out, Rng& rng,
                       double init_gain = 1.0);
  ad::Var apply(ad::Tape& tape, const ad::ParameterStore& store, ad::Var x) const;
};

// Parameters of one GRU direction, stored as <prefix>.w_x (in, 3H),
// <prefix>.b_x (1, 3H), <prefix>.w_h (H, 3H), <prefix>.b_h (1, 3H).
struct GruDirection {
  std::string prefix;
  int hidden = 0;

  static GruDirection create(ad::ParameterStore& store, const std::string& prefix, int in, int hidden, Rng& rng);
};

struct BiGruResult {
  std::vector<ad::Var> forward;   // per element, (B, H)
  std::vector<ad::Var> backward;  // per element, (B, H)
  ad::Var forward_final;          // state at each row's last valid element
  ad::Var backward_final;         // state after reading element 0
};

// Runs both directions over time-major inputs. step_masks[j] is (B, 1);
// masked rows hold their state, so padding never reaches valid outputs.
BiGruResult run_bigru(ad::Tape& tape, const ad::ParameterStore& store, const GruDirection& fwd,
                      const GruDirection& bwd, const std::vector<ad::Var>& inputs,
                      const std::vector<Matrix>& step_masks);

// Time-major views of a padded batch: element j becomes a (B, C) matrix.
std::vector<Matrix> time_major(const std::vector<Matrix>& batch_major);
std::vector<Matrix> time_major_masks(const Matrix& mask);

// Inclusive running sum of the first two channels: row j = sum_{j' <= j} v[j'].
Matrix cumulative_positions(const Matrix& velocities);

}  // namespace strokediff
