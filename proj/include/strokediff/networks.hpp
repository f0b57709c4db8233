#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "strokediff/autodiff.hpp"
#include "strokediff/layers.hpp"

namespace strokediff {

struct EstimatorConfig {
  int layers = 2;
  int hidden = 48;
  int time_dim = 16;
  int latent_dim = 0;  // 0 = unconditional

  void validate() const;
};

nlohmann::json to_json(const EstimatorConfig& c);
EstimatorConfig estimator_config_from_json(const nlohmann::json& j);

// Noise estimator: a stacked bidirectional GRU over [v, x, time embedding, z]
// per element, where x is the running sum of v, followed by a per-element
// linear head to three channels. The time embedding and z are concatenated
// to the input of every recurrent layer.
class NoiseEstimator {
 public:
  NoiseEstimator() = default;
  NoiseEstimator(const EstimatorConfig& config, std::uint64_t seed);

  bool initialized() const { return initialized_; }
  const EstimatorConfig& config() const { return config_; }
  bool conditional() const { return config_.latent_dim > 0; }

  ad::ParameterStore& params() { return params_; }
  const ad::ParameterStore& params() const { return params_; }

  // Differentiable pass over a padded batch. vt[b] is (L_max, 3); steps[b]
  // is the diffusion step of item b; mask is (B, L_max). Returns L_max
  // time-major (B, 3) predictions.
  std::vector<ad::Var> forward(ad::Tape& tape, const std::vector<Matrix>& vt, const std::vector<int>& steps,
                               const Matrix& mask, std::optional<ad::Var> z) const;

  // Inference over equal-length sequences at a shared step. z is (B, latent)
  // or nullptr. Returns one (L, 3) estimate per item.
  std::vector<Matrix> predict(const std::vector<Matrix>& vt, int t, const Matrix* z) const;

 private:
  void require_ready() const;

  EstimatorConfig config_;
  ad::ParameterStore params_;
  bool initialized_ = false;
};

struct SequenceEncoderConfig {
  int hidden = 64;
  int latent_dim = 64;
};

// Bidirectional GRU over [v, x]; the two final states are concatenated and
// projected to the latent code.
class SequenceEncoder {
 public:
  SequenceEncoder() = default;
  SequenceEncoder(const SequenceEncoderConfig& config, std::uint64_t seed);

  const SequenceEncoderConfig& config() const { return config_; }
  ad::ParameterStore& params() { return params_; }
  const ad::ParameterStore& params() const { return params_; }

  ad::Var forward(ad::Tape& tape, const std::vector<Matrix>& v0, const Matrix& mask) const;
  Matrix encode(const std::vector<Matrix>& v0) const;  // equal lengths; (B, latent)

 private:
  SequenceEncoderConfig config_;
  ad::ParameterStore params_;
};

struct SetEncoderConfig {
  int hidden = 128;
  int heads = 4;
  int blocks = 2;
  int latent_dim = 64;
  int densify = 64;  // point-set size used when deriving sets from sketches
};

// Set encoder: pointwise embedding, self-attention blocks with residual
// feed-forward layers, coordinate-wise max pooling, linear projection.
// Input rows are sorted lexicographically first, so any permutation of the
// same multiset yields bit-identical codes.
class SetEncoder {
 public:
  SetEncoder() = default;
  SetEncoder(const SetEncoderConfig& config, std::uint64_t seed);

  const SetEncoderConfig& config() const { return config_; }
  ad::ParameterStore& params() { return params_; }
  const ad::ParameterStore& params() const { return params_; }

  ad::Var forward(ad::Tape& tape, const Matrix& points) const;  // (1, latent)
  Matrix encode(const Matrix& points) const;

  // Per-point features right before pooling (for inspection and tests).
  Matrix point_features(const Matrix& points) const;

 private:
  ad::Var features(ad::Tape& tape, const Matrix& points) const;

  SetEncoderConfig config_;
  ad::ParameterStore params_;
};

Matrix canonical_point_order(const Matrix& points);

nlohmann::json to_json(const SequenceEncoderConfig& c);
nlohmann::json to_json(const SetEncoderConfig& c);
SequenceEncoderConfig sequence_encoder_config_from_json(const nlohmann::json& j);
SetEncoderConfig set_encoder_config_from_json(const nlohmann::json& j);

}  // namespace strokediff
