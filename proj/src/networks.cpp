#include "strokediff/networks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "strokediff/errors.hpp"
#include "strokediff/rng.hpp"

namespace strokediff {

using nlohmann::json;

namespace {

// Keeps the initial noise estimate close to zero.
constexpr double kHeadInitGain = 1e-2;

std::string layer_prefix(int l, const char* dir) { return "gru" + std::to_string(l) + "." + dir; }

}  // namespace

void EstimatorConfig::validate() const {
  if (layers < 1) throw ConfigError("estimator needs at least one layer");
  if (hidden < 8) throw ConfigError("estimator hidden size must be >= 8");
  if (time_dim <= 0 || time_dim % 2 != 0) throw ConfigError("time embedding dimension must be positive and even");
  if (latent_dim < 0) throw ConfigError("latent dimension must be >= 0");
}

json to_json(const EstimatorConfig& c) {
  return {{"layers", c.layers}, {"hidden", c.hidden}, {"time_dim", c.time_dim}, {"latent_dim", c.latent_dim},
          {"bidirectional", true}};
}

EstimatorConfig estimator_config_from_json(const json& j) {
  EstimatorConfig c;
  c.layers = j.value("layers", c.layers);
  c.hidden = j.value("hidden", c.hidden);
  c.time_dim = j.value("time_dim", c.time_dim);
  c.latent_dim = j.value("latent_dim", c.latent_dim);
  c.validate();
  return c;
}

json to_json(const SequenceEncoderConfig& c) { return {{"hidden", c.hidden}, {"latent_dim", c.latent_dim}}; }

json to_json(const SetEncoderConfig& c) {
  return {{"hidden", c.hidden}, {"heads", c.heads}, {"blocks", c.blocks}, {"latent_dim", c.latent_dim},
          {"densify", c.densify}};
}

SequenceEncoderConfig sequence_encoder_config_from_json(const json& j) {
  SequenceEncoderConfig c;
  c.hidden = j.value("hidden", c.hidden);
  c.latent_dim = j.value("latent_dim", c.latent_dim);
  return c;
}

SetEncoderConfig set_encoder_config_from_json(const json& j) {
  SetEncoderConfig c;
  c.hidden = j.value("hidden", c.hidden);
  c.heads = j.value("heads", c.heads);
  c.blocks = j.value("blocks", c.blocks);
  c.latent_dim = j.value("latent_dim", c.latent_dim);
  c.densify = j.value("densify", c.densify);
  return c;
}

// ---------------------------------------------------------------------------
// NoiseEstimator

NoiseEstimator::NoiseEstimator(const EstimatorConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const int extra = config_.time_dim + config_.latent_dim;
  for (int l = 0; l < config_.layers; ++l) {
    const int in = (l == 0 ? 5 : 2 * config_.hidden) + extra;
    GruDirection::create(params_, layer_prefix(l, "fwd"), in, config_.hidden, rng);
    GruDirection::create(params_, layer_prefix(l, "bwd"), in, config_.hidden, rng);
  }
  Linear::create(params_, "head", 2 * config_.hidden, 3, rng, kHeadInitGain);
  initialized_ = true;
}

void NoiseEstimator::require_ready() const {
  if (!initialized_) throw StateError("noise estimator has no weights");
}

std::vector<ad::Var> NoiseEstimator::forward(ad::Tape& tape, const std::vector<Matrix>& vt,
                                             const std::vector<int>& steps, const Matrix& mask,
                                             std::optional<ad::Var> z) const {
  require_ready();
  if (vt.empty()) throw ContractError("empty batch");
  const auto B = static_cast<Eigen::Index>(vt.size());
  const Eigen::Index L = vt[0].rows();
  if (static_cast<Eigen::Index>(steps.size()) != B || mask.rows() != B || mask.cols() != L) {
    throw ContractError("estimator batch, steps and mask disagree");
  }
  if (z.has_value() != conditional()) {
    throw ConfigError(conditional() ? "conditional estimator needs a latent code"
                                    : "latent code given to an unconditional estimator");
  }
  if (z && (z->rows() != B || z->cols() != config_.latent_dim)) {
    throw ContractError("latent code has the wrong shape");
  }

  std::vector<Matrix> positions;
  positions.reserve(B);
  for (const auto& v : vt) {
    if (v.rows() != L || v.cols() != 3) throw ContractError("estimator inputs must be (L, 3)");
    positions.push_back(cumulative_positions(v));
  }
  const auto v_steps = time_major(vt);
  const auto x_steps = time_major(positions);
  const auto masks = time_major_masks(mask);
  const Matrix temb = time_embedding_rows(steps, config_.time_dim);
  const ad::Var temb_var = tape.constant(temb);

  std::vector<ad::Var> inputs(L);
  for (Eigen::Index j = 0; j < L; ++j) {
    Matrix base(B, 5 + config_.time_dim);
    base << v_steps[j], x_steps[j], temb;
    const ad::Var c = tape.constant(std::move(base));
    inputs[j] = z ? ad::concat_cols({c, *z}) : c;
  }

  std::vector<ad::Var> hidden(L);
  for (int l = 0; l < config_.layers; ++l) {
    const auto res = run_bigru(tape, params_, GruDirection{layer_prefix(l, "fwd"), config_.hidden},
                               GruDirection{layer_prefix(l, "bwd"), config_.hidden}, inputs, masks);
    for (Eigen::Index j = 0; j < L; ++j) {
      hidden[j] = ad::concat_cols({res.forward[j], res.backward[j]});
      if (l + 1 < config_.layers) {
        inputs[j] = z ? ad::concat_cols({hidden[j], temb_var, *z}) : ad::concat_cols({hidden[j], temb_var});
      }
    }
  }

  const Linear head{"head"};
  std::vector<ad::Var> out(L);
  for (Eigen::Index j = 0; j < L; ++j) out[j] = head.apply(tape, params_, hidden[j]);
  return out;
}

std::vector<Matrix> NoiseEstimator::predict(const std::vector<Matrix>& vt, int t, const Matrix* z) const {
  require_ready();
  if (vt.empty()) return {};
  ad::Tape tape(false);
  const auto B = static_cast<Eigen::Index>(vt.size());
  const Eigen::Index L = vt[0].rows();
  std::optional<ad::Var> zv;
  if (z != nullptr) zv = tape.constant(*z);
  const auto out = forward(tape, vt, std::vector<int>(B, t), Matrix::Ones(B, L), zv);
  std::vector<Matrix> result(B, Matrix(L, 3));
  for (Eigen::Index j = 0; j < L; ++j) {
    const Matrix& o = out[j].value();
    for (Eigen::Index b = 0; b < B; ++b) result[b].row(j) = o.row(b);
  }
  return result;
}

// ---------------------------------------------------------------------------
// SequenceEncoder

SequenceEncoder::SequenceEncoder(const SequenceEncoderConfig& config, std::uint64_t seed) : config_(config) {
  if (config_.hidden < 1 || config_.latent_dim < 1) throw ConfigError("bad sequence encoder size");
  Rng rng(seed);
  GruDirection::create(params_, "gru.fwd", 5, config_.hidden, rng);
  GruDirection::create(params_, "gru.bwd", 5, config_.hidden, rng);
  Linear::create(params_, "proj", 2 * config_.hidden, config_.latent_dim, rng);
}

ad::Var SequenceEncoder::forward(ad::Tape& tape, const std::vector<Matrix>& v0, const Matrix& mask) const {
  if (params_.size() == 0) throw StateError("sequence encoder has no weights");
  if (v0.empty()) throw ContractError("empty batch");
  const auto B = static_cast<Eigen::Index>(v0.size());
  const Eigen::Index L = v0[0].rows();
  if (mask.rows() != B || mask.cols() != L) throw ContractError("encoder mask has the wrong shape");
  for (Eigen::Index b = 0; b < B; ++b) {
    if (mask.row(b).sum() < 2.0) throw ContractError("sequence encoder needs length >= 2");
  }
  std::vector<Matrix> positions;
  for (const auto& v : v0) positions.push_back(cumulative_positions(v));
  const auto v_steps = time_major(v0);
  const auto x_steps = time_major(positions);
  std::vector<ad::Var> inputs(L);
  for (Eigen::Index j = 0; j < L; ++j) {
    Matrix base(B, 5);
    base << v_steps[j], x_steps[j];
    inputs[j] = tape.constant(std::move(base));
  }
  const auto res = run_bigru(tape, params_, GruDirection{"gru.fwd", config_.hidden},
                             GruDirection{"gru.bwd", config_.hidden}, inputs, time_major_masks(mask));
  return Linear{"proj"}.apply(tape, params_, ad::concat_cols({res.forward_final, res.backward_final}));
}

Matrix SequenceEncoder::encode(const std::vector<Matrix>& v0) const {
  if (v0.empty()) return Matrix(0, config_.latent_dim);
  ad::Tape tape(false);
  return forward(tape, v0, Matrix::Ones(static_cast<Eigen::Index>(v0.size()), v0[0].rows())).value();
}

// ---------------------------------------------------------------------------
// SetEncoder

Matrix canonical_point_order(const Matrix& points) {
  std::vector<Eigen::Index> order(points.rows());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (points(a, 0) != points(b, 0)) return points(a, 0) < points(b, 0);
    return points(a, 1) < points(b, 1);
  });
  Matrix out(points.rows(), points.cols());
  for (Eigen::Index i = 0; i < points.rows(); ++i) out.row(i) = points.row(order[i]);
  return out;
}

SetEncoder::SetEncoder(const SetEncoderConfig& config, std::uint64_t seed) : config_(config) {
  if (config_.hidden < 1 || config_.latent_dim < 1 || config_.heads < 1 || config_.blocks < 0) {
    throw ConfigError("bad set encoder size");
  }
  if (config_.hidden % config_.heads != 0) throw ConfigError("set encoder hidden size must divide into heads");
  Rng rng(seed);
  Linear::create(params_, "embed", 2, config_.hidden, rng);
  for (int k = 0; k < config_.blocks; ++k) {
    const std::string p = "block" + std::to_string(k);
    for (const char* name : {".q", ".k", ".v"}) Linear::create(params_, p + name, config_.hidden, config_.hidden, rng);
    Linear::create(params_, p + ".o", config_.hidden, config_.hidden, rng, 0.5);
    Linear::create(params_, p + ".ff1", config_.hidden, config_.hidden, rng);
    Linear::create(params_, p + ".ff2", config_.hidden, config_.hidden, rng, 0.5);
  }
  Linear::create(params_, "proj", config_.hidden, config_.latent_dim, rng);
}

ad::Var SetEncoder::features(ad::Tape& tape, const Matrix& points) const {
  if (params_.size() == 0) throw StateError("set encoder has no weights");
  if (points.rows() < 1 || points.cols() != 2) throw ContractError("set encoder needs a non-empty (N, 2) set");
  ad::Var x = ad::relu(Linear{"embed"}.apply(tape, params_, tape.constant(canonical_point_order(points))));
  const int heads = config_.heads;
  const int dh = config_.hidden / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int k = 0; k < config_.blocks; ++k) {
    const std::string p = "block" + std::to_string(k);
    const ad::Var q = Linear{p + ".q"}.apply(tape, params_, x);
    const ad::Var kk = Linear{p + ".k"}.apply(tape, params_, x);
    const ad::Var v = Linear{p + ".v"}.apply(tape, params_, x);
    std::vector<ad::Var> head_out;
    for (int h = 0; h < heads; ++h) {
      const ad::Var qh = ad::slice_cols(q, h * dh, dh);
      const ad::Var kh = ad::slice_cols(kk, h * dh, dh);
      const ad::Var vh = ad::slice_cols(v, h * dh, dh);
      const ad::Var attn = ad::softmax_rows(ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt));
      head_out.push_back(ad::matmul(attn, vh));
    }
    x = ad::add(x, Linear{p + ".o"}.apply(tape, params_, ad::concat_cols(head_out)));
    const ad::Var ff = Linear{p + ".ff2"}.apply(tape, params_, ad::relu(Linear{p + ".ff1"}.apply(tape, params_, x)));
    x = ad::add(x, ff);
  }
  return x;
}

ad::Var SetEncoder::forward(ad::Tape& tape, const Matrix& points) const {
  return Linear{"proj"}.apply(tape, params_, ad::max_rows(features(tape, points)));
}

Matrix SetEncoder::encode(const Matrix& points) const {
  ad::Tape tape(false);
  return forward(tape, points).value();
}

Matrix SetEncoder::point_features(const Matrix& points) const {
  ad::Tape tape(false);
  return features(tape, points).value();
}

}  // namespace strokediff
