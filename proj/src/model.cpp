#include "strokediff/model.hpp"

#include <cmath>

#include "strokediff/errors.hpp"

namespace strokediff {

ConditionMode parse_condition_mode(const std::string& name) {
  if (name == "none") return ConditionMode::kNone;
  if (name == "sequence-encoder" || name == "sequence") return ConditionMode::kSequence;
  if (name == "set-encoder" || name == "set") return ConditionMode::kSet;
  throw ConfigError("unknown conditioning mode '" + name + "'");
}

std::string to_string(ConditionMode mode) {
  switch (mode) {
    case ConditionMode::kNone: return "none";
    case ConditionMode::kSequence: return "sequence-encoder";
    case ConditionMode::kSet: return "set-encoder";
  }
  return "none";
}

SamplerKind parse_sampler(const std::string& name) {
  if (name == "ddpm") return SamplerKind::kDdpm;
  if (name == "ddim") return SamplerKind::kDdim;
  throw ConfigError("unknown sampler '" + name + "'");
}

std::string to_string(SamplerKind kind) { return kind == SamplerKind::kDdpm ? "ddpm" : "ddim"; }

Matrix to_model_space(const VelocitySequence& v, double velocity_scale) {
  Matrix out = v.values;
  out.leftCols(2) *= velocity_scale;
  return out;
}

Matrix from_model_space(const Matrix& values, double velocity_scale) {
  Matrix out = values;
  out.leftCols(2) /= velocity_scale;
  return out;
}

Matrix normalize_point_set(const Matrix& points) {
  Matrix out = points;
  if (points.rows() == 0) return out;
  out.rowwise() -= points.colwise().minCoeff();
  return out;
}

RowVector encode_sequence(const DiffusionModel& model, const VelocitySequence& v) {
  if (model.mode != ConditionMode::kSequence || !model.sequence_encoder) {
    throw ModeError("model has no sequence encoder");
  }
  if (v.size() < 2) throw ContractError("sequence encoder needs length >= 2");
  return model.sequence_encoder->encode({to_model_space(v, model.velocity_scale)}).row(0);
}

RowVector encode_set(const DiffusionModel& model, const PointSet& points) {
  if (model.mode != ConditionMode::kSet || !model.set_encoder) throw ModeError("model has no set encoder");
  if (points.size() < 2) throw ContractError("set encoder needs at least 2 points");
  return model.set_encoder->encode(normalize_point_set(points.points)).row(0);
}

RowVector encode_sketch(const DiffusionModel& model, const Sketch& sketch) {
  switch (model.mode) {
    case ConditionMode::kSequence:
      return encode_sequence(model, to_velocities(sketch));
    case ConditionMode::kSet: {
      const int densify = std::max<int>(model.set_encoder->config().densify, static_cast<int>(sketch.size()));
      return encode_set(model, to_point_set(sketch, densify));
    }
    case ConditionMode::kNone:
      break;
  }
  throw ModeError("unconditional model has no encoder");
}

std::vector<Matrix> reverse_chain(const DiffusionModel& model, std::vector<Matrix> state, const ChainOptions& options,
                                  const Matrix* z, Rng& rng, const StepHook& hook) {
  if (!model.estimator.initialized()) throw StateError("model has no trained weights");
  const NoiseSchedule& s = model.schedule;
  const int start = options.start_step < 0 ? s.T : options.start_step;
  if (start > s.T) throw ConfigError("start step exceeds T");
  if (start == 0 || state.empty()) return state;

  if (options.sampler == SamplerKind::kDdpm) {
    for (int t = start; t >= 1; --t) {
      const auto eps = model.estimator.predict(state, t, z);
      for (std::size_t b = 0; b < state.size(); ++b) {
        state[b] = ddpm_step(state[b], t, eps[b], s, rng, options.sigma_scale);
      }
      if (hook) hook(state, t - 1, rng);
    }
    return state;
  }

  const auto ts = ddim_timesteps(start, std::min(options.steps, start));
  for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
    const auto eps = model.estimator.predict(state, ts[k], z);
    for (std::size_t b = 0; b < state.size(); ++b) state[b] = ddim_step(state[b], ts[k], ts[k + 1], eps[b], s);
    if (hook) hook(state, ts[k + 1], rng);
  }
  return state;
}

Sketch decode_sequence(const DiffusionModel& model, const Matrix& v0, double origin_x, double origin_y) {
  for (Eigen::Index i = 0; i < v0.size(); ++i) {
    if (!std::isfinite(v0.data()[i])) throw DataError("reverse process produced a non-finite value");
  }
  return to_positions(from_model_space(v0, model.velocity_scale), origin_x, origin_y);
}

std::vector<Sketch> sample_from(const DiffusionModel& model, std::vector<Matrix> v_start,
                                const SampleOptions& options, const Matrix* z, Rng& rng) {
  if (!model.estimator.initialized()) throw StateError("model has no trained weights");
  if (options.sampler == SamplerKind::kDdpm && options.steps != model.schedule.T) {
    throw ConfigError("DDPM sampling runs all T steps");
  }
  ChainOptions chain;
  chain.sampler = options.sampler;
  chain.steps = options.steps;
  chain.sigma_scale = options.sigma_scale.value_or(model.schedule.sigma_scale);
  if (chain.sigma_scale < 0.0 || chain.sigma_scale > 1.0) throw ConfigError("sigma scale must lie in [0, 1]");
  const auto v0 = reverse_chain(model, std::move(v_start), chain, z, rng);
  std::vector<Sketch> out;
  out.reserve(v0.size());
  for (const auto& v : v0) out.push_back(recenter(decode_sequence(model, v, 0.0, 0.0)));
  return out;
}

std::vector<Sketch> sample(const DiffusionModel& model, int count, int length, const SampleOptions& options,
                           const Matrix* z, Rng& rng) {
  if (length < 2) throw ContractError("sample length must be >= 2");
  if (options.steps < 1 || options.steps > model.schedule.T) throw ConfigError("steps must lie in [1, T]");
  std::vector<Matrix> start;
  start.reserve(count);
  for (int i = 0; i < count; ++i) start.push_back(rng.normal(length, 3));
  return sample_from(model, std::move(start), options, z, rng);
}

}  // namespace strokediff
