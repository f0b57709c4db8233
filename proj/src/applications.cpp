#include "strokediff/applications.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "strokediff/checkpoint.hpp"
#include "strokediff/errors.hpp"

namespace strokediff {

namespace {

void require_mode(const DiffusionModel& model, ConditionMode mode, const char* what) {
  if (model.mode != mode) {
    throw ModeError(std::string(what) + " needs a " + to_string(mode) + " checkpoint, got " + to_string(model.mode));
  }
}

Sketch translate(const Sketch& s, double dx, double dy) {
  Sketch out = s;
  for (auto& p : out.points) {
    p.x += dx;
    p.y += dy;
  }
  return out;
}

std::pair<double, double> box_min(const Sketch& s) {
  double x = s.points.front().x, y = s.points.front().y;
  for (const auto& p : s.points) {
    x = std::min(x, p.x);
    y = std::min(y, p.y);
  }
  return {x, y};
}

Matrix stack_rows(const std::vector<RowVector>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), rows.front().cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = rows[i];
  return out;
}

// Inclusive running sum and its inverse on the coordinate columns.
Matrix positions_from(const Matrix& v) { return cumulative_positions(v); }

Matrix velocities_from(const Matrix& x, const Matrix& pen_source) {
  Matrix v = pen_source;
  v(0, 0) = x(0, 0);
  v(0, 1) = x(0, 1);
  for (Eigen::Index j = 1; j < x.rows(); ++j) {
    v(j, 0) = x(j, 0) - x(j - 1, 0);
    v(j, 1) = x(j, 1) - x(j - 1, 1);
  }
  return v;
}

}  // namespace

std::vector<Sketch> reconstruct_many(const DiffusionModel& model, const std::vector<Sketch>& inputs,
                                     double length_factor, const SampleOptions& options, Rng& rng) {
  require_mode(model, ConditionMode::kSequence, "reconstruction");
  if (!(length_factor >= 1.0)) throw ConfigError("length factor must be >= 1");
  std::map<int, std::vector<std::size_t>> by_length;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    validate_sketch(inputs[i]);
    by_length[static_cast<int>(std::lround(length_factor * inputs[i].size()))].push_back(i);
  }
  std::vector<Sketch> out(inputs.size());
  for (const auto& [length, items] : by_length) {
    std::vector<RowVector> codes;
    std::vector<Matrix> start;
    for (auto i : items) {
      codes.push_back(encode_sequence(model, to_velocities(inputs[i])));
      start.push_back(rng.normal(length, 3));
    }
    const Matrix z = stack_rows(codes);
    const auto decoded = sample_from(model, std::move(start), options, &z, rng);
    for (std::size_t k = 0; k < items.size(); ++k) {
      const auto [x, y] = box_min(inputs[items[k]]);
      out[items[k]] = translate(decoded[k], x, y);
    }
  }
  return out;
}

Sketch reconstruct(const DiffusionModel& model, const Sketch& input, double length_factor,
                   const SampleOptions& options, Rng& rng) {
  return reconstruct_many(model, {input}, length_factor, options, rng).front();
}

int step_from_fraction(const NoiseSchedule& schedule, double fraction) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("step fraction must lie in [0, 1]");
  return static_cast<int>(std::lround(fraction * schedule.T));
}

std::vector<Sketch> implicit_condition(const DiffusionModel& model, const Sketch& condition, int t_c, int count,
                                       Rng& rng) {
  validate_sketch(condition);
  if (t_c < 0 || t_c > model.schedule.T) throw ConfigError("conditioning step must lie in [0, T]");
  if (count < 1) throw ConfigError("sample count must be >= 1");
  if (t_c == 0) return std::vector<Sketch>(count, condition);

  const VelocitySequence v = to_velocities(condition);
  const Matrix v0 = to_model_space(v, model.velocity_scale);
  std::vector<Matrix> start;
  for (int i = 0; i < count; ++i) start.push_back(forward_diffuse(v0, t_c, rng.normal(v0.rows(), 3), model.schedule));

  Matrix z;
  const Matrix* zp = nullptr;
  if (model.mode != ConditionMode::kNone) {
    z = encode_sketch(model, condition).replicate(count, 1);
    zp = &z;
  }
  ChainOptions chain;
  chain.sampler = SamplerKind::kDdpm;
  chain.sigma_scale = model.schedule.sigma_scale;
  chain.start_step = t_c;
  const auto out_v = reverse_chain(model, std::move(start), chain, zp, rng);
  // Anchor on the condition's centroid rather than its first point; a noisy
  // first point would otherwise translate the whole output.
  const Matrix p = positions_matrix(condition);
  const double cx = p.col(0).mean(), cy = p.col(1).mean();
  std::vector<Sketch> out;
  for (const auto& m : out_v) {
    Sketch s = decode_sequence(model, m, 0.0, 0.0);
    const Matrix q = positions_matrix(s);
    const double dx = cx - q.col(0).mean(), dy = cy - q.col(1).mean();
    for (auto& pt : s.points) {
      pt.x += dx;
      pt.y += dy;
    }
    out.push_back(std::move(s));
  }
  return out;
}

Sketch heal(const DiffusionModel& model, const Sketch& corrupted, int t_h, Rng& rng) {
  return implicit_condition(model, corrupted, t_h, 1, rng).front();
}

Sketch interpolate_latent(const DiffusionModel& model, const Sketch& first, const Sketch& second, double delta,
                          int steps, int length) {
  require_mode(model, ConditionMode::kSequence, "latent interpolation");
  if (!(delta >= 0.0 && delta <= 1.0)) throw ConfigError("delta must lie in [0, 1]");
  if (steps < 1 || steps > model.schedule.T) throw ConfigError("steps must lie in [1, T]");
  validate_sketch(first);
  validate_sketch(second);
  const RowVector z1 = encode_sequence(model, to_velocities(first));
  const RowVector z2 = encode_sequence(model, to_velocities(second));
  const Matrix z = (1.0 - delta) * z1 + delta * z2;
  if (length <= 0) length = static_cast<int>(std::max(first.size(), second.size()));
  ChainOptions chain;
  chain.sampler = SamplerKind::kDdim;
  chain.steps = steps;
  Rng unused(0);
  const auto v0 = reverse_chain(model, {Matrix::Zero(length, 3)}, chain, &z, unused);
  return recenter(decode_sequence(model, v0.front(), 0.0, 0.0));
}

Matrix temporal_lowpass(const Matrix& x, int omega) {
  if (omega < 1 || omega % 2 == 0) throw ConfigError("low-pass window must be a positive odd number");
  const Eigen::Index n = x.rows();
  const int half = omega / 2;
  Matrix out = Matrix::Zero(n, x.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int k = -half; k <= half; ++k) {
      const Eigen::Index j = std::clamp<Eigen::Index>(i + k, 0, n - 1);
      out.row(i) += x.row(j);
    }
  }
  return out / static_cast<double>(omega);
}

Matrix ilvr_correct(const Matrix& x, const Matrix& x_ref, int omega) {
  if (x.rows() != x_ref.rows()) throw ContractError("reference and proposal lengths differ");
  Matrix out = x;
  out.leftCols(2) = x.leftCols(2) - temporal_lowpass(x.leftCols(2), omega) + temporal_lowpass(x_ref.leftCols(2), omega);
  return out;
}

Sketch ilvr_mix(const DiffusionModel& model, const Sketch& base, const Sketch& reference, int omega, Rng& rng) {
  require_mode(model, ConditionMode::kSequence, "ILVR mixing");
  validate_sketch(base);
  validate_sketch(reference);
  if (omega < 1 || omega % 2 == 0) throw ConfigError("low-pass window must be a positive odd number");
  const int length = static_cast<int>(base.size());
  const Sketch ref = reference.size() == base.size() ? reference : resample(reference, length);
  const Matrix v_ref = to_model_space(to_velocities(recenter(ref)), model.velocity_scale);
  const Matrix z = encode_sequence(model, to_velocities(base));

  ChainOptions chain;
  chain.sampler = SamplerKind::kDdpm;
  chain.sigma_scale = model.schedule.sigma_scale;
  const NoiseSchedule& s = model.schedule;
  auto hook = [&](std::vector<Matrix>& batch, int t_prev, Rng& r) {
    const Matrix ref_t = t_prev == 0 ? v_ref : forward_diffuse(v_ref, t_prev, r.normal(length, 3), s);
    for (auto& v : batch) {
      const Matrix x = ilvr_correct(positions_from(v), positions_from(ref_t), omega);
      v = velocities_from(x, v);
    }
  };
  const auto out = reverse_chain(model, {rng.normal(length, 3)}, chain, &z, rng, hook);
  const auto [x, y] = box_min(base);
  return translate(recenter(decode_sequence(model, out.front(), 0.0, 0.0)), x, y);
}

std::vector<Sketch> abstract_sample(const DiffusionModel& model, double k, int count, int length, Rng& rng) {
  if (!(k >= 0.0 && k <= 1.0)) throw ConfigError("abstraction k must lie in [0, 1]");
  SampleOptions options;
  options.sampler = SamplerKind::kDdpm;
  options.steps = model.schedule.T;
  options.sigma_scale = k;
  Matrix z;
  const Matrix* zp = nullptr;
  if (model.latent_dim() > 0) {
    z = Matrix::Zero(count, model.latent_dim());
    zp = &z;
  }
  return sample(model, count, length, options, zp, rng);
}

std::vector<Sketch> vectorize(const DiffusionModel& model, const PointSet& points, int count, Rng& rng, int length) {
  require_mode(model, ConditionMode::kSet, "vectorization");
  if (count < 1) throw ConfigError("sample count must be >= 1");
  const Matrix z = encode_set(model, points).replicate(count, 1);
  SampleOptions options;
  options.sampler = SamplerKind::kDdpm;
  options.steps = model.schedule.T;
  const auto out = sample(model, count, length > 0 ? length : model.train_length, options, &z, rng);
  const RowVector lo = points.points.colwise().minCoeff();
  std::vector<Sketch> placed;
  for (const auto& s : out) placed.push_back(translate(s, lo(0), lo(1)));
  return placed;
}

std::vector<int> stroke_index(const Sketch& sketch) {
  std::vector<int> out;
  int stroke = 0;
  for (const auto& p : sketch.points) {
    out.push_back(stroke);
    if (p.pen == kPenUp) ++stroke;
  }
  return out;
}

std::uint64_t topology_hash(const Sketch& sketch, int grid) {
  if (sketch.points.empty()) return 0;
  const auto [x0, y0] = box_min(sketch);
  double x1 = x0, y1 = y0;
  for (const auto& p : sketch.points) {
    x1 = std::max(x1, p.x);
    y1 = std::max(y1, p.y);
  }
  const double side = std::max({x1 - x0, y1 - y0, 1e-12});
  auto cell = [&](const StrokePoint& p) {
    const int cx = std::min(grid - 1, static_cast<int>((p.x - x0) / side * grid));
    const int cy = std::min(grid - 1, static_cast<int>((p.y - y0) / side * grid));
    return cy * grid + cx;
  };
  std::vector<int> signature;
  for (const auto& stroke : split_strokes(sketch)) {
    signature.push_back(cell(stroke.front()));
    signature.push_back(cell(stroke.back()));
  }
  return fnv1a(signature.data(), signature.size() * sizeof(int));
}

}  // namespace strokediff
