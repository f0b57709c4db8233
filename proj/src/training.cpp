#include "strokediff/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <sstream>

#include "strokediff/errors.hpp"

namespace strokediff {

using nlohmann::json;

void TrainConfig::validate() const {
  if (!(lr0 > 0.0)) throw ConfigError("lr0 must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("lr decay must lie in (0, 1]");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (weight_decay < 0.0) throw ConfigError("weight decay must be >= 0");
  if (val_repeats < 1) throw ConfigError("val_repeats must be >= 1");
  if (!(rate_min > 0.0 && rate_min <= rate_max)) throw ConfigError("rate range must satisfy 0 < rate_min <= rate_max");
  estimator.validate();
  const bool needs_latent = mode != ConditionMode::kNone;
  if (needs_latent != (estimator.latent_dim > 0)) {
    throw ConfigError("estimator latent_dim must be > 0 exactly when a conditioning mode is set");
  }
  if (mode == ConditionMode::kSequence && sequence_encoder.latent_dim != estimator.latent_dim) {
    throw ConfigError("sequence encoder and estimator latent sizes differ");
  }
  if (mode == ConditionMode::kSet && set_encoder.latent_dim != estimator.latent_dim) {
    throw ConfigError("set encoder and estimator latent sizes differ");
  }
}

json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr0", c.lr0},
          {"lr_decay", c.lr_decay},
          {"weight_decay", c.weight_decay},
          {"grad_clip", c.grad_clip},
          {"seed", c.seed},
          {"mode", to_string(c.mode)},
          {"T", c.T},
          {"sigma_scale", c.sigma_scale},
          {"velocity_rms", c.velocity_rms},
          {"val_repeats", c.val_repeats},
          {"rate_min", c.rate_min},
          {"rate_max", c.rate_max},
          {"estimator", to_json(c.estimator)},
          {"sequence_encoder", to_json(c.sequence_encoder)},
          {"set_encoder", to_json(c.set_encoder)}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr0 = j.value("lr0", c.lr0);
  c.lr_decay = j.value("lr_decay", c.lr_decay);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  c.seed = j.value("seed", c.seed);
  if (j.contains("mode")) c.mode = parse_condition_mode(j.at("mode").get<std::string>());
  c.T = j.value("T", c.T);
  c.sigma_scale = j.value("sigma_scale", c.sigma_scale);
  c.velocity_rms = j.value("velocity_rms", c.velocity_rms);
  c.val_repeats = j.value("val_repeats", c.val_repeats);
  c.rate_min = j.value("rate_min", c.rate_min);
  c.rate_max = j.value("rate_max", c.rate_max);
  if (j.contains("estimator")) c.estimator = estimator_config_from_json(j.at("estimator"));
  if (j.contains("sequence_encoder")) c.sequence_encoder = sequence_encoder_config_from_json(j.at("sequence_encoder"));
  if (j.contains("set_encoder")) c.set_encoder = set_encoder_config_from_json(j.at("set_encoder"));
  return c;
}

double lr_at_epoch(int epoch, const TrainConfig& config) {
  if (epoch < 0) throw ConfigError("epoch must be >= 0");
  return config.lr0 * std::pow(config.lr_decay, epoch);
}

DiffusionModel init_model(const TrainConfig& config) {
  config.validate();
  DiffusionModel m;
  m.mode = config.mode;
  m.schedule = build_linear_schedule(config.T, config.sigma_scale);
  m.estimator = NoiseEstimator(config.estimator, config.seed);
  if (config.mode == ConditionMode::kSequence) m.sequence_encoder = SequenceEncoder(config.sequence_encoder, config.seed + 1);
  if (config.mode == ConditionMode::kSet) m.set_encoder = SetEncoder(config.set_encoder, config.seed + 1);
  return m;
}

double fit_velocity_scale(const std::vector<Sketch>& sketches, double target_rms) {
  double sum_sq = 0.0;
  double count = 0.0;
  for (const auto& s : sketches) {
    const auto v = to_velocities(s);
    sum_sq += v.values.leftCols(2).squaredNorm();
    count += 2.0 * static_cast<double>(v.values.rows());
  }
  if (count == 0.0 || sum_sq == 0.0) throw TrainingError("cannot fit a velocity scale to static data");
  return target_rms / std::sqrt(sum_sq / count);
}

SketchBatch make_training_batch(const DiffusionModel& model, const std::vector<Sketch>& sketches) {
  std::vector<Matrix> values;
  values.reserve(sketches.size());
  for (const auto& s : sketches) values.push_back(to_model_space(to_velocities(s), model.velocity_scale));
  return make_batch(values);
}

std::vector<ad::ParameterStore*> trainable_stores(DiffusionModel& model) {
  std::vector<ad::ParameterStore*> stores{&model.estimator.params()};
  if (model.sequence_encoder) stores.push_back(&model.sequence_encoder->params());
  if (model.set_encoder) stores.push_back(&model.set_encoder->params());
  return stores;
}

namespace {

struct NoisyBatch {
  std::vector<int> steps;
  std::vector<Matrix> eps;
  std::vector<Matrix> vt;
};

NoisyBatch draw_noisy(const DiffusionModel& model, const SketchBatch& batch, Rng& rng) {
  NoisyBatch nb;
  const int B = batch.batch_size();
  for (int b = 0; b < B; ++b) nb.steps.push_back(rng.uniform_int(1, model.schedule.T));
  for (int b = 0; b < B; ++b) {
    nb.eps.push_back(rng.normal(batch.max_length(), 3));
    nb.vt.push_back(forward_diffuse(batch.velocities[b], nb.steps[b], nb.eps[b], model.schedule));
  }
  return nb;
}

// Per element j, (B, 1) weights mask / (3 * L_b * B).
std::vector<Matrix> element_weights(const SketchBatch& batch) {
  const int B = batch.batch_size();
  std::vector<Matrix> w(batch.max_length(), Matrix::Zero(B, 1));
  for (int j = 0; j < batch.max_length(); ++j) {
    for (int b = 0; b < B; ++b) {
      if (batch.mask(b, j) != 0.0) w[j](b, 0) = 1.0 / (3.0 * batch.lengths[b] * B);
    }
  }
  return w;
}

Matrix point_set_from_model_velocities(const DiffusionModel& model, const Matrix& v) {
  const Sketch s = to_positions(from_model_space(v, model.velocity_scale), 0.0, 0.0);
  const int densify = std::max<int>(model.set_encoder->config().densify, static_cast<int>(s.size()));
  return normalize_point_set(to_point_set(s, densify).points);
}

std::optional<ad::Var> latent_codes(ad::Tape& tape, const DiffusionModel& model, const SketchBatch& batch) {
  switch (model.mode) {
    case ConditionMode::kNone:
      return std::nullopt;
    case ConditionMode::kSequence:
      return model.sequence_encoder->forward(tape, batch.velocities, batch.mask);
    case ConditionMode::kSet: {
      std::vector<ad::Var> rows;
      for (int b = 0; b < batch.batch_size(); ++b) {
        const Matrix valid = batch.velocities[b].topRows(batch.lengths[b]);
        rows.push_back(model.set_encoder->forward(tape, point_set_from_model_velocities(model, valid)));
      }
      return ad::concat_rows(rows);
    }
  }
  return std::nullopt;
}

}  // namespace

ad::Var loss_simple(ad::Tape& tape, const DiffusionModel& model, const SketchBatch& batch, Rng& rng,
                    const SketchBatch* condition) {
  if (condition && condition->batch_size() != batch.batch_size()) {
    throw ContractError("condition batch size differs from the target batch");
  }
  const NoisyBatch nb = draw_noisy(model, batch, rng);
  const auto z = latent_codes(tape, model, condition ? *condition : batch);
  const auto pred = model.estimator.forward(tape, nb.vt, nb.steps, batch.mask, z);
  return ad::weighted_sse(pred, time_major(nb.eps), element_weights(batch));
}

double loss_simple_value(const DiffusionModel& model, const SketchBatch& batch, Rng& rng) {
  ad::Tape tape(false);
  return loss_simple(tape, model, batch, rng).value()(0, 0);
}

double loss_simple_with(const DiffusionModel& model, const SketchBatch& batch, Rng& rng, const EpsOracle& oracle) {
  const NoisyBatch nb = draw_noisy(model, batch, rng);
  const auto pred = oracle(nb.vt, nb.eps);
  const auto w = element_weights(batch);
  double total = 0.0;
  for (int b = 0; b < batch.batch_size(); ++b) {
    for (int j = 0; j < batch.max_length(); ++j) {
      if (w[j](b, 0) == 0.0) continue;
      total += w[j](b, 0) * (pred[b].row(j) - nb.eps[b].row(j)).squaredNorm();
    }
  }
  return total;
}

void AdamW::step(const std::vector<ad::ParameterStore*>& stores, double lr) {
  if (m_.empty()) {
    for (auto* s : stores) {
      for (const auto& p : s->items()) {
        m_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
        v_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
      }
    }
  }
  ++step_count_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
  std::size_t k = 0;
  for (auto* s : stores) {
    for (auto& p : s->items()) {
      Matrix& m = m_[k];
      Matrix& v = v_[k];
      ++k;
      if (p.frozen) continue;
      p.value *= 1.0 - lr * weight_decay_;
      m = beta1_ * m + (1.0 - beta1_) * p.grad;
      v = beta2_ * v + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
      p.value.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps_);
    }
  }
}

double clip_grad_norm(const std::vector<ad::ParameterStore*>& stores, double max_norm) {
  double sq = 0.0;
  for (auto* s : stores) {
    for (const auto& p : s->items()) sq += p.grad.squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (auto* s : stores) {
      for (auto& p : s->items()) p.grad *= f;
    }
  }
  return norm;
}

void round_to_storage_precision(DiffusionModel& model) {
  for (auto* s : trainable_stores(model)) {
    for (auto& p : s->items()) p.value = p.value.cast<float>().cast<double>();
  }
}

namespace {

// Never below two points per stroke, which resample() requires.
Sketch resample_at_rate(const Sketch& sketch, const TrainConfig& config, Rng& rng) {
  const double u = config.rate_min + (config.rate_max - config.rate_min) * rng.uniform();
  const int floor = 2 * static_cast<int>(split_strokes(sketch).size());
  const int n = std::max(floor, static_cast<int>(std::lround(u * static_cast<double>(sketch.size()))));
  return resample(sketch, n);
}

int typical_length(const std::vector<Sketch>& sketches) {
  std::vector<int> lengths;
  for (const auto& s : sketches) lengths.push_back(static_cast<int>(s.size()));
  std::nth_element(lengths.begin(), lengths.begin() + lengths.size() / 2, lengths.end());
  return lengths[lengths.size() / 2];
}

double validation_loss(const DiffusionModel& model, const std::vector<Sketch>& items, const TrainConfig& config) {
  if (items.empty()) return std::nan("");
  Rng rng(config.seed ^ 0x5eedf00dULL);
  double total = 0.0;
  double weight = 0.0;
  for (int r = 0; r < config.val_repeats; ++r) {
    for (std::size_t start = 0; start < items.size(); start += config.batch_size) {
      const std::size_t end = std::min(items.size(), start + config.batch_size);
      const std::vector<Sketch> chunk(items.begin() + start, items.begin() + end);
      const double n = static_cast<double>(chunk.size());
      total += n * loss_simple_value(model, make_training_batch(model, chunk), rng);
      weight += n;
    }
  }
  return total / weight;
}

Checkpoint snapshot(const DiffusionModel& model, const TrainConfig& config, int epoch,
                    const std::vector<EpochRecord>& history) {
  Checkpoint c{model, config, epoch, history};
  round_to_storage_precision(c.model);
  return c;
}

}  // namespace

FitResult fit(const DatasetSplit& dataset, const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (dataset.train.empty()) throw TrainingError("training split is empty");
  DiffusionModel model = init_model(config);
  model.velocity_scale = config.velocity_rms > 0.0 ? fit_velocity_scale(dataset.train, config.velocity_rms) : 1.0;
  model.train_length = typical_length(dataset.train);

  const auto stores = trainable_stores(model);
  AdamW optimizer(config.weight_decay);
  Rng order_rng(config.seed ^ 0x0dd5eedULL);
  Rng noise_rng(config.seed + 0x9e3779b97f4a7c15ULL);
  Rng rate_rng(config.seed ^ 0x7a7e5eedULL);
  const bool augment = config.rate_min != 1.0 || config.rate_max != 1.0;

  std::vector<EpochRecord> history;
  FitResult result;
  result.final = snapshot(model, config, 0, history);
  result.best = result.final;
  double best_val = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(dataset.train.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_at_epoch(epoch, config);
    std::shuffle(order.begin(), order.end(), order_rng.engine());
    double epoch_loss = 0.0;
    double seen = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<Sketch> chunk;
      std::vector<Sketch> originals;
      for (std::size_t k = start; k < end; ++k) {
        const Sketch& s = dataset.train[order[k]];
        chunk.push_back(augment ? resample_at_rate(s, config, rate_rng) : s);
        originals.push_back(s);
      }
      const SketchBatch batch = make_training_batch(model, chunk);
      // Under augmentation the encoder sees the sketch at its own rate, so the
      // latent code cannot carry the rate of the sequence being denoised.
      std::optional<SketchBatch> condition;
      if (augment && model.mode != ConditionMode::kNone) condition = make_training_batch(model, originals);

      for (auto* s : stores) s->zero_grad();
      ad::Tape tape;
      const ad::Var loss = loss_simple(tape, model, batch, noise_rng, condition ? &*condition : nullptr);
      const double value = loss.value()(0, 0);
      if (!std::isfinite(value)) {
        auto last = std::make_shared<Checkpoint>(snapshot(model, config, epoch, history));
        throw DivergenceError("training loss became non-finite at epoch " + std::to_string(epoch), last);
      }
      tape.backward(loss);
      clip_grad_norm(stores, config.grad_clip);
      optimizer.step(stores, lr);
      epoch_loss += value * chunk.size();
      seen += static_cast<double>(chunk.size());
    }
    EpochRecord rec{epoch, lr, epoch_loss / seen, validation_loss(model, dataset.validation, config)};
    history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    const double score = std::isnan(rec.val_loss) ? rec.train_loss : rec.val_loss;
    if (score < best_val) {
      best_val = score;
      result.best = snapshot(model, config, epoch + 1, history);
    }
  }
  result.final = snapshot(model, config, config.epochs, history);
  result.best.history = history;
  return result;
}

std::vector<GradientProbe> GradientReport::worst(std::size_t n) const {
  std::vector<GradientProbe> sorted = probes;
  std::sort(sorted.begin(), sorted.end(),
            [](const GradientProbe& a, const GradientProbe& b) { return a.rel_error > b.rel_error; });
  if (sorted.size() > n) sorted.resize(n);
  return sorted;
}

GradientReport check_gradients(DiffusionModel& model, const SketchBatch& batch, const GradientCheckOptions& options) {
  const auto stores = trainable_stores(model);
  for (auto* s : stores) s->zero_grad();
  {
    ad::Tape tape;
    Rng rng(options.seed);
    tape.backward(loss_simple(tape, model, batch, rng));
  }
  auto eval = [&] {
    Rng rng(options.seed);
    return loss_simple_value(model, batch, rng);
  };

  GradientReport report;
  Rng pick(options.seed + 17);
  for (auto* s : stores) {
    for (auto& p : s->items()) {
      const Eigen::Index n = p.value.size();
      std::vector<Eigen::Index> idx(n);
      std::iota(idx.begin(), idx.end(), 0);
      if (n > options.max_per_parameter) {
        std::shuffle(idx.begin(), idx.end(), pick.engine());
        idx.resize(options.max_per_parameter);
      }
      for (const Eigen::Index i : idx) {
        double& w = p.value.data()[i];
        const double orig = w;
        w = orig + options.step;
        const double up = eval();
        w = orig - options.step;
        const double down = eval();
        w = orig;
        GradientProbe probe;
        probe.parameter = p.name;
        probe.index = i;
        probe.analytic = p.grad.data()[i];
        probe.numeric = (up - down) / (2.0 * options.step);
        const double denom = std::max({std::abs(probe.analytic), std::abs(probe.numeric), options.abs_floor});
        probe.rel_error = std::abs(probe.analytic - probe.numeric) / denom;
        if (probe.rel_error < options.tolerance) ++report.passed;
        report.max_rel_error = std::max(report.max_rel_error, probe.rel_error);
        report.probes.push_back(probe);
      }
    }
  }
  report.ok = !report.probes.empty() && report.pass_rate() >= options.pass_fraction;
  return report;
}

void require_gradients(const GradientReport& report) {
  if (report.ok) return;
  std::ostringstream msg;
  msg << "gradient check failed: " << report.passed << "/" << report.probes.size() << " within tolerance; worst:";
  for (const auto& p : report.worst(5)) {
    msg << " " << p.parameter << "[" << p.index << "] analytic=" << p.analytic << " numeric=" << p.numeric;
  }
  throw GradientCheckError(msg.str());
}

}  // namespace strokediff
