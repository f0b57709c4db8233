#include "strokediff/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "strokediff/applications.hpp"
#include "strokediff/batch.hpp"
#include "strokediff/checkpoint.hpp"
#include "strokediff/errors.hpp"
#include "strokediff/training.hpp"

namespace strokediff {

using nlohmann::json;

std::uint64_t sketch_hash(const Sketch& sketch) {
  std::uint64_t h = fnv1a(nullptr, 0);
  for (const auto& p : sketch.points) {
    h = fnv1a(&p.x, sizeof p.x, h);
    h = fnv1a(&p.y, sizeof p.y, h);
    h = fnv1a(&p.pen, sizeof p.pen, h);
  }
  return h;
}

namespace {

// Indices sorted by content hash (ties by content, then index).
std::vector<std::size_t> content_order(const std::vector<Sketch>& items) {
  std::vector<std::uint64_t> hashes;
  for (const auto& s : items) hashes.push_back(sketch_hash(s));
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return hashes[a] < hashes[b]; });
  return order;
}

Matrix item_noise(const Sketch& s, int length, std::uint64_t seed) {
  Rng rng(seed ^ sketch_hash(s));
  return rng.normal(length, 3);
}

double sorted_mean(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  return values.empty() ? 0.0 : sum / static_cast<double>(values.size());
}

// Runs DDIM for items of one output length, in content order, and returns
// per-item CDs against the inputs.
std::vector<double> ddim_cds(const DiffusionModel& model, const std::vector<Sketch>& test, double factor,
                             bool conditional, int ddim_steps, std::uint64_t seed) {
  SampleOptions options;
  options.sampler = SamplerKind::kDdim;
  options.steps = std::min(ddim_steps, model.schedule.T);
  std::vector<double> cds;
  std::map<int, std::vector<std::size_t>> groups;
  for (auto i : content_order(test)) {
    validate_sketch(test[i]);
    groups[static_cast<int>(std::lround(factor * test[i].size()))].push_back(i);
  }
  Rng unused(0);
  for (const auto& [length, items] : groups) {
    std::vector<Matrix> start;
    Matrix z;
    if (conditional) z.resize(static_cast<Eigen::Index>(items.size()), model.latent_dim());
    for (std::size_t k = 0; k < items.size(); ++k) {
      start.push_back(item_noise(test[items[k]], length, seed));
      if (conditional) z.row(static_cast<Eigen::Index>(k)) = encode_sequence(model, to_velocities(test[items[k]]));
    }
    if (!conditional && model.latent_dim() > 0) z = Matrix::Zero(static_cast<Eigen::Index>(items.size()), model.latent_dim());
    const auto out = sample_from(model, std::move(start), options, z.size() ? &z : nullptr, unused);
    for (std::size_t k = 0; k < items.size(); ++k) {
      const Sketch& input = test[items[k]];
      const Sketch placed = recenter(out[k]);
      cds.push_back(chamfer_distance(to_point_set(recenter(input)), to_point_set(placed)));
    }
  }
  return cds;
}

}  // namespace

CdCurve cd_vs_rate_curve(const DiffusionModel& model, const std::vector<Sketch>& test,
                         const std::vector<double>& factors, int ddim_steps, std::uint64_t seed) {
  if (model.mode != ConditionMode::kSequence) throw ModeError("CD curves need a sequence-encoder checkpoint");
  if (test.empty()) throw MetricError("CD curve needs at least one test sketch");
  CdCurve curve;
  for (double f : factors) {
    if (!(f >= 1.0)) throw ConfigError("length factors must be >= 1");
    curve.factors.push_back(f);
    curve.mean_cd.push_back(sorted_mean(ddim_cds(model, test, f, true, ddim_steps, seed)));
  }
  return curve;
}

double unconditional_cd(const DiffusionModel& model, const std::vector<Sketch>& test, int ddim_steps,
                        std::uint64_t seed) {
  if (test.empty()) throw MetricError("need at least one test sketch");
  return sorted_mean(ddim_cds(model, test, 1.0, false, ddim_steps, seed));
}

// ---------------------------------------------------------------------------
// Toy classifier

ToyClassifier::ToyClassifier(const ClassifierConfig& config, int classes, double velocity_scale)
    : config_(config), classes_(classes), velocity_scale_(velocity_scale) {
  if (classes < 2) throw ConfigError("classifier needs at least two classes");
  encoder_ = SequenceEncoder(SequenceEncoderConfig{config.hidden, config.features}, config.seed);
  Rng rng(config.seed + 1);
  Linear::create(head_, "logits", config.features, classes, rng);
}

ad::Var ToyClassifier::logits(ad::Tape& tape, const std::vector<Sketch>& sketches, ad::Var* feats) const {
  std::vector<VelocitySequence> seqs;
  for (const auto& s : sketches) {
    VelocitySequence v = to_velocities(s);
    v.values.leftCols(2) *= velocity_scale_;
    seqs.push_back(std::move(v));
  }
  const SketchBatch batch = make_batch(seqs);
  const ad::Var f = ad::tanh(encoder_.forward(tape, batch.velocities, batch.mask));
  if (feats) *feats = f;
  return Linear{"logits"}.apply(tape, head_, f);
}

Matrix ToyClassifier::features(const std::vector<Sketch>& sketches) const {
  if (sketches.empty()) return Matrix(0, feature_dim());
  ad::Tape tape(false);
  ad::Var f;
  logits(tape, sketches, &f);
  return f.value();
}

std::vector<int> ToyClassifier::predict(const std::vector<Sketch>& sketches) const {
  std::vector<int> out;
  if (sketches.empty()) return out;
  ad::Tape tape(false);
  const Matrix l = logits(tape, sketches, nullptr).value();
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    Eigen::Index k;
    l.row(i).maxCoeff(&k);
    out.push_back(static_cast<int>(k));
  }
  return out;
}

double ToyClassifier::accuracy(const std::vector<Sketch>& sketches, const std::vector<int>& labels) const {
  if (sketches.size() != labels.size() || sketches.empty()) throw MetricError("accuracy needs matching labels");
  const auto pred = predict(sketches);
  int hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

ToyClassifier train_toy_classifier(const DatasetSplit& dataset, const ClassifierConfig& config) {
  if (!dataset.labeled() || dataset.class_names.size() < 2) throw HarnessError("classifier needs a labeled dataset with >= 2 classes");
  if (dataset.train.empty() || dataset.test.empty()) throw HarnessError("classifier needs train and test items");
  ToyClassifier clf(config, static_cast<int>(dataset.class_names.size()), fit_velocity_scale(dataset.train));
  std::vector<ad::ParameterStore*> stores{&clf.encoder_.params(), &clf.head_};
  AdamW opt(1e-4);
  Rng order_rng(config.seed ^ 0xc1a55ULL);
  std::vector<std::size_t> order(dataset.train.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng.engine());
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<Sketch> xs;
      std::vector<int> ys;
      for (std::size_t k = start; k < end; ++k) {
        xs.push_back(dataset.train[order[k]]);
        ys.push_back(dataset.train_labels[order[k]]);
      }
      for (auto* s : stores) s->zero_grad();
      ad::Tape tape;
      tape.backward(ad::cross_entropy(clf.logits(tape, xs, nullptr), ys));
      clip_grad_norm(stores, 1.0);
      opt.step(stores, config.lr);
    }
  }
  clf.test_accuracy_ = clf.accuracy(dataset.test, dataset.test_labels);
  if (clf.test_accuracy_ < config.min_accuracy) {
    throw HarnessError("toy classifier reached only " + std::to_string(clf.test_accuracy_) +
                       " test accuracy; metrics built on it would be meaningless");
  }
  return clf;
}

// ---------------------------------------------------------------------------
// Frechet distance

namespace {

void moments(const Matrix& x, RowVector& mean, Matrix& cov) {
  mean = x.colwise().mean();
  const Matrix c = x.rowwise() - mean;
  cov = (c.transpose() * c) / static_cast<double>(x.rows() - 1);
}

Matrix psd_sqrt(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

// tr((S1 S2)^(1/2)) via the symmetric form sqrt(S1) S2 sqrt(S1).
double trace_sqrt_product(const Matrix& s1, const Matrix& s2) {
  const Matrix r = psd_sqrt(s1);
  const Matrix inner = r * s2 * r;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (inner + inner.transpose()));
  return es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
}

}  // namespace

FrechetResult frechet_distance(const Matrix& a, const Matrix& b) {
  if (a.rows() < 32 || b.rows() < 32) throw MetricError("Frechet distance needs at least 32 items per side");
  if (a.cols() != b.cols()) throw MetricError("feature dimensions differ");
  RowVector m1, m2;
  Matrix s1, s2;
  moments(a, m1, s1);
  moments(b, m2, s2);
  FrechetResult r;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e1(s1, Eigen::EigenvaluesOnly), e2(s2, Eigen::EigenvaluesOnly);
  if (e1.eigenvalues().minCoeff() <= 1e-12 || e2.eigenvalues().minCoeff() <= 1e-12) {
    s1.diagonal().array() += 1e-6;
    s2.diagonal().array() += 1e-6;
    r.jittered = true;
  }
  const double d = (m1 - m2).squaredNorm() + s1.trace() + s2.trace() - 2.0 * trace_sqrt_product(s1, s2);
  r.distance = std::max(0.0, d);
  return r;
}

FrechetResult frechet_feature_distance(const std::vector<Sketch>& samples, const std::vector<Sketch>& reference,
                                       const ToyClassifier& classifier) {
  return frechet_distance(classifier.features(samples), classifier.features(reference));
}

double class_consistency(const DiffusionModel& model, const ToyClassifier& classifier,
                         const std::vector<Sketch>& conditions, const std::vector<int>& labels, int t_c,
                         int n_per_item, std::uint64_t seed) {
  if (conditions.size() != labels.size() || conditions.empty()) throw MetricError("need labeled conditions");
  if (n_per_item < 1) throw ConfigError("n_per_item must be >= 1");
  int hits = 0, total = 0;
  for (auto i : content_order(conditions)) {
    Rng rng(seed ^ sketch_hash(conditions[i]));
    const auto outs = implicit_condition(model, conditions[i], t_c, n_per_item, rng);
    for (int p : classifier.predict(outs)) {
      hits += p == labels[i];
      ++total;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

double abstraction_energy(const std::vector<Sketch>& sketches) {
  if (sketches.empty()) throw MetricError("abstraction energy needs at least one sketch");
  double total = 0.0;
  for (const auto& s : sketches) {
    const Matrix x = positions_matrix(s);
    if (x.rows() < 3) continue;
    const Matrix d2 = x.bottomRows(x.rows() - 2) - 2.0 * x.middleRows(1, x.rows() - 2) + x.topRows(x.rows() - 2);
    total += d2.rowwise().squaredNorm().mean();
  }
  return total / static_cast<double>(sketches.size());
}

std::vector<Sketch> random_walk_sketches(int count, int length, std::uint64_t seed) {
  if (length < 2) throw ConfigError("random walks need length >= 2");
  Rng rng(seed);
  std::vector<Sketch> out;
  for (int i = 0; i < count; ++i) {
    Sketch s;
    double x = 0.0, y = 0.0;
    for (int j = 0; j < length; ++j) {
      s.points.push_back({x, y, j + 1 == length ? kPenUp : kPenDown});
      x += rng.normal();
      y += rng.normal();
    }
    out.push_back(normalize_box(s, 1.0));
  }
  return out;
}

json MetricReport::to_json() const {
  json j = {{"metrics", metrics}, {"checkpoint", checkpoint}, {"seed", seed}, {"notes", notes}};
  if (!cd_curve.factors.empty()) {
    json rows = json::array();
    for (std::size_t i = 0; i < cd_curve.factors.size(); ++i) {
      rows.push_back({{"factor", cd_curve.factors[i]}, {"mean_cd", cd_curve.mean_cd[i]}});
    }
    j["cd_curve"] = rows;
  }
  return j;
}

std::string MetricReport::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "metric,value\n";
  for (const auto& [k, v] : metrics) os << k << ',' << v << '\n';
  if (!cd_curve.factors.empty()) {
    os << "\nfactor,mean_cd\n";
    for (std::size_t i = 0; i < cd_curve.factors.size(); ++i) os << cd_curve.factors[i] << ',' << cd_curve.mean_cd[i] << '\n';
  }
  return os.str();
}

}  // namespace strokediff
