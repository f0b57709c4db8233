#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "strokediff/errors.hpp"
#include "strokediff/layers.hpp"
#include "strokediff/networks.hpp"
#include "strokediff/training.hpp"

using namespace strokediff;

namespace {

// Central-difference gradient of a scalar function of one matrix input.
template <class F>
Matrix numeric_grad(Matrix x, F f, double h = 1e-6) {
  Matrix g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = x.data()[i];
    x.data()[i] = orig + h;
    const double up = f(x);
    x.data()[i] = orig - h;
    const double down = f(x);
    x.data()[i] = orig;
    g.data()[i] = (up - down) / (2 * h);
  }
  return g;
}

// Random offsets with a well-formed pen column (one stroke).
Matrix stroke_velocities(Rng& rng, int n) {
  Matrix v = rng.normal(n, 3);
  v.col(2).setConstant(-1.0);
  v(n - 1, 2) = 1.0;
  return v;
}

double sum_weighted(const Matrix& y, const Matrix& w) { return (y.array() * w.array()).sum(); }

template <class Build>
void check_op(const Matrix& x0, Build build, double tol = 1e-6) {
  ad::ParameterStore store;
  auto& p = store.add("x", x0);
  Matrix w;
  {
    ad::Tape probe(false);
    const Matrix y = build(probe.constant(x0)).value();
    w = Rng(99).normal(y.rows(), y.cols());
  }
  ad::Tape tape;
  const ad::Var y = build(tape.param(p));
  const ad::Var loss = ad::matmul(ad::matmul(tape.constant(Matrix::Ones(1, y.rows())), ad::mul(y, tape.constant(w))),
                                  tape.constant(Matrix::Ones(y.cols(), 1)));
  tape.backward(loss);
  const Matrix num = numeric_grad(x0, [&](const Matrix& x) {
    ad::Tape t(false);
    return sum_weighted(build(t.constant(x)).value(), w);
  });
  CHECK((p.grad - num).cwiseAbs().maxCoeff() <= tol * std::max(1.0, num.cwiseAbs().maxCoeff()));
}

}  // namespace

TEST_CASE("tape ops match finite differences") {
  Rng rng(1);
  const Matrix a = rng.normal(3, 4);
  const Matrix b = rng.normal(4, 2);
  const Matrix c = rng.normal(3, 4);
  check_op(a, [&](ad::Var x) { return ad::matmul(x, x.tape->constant(b)); });
  check_op(b, [&](ad::Var x) { return ad::matmul(x.tape->constant(a), x); });
  check_op(a, [&](ad::Var x) { return ad::mul(x, x); });
  check_op(a, [&](ad::Var x) { return ad::sub(ad::add(x, x.tape->constant(c)), ad::scale(x, 0.3)); });
  check_op(a, [&](ad::Var x) { return ad::sigmoid(x); });
  check_op(a, [&](ad::Var x) { return ad::tanh(x); });
  check_op(a, [&](ad::Var x) { return ad::relu(ad::add(x, x.tape->constant(Matrix::Constant(3, 4, 0.05)))); });
  check_op(a, [&](ad::Var x) { return ad::transpose(x); });
  check_op(a, [&](ad::Var x) { return ad::softmax_rows(x); });
  check_op(a, [&](ad::Var x) { return ad::max_rows(x); });
  check_op(a, [&](ad::Var x) { return ad::slice_cols(x, 1, 2); });
  check_op(a, [&](ad::Var x) { return ad::concat_cols({x, ad::scale(x, 2.0)}); });
  check_op(a, [&](ad::Var x) { return ad::concat_rows({x, ad::tanh(x)}); });
  const Matrix row = rng.normal(1, 4);
  check_op(row, [&](ad::Var r) { return ad::add_row(r.tape->constant(a), r); });
}

TEST_CASE("gru cell gradients and masked hold") {
  Rng rng(2);
  const int B = 3, H = 4;
  const Matrix gx = rng.normal(B, 3 * H);
  const Matrix h = rng.normal(B, H);
  const Matrix wh = rng.normal(H, 3 * H) * 0.5;
  const Matrix bh = rng.normal(1, 3 * H);
  Matrix mask(B, 1);
  mask << 1, 0, 1;
  auto cell = [&](ad::Tape& t, ad::Var gxv, ad::Var hv, ad::Var whv) {
    return ad::gru_cell(gxv, hv, whv, t.constant(bh), mask);
  };
  check_op(gx, [&](ad::Var x) { return cell(*x.tape, x, x.tape->constant(h), x.tape->constant(wh)); });
  check_op(h, [&](ad::Var x) { return cell(*x.tape, x.tape->constant(gx), x, x.tape->constant(wh)); });
  check_op(wh, [&](ad::Var x) { return cell(*x.tape, x.tape->constant(gx), x.tape->constant(h), x); });

  ad::Tape t(false);
  const Matrix out = cell(t, t.constant(gx), t.constant(h), t.constant(wh)).value();
  CHECK(out.row(1) == h.row(1));
  CHECK(out.row(0) != h.row(0));
}

TEST_CASE("cross entropy gradient") {
  Rng rng(4);
  const Matrix logits = rng.normal(5, 3);
  const std::vector<int> labels{0, 2, 1, 1, 0};
  ad::ParameterStore store;
  auto& p = store.add("l", logits);
  ad::Tape tape;
  tape.backward(ad::cross_entropy(tape.param(p), labels));
  const Matrix num = numeric_grad(logits, [&](const Matrix& x) {
    ad::Tape t(false);
    return ad::cross_entropy(t.constant(x), labels).value()(0, 0);
  });
  CHECK((p.grad - num).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("time embedding") {
  const RowVector e = time_embedding(7, 16);
  CHECK(e.size() == 16);
  CHECK(e(0) == doctest::Approx(std::sin(7.0)));
  CHECK(e(1) == doctest::Approx(std::cos(7.0)));
  CHECK(e.cwiseAbs().maxCoeff() <= 1.0);
  CHECK_THROWS_AS(time_embedding(3, 15), ConfigError);

  Matrix all(1000, 32);
  for (int t = 1; t <= 1000; ++t) all.row(t - 1) = time_embedding(t, 32);
  double min_gap = 1e9;
  for (int i = 0; i < 1000; ++i) {
    for (int j = i + 1; j < 1000; ++j) min_gap = std::min(min_gap, (all.row(i) - all.row(j)).norm());
  }
  CHECK(min_gap > 0.0);
}

TEST_CASE("estimator output shape and determinism") {
  NoiseEstimator est(EstimatorConfig{2, 16, 8, 0}, 5);
  Rng rng(6);
  for (int L : {2, 16, 301}) {
    const Matrix v = rng.normal(L, 3);
    const auto a = est.predict({v}, 10, nullptr);
    const auto b = est.predict({v}, 10, nullptr);
    CHECK(a[0].rows() == L);
    CHECK(a[0].cols() == 3);
    CHECK(a[0] == b[0]);
    CHECK(a[0].allFinite());
  }
  const Matrix z = Matrix::Zero(1, 4);
  CHECK_THROWS_AS(est.predict({rng.normal(4, 3)}, 3, &z), ConfigError);
  NoiseEstimator cond(EstimatorConfig{1, 8, 4, 4}, 1);
  CHECK_THROWS_AS(cond.predict({rng.normal(4, 3)}, 3, nullptr), ConfigError);
  CHECK_NOTHROW(cond.predict({rng.normal(4, 3)}, 3, &z));
  NoiseEstimator empty;
  CHECK_THROWS_AS(empty.predict({rng.normal(4, 3)}, 3, nullptr), StateError);
}

TEST_CASE("estimator is non-causal and order-sensitive") {
  NoiseEstimator est(EstimatorConfig{2, 16, 8, 0}, 7);
  // A larger head makes the sensitivity visible on a fresh model.
  est.params().at("head.w").value *= 100.0;
  Rng rng(8);
  const Matrix v = rng.normal(12, 3);
  const Matrix base = est.predict({v}, 20, nullptr)[0];
  const int j = 6;
  Matrix bumped = v;
  bumped(j, 0) += 1e-3;
  const Matrix out = est.predict({bumped}, 20, nullptr)[0];
  CHECK((out.topRows(j) - base.topRows(j)).cwiseAbs().maxCoeff() > 1e-9);
  CHECK((out.bottomRows(12 - j - 1) - base.bottomRows(12 - j - 1)).cwiseAbs().maxCoeff() > 1e-9);

  const Matrix reversed = v.colwise().reverse();
  const Matrix rout = est.predict({reversed}, 20, nullptr)[0];
  CHECK((rout.colwise().reverse() - base).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("padding never reaches valid outputs") {
  NoiseEstimator est(EstimatorConfig{2, 8, 4, 0}, 9);
  Rng rng(10);
  std::vector<Matrix> vt{rng.normal(6, 3), rng.normal(6, 3)};
  Matrix mask = Matrix::Ones(2, 6);
  mask.block(0, 4, 1, 2).setZero();
  auto run = [&](const std::vector<Matrix>& in) {
    ad::Tape t(false);
    const auto out = est.forward(t, in, {3, 7}, mask, std::nullopt);
    Matrix first(4, 3);
    for (int j = 0; j < 4; ++j) first.row(j) = out[j].value().row(0);
    return first;
  };
  const Matrix a = run(vt);
  vt[0].bottomRows(2) = rng.normal(2, 3) * 50.0;
  CHECK(run(vt) == a);
  // Same as running the item alone at its true length.
  const Matrix alone = est.predict({vt[0].topRows(4)}, 3, nullptr)[0];
  CHECK((alone - a).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("sequence encoder") {
  SequenceEncoder enc(SequenceEncoderConfig{12, 6}, 3);
  Rng rng(11);
  const Matrix v = rng.normal(9, 3);
  const Matrix z = enc.encode({v});
  CHECK(z.cols() == 6);
  CHECK(enc.encode({v}) == z);
  CHECK((enc.encode({Matrix(v.colwise().reverse())}) - z).norm() > 1e-6);
  CHECK_THROWS_AS(enc.encode({rng.normal(1, 3)}), ContractError);
}

TEST_CASE("set encoder is permutation invariant") {
  SetEncoder enc(SetEncoderConfig{16, 4, 2, 8, 32}, 4);
  Rng rng(12);
  const Matrix p = rng.normal(20, 2);
  const Matrix z = enc.encode(p);
  CHECK(z.cols() == 8);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::PermutationMatrix<Eigen::Dynamic> perm(20);
    perm.setIdentity();
    std::shuffle(perm.indices().data(), perm.indices().data() + 20, rng.engine());
    CHECK(enc.encode(perm * p) == z);
  }
}

TEST_CASE("max pooling ignores a duplicated point") {
  // Without attention blocks each point's features depend only on itself,
  // so a duplicate adds no new per-channel maximum.
  SetEncoder enc(SetEncoderConfig{16, 4, 0, 8, 32}, 5);
  Rng rng(13);
  const Matrix p = rng.normal(10, 2);
  Matrix dup(11, 2);
  dup << p, p.row(3);
  CHECK((enc.encode(dup) - enc.encode(p)).cwiseAbs().maxCoeff() < 1e-6);
  // With attention, the pooled feature vector is still unchanged whenever
  // the duplicate's features are dominated by existing maxima.
  const Matrix f = enc.point_features(p);
  CHECK(f.rows() == 10);
}

TEST_CASE("gradient check passes on a small random model") {
  TrainConfig c;
  c.T = 20;
  c.seed = 21;
  c.estimator = EstimatorConfig{2, 8, 4, 0};
  DiffusionModel m = init_model(c);
  m.estimator.params().at("head.w").value *= 50.0;
  Rng rng(14);
  const SketchBatch batch = make_batch(std::vector<Matrix>{rng.normal(6, 3), rng.normal(8, 3)});
  GradientCheckOptions o;
  o.seed = 3;
  const auto report = check_gradients(m, batch, o);
  CHECK(report.ok);
  CHECK(report.pass_rate() >= 0.99);
  CHECK_NOTHROW(require_gradients(report));
}

TEST_CASE("gradient check on conditional models") {
  for (auto mode : {ConditionMode::kSequence, ConditionMode::kSet}) {
    TrainConfig c;
    c.T = 20;
    c.seed = 22;
    c.mode = mode;
    c.estimator = EstimatorConfig{1, 8, 4, 4};
    c.sequence_encoder = SequenceEncoderConfig{6, 4};
    c.set_encoder = SetEncoderConfig{8, 2, 1, 4, 8};
    DiffusionModel m = init_model(c);
    m.estimator.params().at("head.w").value *= 50.0;
    Rng rng(15);
    const SketchBatch batch = make_batch(std::vector<Matrix>{stroke_velocities(rng, 5), stroke_velocities(rng, 7)});
    GradientCheckOptions o;
    o.seed = 4;
    CHECK(check_gradients(m, batch, o).ok);
  }
}

TEST_CASE("zero output head") {
  TrainConfig c;
  c.T = 20;
  c.estimator = EstimatorConfig{1, 8, 4, 0};
  DiffusionModel m = init_model(c);
  m.estimator.params().at("head.w").value.setZero();
  Rng rng(16);
  const SketchBatch batch = make_batch(std::vector<Matrix>{rng.normal(6, 3)});
  GradientCheckOptions o;
  const auto report = check_gradients(m, batch, o);
  bool saw_bias = false;
  for (const auto& p : report.probes) {
    if (p.parameter == "head.b") {
      saw_bias = true;
      CHECK(p.rel_error < 1e-3);
      CHECK(std::abs(p.analytic) > 1e-6);
    } else if (p.parameter.rfind("gru", 0) == 0) {
      // The recurrent stack cannot influence a zero head.
      CHECK(p.analytic == 0.0);
      CHECK(std::abs(p.numeric) < 1e-9);
    }
  }
  CHECK(saw_bias);
}

TEST_CASE("frozen parameters receive no gradient") {
  TrainConfig c;
  c.T = 20;
  c.estimator = EstimatorConfig{1, 8, 4, 0};
  DiffusionModel m = init_model(c);
  auto& head = m.estimator.params().at("head.w");
  head.value.setZero();
  auto& frozen = m.estimator.params().at("gru0.fwd.w_x");
  frozen.frozen = true;
  Rng rng(17);
  const SketchBatch batch = make_batch(std::vector<Matrix>{rng.normal(6, 3)});
  const auto report = check_gradients(m, batch, GradientCheckOptions{});
  for (const auto& p : report.probes) {
    if (p.parameter == "gru0.fwd.w_x") {
      CHECK(p.analytic == 0.0);
      CHECK(std::abs(p.numeric) < 1e-9);
    }
  }
  CHECK(frozen.grad.isZero(0.0));
}
