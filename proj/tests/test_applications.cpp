#include <cmath>
#include <set>

#include "doctest.h"
#include "strokediff/applications.hpp"
#include "strokediff/errors.hpp"
#include "strokediff/training.hpp"

using namespace strokediff;

namespace {

DiffusionModel tiny_model(ConditionMode mode, std::uint64_t seed = 1) {
  TrainConfig c;
  c.T = 20;
  c.seed = seed;
  c.mode = mode;
  c.estimator = EstimatorConfig{1, 8, 4, mode == ConditionMode::kNone ? 0 : 4};
  c.sequence_encoder = SequenceEncoderConfig{6, 4};
  c.set_encoder = SetEncoderConfig{8, 2, 1, 4, 16};
  DiffusionModel m = init_model(c);
  m.velocity_scale = 10.0;
  m.train_length = 12;
  return m;
}

Sketch square() {
  Sketch s;
  s.points = {{0, 0, kPenDown}, {1, 0, kPenDown}, {1, 1, kPenDown}, {0, 1, kPenDown}, {0, 0.5, kPenUp},
              {0.2, 0.2, kPenDown}, {0.8, 0.8, kPenUp}};
  return s;
}

}  // namespace

TEST_CASE("temporal low-pass filter") {
  Matrix c = Matrix::Constant(9, 2, 3.5);
  CHECK(temporal_lowpass(c, 5).isApprox(c, 1e-15));
  Rng rng(1);
  const Matrix x = rng.normal(11, 2);
  CHECK(temporal_lowpass(x, 1) == x);
  CHECK_THROWS_AS(temporal_lowpass(x, 4), ConfigError);
  CHECK_THROWS_AS(temporal_lowpass(x, 0), ConfigError);

  Matrix impulse = Matrix::Zero(15, 1);
  impulse(7, 0) = 1.0;
  const Matrix y = temporal_lowpass(impulse, 7);
  for (int i = 0; i < 15; ++i) CHECK(y(i, 0) == (std::abs(i - 7) <= 3 ? 1.0 / 7.0 : 0.0));

  // Translation commutes with the filter.
  Matrix shifted = x;
  shifted.col(0).array() += 2.0;
  Matrix expected = temporal_lowpass(x, 3);
  expected.col(0).array() += 2.0;
  CHECK(temporal_lowpass(shifted, 3).isApprox(expected, 1e-14));
}

TEST_CASE("temporal low-pass equals direct convolution with replicated edges") {
  Rng rng(2);
  for (int omega : {1, 3, 5, 7, 9}) {
    const Matrix x = rng.normal(13, 2);
    const Matrix y = temporal_lowpass(x, omega);
    for (int i = 0; i < 13; ++i) {
      for (int c = 0; c < 2; ++c) {
        double acc = 0.0;
        for (int k = -omega / 2; k <= omega / 2; ++k) acc += x(std::clamp(i + k, 0, 12), c);
        CHECK(y(i, c) == acc / omega);
      }
    }
  }
}

TEST_CASE("ilvr correction vanishes when the reference equals the proposal") {
  Rng rng(3);
  const Matrix x = rng.normal(10, 3);
  CHECK((ilvr_correct(x, x, 7) - x).cwiseAbs().maxCoeff() <= 1e-12);
  const Matrix ref = rng.normal(10, 3);
  const Matrix out = ilvr_correct(x, ref, 3);
  CHECK(out.col(2) == x.col(2));
  CHECK(temporal_lowpass(out.leftCols(2), 3).isApprox(temporal_lowpass(x.leftCols(2), 3) -
                                                        temporal_lowpass(temporal_lowpass(x.leftCols(2), 3), 3) +
                                                        temporal_lowpass(temporal_lowpass(ref.leftCols(2), 3), 3),
                                                    1e-12));
}

TEST_CASE("implicit conditioning at step zero is the identity") {
  const auto m = tiny_model(ConditionMode::kNone);
  Rng rng(4);
  const Sketch s = square();
  const auto out = implicit_condition(m, s, 0, 3, rng);
  REQUIRE(out.size() == 3);
  for (const auto& o : out) CHECK(o == s);
  CHECK(heal(m, s, 0, rng) == s);
  CHECK_THROWS_AS(implicit_condition(m, s, 21, 1, rng), ConfigError);
  CHECK_THROWS_AS(implicit_condition(m, s, -1, 1, rng), ConfigError);
}

TEST_CASE("implicit conditioning keeps length and the condition's centroid") {
  const auto m = tiny_model(ConditionMode::kNone);
  Rng rng(5);
  Sketch s = square();
  for (auto& p : s.points) p.x += 4.0;
  const auto out = implicit_condition(m, s, 10, 2, rng);
  for (const auto& o : out) {
    CHECK(o.size() == s.size());
    const Matrix p = positions_matrix(o), q = positions_matrix(s);
    CHECK(p.col(0).mean() == doctest::Approx(q.col(0).mean()));
    CHECK(p.col(1).mean() == doctest::Approx(q.col(1).mean()));
  }
  Rng a(6), b(6);
  CHECK(implicit_condition(m, s, 20, 1, a) == implicit_condition(m, s, 20, 1, b));
}

TEST_CASE("step fractions") {
  const auto s = build_linear_schedule(1000);
  CHECK(step_from_fraction(s, 0.2) == 200);
  CHECK(step_from_fraction(s, 0.0) == 0);
  CHECK(step_from_fraction(s, 1.0) == 1000);
  CHECK_THROWS_AS(step_from_fraction(s, 1.2), ConfigError);
}

TEST_CASE("reconstruction contracts") {
  const auto m = tiny_model(ConditionMode::kSequence);
  const Sketch s = square();
  SampleOptions o;
  o.steps = 10;
  Rng rng(7);
  CHECK(reconstruct(m, s, 2.0, o, rng).size() == 2 * s.size());
  Rng a(8), b(8);
  CHECK(reconstruct(m, s, 1.0, o, a) == reconstruct(m, s, 1.0, o, b));
  CHECK_THROWS_AS(reconstruct(m, s, 0.5, o, rng), ConfigError);
  CHECK_THROWS_AS(reconstruct(tiny_model(ConditionMode::kNone), s, 1.0, o, rng), ModeError);
  CHECK_THROWS_AS(reconstruct(tiny_model(ConditionMode::kSet), s, 1.0, o, rng), ModeError);
}

TEST_CASE("latent interpolation endpoints") {
  const auto m = tiny_model(ConditionMode::kSequence);
  Sketch other = square();
  for (auto& p : other.points) p.y *= 0.3;
  const Sketch a = interpolate_latent(m, square(), other, 0.0, 10);
  const Sketch b = interpolate_latent(m, square(), other, 1.0, 10);
  // Single-code decodes from V_T = 0.
  auto decode = [&](const Sketch& s) {
    const Matrix z = encode_sequence(m, to_velocities(s));
    ChainOptions chain;
    chain.steps = 10;
    Rng unused(0);
    const auto v0 = reverse_chain(m, {Matrix::Zero(7, 3)}, chain, &z, unused);
    return recenter(decode_sequence(m, v0.front(), 0.0, 0.0));
  };
  CHECK(a == decode(square()));
  CHECK(b == decode(other));
  CHECK(interpolate_latent(m, square(), other, 0.5, 10) == interpolate_latent(m, square(), other, 0.5, 10));
  CHECK_THROWS_AS(interpolate_latent(m, square(), other, 1.5, 10), ConfigError);
  CHECK_THROWS_AS(interpolate_latent(tiny_model(ConditionMode::kNone), square(), other, 0.5, 10), ModeError);
}

TEST_CASE("ilvr mixing contracts") {
  const auto m = tiny_model(ConditionMode::kSequence);
  Sketch ref = resample(square(), 15);
  Rng rng(9);
  const Sketch out = ilvr_mix(m, square(), ref, 3, rng);
  CHECK(out.size() == square().size());
  Rng a(10), b(10);
  CHECK(ilvr_mix(m, square(), ref, 3, a) == ilvr_mix(m, square(), ref, 3, b));
  CHECK_THROWS_AS(ilvr_mix(m, square(), ref, 4, rng), ConfigError);
  CHECK_THROWS_AS(ilvr_mix(tiny_model(ConditionMode::kNone), square(), ref, 3, rng), ModeError);
}

TEST_CASE("abstraction sampling") {
  const auto m = tiny_model(ConditionMode::kNone);
  Rng a(11), b(11);
  CHECK(abstract_sample(m, 0.3, 2, 9, a) == abstract_sample(m, 0.3, 2, 9, b));
  CHECK_THROWS_AS(abstract_sample(m, 1.2, 1, 9, a), ConfigError);
  CHECK_THROWS_AS(abstract_sample(m, -0.1, 1, 9, a), ConfigError);

  // With k = 0 the chain is a deterministic function of V_T.
  Rng c(12), d(12);
  const auto x = abstract_sample(m, 0.0, 3, 9, c);
  const auto y = abstract_sample(m, 0.0, 3, 9, d);
  CHECK(x == y);
}

TEST_CASE("k changes only the injected noise") {
  // Same V_T and random stream: after the first reverse step the two chains
  // differ by exactly (sigma_k1 - sigma_k0) * xi.
  const auto m = tiny_model(ConditionMode::kNone);
  Rng seed(13);
  const Matrix vt = seed.normal(6, 3);
  const auto eps = m.estimator.predict({vt}, m.schedule.T, nullptr)[0];
  Rng a(14), b(14), c(14);
  const Matrix s0 = ddpm_step(vt, m.schedule.T, eps, m.schedule, a, 0.0);
  const Matrix s1 = ddpm_step(vt, m.schedule.T, eps, m.schedule, b, 1.0);
  const Matrix xi = c.normal(6, 3);
  CHECK((s1 - s0 - std::sqrt(m.schedule.beta_tilde[m.schedule.T]) * xi).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((s0 - mean_from_eps(vt, m.schedule.T, eps, m.schedule)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("vectorization contracts") {
  const auto m = tiny_model(ConditionMode::kSet);
  const PointSet p = to_point_set(square(), 20);
  Rng rng(15);
  const auto out = vectorize(m, p, 3, rng);
  CHECK(out.size() == 3);
  for (const auto& s : out) CHECK(s.size() == 12);
  CHECK_THROWS_AS(vectorize(tiny_model(ConditionMode::kSequence), p, 1, rng), ModeError);

  // Any ordering of the point set yields the same code and DDIM decode.
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(20);
  perm.setIdentity();
  std::shuffle(perm.indices().data(), perm.indices().data() + 20, rng.engine());
  const PointSet q{perm * p.points};
  CHECK(encode_set(m, q) == encode_set(m, p));
  CHECK_THROWS_AS(encode_set(m, PointSet{Matrix::Zero(1, 2)}), ContractError);
}

TEST_CASE("topology hash separates drawing orders") {
  const Sketch s = square();
  CHECK(topology_hash(s) == topology_hash(s));
  CHECK(topology_hash(reverse_drawing(s)) != topology_hash(s));
  Sketch moved = s;
  for (auto& p : moved.points) p.x += 10.0;
  CHECK(topology_hash(moved) == topology_hash(s));
  CHECK(stroke_index(s) == std::vector<int>{0, 0, 0, 0, 0, 1, 1});
}
