#include <cmath>

#include "doctest.h"
#include "strokediff/diffusion.hpp"
#include "strokediff/errors.hpp"

using namespace strokediff;

TEST_CASE("linear schedule endpoints") {
  const auto s = build_linear_schedule(1000);
  CHECK(s.beta[1] == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(s.beta[1000] == doctest::Approx(2e-2).epsilon(1e-12));
  CHECK(s.alpha[0] == 1.0);
  CHECK(s.alpha[1] == doctest::Approx(0.9999).epsilon(1e-14));
  CHECK(s.beta_tilde[1] == 0.0);
  CHECK(s.sigma_scale == 0.8);

  const auto h = build_linear_schedule(500);
  CHECK(h.beta[1] == doctest::Approx(2e-4).epsilon(1e-12));
  CHECK(h.beta[500] == doctest::Approx(4e-2).epsilon(1e-12));
}

TEST_CASE("schedule identities hold for several lengths") {
  for (int T : {10, 100, 1000}) {
    CAPTURE(T);
    const auto s = build_linear_schedule(T);
    double prod = 1.0;
    for (int t = 1; t <= T; ++t) {
      prod *= 1.0 - s.beta[t];
      CHECK(std::abs(s.alpha[t] - prod) <= 1e-12 * prod);
      if (t >= 2) {
        CHECK(s.beta[t] >= s.beta[t - 1]);
        CHECK(s.alpha[t] < s.alpha[t - 1]);
        const double bt = (1.0 - s.alpha[t - 1]) / (1.0 - s.alpha[t]) * s.beta[t];
        CHECK(std::abs(s.beta_tilde[t] - bt) <= 1e-12 * bt);
      }
      CHECK(s.beta[t] > 0.0);
      CHECK(s.beta[t] < 1.0);
    }
  }
}

TEST_CASE("short schedules clip beta below one") {
  const auto s = build_linear_schedule(10);
  CHECK(s.beta[10] == kMaxBeta);
  CHECK(s.alpha[10] > 0.0);
  CHECK_THROWS_AS(build_linear_schedule(1), ConfigError);
  CHECK_THROWS_AS(build_linear_schedule(100, 1.5), ConfigError);
}

TEST_CASE("schedule JSON round trip") {
  const auto s = build_linear_schedule(250, 0.5);
  const auto back = schedule_from_json(schedule_to_json(s));
  CHECK(back.T == 250);
  CHECK(back.sigma_scale == 0.5);
  CHECK(back.alpha == s.alpha);
  auto j = schedule_to_json(s);
  j["beta_max"] = 0.5;
  CHECK_THROWS_AS(schedule_from_json(j), ConfigError);
}

TEST_CASE("forward diffusion boundary cases") {
  const auto s = build_linear_schedule(100);
  Rng rng(1);
  const Matrix v0 = rng.normal(8, 3);
  const Matrix eps = rng.normal(8, 3);
  CHECK(forward_diffuse(v0, 30, Matrix::Zero(8, 3), s).isApprox(std::sqrt(s.alpha[30]) * v0, 1e-15));
  CHECK(forward_diffuse(Matrix::Zero(8, 3), 30, eps, s).isApprox(std::sqrt(1.0 - s.alpha[30]) * eps, 1e-15));
  CHECK_THROWS_AS(forward_diffuse(v0, 30, rng.normal(7, 3), s), ContractError);
  CHECK_THROWS_AS(forward_diffuse(v0, 0, eps, s), ContractError);
}

TEST_CASE("forward diffusion is elementwise") {
  const auto s = build_linear_schedule(100);
  Rng rng(2);
  const Matrix v0 = rng.normal(10, 3);
  const Matrix eps = rng.normal(10, 3);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(10);
  perm.setIdentity();
  std::shuffle(perm.indices().data(), perm.indices().data() + 10, rng.engine());
  const Matrix a = perm * forward_diffuse(v0, 40, eps, s);
  const Matrix b = forward_diffuse(perm * v0, 40, perm * eps, s);
  CHECK(a == b);
}

TEST_CASE("diffused marginal at T approaches the standard normal") {
  const auto s = build_linear_schedule(1000);
  Rng rng(3);
  const Matrix v0 = rng.normal(10000, 3);
  const Matrix vt = forward_diffuse(v0, 1000, rng.normal(10000, 3), s);
  for (int c = 0; c < 3; ++c) {
    const double mean = vt.col(c).mean();
    const double var = (vt.col(c).array() - mean).square().sum() / (vt.rows() - 1);
    CHECK(std::abs(mean) <= 0.05);
    CHECK(std::abs(var - 1.0) <= 0.1);
  }
}

TEST_CASE("mean_from_eps matches the closed form") {
  const auto s = build_linear_schedule(10);
  Rng rng(4);
  for (int t = 1; t <= 10; ++t) {
    const Matrix vt = rng.normal(5, 3);
    const Matrix e = rng.normal(5, 3);
    Matrix expected(5, 3);
    for (Eigen::Index i = 0; i < vt.size(); ++i) {
      expected.data()[i] =
          (vt.data()[i] - s.beta[t] / std::sqrt(1.0 - s.alpha[t]) * e.data()[i]) / std::sqrt(1.0 - s.beta[t]);
    }
    CHECK((mean_from_eps(vt, t, e, s) - expected).cwiseAbs().maxCoeff() <= 1e-12);
  }
  const Matrix vt = rng.normal(5, 3);
  CHECK(mean_from_eps(vt, 4, Matrix::Zero(5, 3), s).isApprox(vt / std::sqrt(1.0 - s.beta[4]), 1e-15));
  const Matrix cancel = vt * std::sqrt(1.0 - s.alpha[4]) / s.beta[4];
  CHECK(mean_from_eps(vt, 4, cancel, s).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("ddpm step at t=1 is deterministic") {
  const auto s = build_linear_schedule(100);
  Rng a(1), b(2);
  const Matrix vt = Rng(5).normal(6, 3);
  const Matrix e = Rng(6).normal(6, 3);
  CHECK(ddpm_step(vt, 1, e, s, a) == ddpm_step(vt, 1, e, s, b));
  CHECK(ddpm_step(vt, 1, e, s, a) == mean_from_eps(vt, 1, e, s));
  Rng c(1), d(2);
  CHECK(ddpm_step(vt, 50, e, s, c, 0.0) == ddpm_step(vt, 50, e, s, d, 0.0));
}

TEST_CASE("ddpm step noise has the configured variance") {
  const auto s = build_linear_schedule(100);
  Rng rng(7);
  const Matrix vt = Matrix::Zero(100000, 1);
  const Matrix e = Matrix::Zero(100000, 1);
  const int t = 60;
  const Matrix out = ddpm_step(vt, t, e, s, rng) - mean_from_eps(vt, t, e, s);
  const double var = out.squaredNorm() / static_cast<double>(out.size());
  const double target = 0.8 * s.beta_tilde[t];
  CHECK(std::abs(var / target - 1.0) < 0.02);
}

TEST_CASE("ddim step identities") {
  auto s = build_linear_schedule(100);
  Rng rng(8);
  const Matrix vt = rng.normal(6, 3);
  CHECK(ddim_step(vt, 40, 0, Matrix::Zero(6, 3), s).isApprox(vt / std::sqrt(s.alpha[40]), 1e-14));
  s.alpha[39] = s.alpha[40];
  CHECK(ddim_step(vt, 40, 39, rng.normal(6, 3), s).isApprox(vt, 1e-14));
  CHECK_THROWS_AS(ddim_step(vt, 40, 40, vt, s), ContractError);
  CHECK_THROWS_AS(ddim_step(vt, 40, 41, vt, s), ContractError);
}

TEST_CASE("ddim with the true noise inverts forward diffusion") {
  const auto s = build_linear_schedule(1000);
  Rng rng(9);
  for (int t : {1, 10, 250, 500, 999, 1000}) {
    const Matrix v0 = rng.normal(16, 3);
    const Matrix eps = rng.normal(16, 3);
    const Matrix vt = forward_diffuse(v0, t, eps, s);
    CHECK((ddim_step(vt, t, 0, eps, s) - v0).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("ddim and the sigma-free ddpm mean agree only at t=1") {
  // The two updates share the 1/sqrt(1 - beta_t) factor on V_t; their noise
  // coefficients coincide only where 1 - alpha_{t-1} = 0.
  const auto s = build_linear_schedule(100);
  Rng rng(10);
  const Matrix vt = rng.normal(4, 3);
  const Matrix e = rng.normal(4, 3);
  CHECK((ddim_step(vt, 1, 0, e, s) - mean_from_eps(vt, 1, e, s)).cwiseAbs().maxCoeff() <= 1e-12);
  for (int t : {2, 50, 100}) {
    const double a = s.alpha[t], ap = s.alpha[t - 1], b = s.beta[t];
    const double gap = std::sqrt(1.0 - ap) - std::sqrt(1.0 - a) / std::sqrt(1.0 - b) + b / std::sqrt(1.0 - a) / std::sqrt(1.0 - b);
    const Matrix diff = ddim_step(vt, t, t - 1, e, s) - mean_from_eps(vt, t, e, s);
    CHECK((diff - gap * e).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(std::abs(gap) > 1e-6);
  }
}

TEST_CASE("ddim timesteps") {
  CHECK(ddim_timesteps(100, 4) == std::vector<int>{100, 75, 50, 25, 0});
  CHECK(ddim_timesteps(10, 10) == std::vector<int>{10, 9, 8, 7, 6, 5, 4, 3, 2, 1, 0});
  const auto ts = ddim_timesteps(1000, 50);
  CHECK(ts.size() == 51);
  CHECK(ts.front() == 1000);
  CHECK(ts.back() == 0);
  CHECK_THROWS_AS(ddim_timesteps(10, 11), ConfigError);
}
