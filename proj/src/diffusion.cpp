#include "strokediff/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "strokediff/errors.hpp"

namespace strokediff {

namespace {

void check_step(const NoiseSchedule& s, int t, int lo) {
  if (t < lo || t > s.T) {
    throw ContractError("diffusion step " + std::to_string(t) + " outside [" + std::to_string(lo) + ", " +
                        std::to_string(s.T) + "]");
  }
}

void check_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ContractError(std::string("shape mismatch: ") + what);
  }
}

}  // namespace

double NoiseSchedule::sigma(int t) const { return std::sqrt(sigma_scale * beta_tilde[t]); }

NoiseSchedule build_linear_schedule(int T, double sigma_scale) {
  if (T < 2) throw ConfigError("diffusion needs T >= 2");
  if (!(sigma_scale >= 0.0 && sigma_scale <= 1.0)) throw ConfigError("sigma_scale must lie in [0, 1]");
  NoiseSchedule s;
  s.T = T;
  s.sigma_scale = sigma_scale;
  s.beta_min = 1e-4 * 1000.0 / T;
  s.beta_max = 2e-2 * 1000.0 / T;
  s.beta.assign(T + 1, 0.0);
  s.alpha.assign(T + 1, 1.0);
  s.beta_tilde.assign(T + 1, 0.0);
  for (int t = 1; t <= T; ++t) {
    const double b = s.beta_min + (s.beta_max - s.beta_min) * (t - 1) / static_cast<double>(T - 1);
    s.beta[t] = std::min(b, kMaxBeta);
    s.alpha[t] = s.alpha[t - 1] * (1.0 - s.beta[t]);
  }
  for (int t = 2; t <= T; ++t) {
    s.beta_tilde[t] = (1.0 - s.alpha[t - 1]) / (1.0 - s.alpha[t]) * s.beta[t];
  }
  return s;
}

nlohmann::json schedule_to_json(const NoiseSchedule& schedule) {
  return {{"T", schedule.T},
          {"beta_min", schedule.beta_min},
          {"beta_max", schedule.beta_max},
          {"sigma_scale", schedule.sigma_scale}};
}

NoiseSchedule schedule_from_json(const nlohmann::json& j) {
  const int T = j.at("T").get<int>();
  NoiseSchedule s = build_linear_schedule(T, j.value("sigma_scale", 0.8));
  // Only the linear family is built; stored endpoints must agree with it.
  if (j.contains("beta_min") && std::abs(j.at("beta_min").get<double>() - s.beta_min) > 1e-15) {
    throw ConfigError("schedule beta_min does not match the linear schedule for T");
  }
  if (j.contains("beta_max") && std::abs(j.at("beta_max").get<double>() - s.beta_max) > 1e-15) {
    throw ConfigError("schedule beta_max does not match the linear schedule for T");
  }
  return s;
}

Matrix forward_diffuse(const Matrix& v0, int t, const Matrix& eps, const NoiseSchedule& schedule) {
  check_step(schedule, t, 1);
  check_same_shape(v0, eps, "forward_diffuse eps must match V0");
  const double a = schedule.alpha[t];
  return std::sqrt(a) * v0 + std::sqrt(1.0 - a) * eps;
}

Matrix mean_from_eps(const Matrix& vt, int t, const Matrix& eps_hat, const NoiseSchedule& schedule) {
  check_step(schedule, t, 1);
  check_same_shape(vt, eps_hat, "eps_hat must match V_t");
  const double b = schedule.beta[t];
  const double a = schedule.alpha[t];
  return (vt - (b / std::sqrt(1.0 - a)) * eps_hat) / std::sqrt(1.0 - b);
}

Matrix ddpm_step(const Matrix& vt, int t, const Matrix& eps_hat, const NoiseSchedule& schedule, Rng& rng,
                 double sigma_scale) {
  Matrix mean = mean_from_eps(vt, t, eps_hat, schedule);
  const Matrix xi = rng.normal(vt.rows(), vt.cols());
  const double sigma = std::sqrt(sigma_scale * schedule.beta_tilde[t]);
  if (sigma > 0.0) mean += sigma * xi;
  return mean;
}

Matrix ddpm_step(const Matrix& vt, int t, const Matrix& eps_hat, const NoiseSchedule& schedule, Rng& rng) {
  return ddpm_step(vt, t, eps_hat, schedule, rng, schedule.sigma_scale);
}

Matrix ddim_step(const Matrix& vt, int t, int t_prev, const Matrix& eps_hat, const NoiseSchedule& schedule) {
  check_step(schedule, t, 1);
  check_step(schedule, t_prev, 0);
  if (t_prev >= t) throw ContractError("ddim_step needs t_prev < t");
  check_same_shape(vt, eps_hat, "eps_hat must match V_t");
  const double a = schedule.alpha[t];
  const double a_prev = schedule.alpha[t_prev];
  const Matrix v0_hat = (vt - std::sqrt(1.0 - a) * eps_hat) / std::sqrt(a);
  return std::sqrt(a_prev) * v0_hat + std::sqrt(1.0 - a_prev) * eps_hat;
}

std::vector<int> ddim_timesteps(int T, int steps) {
  if (steps < 1 || steps > T) throw ConfigError("DDIM steps must lie in [1, T]");
  std::vector<int> ts;
  ts.reserve(steps + 1);
  for (int i = steps; i >= 0; --i) {
    ts.push_back(static_cast<int>(std::lround(static_cast<double>(i) * T / steps)));
  }
  return ts;
}

}  // namespace strokediff
