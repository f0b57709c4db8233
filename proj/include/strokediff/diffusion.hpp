#pragma once

#include <vector>

#include <nlohmann/json.hpp>

#include "strokediff/rng.hpp"
#include "strokediff/tensor.hpp"

namespace strokediff {

// Discrete-time variance schedule. Arrays are indexed by diffusion step:
// beta[1..T] and beta_tilde[1..T] (index 0 unused, kept at 0), alpha[0..T]
// with alpha[0] = 1 (cumulative product of 1 - beta).
struct NoiseSchedule {
  int T = 0;
  double beta_min = 0.0;
  double beta_max = 0.0;
  double sigma_scale = 0.8;  // reverse variance is sigma_scale * beta_tilde[t]
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> beta_tilde;

  double sigma(int t) const;  // reverse-step standard deviation
};

inline constexpr double kMaxBeta = 0.999;

// beta ramps linearly from 1e-4 * 1000 / T to 2e-2 * 1000 / T, clipped at
// kMaxBeta so short schedules (T < 21) stay valid.
NoiseSchedule build_linear_schedule(int T, double sigma_scale = 0.8);

nlohmann::json schedule_to_json(const NoiseSchedule& schedule);
NoiseSchedule schedule_from_json(const nlohmann::json& j);

// V_t = sqrt(alpha_t) V_0 + sqrt(1 - alpha_t) eps, elementwise.
Matrix forward_diffuse(const Matrix& v0, int t, const Matrix& eps, const NoiseSchedule& schedule);

// Posterior mean implied by a noise estimate:
// (V_t - beta_t / sqrt(1 - alpha_t) * eps_hat) / sqrt(1 - beta_t).
Matrix mean_from_eps(const Matrix& vt, int t, const Matrix& eps_hat, const NoiseSchedule& schedule);

// mean_from_eps + sigma_t * xi. Always draws xi (even when sigma_t = 0) so
// that chains with different sigma_scale consume identical random streams.
Matrix ddpm_step(const Matrix& vt, int t, const Matrix& eps_hat, const NoiseSchedule& schedule, Rng& rng,
                 double sigma_scale);
Matrix ddpm_step(const Matrix& vt, int t, const Matrix& eps_hat, const NoiseSchedule& schedule, Rng& rng);

// Deterministic jump from step t to any t_prev < t.
Matrix ddim_step(const Matrix& vt, int t, int t_prev, const Matrix& eps_hat, const NoiseSchedule& schedule);

// Descending visit order {T, ..., 0} of `steps` uniform strides (steps + 1 entries).
std::vector<int> ddim_timesteps(int T, int steps);

}  // namespace strokediff
