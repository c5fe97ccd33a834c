#pragma once

#include <cmath>

#include "flowguide/core/schedule.hpp"
#include "flowguide/core/tensor.hpp"

namespace flowguide {

/// Closed-form forward process: sqrt(abar_t) z0 + sqrt(1 - abar_t) eps.
template <typename Scalar>
Tensor<Scalar> forward_diffuse(const Tensor<Scalar>& z0, int t, const Tensor<Scalar>& eps,
                               const NoiseSchedule& sched) {
  sched.check_step(t);
  require_same_shape(z0, eps, "forward_diffuse");
  const double abar = sched.alpha_bar(t);
  const auto a = static_cast<Scalar>(std::sqrt(abar));
  const auto b = static_cast<Scalar>(std::sqrt(1.0 - abar));
  return Tensor<Scalar>(z0.dims(), typename Tensor<Scalar>::Array(a * z0.array() + b * eps.array()));
}

/// One forward noising step q(z_t | z_{t-1}): sqrt(alpha_t) z + sqrt(beta_t) eps.
template <typename Scalar>
Tensor<Scalar> forward_step(const Tensor<Scalar>& z_prev, int t, const Tensor<Scalar>& eps,
                            const NoiseSchedule& sched) {
  sched.check_step(t);
  require_same_shape(z_prev, eps, "forward_step");
  const auto a = static_cast<Scalar>(std::sqrt(sched.alpha(t)));
  const auto b = static_cast<Scalar>(std::sqrt(sched.beta(t)));
  return Tensor<Scalar>(z_prev.dims(), typename Tensor<Scalar>::Array(a * z_prev.array() + b * eps.array()));
}

/// DDPM reverse step:
///   (1 / sqrt(alpha_t)) (z_t - beta_t / sqrt(1 - abar_t) eps_hat) + sigma_t noise.
template <typename Scalar>
Tensor<Scalar> ddpm_step(const Tensor<Scalar>& z_t, int t, const Tensor<Scalar>& eps_hat, const NoiseSchedule& sched,
                         const Tensor<Scalar>& noise) {
  sched.check_step(t);
  require_same_shape(z_t, eps_hat, "ddpm_step");
  require_same_shape(z_t, noise, "ddpm_step");
  const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha(t));
  const double eps_coeff = sched.beta(t) / std::sqrt(1.0 - sched.alpha_bar(t));
  const auto a = static_cast<Scalar>(inv_sqrt_alpha);
  const auto b = static_cast<Scalar>(inv_sqrt_alpha * eps_coeff);
  const auto s = static_cast<Scalar>(sched.sigma(t));
  return Tensor<Scalar>(z_t.dims(),
                        typename Tensor<Scalar>::Array(a * z_t.array() - b * eps_hat.array() + s * noise.array()));
}

}  // namespace flowguide
