#include "flowguide/diffusion/sampler.hpp"

#include "flowguide/core/errors.hpp"
#include "flowguide/diffusion/ddpm.hpp"
#include "flowguide/diffusion/energy.hpp"

namespace flowguide {

bool GuidanceConfig::active(int k) const {
  if (scale == 0.0) return false;
  if (step_mask.empty()) return true;
  return k >= 1 && static_cast<std::size_t>(k) <= step_mask.size() && step_mask[static_cast<std::size_t>(k - 1)];
}

void GuidanceConfig::validate() const {
  if (!(scale >= 0.0)) throw ConfigError("guidance scale must be >= 0");
  if (!(charbonnier_eps >= 0.0)) throw ConfigError("guidance charbonnier_eps must be >= 0");
}

Tensor<float> guidance_gradient(const Tensor<float>& z, const LatentMotion& motion, double charbonnier_eps) {
  const Tensor<double> g = warping_energy_grad(z.cast<double>(), motion.flows.cast<double>(),
                                               motion.masks.cast<double>(), charbonnier_eps);
  return g.cast<float>();
}

Tensor<float> guided_step(const Tensor<float>& z, int k, const Tensor<float>& eps_hat, const NoiseSchedule& strided,
                          const Tensor<float>& noise, const LatentMotion& motion, const GuidanceConfig& gcfg) {
  Tensor<float> next = ddpm_step(z, k, eps_hat, strided, noise);
  if (!gcfg.active(k)) return next;
  const double sigma = strided.sigma(k);
  const double coeff = gcfg.scale * sigma * sigma;
  if (coeff == 0.0) return next;
  const Tensor<float>& at = gcfg.eval_point == GuidanceEvalPoint::kAfterDdpmStep ? next : z;
  const Tensor<float> grad = guidance_gradient(at, motion, gcfg.charbonnier_eps);
  next.array() -= static_cast<float>(coeff) * grad.array();
  return next;
}

namespace {

void check_sampling_args(const NoiseSchedule& sched, int steps, const Dims& latent_dims, const Tensor<float>& cond) {
  if (steps < 1 || steps > sched.steps()) {
    throw ConfigError("sampling steps must be in [1, " + std::to_string(sched.steps()) + "]");
  }
  if (latent_dims.size() != 4) throw ShapeError("latent dims must be [N, C, h, w]");
  if (cond.rank() != 4 || cond.dim(0) != latent_dims[0] || cond.dim(2) != latent_dims[2] ||
      cond.dim(3) != latent_dims[3]) {
    throw ShapeError("condition " + dims_to_string(cond.dims()) + " does not match latent " +
                     dims_to_string(latent_dims));
  }
}

}  // namespace

Tensor<float> motion_guided_sample(const EpsilonModel& model, const Tensor<float>& cond, const LatentMotion& motion,
                                   const NoiseSchedule& sched, const GuidanceConfig& gcfg, int steps,
                                   const Dims& latent_dims, Prng& rng) {
  check_sampling_args(sched, steps, latent_dims, cond);
  gcfg.validate();
  const NoiseSchedule strided = sched.strided(steps);
  Tensor<float> z = gaussian_noise<float>(latent_dims, rng);
  for (int k = steps; k >= 1; --k) {
    const Tensor<float> eps_hat = model(z, strided.timestep(k), cond);
    const Tensor<float> noise = gaussian_noise<float>(latent_dims, rng);
    z = guided_step(z, k, eps_hat, strided, noise, motion, gcfg);
  }
  return z;
}

Tensor<float> ddpm_sample(const EpsilonModel& model, const Tensor<float>& cond, const NoiseSchedule& sched, int steps,
                          const Dims& latent_dims, Prng& rng) {
  check_sampling_args(sched, steps, latent_dims, cond);
  const NoiseSchedule strided = sched.strided(steps);
  Tensor<float> z = gaussian_noise<float>(latent_dims, rng);
  for (int k = steps; k >= 1; --k) {
    const Tensor<float> eps_hat = model(z, strided.timestep(k), cond);
    const Tensor<float> noise = gaussian_noise<float>(latent_dims, rng);
    z = ddpm_step(z, k, eps_hat, strided, noise);
  }
  return z;
}

}  // namespace flowguide
