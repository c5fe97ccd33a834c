#pragma once

#include <vector>

#include "flowguide/core/prng.hpp"
#include "flowguide/core/schedule.hpp"
#include "flowguide/diffusion/denoiser.hpp"
#include "flowguide/motion/flow.hpp"

namespace flowguide {

enum class GuidanceEvalPoint {
  kAfterDdpmStep,     ///< gradient at the freshly denoised latent
  kAtPreviousLatent,  ///< gradient at the latent fed to the denoiser
};

struct GuidanceConfig {
  double scale = 1.0;  ///< multiplies sigma_t^2; 0 disables guidance exactly
  double charbonnier_eps = 1e-3;
  GuidanceEvalPoint eval_point = GuidanceEvalPoint::kAfterDdpmStep;
  /// Per sampling step k (1-based, index k - 1) whether guidance applies;
  /// empty means every step.
  std::vector<bool> step_mask;

  bool active(int k) const;
  void validate() const;
};

/// Latent-grid motion for guidance: flows and masks already downsampled.
struct LatentMotion {
  FlowSet<float> flows;
  MaskSet<float> masks;
};

/// One guided reverse step on the strided chain:
///   z_tilde = ddpm_step(z, k, eps_hat, noise)
///   z_out   = z_tilde - scale * sigma_k^2 * grad E(eval point)
/// The energy gradient is evaluated in double precision.
Tensor<float> guided_step(const Tensor<float>& z, int k, const Tensor<float>& eps_hat, const NoiseSchedule& strided,
                          const Tensor<float>& noise, const LatentMotion& motion, const GuidanceConfig& gcfg);

/// Energy gradient of a latent sequence at float precision input, double inside.
Tensor<float> guidance_gradient(const Tensor<float>& z, const LatentMotion& motion, double charbonnier_eps);

/// Guided ancestral sampling over `steps` uniformly strided timesteps of the
/// trained schedule `sched`. Starts from z ~ N(0, I) and draws one noise
/// tensor per step (including the last one, whose sigma is 0), so the noise
/// stream is shared with `ddpm_sample`.
Tensor<float> motion_guided_sample(const EpsilonModel& model, const Tensor<float>& cond, const LatentMotion& motion,
                                   const NoiseSchedule& sched, const GuidanceConfig& gcfg, int steps,
                                   const Dims& latent_dims, Prng& rng);

/// Plain DDPM ancestral sampling with the same noise stream.
Tensor<float> ddpm_sample(const EpsilonModel& model, const Tensor<float>& cond, const NoiseSchedule& sched, int steps,
                          const Dims& latent_dims, Prng& rng);

}  // namespace flowguide
