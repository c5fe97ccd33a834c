#pragma once

#include <vector>

namespace flowguide {

/// Choice of reverse-process variance.
enum class ReverseVariance {
  kPosterior,  ///< sigma_t^2 = (1 - abar_{t-1}) / (1 - abar_t) * beta_t
  kBeta,       ///< sigma_t^2 = beta_t
};

/// DDPM variance schedule. Steps are addressed 1-based (t = 1..T) through the
/// accessors; the vectors are 0-based. `timesteps[k]` is the index of the step
/// in the trained schedule, which differs from k + 1 after `strided()`.
struct NoiseSchedule {
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;
  std::vector<double> sigmas;
  std::vector<int> timesteps;
  ReverseVariance variance = ReverseVariance::kPosterior;

  int steps() const { return static_cast<int>(betas.size()); }
  double beta(int t) const { return betas.at(t - 1); }
  double alpha(int t) const { return alphas.at(t - 1); }
  double alpha_bar(int t) const { return alpha_bars.at(t - 1); }
  double sigma(int t) const { return sigmas.at(t - 1); }
  int timestep(int t) const { return timesteps.at(t - 1); }

  /// Throws ConfigError unless 1 <= t <= steps().
  void check_step(int t) const;

  /// Uniformly subsampled schedule with `count` steps. Step k keeps
  /// abar of trained step floor(k * T / count); beta and sigma are re-derived
  /// from consecutive kept abar values so the sub-chain is a valid DDPM.
  NoiseSchedule strided(int count) const;
};

/// Linearly spaced betas from beta_start to beta_end over T steps.
NoiseSchedule make_linear_schedule(int steps, double beta_start, double beta_end,
                                   ReverseVariance variance = ReverseVariance::kPosterior);

/// Build a schedule from explicit abar values (strictly decreasing, in (0,1)).
NoiseSchedule schedule_from_alpha_bars(const std::vector<double>& alpha_bars,
                                       std::vector<int> timesteps, ReverseVariance variance);

}  // namespace flowguide
