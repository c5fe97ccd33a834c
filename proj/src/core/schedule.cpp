#include "flowguide/core/schedule.hpp"

#include <cmath>
#include <string>

#include "flowguide/core/errors.hpp"

namespace flowguide {

void NoiseSchedule::check_step(int t) const {
  if (t < 1 || t > steps()) {
    throw ConfigError("diffusion step " + std::to_string(t) + " outside [1, " +
                      std::to_string(steps()) + "]");
  }
}

NoiseSchedule schedule_from_alpha_bars(const std::vector<double>& alpha_bars,
                                       std::vector<int> timesteps, ReverseVariance variance) {
  NoiseSchedule s;
  s.variance = variance;
  s.alpha_bars = alpha_bars;
  s.timesteps = std::move(timesteps);
  const std::size_t n = alpha_bars.size();
  s.betas.resize(n);
  s.alphas.resize(n);
  s.sigmas.resize(n);
  double prev = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    s.alphas[i] = alpha_bars[i] / prev;
    s.betas[i] = 1.0 - s.alphas[i];
    if (i == 0) {
      s.sigmas[i] = 0.0;
    } else if (variance == ReverseVariance::kPosterior) {
      s.sigmas[i] = std::sqrt((1.0 - prev) / (1.0 - alpha_bars[i]) * s.betas[i]);
    } else {
      s.sigmas[i] = std::sqrt(s.betas[i]);
    }
    prev = alpha_bars[i];
  }
  return s;
}

NoiseSchedule make_linear_schedule(int steps, double beta_start, double beta_end,
                                   ReverseVariance variance) {
  if (steps < 1) throw ConfigError("schedule needs at least one step");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw ConfigError("schedule requires 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> alpha_bars(steps);
  std::vector<int> timesteps(steps);
  double prod = 1.0;
  for (int i = 0; i < steps; ++i) {
    const double beta =
        steps == 1 ? beta_start : beta_start + (beta_end - beta_start) * i / (steps - 1);
    prod *= 1.0 - beta;
    alpha_bars[i] = prod;
    timesteps[i] = i + 1;
  }
  NoiseSchedule s = schedule_from_alpha_bars(alpha_bars, std::move(timesteps), variance);
  // Keep the exact linear betas rather than the ratio round-trip.
  for (int i = 0; i < steps; ++i) {
    s.betas[i] = steps == 1 ? beta_start : beta_start + (beta_end - beta_start) * i / (steps - 1);
    s.alphas[i] = 1.0 - s.betas[i];
    if (i > 0) {
      const double var = variance == ReverseVariance::kPosterior
                             ? (1.0 - alpha_bars[i - 1]) / (1.0 - alpha_bars[i]) * s.betas[i]
                             : s.betas[i];
      s.sigmas[i] = std::sqrt(var);
    }
  }
  return s;
}

NoiseSchedule NoiseSchedule::strided(int count) const {
  if (count < 1 || count > steps()) {
    throw ConfigError("strided schedule needs 1 <= count <= " + std::to_string(steps()));
  }
  if (count == steps()) return *this;
  std::vector<double> abar(count);
  std::vector<int> ts(count);
  const int total = steps();
  for (int k = 1; k <= count; ++k) {
    const int t = static_cast<int>(static_cast<long long>(k) * total / count);
    abar[k - 1] = alpha_bar(t);
    ts[k - 1] = timestep(t);
  }
  return schedule_from_alpha_bars(abar, std::move(ts), variance);
}

}  // namespace flowguide
