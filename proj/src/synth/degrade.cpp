#include "flowguide/synth/degrade.hpp"

#include <algorithm>
#include <cmath>

#include "flowguide/core/errors.hpp"
#include "flowguide/core/resample.hpp"

namespace flowguide::synth {

void DegradationSpec::validate() const {
  if (!(blur_sigma >= 0.0 && blur_sigma <= 3.0)) throw ConfigError("degradation blur_sigma must be in [0, 3]");
  if (factor < 1) throw ConfigError("degradation factor must be >= 1");
  if (!(noise_sigma >= 0.0 && noise_sigma <= 0.1)) throw ConfigError("degradation noise_sigma must be in [0, 0.1]");
  if (levels < 2) throw ConfigError("degradation levels must be >= 2");
}

float quantize(float v, int levels) {
  const double cell = std::floor(static_cast<double>(std::clamp(v, 0.0f, 1.0f)) * levels);
  return static_cast<float>((std::min(cell, static_cast<double>(levels - 1)) + 0.5) / levels);
}

VideoSequence degrade_sequence(const VideoSequence& hr, const DegradationSpec& spec, Prng& rng) {
  spec.validate();
  if (hr.height() % spec.factor != 0 || hr.width() % spec.factor != 0) {
    throw ShapeError("degrade_sequence: " + std::to_string(hr.height()) + "x" + std::to_string(hr.width()) +
                     " not divisible by factor " + std::to_string(spec.factor));
  }
  Tensor<float> lr = area_downsample(gaussian_blur(hr.tensor(), spec.blur_sigma), spec.factor);
  if (spec.noise_sigma > 0.0) {
    const Tensor<float> noise = gaussian_noise<float>(lr.dims(), rng);
    lr.array() += static_cast<float>(spec.noise_sigma) * noise.array();
  }
  for (Index i = 0; i < lr.size(); ++i) lr[i] = quantize(lr[i], spec.levels);
  return VideoSequence::clamped(std::move(lr));
}

}  // namespace flowguide::synth
