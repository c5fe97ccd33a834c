#pragma once

#include "flowguide/core/prng.hpp"
#include "flowguide/core/sequence.hpp"

namespace flowguide::synth {

/// Per-frame degradation, applied in the fixed order
///   Gaussian blur -> area downsample -> additive Gaussian noise -> quantization -> clamp.
struct DegradationSpec {
  double blur_sigma = 1.0;  ///< [0, 3]
  Index factor = 4;
  double noise_sigma = 0.02;  ///< [0, 0.1]
  int levels = 64;            ///< mid-rise quantizer: error at most 1 / (2 levels)

  void validate() const;
};

VideoSequence degrade_sequence(const VideoSequence& hr, const DegradationSpec& spec, Prng& rng);

/// Mid-rise uniform quantization of a value in [0, 1] to `levels` cells.
float quantize(float v, int levels);

}  // namespace flowguide::synth
