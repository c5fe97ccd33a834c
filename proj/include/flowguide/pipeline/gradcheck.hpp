#pragma once

#include <cstdint>
#include <vector>

#include "flowguide/core/prng.hpp"
#include "flowguide/motion/flow.hpp"

namespace flowguide {

struct GradcheckSettings {
  int instances = 50;
  Index frames = 3, channels = 1, height = 8, width = 8;
  double flow_amplitude = 2.0;  ///< flows uniform in [-a, a]
  double mask_valid = 0.8;      ///< probability of a mask entry being 1
  double charbonnier_eps = 1e-3;
  double step = 1e-4;  ///< central-difference step
  int directions = 5;  ///< random unit directions per instance
  double energy_tolerance = 1e-3;
  double vjp_tolerance = 1e-5;
  /// Negative control: adds a fixed perturbation to the analytic energy gradient.
  bool corrupt_gradient = false;
};

struct GradcheckInstance {
  int index = 0;
  double energy_rel_error = 0.0;  ///< max over directions
  double vjp_rel_error = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckInstance> instances;
  double max_energy_rel_error = 0.0;
  double max_vjp_rel_error = 0.0;
  double static_gradient_norm = 0.0;  ///< gradient norm on a static zero-flow instance
  bool passed = false;
};

/// Relative error of an analytic directional derivative against a central
/// difference: |a - fd| / max(|fd|, 1e-8).
double relative_error(double analytic, double numeric);

/// Finite-difference checks of the warping-energy gradient and of the warp
/// adjoint on random instances (double precision throughout).
GradcheckReport run_gradcheck(const GradcheckSettings& settings, std::uint64_t seed);

/// Random flows and masks for an N-frame grid, shared with the acceptance checks.
FlowSet<double> random_flow_set(Index frames, Index height, Index width, double amplitude, Prng& rng);
MaskSet<double> random_mask_set(Index frames, Index height, Index width, double valid, Prng& rng);

}  // namespace flowguide
