#pragma once

#include "flowguide/motion/flow.hpp"

namespace flowguide {

/// Coarse-to-fine Horn-Schunck settings. Intensities are luminance scaled to
/// [0, 255] before solving, so `smoothness` is on that scale.
struct FlowSolverParams {
  int levels = 3;
  int iterations = 100;  ///< Jacobi iterations per pyramid level
  double smoothness = 15.0;
  int warps = 1;          ///< re-linearizations per level
  int median_radius = 0;  ///< flow median filter after each warp; 0 disables
};

/// Dense flow on `src`'s grid that registers `dst` onto `src`:
/// dst(p + flow(p)) ~ src(p). Frames are [C, H, W] with C = 1 or 3 (RGB is
/// converted to luminance).
FlowField<float> estimate_flow(const Tensor<float>& src, const Tensor<float>& dst,
                               const FlowSolverParams& params = {});

/// Forward and backward flows for every adjacent pair of an [N, C, H, W] sequence.
FlowSet<float> estimate_flows(const Tensor<float>& frames, const FlowSolverParams& params = {});

/// Luminance plane of a [C, H, W] frame (identity for C = 1).
Tensor<float> luminance(const Tensor<float>& frame);

}  // namespace flowguide
