#pragma once

#include "flowguide/core/tensor.hpp"

namespace flowguide {

/// Separable Gaussian blur of every plane of a [..., H, W] tensor with
/// replicated borders and radius ceil(3 sigma). sigma = 0 is the identity.
Tensor<float> gaussian_blur(const Tensor<float>& planes, double sigma);

/// Mean over non-overlapping factor x factor blocks of every plane.
Tensor<float> area_downsample(const Tensor<float>& planes, Index factor);

/// Keys bicubic (a = -0.5) resize of every plane to out_h x out_w using
/// pixel-centre alignment and replicated borders.
Tensor<float> bicubic_resize(const Tensor<float>& planes, Index out_h, Index out_w);

}  // namespace flowguide
