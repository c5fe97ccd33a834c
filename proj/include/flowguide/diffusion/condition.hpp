#pragma once

#include "flowguide/core/sequence.hpp"

namespace flowguide {

/// LR frames bicubic-resized to the HR grid [N, C, out_h, out_w].
Tensor<float> upscale_lr(const VideoSequence& lr, Index out_h, Index out_w);

/// Denoiser condition on the latent grid: the LR frames bicubic-resized to
/// out_h x out_w, then average-pooled by the latent factor.
Tensor<float> make_condition(const VideoSequence& lr, Index out_h, Index out_w);

}  // namespace flowguide
