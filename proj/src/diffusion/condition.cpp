#include "flowguide/diffusion/condition.hpp"

#include <string>

#include "flowguide/core/errors.hpp"
#include "flowguide/core/resample.hpp"

namespace flowguide {

Tensor<float> upscale_lr(const VideoSequence& lr, Index out_h, Index out_w) {
  if (out_h <= 0 || out_w <= 0) throw ShapeError("upscale_lr: output size must be positive");
  Tensor<float> up = bicubic_resize(lr.tensor(), out_h, out_w);
  up.array() = up.array().max(0.0f).min(1.0f);
  return up;
}

Tensor<float> make_condition(const VideoSequence& lr, Index out_h, Index out_w) {
  if (out_h % kLatentFactor != 0 || out_w % kLatentFactor != 0) {
    throw ShapeError("make_condition: " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                     " is not divisible by the latent factor");
  }
  return area_downsample(upscale_lr(lr, out_h, out_w), kLatentFactor);
}

}  // namespace flowguide
