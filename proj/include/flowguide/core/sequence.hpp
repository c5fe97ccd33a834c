#pragma once

#include "flowguide/core/tensor.hpp"

namespace flowguide {

/// Ordered pixel frames [N, C, H, W] with C in {1, 3} and values in [0, 1].
class VideoSequence {
 public:
  VideoSequence() = default;
  /// Validates rank, channel count, finiteness and range.
  explicit VideoSequence(Tensor<float> data);
  /// Clamps to [0, 1] (NaN becomes 0) before validating.
  static VideoSequence clamped(Tensor<float> data);
  static VideoSequence from_frames(const std::vector<Tensor<float>>& frames);

  const Tensor<float>& tensor() const { return data_; }
  Index frames() const { return data_.dim(0); }
  Index channels() const { return data_.dim(1); }
  Index height() const { return data_.dim(2); }
  Index width() const { return data_.dim(3); }
  Tensor<float> frame(Index i) const { return data_.slice(i); }

 private:
  Tensor<float> data_;
};

/// Per-frame latent grids [N, C_z, h, w]; finite, otherwise unbounded.
class LatentSequence {
 public:
  LatentSequence() = default;
  explicit LatentSequence(Tensor<float> data);

  const Tensor<float>& tensor() const { return data_; }
  Tensor<float>& mutable_tensor() { return data_; }
  Index frames() const { return data_.dim(0); }
  Index channels() const { return data_.dim(1); }
  Index height() const { return data_.dim(2); }
  Index width() const { return data_.dim(3); }

 private:
  Tensor<float> data_;
};

/// Latent grid is 8x smaller than the image grid on each axis.
inline constexpr Index kLatentFactor = 8;

}  // namespace flowguide
