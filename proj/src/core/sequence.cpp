#include "flowguide/core/sequence.hpp"

#include <algorithm>
#include <cmath>

namespace flowguide {

VideoSequence::VideoSequence(Tensor<float> data) : data_(std::move(data)) {
  require_rank(data_.rank(), 4, "VideoSequence");
  if (data_.dim(1) != 1 && data_.dim(1) != 3) {
    throw ShapeError("VideoSequence: channel count must be 1 or 3");
  }
  if (!data_.all_finite()) throw ShapeError("VideoSequence: non-finite entries");
  if ((data_.array() < 0.0f).any() || (data_.array() > 1.0f).any()) {
    throw ShapeError("VideoSequence: values outside [0, 1]");
  }
}

VideoSequence VideoSequence::clamped(Tensor<float> data) {
  for (Index i = 0; i < data.size(); ++i) {
    const float v = data[i];
    data[i] = std::isnan(v) ? 0.0f : std::clamp(v, 0.0f, 1.0f);
  }
  return VideoSequence(std::move(data));
}

VideoSequence VideoSequence::from_frames(const std::vector<Tensor<float>>& frames) {
  return VideoSequence(stack(frames));
}

LatentSequence::LatentSequence(Tensor<float> data) : data_(std::move(data)) {
  require_rank(data_.rank(), 4, "LatentSequence");
  if (!data_.all_finite()) throw ShapeError("LatentSequence: non-finite entries");
}

}  // namespace flowguide
