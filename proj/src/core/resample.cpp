#include "flowguide/core/resample.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "flowguide/core/errors.hpp"

namespace flowguide {

namespace {

Index plane_count(const Tensor<float>& t) {
  if (t.rank() < 2) throw ShapeError("resample: need at least 2 dims, got " + dims_to_string(t.dims()));
  return t.size() / (t.rows() * t.cols());
}

Dims with_plane(const Dims& dims, Index h, Index w) {
  Dims out = dims;
  out[out.size() - 2] = h;
  out[out.size() - 1] = w;
  return out;
}

double keys(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

struct Taps {
  std::vector<Index> index;  // 4 per output sample
  std::vector<double> weight;
};

Taps cubic_taps(Index in, Index out) {
  Taps taps;
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (Index o = 0; o < out; ++o) {
    const double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    const double base = std::floor(src);
    const double frac = src - base;
    for (int k = -1; k <= 2; ++k) {
      taps.index.push_back(std::clamp<Index>(static_cast<Index>(base) + k, 0, in - 1));
      taps.weight.push_back(keys(frac - k));
    }
  }
  return taps;
}

}  // namespace

Tensor<float> gaussian_blur(const Tensor<float>& planes, double sigma) {
  if (sigma < 0.0 || !std::isfinite(sigma)) throw ConfigError("gaussian_blur: sigma must be finite and >= 0");
  if (sigma == 0.0) return planes;
  const Index count = plane_count(planes), h = planes.rows(), w = planes.cols();
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) total += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= total;

  Tensor<float> out(planes.dims());
  std::vector<double> tmp(static_cast<std::size_t>(h * w));
  for (Index p = 0; p < count; ++p) {
    const float* src = planes.data() + p * h * w;
    float* dst = out.data() + p * h * w;
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * src[y * w + std::clamp<Index>(x + i, 0, w - 1)];
        tmp[y * w + x] = acc;
      }
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * tmp[std::clamp<Index>(y + i, 0, h - 1) * w + x];
        dst[y * w + x] = static_cast<float>(acc);
      }
  }
  return out;
}

Tensor<float> area_downsample(const Tensor<float>& planes, Index factor) {
  if (factor < 1) throw ConfigError("area_downsample: factor must be >= 1");
  const Index count = plane_count(planes), h = planes.rows(), w = planes.cols();
  if (h % factor != 0 || w % factor != 0) {
    throw ShapeError("area_downsample: " + std::to_string(h) + "x" + std::to_string(w) + " not divisible by " +
                     std::to_string(factor));
  }
  if (factor == 1) return planes;
  const Index oh = h / factor, ow = w / factor;
  Tensor<float> out(with_plane(planes.dims(), oh, ow));
  const double inv = 1.0 / static_cast<double>(factor * factor);
  for (Index p = 0; p < count; ++p) {
    const float* src = planes.data() + p * h * w;
    float* dst = out.data() + p * oh * ow;
    for (Index y = 0; y < oh; ++y)
      for (Index x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (Index dy = 0; dy < factor; ++dy)
          for (Index dx = 0; dx < factor; ++dx) acc += src[(y * factor + dy) * w + x * factor + dx];
        dst[y * ow + x] = static_cast<float>(acc * inv);
      }
  }
  return out;
}

Tensor<float> bicubic_resize(const Tensor<float>& planes, Index out_h, Index out_w) {
  if (out_h <= 0 || out_w <= 0) throw ShapeError("bicubic_resize: output dims must be positive");
  const Index count = plane_count(planes), h = planes.rows(), w = planes.cols();
  const Taps ty = cubic_taps(h, out_h), tx = cubic_taps(w, out_w);
  Tensor<float> out(with_plane(planes.dims(), out_h, out_w));
  std::vector<double> tmp(static_cast<std::size_t>(h * out_w));
  for (Index p = 0; p < count; ++p) {
    const float* src = planes.data() + p * h * w;
    float* dst = out.data() + p * out_h * out_w;
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < out_w; ++x) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k) acc += tx.weight[4 * x + k] * src[y * w + tx.index[4 * x + k]];
        tmp[y * out_w + x] = acc;
      }
    for (Index y = 0; y < out_h; ++y)
      for (Index x = 0; x < out_w; ++x) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k) acc += ty.weight[4 * y + k] * tmp[ty.index[4 * y + k] * out_w + x];
        dst[y * out_w + x] = static_cast<float>(acc);
      }
  }
  return out;
}

}  // namespace flowguide
