#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "flowguide/core/tensor.hpp"

namespace flowguide {

/// Dense displacement field [2, H, W] in pixels of the grid it lives on.
/// Channel 0 is the horizontal displacement dx, channel 1 the vertical dy;
/// the pixel (y, x) corresponds to position (y + dy, x + dx) in the target.
template <typename Scalar>
class FlowField {
 public:
  FlowField() = default;
  FlowField(Index height, Index width) : data_({2, height, width}) {}
  explicit FlowField(Tensor<Scalar> data) : data_(std::move(data)) {
    require_rank(data_.rank(), 3, "FlowField");
    if (data_.dim(0) != 2) throw ShapeError("FlowField: expected 2 channels");
    if (!data_.all_finite()) throw ShapeError("FlowField: non-finite displacement");
  }

  static FlowField constant(Index height, Index width, Scalar dx, Scalar dy) {
    FlowField f(height, width);
    f.data_.plane(0).setConstant(dx);
    f.data_.plane(1).setConstant(dy);
    return f;
  }

  Index height() const { return data_.dim(1); }
  Index width() const { return data_.dim(2); }
  Scalar& dx(Index y, Index x) { return data_(0, y, x); }
  Scalar& dy(Index y, Index x) { return data_(1, y, x); }
  Scalar dx(Index y, Index x) const { return data_(0, y, x); }
  Scalar dy(Index y, Index x) const { return data_(1, y, x); }

  const Tensor<Scalar>& tensor() const { return data_; }
  Tensor<Scalar>& tensor() { return data_; }

  template <typename Other>
  FlowField<Other> cast() const {
    return FlowField<Other>(data_.template cast<Other>());
  }

 private:
  Tensor<Scalar> data_;
};

/// Binary validity map [1, H, W]: 1 = non-occluded, 0 = occluded.
template <typename Scalar>
class OcclusionMask {
 public:
  OcclusionMask() = default;
  OcclusionMask(Index height, Index width, Scalar fill = Scalar(1)) : data_({1, height, width}, fill) {}
  explicit OcclusionMask(Tensor<Scalar> data) : data_(std::move(data)) {
    require_rank(data_.rank(), 3, "OcclusionMask");
    if (data_.dim(0) != 1) throw ShapeError("OcclusionMask: expected 1 channel");
    if (!((data_.array() == Scalar(0)) || (data_.array() == Scalar(1))).all()) {
      throw ShapeError("OcclusionMask: entries must be exactly 0 or 1");
    }
  }

  Index height() const { return data_.dim(1); }
  Index width() const { return data_.dim(2); }
  Scalar operator()(Index y, Index x) const { return data_(0, y, x); }
  const Tensor<Scalar>& tensor() const { return data_; }

  template <typename Other>
  OcclusionMask<Other> cast() const {
    return OcclusionMask<Other>(data_.template cast<Other>());
  }

 private:
  Tensor<Scalar> data_;
};

/// Flows between adjacent frames of an N-frame sequence. `forward[i]` lives on
/// frame i's grid and points to frame i+1; `backward[i]` lives on frame i+1's
/// grid and points to frame i (0-based).
template <typename Scalar>
struct FlowSet {
  std::vector<FlowField<Scalar>> forward;
  std::vector<FlowField<Scalar>> backward;

  std::size_t pairs() const { return forward.size(); }

  void check(Index frames) const {
    if (forward.size() != backward.size() || static_cast<Index>(forward.size()) != frames - 1) {
      throw ShapeError("FlowSet: need exactly N-1 forward and backward flows");
    }
  }

  template <typename Other>
  FlowSet<Other> cast() const {
    FlowSet<Other> out;
    for (const auto& f : forward) out.forward.push_back(f.template cast<Other>());
    for (const auto& f : backward) out.backward.push_back(f.template cast<Other>());
    return out;
  }
};

/// Per-pair masks matching a FlowSet: `forward[i]` on frame i's grid,
/// `backward[i]` on frame i+1's grid.
template <typename Scalar>
struct MaskSet {
  std::vector<OcclusionMask<Scalar>> forward;
  std::vector<OcclusionMask<Scalar>> backward;

  static MaskSet full(std::size_t pairs, Index height, Index width) {
    MaskSet m;
    m.forward.assign(pairs, OcclusionMask<Scalar>(height, width));
    m.backward.assign(pairs, OcclusionMask<Scalar>(height, width));
    return m;
  }

  template <typename Other>
  MaskSet<Other> cast() const {
    MaskSet<Other> out;
    for (const auto& m : forward) out.forward.push_back(m.template cast<Other>());
    for (const auto& m : backward) out.backward.push_back(m.template cast<Other>());
    return out;
  }
};

/// Bilinear tap with clamp-to-edge: the sample position is clamped into the
/// image before the four neighbours are chosen.
template <typename Scalar>
struct BilinearTap {
  Index x0, x1, y0, y1;
  Scalar wx, wy;

  BilinearTap(Index height, Index width, Scalar sx, Scalar sy) {
    sx = std::clamp(sx, Scalar(0), static_cast<Scalar>(width - 1));
    sy = std::clamp(sy, Scalar(0), static_cast<Scalar>(height - 1));
    x0 = static_cast<Index>(std::floor(sx));
    y0 = static_cast<Index>(std::floor(sy));
    x1 = std::min(x0 + 1, width - 1);
    y1 = std::min(y0 + 1, height - 1);
    wx = sx - static_cast<Scalar>(x0);
    wy = sy - static_cast<Scalar>(y0);
  }

  template <typename PlaneLike>
  Scalar sample(const PlaneLike& p) const {
    return (Scalar(1) - wy) * ((Scalar(1) - wx) * p(y0, x0) + wx * p(y0, x1)) +
           wy * ((Scalar(1) - wx) * p(y1, x0) + wx * p(y1, x1));
  }

  template <typename PlaneLike>
  void scatter(PlaneLike& p, Scalar v) const {
    p(y0, x0) += (Scalar(1) - wy) * (Scalar(1) - wx) * v;
    p(y0, x1) += (Scalar(1) - wy) * wx * v;
    p(y1, x0) += wy * (Scalar(1) - wx) * v;
    p(y1, x1) += wy * wx * v;
  }
};

namespace detail {

template <typename Scalar>
void check_warp_shapes(const Tensor<Scalar>& input, const FlowField<Scalar>& flow, const char* what) {
  require_rank(input.rank(), 3, what);
  if (input.dim(1) != flow.height() || input.dim(2) != flow.width()) {
    throw ShapeError(std::string(what) + ": flow grid " + std::to_string(flow.height()) + "x" +
                     std::to_string(flow.width()) + " does not match input " +
                     dims_to_string(input.dims()));
  }
}

}  // namespace detail

/// Backward warp: out(c, p) = bilinear sample of input channel c at p + flow(p).
template <typename Scalar>
Tensor<Scalar> warp_bilinear(const Tensor<Scalar>& input, const FlowField<Scalar>& flow) {
  detail::check_warp_shapes(input, flow, "warp_bilinear");
  const Index channels = input.dim(0), height = input.dim(1), width = input.dim(2);
  Tensor<Scalar> out(input.dims());
  for (Index y = 0; y < height; ++y) {
    for (Index x = 0; x < width; ++x) {
      const BilinearTap<Scalar> tap(height, width, static_cast<Scalar>(x) + flow.dx(y, x),
                                    static_cast<Scalar>(y) + flow.dy(y, x));
      for (Index c = 0; c < channels; ++c) out(c, y, x) = tap.sample(input.plane(c));
    }
  }
  return out;
}

/// Transpose of warp_bilinear with respect to its input, applied to
/// `upstream`: each output pixel's value is scattered back with its bilinear
/// weights. `input` only supplies the shape.
template <typename Scalar>
Tensor<Scalar> warp_vjp(const Tensor<Scalar>& input, const FlowField<Scalar>& flow,
                        const Tensor<Scalar>& upstream) {
  detail::check_warp_shapes(input, flow, "warp_vjp");
  require_same_shape(input, upstream, "warp_vjp");
  const Index channels = input.dim(0), height = input.dim(1), width = input.dim(2);
  Tensor<Scalar> grad(input.dims());
  for (Index y = 0; y < height; ++y) {
    for (Index x = 0; x < width; ++x) {
      const BilinearTap<Scalar> tap(height, width, static_cast<Scalar>(x) + flow.dx(y, x),
                                    static_cast<Scalar>(y) + flow.dy(y, x));
      for (Index c = 0; c < channels; ++c) {
        auto plane = grad.plane(c);
        tap.scatter(plane, upstream(c, y, x));
      }
    }
  }
  return grad;
}

/// Area-average the field onto a coarser grid and rescale displacements by
/// the per-axis resolution ratio. Source dims must be integer multiples.
template <typename Scalar>
FlowField<Scalar> downsample_flow(const FlowField<Scalar>& flow, Index target_h, Index target_w) {
  const Index height = flow.height(), width = flow.width();
  if (target_h <= 0 || target_w <= 0 || height % target_h != 0 || width % target_w != 0) {
    throw ShapeError("downsample_flow: " + std::to_string(height) + "x" + std::to_string(width) +
                     " is not an integer multiple of " + std::to_string(target_h) + "x" +
                     std::to_string(target_w));
  }
  const Index ky = height / target_h, kx = width / target_w;
  FlowField<Scalar> out(target_h, target_w);
  const Scalar area = static_cast<Scalar>(ky * kx);
  for (Index c = 0; c < 2; ++c) {
    const Scalar scale = c == 0 ? Scalar(1) / static_cast<Scalar>(kx) : Scalar(1) / static_cast<Scalar>(ky);
    const auto src = flow.tensor().plane(c);
    auto dst = out.tensor().plane(c);
    for (Index y = 0; y < target_h; ++y) {
      for (Index x = 0; x < target_w; ++x) {
        dst(y, x) = src.block(y * ky, x * kx, ky, kx).sum() / area * scale;
      }
    }
  }
  return out;
}

/// Forward-backward consistency check. Pixel p of `fwd`'s grid is occluded
/// iff |fwd(p) + bwd(p + fwd(p))|^2 > alpha1 (|fwd(p)|^2 + |bwd(p + fwd(p))|^2) + alpha2,
/// with bwd sampled bilinearly.
template <typename Scalar>
OcclusionMask<Scalar> occlusion_mask_fb(const FlowField<Scalar>& fwd, const FlowField<Scalar>& bwd,
                                        Scalar alpha1, Scalar alpha2) {
  require_same_shape(fwd.tensor(), bwd.tensor(), "occlusion_mask_fb");
  const Index height = fwd.height(), width = fwd.width();
  Tensor<Scalar> mask({1, height, width});
  const auto bx = bwd.tensor().plane(0);
  const auto by = bwd.tensor().plane(1);
  for (Index y = 0; y < height; ++y) {
    for (Index x = 0; x < width; ++x) {
      const Scalar fx = fwd.dx(y, x), fy = fwd.dy(y, x);
      const BilinearTap<Scalar> tap(height, width, static_cast<Scalar>(x) + fx,
                                    static_cast<Scalar>(y) + fy);
      const Scalar wx = tap.sample(bx), wy = tap.sample(by);
      const Scalar sx = fx + wx, sy = fy + wy;
      const Scalar lhs = sx * sx + sy * sy;
      const Scalar rhs = alpha1 * (fx * fx + fy * fy + wx * wx + wy * wy) + alpha2;
      mask(0, y, x) = lhs > rhs ? Scalar(0) : Scalar(1);
    }
  }
  return OcclusionMask<Scalar>(std::move(mask));
}

/// Forward masks (frame i grid) and backward masks (frame i+1 grid) for every pair.
template <typename Scalar>
MaskSet<Scalar> occlusion_masks(const FlowSet<Scalar>& flows, Scalar alpha1, Scalar alpha2) {
  MaskSet<Scalar> masks;
  for (std::size_t i = 0; i < flows.pairs(); ++i) {
    masks.forward.push_back(occlusion_mask_fb(flows.forward[i], flows.backward[i], alpha1, alpha2));
    masks.backward.push_back(occlusion_mask_fb(flows.backward[i], flows.forward[i], alpha1, alpha2));
  }
  return masks;
}

/// Nearest-neighbour downsampling (centre pixel of each block), re-binarized at 0.5.
template <typename Scalar>
OcclusionMask<Scalar> downsample_mask(const OcclusionMask<Scalar>& mask, Index target_h, Index target_w) {
  const Index height = mask.height(), width = mask.width();
  if (target_h <= 0 || target_w <= 0 || height % target_h != 0 || width % target_w != 0) {
    throw ShapeError("downsample_mask: non-integer factor");
  }
  const Index ky = height / target_h, kx = width / target_w;
  Tensor<Scalar> out({1, target_h, target_w});
  for (Index y = 0; y < target_h; ++y) {
    for (Index x = 0; x < target_w; ++x) {
      out(0, y, x) = mask(y * ky + ky / 2, x * kx + kx / 2) >= Scalar(0.5) ? Scalar(1) : Scalar(0);
    }
  }
  return OcclusionMask<Scalar>(std::move(out));
}

template <typename Scalar>
FlowSet<Scalar> downsample_flows(const FlowSet<Scalar>& flows, Index target_h, Index target_w) {
  FlowSet<Scalar> out;
  for (const auto& f : flows.forward) out.forward.push_back(downsample_flow(f, target_h, target_w));
  for (const auto& f : flows.backward) out.backward.push_back(downsample_flow(f, target_h, target_w));
  return out;
}

template <typename Scalar>
MaskSet<Scalar> downsample_masks(const MaskSet<Scalar>& masks, Index target_h, Index target_w) {
  MaskSet<Scalar> out;
  for (const auto& m : masks.forward) out.forward.push_back(downsample_mask(m, target_h, target_w));
  for (const auto& m : masks.backward) out.backward.push_back(downsample_mask(m, target_h, target_w));
  return out;
}

}  // namespace flowguide
