#pragma once

#include <cmath>

#include "flowguide/motion/flow.hpp"

namespace flowguide {

/// Shifted Charbonnier penalty sqrt(r^2 + eps^2) - eps; plain |r| when eps == 0.
template <typename Scalar>
Scalar charbonnier(Scalar r, double eps) {
  if (eps == 0.0) return std::abs(r);
  const Scalar e = static_cast<Scalar>(eps);
  return std::sqrt(r * r + e * e) - e;
}

template <typename Scalar>
Scalar charbonnier_derivative(Scalar r, double eps) {
  if (eps == 0.0) return r > Scalar(0) ? Scalar(1) : (r < Scalar(0) ? Scalar(-1) : Scalar(0));
  const Scalar e = static_cast<Scalar>(eps);
  return r / std::sqrt(r * r + e * e);
}

namespace detail {

/// Visits every masked warping term of the latent energy as
/// (source frame, target frame, flow, mask), 0-based:
///   backward terms  source i,   target i+1, flow backward[i], mask backward[i]
///   forward terms   source i+1, target i,   flow forward[i],  mask forward[i]
template <typename Scalar, typename Visit>
void for_each_warp_term(const Tensor<Scalar>& z, const FlowSet<Scalar>& flows, const MaskSet<Scalar>& masks,
                        Visit&& visit) {
  require_rank(z.rank(), 4, "warping_energy");
  const Index n = z.dim(0);
  if (n < 2) throw ShapeError("warping_energy: needs at least 2 frames");
  flows.check(n);
  if (masks.forward.size() != flows.pairs() || masks.backward.size() != flows.pairs()) {
    throw ShapeError("warping_energy: mask count does not match flows");
  }
  for (Index i = 0; i + 1 < n; ++i) {
    visit(i, i + 1, flows.backward[i], masks.backward[i]);
    visit(i + 1, i, flows.forward[i], masks.forward[i]);
  }
}

template <typename Scalar>
void check_mask_grid(const OcclusionMask<Scalar>& mask, Index h, Index w) {
  if (mask.height() != h || mask.width() != w) throw ShapeError("warping_energy: mask grid mismatch");
}

}  // namespace detail

/// Masked warping energy of a latent sequence z [N, C, h, w]:
///   sum_i | Mb_i * (Warp(z_i, Ob_i) - z_{i+1}) |  +  sum_i | Mf_i * (Warp(z_{i+1}, Of_i) - z_i) |
/// with masks broadcast over channels and |.| the shifted Charbonnier penalty
/// of width `eps` (eps = 0 gives the plain L1 norm). Accumulated in double.
template <typename Scalar>
double warping_energy(const Tensor<Scalar>& z, const FlowSet<Scalar>& flows, const MaskSet<Scalar>& masks,
                      double eps) {
  double total = 0.0;
  detail::for_each_warp_term(z, flows, masks,
                             [&](Index src, Index tgt, const FlowField<Scalar>& flow, const OcclusionMask<Scalar>& mask) {
                               const Tensor<Scalar> source = z.slice(src);
                               const Tensor<Scalar> warped = warp_bilinear(source, flow);
                               const Index c = z.dim(1), h = z.dim(2), w = z.dim(3);
                               detail::check_mask_grid(mask, h, w);
                               const Scalar* target = z.data() + tgt * z.stride0();
                               for (Index ch = 0; ch < c; ++ch)
                                 for (Index y = 0; y < h; ++y)
                                   for (Index x = 0; x < w; ++x) {
                                     if (mask(y, x) == Scalar(0)) continue;
                                     const Scalar r = warped(ch, y, x) - target[(ch * h + y) * w + x];
                                     total += static_cast<double>(mask(y, x) * charbonnier(r, eps));
                                   }
                             });
  return total;
}

/// Analytic gradient of warping_energy with respect to every latent entry.
/// Each term contributes -M rho'(r) to its target frame and the transposed
/// bilinear scatter of M rho'(r) to its source frame.
template <typename Scalar>
Tensor<Scalar> warping_energy_grad(const Tensor<Scalar>& z, const FlowSet<Scalar>& flows,
                                   const MaskSet<Scalar>& masks, double eps) {
  Tensor<Scalar> grad(z.dims());
  detail::for_each_warp_term(z, flows, masks,
                             [&](Index src, Index tgt, const FlowField<Scalar>& flow, const OcclusionMask<Scalar>& mask) {
                               const Tensor<Scalar> source = z.slice(src);
                               const Tensor<Scalar> warped = warp_bilinear(source, flow);
                               const Index c = z.dim(1), h = z.dim(2), w = z.dim(3), m = z.stride0();
                               detail::check_mask_grid(mask, h, w);
                               Tensor<Scalar> upstream(source.dims());
                               for (Index ch = 0; ch < c; ++ch)
                                 for (Index y = 0; y < h; ++y)
                                   for (Index x = 0; x < w; ++x) {
                                     const Index k = (ch * h + y) * w + x;
                                     const Scalar r = warped[k] - z[tgt * m + k];
                                     upstream[k] = mask(y, x) * charbonnier_derivative(r, eps);
                                   }
                               grad.array().segment(tgt * m, m) -= upstream.array();
                               grad.array().segment(src * m, m) += warp_vjp(source, flow, upstream).array();
                             });
  return grad;
}

}  // namespace flowguide
