#pragma once

#include <cmath>
#include <vector>

#include "flowguide/motion/flow.hpp"

namespace flowguide {

/// WE is reported per pixel-channel and multiplied by this factor.
inline constexpr double kWarpingErrorScale = 1e4;

/// Average warping error of predicted frames [N, C, H, W]:
/// (1/(N-1)) sum_i mean_{c,p} |pred_{i+1} - Warp(pred_i, Ob_i)|, times 1e4.
template <typename Scalar>
double warping_error_metric(const Tensor<Scalar>& pred, const std::vector<FlowField<Scalar>>& backward) {
  require_rank(pred.rank(), 4, "warping_error_metric");
  const Index n = pred.dim(0);
  if (n < 2) throw ShapeError("warping_error_metric: needs at least 2 frames");
  if (static_cast<Index>(backward.size()) != n - 1) throw ShapeError("warping_error_metric: need N-1 flows");
  double total = 0.0;
  for (Index i = 0; i + 1 < n; ++i) {
    const Tensor<Scalar> warped = warp_bilinear(pred.slice(i), backward[i]);
    total += l1_total(pred.slice(i + 1), warped) / static_cast<double>(warped.size());
  }
  return kWarpingErrorScale * total / static_cast<double>(n - 1);
}

/// 10 log10(1 / MSE) for [0, 1] data, capped at 100 dB when MSE < 1e-10.
template <typename Scalar>
double psnr(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a, b, "psnr");
  const double mse =
      (a.array().template cast<double>() - b.array().template cast<double>()).square().mean();
  if (mse < 1e-10) return 100.0;
  return 10.0 * std::log10(1.0 / mse);
}

namespace detail {

/// Normalised 11-tap Gaussian with sigma 1.5.
inline std::vector<double> ssim_kernel() {
  std::vector<double> k(11);
  double sum = 0.0;
  for (int i = 0; i < 11; ++i) {
    k[i] = std::exp(-((i - 5) * (i - 5)) / (2.0 * 1.5 * 1.5));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

using PlaneD = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Separable 'valid' Gaussian filtering.
inline PlaneD gaussian_valid(const PlaneD& in, const std::vector<double>& k) {
  const Index r = static_cast<Index>(k.size());
  const Index oh = in.rows() - r + 1, ow = in.cols() - r + 1;
  PlaneD tmp(in.rows(), ow);
  for (Index y = 0; y < in.rows(); ++y)
    for (Index x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (Index j = 0; j < r; ++j) acc += k[j] * in(y, x + j);
      tmp(y, x) = acc;
    }
  PlaneD out(oh, ow);
  for (Index y = 0; y < oh; ++y)
    for (Index x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (Index j = 0; j < r; ++j) acc += k[j] * tmp(y + j, x);
      out(y, x) = acc;
    }
  return out;
}

}  // namespace detail

/// Mean SSIM over all valid 11x11 Gaussian windows (sigma 1.5) and channels,
/// with C1 = 0.01^2 and C2 = 0.03^2. Frames are [C, H, W], H and W >= 11.
template <typename Scalar>
double ssim(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a, b, "ssim");
  require_rank(a.rank(), 3, "ssim");
  if (a.dim(1) < 11 || a.dim(2) < 11) throw ShapeError("ssim: frames must be at least 11x11");
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const auto k = detail::ssim_kernel();
  double total = 0.0;
  for (Index c = 0; c < a.dim(0); ++c) {
    const detail::PlaneD x = a.plane(c).template cast<double>();
    const detail::PlaneD y = b.plane(c).template cast<double>();
    const detail::PlaneD mx = detail::gaussian_valid(x, k);
    const detail::PlaneD my = detail::gaussian_valid(y, k);
    const detail::PlaneD sxx = detail::gaussian_valid(x * x, k) - mx * mx;
    const detail::PlaneD syy = detail::gaussian_valid(y * y, k) - my * my;
    const detail::PlaneD sxy = detail::gaussian_valid(x * y, k) - mx * my;
    const detail::PlaneD map =
        ((2.0 * mx * my + c1) * (2.0 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
    total += map.mean();
  }
  return total / static_cast<double>(a.dim(0));
}

/// Frame-averaged PSNR and SSIM of two sequences [N, C, H, W].
template <typename Scalar>
double sequence_psnr(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a, b, "sequence_psnr");
  double total = 0.0;
  for (Index i = 0; i < a.dim(0); ++i) total += psnr(a.slice(i), b.slice(i));
  return total / static_cast<double>(a.dim(0));
}

template <typename Scalar>
double sequence_ssim(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a, b, "sequence_ssim");
  double total = 0.0;
  for (Index i = 0; i < a.dim(0); ++i) total += ssim(a.slice(i), b.slice(i));
  return total / static_cast<double>(a.dim(0));
}

}  // namespace flowguide
