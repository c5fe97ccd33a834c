#pragma once

// Brute-force reference implementations. They share no code with the library
// beyond the Tensor container and work in double throughout.

#include <algorithm>
#include <cmath>
#include <vector>

#include "flowguide/core/prng.hpp"
#include "flowguide/core/tensor.hpp"
#include "flowguide/motion/flow.hpp"

namespace oracle {

using flowguide::Index;
using flowguide::Tensor;

/// Clamp-to-edge bilinear sample of plane c of a [C, H, W] tensor.
template <typename S>
double sample(const Tensor<S>& img, Index c, double x, double y) {
  const Index h = img.dim(1), w = img.dim(2);
  x = std::min(std::max(x, 0.0), static_cast<double>(w - 1));
  y = std::min(std::max(y, 0.0), static_cast<double>(h - 1));
  const Index x0 = static_cast<Index>(std::floor(x)), y0 = static_cast<Index>(std::floor(y));
  const Index x1 = x0 + 1 < w ? x0 + 1 : x0, y1 = y0 + 1 < h ? y0 + 1 : y0;
  const double ax = x - static_cast<double>(x0), ay = y - static_cast<double>(y0);
  const double top = (1 - ax) * static_cast<double>(img(c, y0, x0)) + ax * static_cast<double>(img(c, y0, x1));
  const double bot = (1 - ax) * static_cast<double>(img(c, y1, x0)) + ax * static_cast<double>(img(c, y1, x1));
  return (1 - ay) * top + ay * bot;
}

template <typename S>
Tensor<double> warp(const Tensor<S>& img, const flowguide::FlowField<S>& f) {
  Tensor<double> out(img.dims());
  for (Index c = 0; c < img.dim(0); ++c)
    for (Index y = 0; y < img.dim(1); ++y)
      for (Index x = 0; x < img.dim(2); ++x)
        out(c, y, x) = sample(img, c, static_cast<double>(x) + static_cast<double>(f.dx(y, x)),
                              static_cast<double>(y) + static_cast<double>(f.dy(y, x)));
  return out;
}

inline double rho(double r, double eps) { return eps == 0.0 ? std::abs(r) : std::sqrt(r * r + eps * eps) - eps; }

/// Masked two-direction warping energy on [N, C, h, w], nested loops.
template <typename S>
double energy(const Tensor<S>& z, const flowguide::FlowSet<S>& flows, const flowguide::MaskSet<S>& masks, double eps) {
  const Index n = z.dim(0), c = z.dim(1), h = z.dim(2), w = z.dim(3);
  double total = 0.0;
  for (Index i = 0; i + 1 < n; ++i) {
    const Tensor<double> wb = warp(z.slice(i), flows.backward[i]);
    const Tensor<double> wf = warp(z.slice(i + 1), flows.forward[i]);
    for (Index ch = 0; ch < c; ++ch)
      for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) {
          total += static_cast<double>(masks.backward[i](y, x)) *
                   rho(wb(ch, y, x) - static_cast<double>(z(i + 1, ch, y, x)), eps);
          total += static_cast<double>(masks.forward[i](y, x)) *
                   rho(wf(ch, y, x) - static_cast<double>(z(i, ch, y, x)), eps);
        }
  }
  return total;
}

/// (1/(N-1)) sum_i mean |pred_{i+1} - Warp(pred_i, b_i)| * 1e4.
template <typename S>
double warping_error(const Tensor<S>& pred, const std::vector<flowguide::FlowField<S>>& backward) {
  const Index n = pred.dim(0);
  double total = 0.0;
  for (Index i = 0; i + 1 < n; ++i) {
    const Tensor<double> wp = warp(pred.slice(i), backward[i]);
    double acc = 0.0;
    for (Index k = 0; k < wp.size(); ++k) acc += std::abs(static_cast<double>(pred[(i + 1) * wp.size() + k]) - wp[k]);
    total += acc / static_cast<double>(wp.size());
  }
  return 1e4 * total / static_cast<double>(n - 1);
}

template <typename S>
double frame_diff(const Tensor<S>& pred, const Tensor<S>& gt) {
  double total = 0.0;
  for (Index i = 0; i + 1 < pred.dim(0); ++i)
    for (Index c = 0; c < pred.dim(1); ++c)
      for (Index y = 0; y < pred.dim(2); ++y)
        for (Index x = 0; x < pred.dim(3); ++x) {
          const double dp = static_cast<double>(pred(i + 1, c, y, x)) - static_cast<double>(pred(i, c, y, x));
          const double dg = static_cast<double>(gt(i + 1, c, y, x)) - static_cast<double>(gt(i, c, y, x));
          total += std::abs(dp - dg);
        }
  return total;
}

/// Sobel magnitude normalised by its max, single channel [1, H, W] frame;
/// returns W = 1 + w S as [H][W].
template <typename S>
std::vector<std::vector<double>> structure_weight(const Tensor<S>& frame, double w) {
  const Index h = frame.dim(1), wd = frame.dim(2);
  auto at = [&](Index y, Index x) {
    y = std::min(std::max<Index>(y, 0), h - 1);
    x = std::min(std::max<Index>(x, 0), wd - 1);
    return static_cast<double>(frame(0, y, x));
  };
  std::vector<std::vector<double>> s(h, std::vector<double>(wd));
  double peak = 0.0;
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < wd; ++x) {
      const double gx = (at(y - 1, x + 1) + 2 * at(y, x + 1) + at(y + 1, x + 1)) -
                        (at(y - 1, x - 1) + 2 * at(y, x - 1) + at(y + 1, x - 1));
      const double gy = (at(y + 1, x - 1) + 2 * at(y + 1, x) + at(y + 1, x + 1)) -
                        (at(y - 1, x - 1) + 2 * at(y - 1, x) + at(y - 1, x + 1));
      s[y][x] = std::sqrt(gx * gx + gy * gy);
      peak = std::max(peak, s[y][x]);
    }
  for (auto& row : s)
    for (double& v : row) v = 1.0 + w * (peak > 0 ? v / peak : 0.0);
  return s;
}

/// Structure-weighted consistency on single-channel sequences, stepwise.
template <typename S>
double swc(const Tensor<S>& pred, const Tensor<S>& gt, const flowguide::FlowSet<S>& flows,
           const flowguide::MaskSet<S>& masks, double w) {
  const Index n = pred.dim(0), h = pred.dim(2), wd = pred.dim(3);
  std::vector<std::vector<std::vector<double>>> weights;
  for (Index i = 0; i < n; ++i) weights.push_back(structure_weight(gt.slice(i), w));
  double total = 0.0;
  for (Index i = 0; i + 1 < n; ++i) {
    const Tensor<double> wp = warp(pred.slice(i), flows.backward[i]);
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < wd; ++x) {
        const double r = wp(0, y, x) - static_cast<double>(pred(i + 1, 0, y, x));
        total += static_cast<double>(masks.backward[i](y, x)) * weights[i + 1][y][x] * std::abs(r);
      }
  }
  for (Index i = 1; i + 1 < n; ++i) {
    const Tensor<double> wp = warp(pred.slice(i), flows.forward[i]);
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < wd; ++x) {
        const double r = wp(0, y, x) - static_cast<double>(pred(i - 1, 0, y, x));
        total += static_cast<double>(masks.forward[i](y, x)) * weights[i - 1][y][x] * std::abs(r);
      }
  }
  return total;
}

/// SSIM with explicit 11x11 window sums at each valid position.
template <typename S>
double ssim(const Tensor<S>& a, const Tensor<S>& b) {
  double g[11][11], norm = 0.0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) norm += g[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / 4.5);
  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0.0;
  const Index oh = a.dim(1) - 10, ow = a.dim(2) - 10;
  for (Index c = 0; c < a.dim(0); ++c) {
    double sum = 0.0;
    for (Index y = 0; y < oh; ++y)
      for (Index x = 0; x < ow; ++x) {
        double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
        for (int i = 0; i < 11; ++i)
          for (int j = 0; j < 11; ++j) {
            const double wgt = g[i][j] / norm;
            const double u = static_cast<double>(a(c, y + i, x + j)), v = static_cast<double>(b(c, y + i, x + j));
            mx += wgt * u;
            my += wgt * v;
            xx += wgt * u * u;
            yy += wgt * v * v;
            xy += wgt * u * v;
          }
        const double vx = xx - mx * mx, vy = yy - my * my, cov = xy - mx * my;
        sum += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      }
    total += sum / static_cast<double>(oh * ow);
  }
  return total / static_cast<double>(a.dim(0));
}

template <typename S>
Tensor<S> random_tensor(const flowguide::Dims& dims, flowguide::Prng& rng, double lo = 0.0, double hi = 1.0) {
  Tensor<S> t(dims);
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<S>(lo + (hi - lo) * rng.uniform());
  return t;
}

template <typename S>
flowguide::FlowField<S> random_flow(Index h, Index w, flowguide::Prng& rng, double amp) {
  flowguide::FlowField<S> f(h, w);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      f.dx(y, x) = static_cast<S>(amp * (2 * rng.uniform() - 1));
      f.dy(y, x) = static_cast<S>(amp * (2 * rng.uniform() - 1));
    }
  return f;
}

template <typename S>
flowguide::OcclusionMask<S> random_mask(Index h, Index w, flowguide::Prng& rng, double p_valid = 0.8) {
  Tensor<S> t({1, h, w});
  for (Index i = 0; i < t.size(); ++i) t[i] = rng.uniform() < p_valid ? S(1) : S(0);
  return flowguide::OcclusionMask<S>(t);
}

template <typename S>
flowguide::FlowSet<S> random_flows(Index n, Index h, Index w, flowguide::Prng& rng, double amp) {
  flowguide::FlowSet<S> fs;
  for (Index i = 0; i + 1 < n; ++i) {
    fs.forward.push_back(random_flow<S>(h, w, rng, amp));
    fs.backward.push_back(random_flow<S>(h, w, rng, amp));
  }
  return fs;
}

template <typename S>
flowguide::MaskSet<S> random_masks(Index n, Index h, Index w, flowguide::Prng& rng, double p_valid = 0.8) {
  flowguide::MaskSet<S> ms;
  for (Index i = 0; i + 1 < n; ++i) {
    ms.forward.push_back(random_mask<S>(h, w, rng, p_valid));
    ms.backward.push_back(random_mask<S>(h, w, rng, p_valid));
  }
  return ms;
}

}  // namespace oracle
