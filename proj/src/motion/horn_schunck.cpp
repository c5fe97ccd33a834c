#include "flowguide/motion/horn_schunck.hpp"

#include <algorithm>
#include <cmath>

namespace flowguide {

namespace {

using Plane = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Index clampi(Index v, Index hi) { return std::clamp<Index>(v, 0, hi - 1); }

Plane to_plane(const Tensor<float>& frame) {
  const Tensor<float> lum = luminance(frame);
  return lum.plane(0).cast<double>() * 255.0;
}

/// [1 2 1]/4 separable blur followed by 2x decimation; odd sizes round up.
Plane reduce(const Plane& in) {
  const Index h = in.rows(), w = in.cols();
  const Index oh = (h + 1) / 2, ow = (w + 1) / 2;
  Plane out(oh, ow);
  for (Index y = 0; y < oh; ++y) {
    for (Index x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const double wgt = (dy == 0 ? 2.0 : 1.0) * (dx == 0 ? 2.0 : 1.0) / 16.0;
          acc += wgt * in(clampi(2 * y + dy, h), clampi(2 * x + dx, w));
        }
      }
      out(y, x) = acc;
    }
  }
  return out;
}

/// Bilinear resize with pixel-centre alignment.
Plane resize(const Plane& in, Index oh, Index ow) {
  const Index h = in.rows(), w = in.cols();
  Plane out(oh, ow);
  const double sy = static_cast<double>(h) / oh, sx = static_cast<double>(w) / ow;
  for (Index y = 0; y < oh; ++y) {
    for (Index x = 0; x < ow; ++x) {
      const BilinearTap<double> tap(h, w, (x + 0.5) * sx - 0.5, (y + 0.5) * sy - 0.5);
      out(y, x) = tap.sample(in);
    }
  }
  return out;
}

Plane warp_plane(const Plane& img, const Plane& u, const Plane& v) {
  const Index h = img.rows(), w = img.cols();
  Plane out(h, w);
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      const BilinearTap<double> tap(h, w, x + u(y, x), y + v(y, x));
      out(y, x) = tap.sample(img);
    }
  }
  return out;
}

void gradients(const Plane& img, Plane& gx, Plane& gy) {
  const Index h = img.rows(), w = img.cols();
  gx.resize(h, w);
  gy.resize(h, w);
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      gx(y, x) = 0.5 * (img(y, clampi(x + 1, w)) - img(y, clampi(x - 1, w)));
      gy(y, x) = 0.5 * (img(clampi(y + 1, h), x) - img(clampi(y - 1, h), x));
    }
  }
}

/// Horn-Schunck neighbourhood average (1/6 edge, 1/12 corner neighbours).
Plane neighbour_average(const Plane& f) {
  const Index h = f.rows(), w = f.cols();
  Plane out(h, w);
  for (Index y = 0; y < h; ++y) {
    const Index yu = clampi(y - 1, h), yd = clampi(y + 1, h);
    for (Index x = 0; x < w; ++x) {
      const Index xl = clampi(x - 1, w), xr = clampi(x + 1, w);
      out(y, x) = (f(yu, x) + f(yd, x) + f(y, xl) + f(y, xr)) / 6.0 +
                  (f(yu, xl) + f(yu, xr) + f(yd, xl) + f(yd, xr)) / 12.0;
    }
  }
  return out;
}

double median_of(std::vector<double>& window) {
  const auto mid = window.begin() + static_cast<std::ptrdiff_t>(window.size() / 2);
  std::nth_element(window.begin(), mid, window.end());
  return *mid;
}

/// Square median filter with replicated borders.
Plane median_filter(const Plane& f, int radius) {
  if (radius <= 0) return f;
  const Index h = f.rows(), w = f.cols();
  Plane out(h, w);
  std::vector<double> window;
  window.reserve(static_cast<std::size_t>((2 * radius + 1) * (2 * radius + 1)));
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      window.clear();
      for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) window.push_back(f(clampi(y + dy, h), clampi(x + dx, w)));
      out(y, x) = median_of(window);
    }
  }
  return out;
}

}  // namespace

Tensor<float> luminance(const Tensor<float>& frame) {
  require_rank(frame.rank(), 3, "luminance");
  const Index c = frame.dim(0), h = frame.dim(1), w = frame.dim(2);
  if (c == 1) return frame;
  if (c != 3) throw ShapeError("luminance: expected 1 or 3 channels");
  Tensor<float> out({1, h, w});
  out.plane(0) = 0.299f * frame.plane(0) + 0.587f * frame.plane(1) + 0.114f * frame.plane(2);
  return out;
}

FlowField<float> estimate_flow(const Tensor<float>& src, const Tensor<float>& dst,
                               const FlowSolverParams& params) {
  require_same_shape(src, dst, "estimate_flow");
  require_rank(src.rank(), 3, "estimate_flow");
  if (params.levels < 1 || params.iterations < 0 || params.smoothness <= 0.0 || params.warps < 1 ||
      params.median_radius < 0) {
    throw ConfigError("estimate_flow: invalid solver parameters");
  }
  std::vector<Plane> src_pyr{to_plane(src)}, dst_pyr{to_plane(dst)};
  for (int l = 1; l < params.levels; ++l) {
    if (std::min(src_pyr.back().rows(), src_pyr.back().cols()) < 8) break;
    src_pyr.push_back(reduce(src_pyr.back()));
    dst_pyr.push_back(reduce(dst_pyr.back()));
  }

  const double alpha2 = params.smoothness * params.smoothness;
  Plane u = Plane::Zero(src_pyr.back().rows(), src_pyr.back().cols());
  Plane v = u;
  for (int l = static_cast<int>(src_pyr.size()) - 1; l >= 0; --l) {
    const Plane& s = src_pyr[l];
    const Plane& d = dst_pyr[l];
    const Index h = s.rows(), w = s.cols();
    if (u.rows() != h || u.cols() != w) {
      const double fy = static_cast<double>(h) / u.rows(), fx = static_cast<double>(w) / u.cols();
      u = resize(u, h, w) * fx;
      v = resize(v, h, w) * fy;
    }
    Plane sx, sy;
    gradients(s, sx, sy);
    for (int pass = 0; pass < params.warps && params.iterations > 0; ++pass) {
      const Plane dw = warp_plane(d, u, v);
      Plane dx, dy;
      gradients(dw, dx, dy);
      const Plane ix = 0.5 * (sx + dx);
      const Plane iy = 0.5 * (sy + dy);
      const Plane it = dw - s;
      const Plane denom = alpha2 + ix.square() + iy.square();
      const Plane u0 = u, v0 = v;
      for (int k = 0; k < params.iterations; ++k) {
        const Plane ub = neighbour_average(u);
        const Plane vb = neighbour_average(v);
        const Plane r = (it + ix * (ub - u0) + iy * (vb - v0)) / denom;
        u = ub - ix * r;
        v = vb - iy * r;
      }
      u = median_filter(u, params.median_radius);
      v = median_filter(v, params.median_radius);
    }
  }

  const Index h = src.dim(1), w = src.dim(2);
  const double bound = static_cast<double>(std::max(h, w));
  FlowField<float> flow(h, w);
  flow.tensor().plane(0) = u.cwiseMax(-bound).cwiseMin(bound).cast<float>();
  flow.tensor().plane(1) = v.cwiseMax(-bound).cwiseMin(bound).cast<float>();
  return flow;
}

FlowSet<float> estimate_flows(const Tensor<float>& frames, const FlowSolverParams& params) {
  require_rank(frames.rank(), 4, "estimate_flows");
  FlowSet<float> flows;
  for (Index i = 0; i + 1 < frames.dim(0); ++i) {
    const Tensor<float> a = frames.slice(i), b = frames.slice(i + 1);
    flows.forward.push_back(estimate_flow(a, b, params));
    flows.backward.push_back(estimate_flow(b, a, params));
  }
  return flows;
}

}  // namespace flowguide
