#include "flowguide/nn/graph.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "flowguide/core/errors.hpp"

namespace flowguide::nn {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMat>;
using ConstRowMap = Eigen::Map<const RowMat>;

struct ConvGeometry {
  Index in_c, height, width, out_c, kernel, stride, pad, out_h, out_w;
  Index rows() const { return in_c * kernel * kernel; }
  Index cols() const { return out_h * out_w; }
};

void im2col(const float* x, const ConvGeometry& g, RowMat& cols) {
  cols.resize(g.rows(), g.cols());
  Index r = 0;
  for (Index c = 0; c < g.in_c; ++c) {
    for (Index ky = 0; ky < g.kernel; ++ky) {
      for (Index kx = 0; kx < g.kernel; ++kx, ++r) {
        float* dst = cols.row(r).data();
        for (Index oy = 0; oy < g.out_h; ++oy) {
          const Index iy = oy * g.stride - g.pad + ky;
          float* row = dst + oy * g.out_w;
          if (iy < 0 || iy >= g.height) {
            std::fill(row, row + g.out_w, 0.0f);
            continue;
          }
          const float* src = x + (c * g.height + iy) * g.width;
          for (Index ox = 0; ox < g.out_w; ++ox) {
            const Index ix = ox * g.stride - g.pad + kx;
            row[ox] = (ix < 0 || ix >= g.width) ? 0.0f : src[ix];
          }
        }
      }
    }
  }
}

void col2im_add(const RowMat& cols, const ConvGeometry& g, float* dx) {
  Index r = 0;
  for (Index c = 0; c < g.in_c; ++c) {
    for (Index ky = 0; ky < g.kernel; ++ky) {
      for (Index kx = 0; kx < g.kernel; ++kx, ++r) {
        const float* srcrow = cols.row(r).data();
        for (Index oy = 0; oy < g.out_h; ++oy) {
          const Index iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.height) continue;
          float* dst = dx + (c * g.height + iy) * g.width;
          const float* row = srcrow + oy * g.out_w;
          for (Index ox = 0; ox < g.out_w; ++ox) {
            const Index ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.width) dst[ix] += row[ox];
          }
        }
      }
    }
  }
}

Index reflect(Index j, Index n) {
  if (n == 1) return 0;
  if (j < 0) j = -j;
  if (j >= n) j = 2 * (n - 1) - j;
  return std::clamp<Index>(j, 0, n - 1);
}

}  // namespace

Var Graph::push(Tensor<float> value, bool requires_grad, std::function<void()> back) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Tensor<float>& Graph::grad_ref(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.empty()) n.grad = Tensor<float>(n.value.dims());
  return n.grad;
}

Tensor<float> Graph::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  return n.grad.empty() ? Tensor<float>(n.value.dims()) : n.grad;
}

Var Graph::input(Tensor<float> value, bool requires_grad) { return push(std::move(value), requires_grad); }

Var Graph::param(std::size_t handle) {
  if (!read_) throw ConfigError("Graph::param without a parameter store");
  const Parameter& p = (*read_)[handle];
  Var v = push(p.value, store_ != nullptr && p.trainable);
  nodes_[v.id].param = static_cast<long>(handle);
  return v;
}

Var Graph::conv2d(Var x, Var w, Var b, int stride) {
  const Tensor<float>& xv = value(x);
  const Tensor<float>& wv = value(w);
  require_rank(xv.rank(), 4, "conv2d input");
  require_rank(wv.rank(), 4, "conv2d weight");
  ConvGeometry g{};
  g.in_c = xv.dim(1);
  g.height = xv.dim(2);
  g.width = xv.dim(3);
  g.out_c = wv.dim(0);
  g.kernel = wv.dim(2);
  g.stride = stride;
  g.pad = g.kernel / 2;
  g.out_h = (g.height + 2 * g.pad - g.kernel) / stride + 1;
  g.out_w = (g.width + 2 * g.pad - g.kernel) / stride + 1;
  if (wv.dim(1) != g.in_c || value(b).size() != g.out_c) throw ShapeError("conv2d: channel mismatch");
  const Index batch = xv.dim(0);

  Tensor<float> out({batch, g.out_c, g.out_h, g.out_w});
  const ConstRowMap wm(wv.data(), g.out_c, g.rows());
  const auto bias = value(b).array().matrix();
  RowMat cols;
  for (Index n = 0; n < batch; ++n) {
    im2col(xv.data() + n * xv.stride0(), g, cols);
    RowMap y(out.data() + n * out.stride0(), g.out_c, g.cols());
    y.noalias() = wm * cols;
    y.colwise() += bias;
  }
  const bool req = needs(x) || needs(w) || needs(b);
  Var self = push(std::move(out), req);
  if (req) {
    nodes_[self.id].back = [this, x, w, b, g, self]() {
      const Tensor<float>& dy_all = nodes_[self.id].grad;
      const Tensor<float>& xv = value(x);
      const ConstRowMap wm(value(w).data(), g.out_c, g.rows());
      const Index batch = xv.dim(0);
      RowMat cols, dcols;
      const Index ystride = g.out_c * g.cols();
      for (Index n = 0; n < batch; ++n) {
        const ConstRowMap dy(dy_all.data() + n * ystride, g.out_c, g.cols());
        if (needs(w)) {
          im2col(xv.data() + n * xv.stride0(), g, cols);
          RowMap dw(grad_ref(w).data(), g.out_c, g.rows());
          dw.noalias() += dy * cols.transpose();
        }
        if (needs(b)) grad_ref(b).array() += dy.rowwise().sum().array();
        if (needs(x)) {
          dcols.noalias() = wm.transpose() * dy;
          col2im_add(dcols, g, grad_ref(x).data() + n * xv.stride0());
        }
      }
    };
  }
  return self;
}

Var Graph::temporal_conv(Var x, Var w, Var b) {
  const Tensor<float>& xv = value(x);
  const Tensor<float>& wv = value(w);
  require_rank(xv.rank(), 4, "temporal_conv input");
  const Index frames = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  if (wv.dims() != Dims{c, c, 3} || value(b).size() != c) throw ShapeError("temporal_conv: weight shape");
  std::array<RowMat, 3> taps;
  for (Index k = 0; k < 3; ++k) {
    taps[k].resize(c, c);
    for (Index o = 0; o < c; ++o)
      for (Index i = 0; i < c; ++i) taps[k](o, i) = wv(o, i, k);
  }
  Tensor<float> out(xv.dims());
  const auto bias = value(b).array().matrix();
  for (Index n = 0; n < frames; ++n) {
    RowMap y(out.data() + n * c * hw, c, hw);
    y.setZero();
    for (Index k = 0; k < 3; ++k) {
      const ConstRowMap src(xv.data() + reflect(n + k - 1, frames) * c * hw, c, hw);
      y.noalias() += taps[k] * src;
    }
    y.colwise() += bias;
  }
  const bool req = needs(x) || needs(w) || needs(b);
  Var self = push(std::move(out), req);
  if (req) {
    nodes_[self.id].back = [this, x, w, b, self, frames, c, hw, taps]() {
      const Tensor<float>& dy_all = nodes_[self.id].grad;
      const Tensor<float>& xv = value(x);
      RowMat dtap(c, c);
      for (Index n = 0; n < frames; ++n) {
        const ConstRowMap dy(dy_all.data() + n * c * hw, c, hw);
        if (needs(b)) grad_ref(b).array() += dy.rowwise().sum().array();
        for (Index k = 0; k < 3; ++k) {
          const Index src = reflect(n + k - 1, frames);
          if (needs(w)) {
            const ConstRowMap xs(xv.data() + src * c * hw, c, hw);
            dtap.noalias() = dy * xs.transpose();
            Tensor<float>& gw = grad_ref(w);
            for (Index o = 0; o < c; ++o)
              for (Index i = 0; i < c; ++i) gw(o, i, k) += dtap(o, i);
          }
          if (needs(x)) {
            RowMap dx(grad_ref(x).data() + src * c * hw, c, hw);
            dx.noalias() += taps[k].transpose() * dy;
          }
        }
      }
    };
  }
  return self;
}

Var Graph::add(Var a, Var b) {
  require_same_shape(value(a), value(b), "graph add");
  Tensor<float> out(value(a).dims(), Tensor<float>::Array(value(a).array() + value(b).array()));
  const bool req = needs(a) || needs(b);
  Var self = push(std::move(out), req);
  if (req) {
    nodes_[self.id].back = [this, a, b, self]() {
      const auto& g = nodes_[self.id].grad.array();
      if (needs(a)) grad_ref(a).array() += g;
      if (needs(b)) grad_ref(b).array() += g;
    };
  }
  return self;
}

Var Graph::scale(Var a, float s) {
  Tensor<float> out(value(a).dims(), Tensor<float>::Array(value(a).array() * s));
  Var self = push(std::move(out), needs(a));
  if (needs(a)) {
    nodes_[self.id].back = [this, a, s, self]() { grad_ref(a).array() += s * nodes_[self.id].grad.array(); };
  }
  return self;
}

Var Graph::add_channel_bias(Var x, Var bias) {
  const Tensor<float>& xv = value(x);
  const Index batch = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  if (value(bias).size() != c) throw ShapeError("add_channel_bias: channel mismatch");
  Tensor<float> out = xv;
  for (Index n = 0; n < batch; ++n)
    for (Index ch = 0; ch < c; ++ch) out.array().segment((n * c + ch) * hw, hw) += value(bias)[ch];
  const bool req = needs(x) || needs(bias);
  Var self = push(std::move(out), req);
  if (req) {
    nodes_[self.id].back = [this, x, bias, self, batch, c, hw]() {
      const auto& g = nodes_[self.id].grad;
      if (needs(x)) grad_ref(x).array() += g.array();
      if (needs(bias)) {
        Tensor<float>& gb = grad_ref(bias);
        for (Index n = 0; n < batch; ++n)
          for (Index ch = 0; ch < c; ++ch) gb[ch] += g.array().segment((n * c + ch) * hw, hw).sum();
      }
    };
  }
  return self;
}

Var Graph::silu(Var x) {
  const auto& xa = value(x).array();
  const Tensor<float>::Array sig = 1.0f / (1.0f + (-xa).exp());
  Tensor<float> out(value(x).dims(), Tensor<float>::Array(xa * sig));
  Var self = push(std::move(out), needs(x));
  if (needs(x)) {
    nodes_[self.id].back = [this, x, self, sig]() {
      const auto& xa = value(x).array();
      grad_ref(x).array() += nodes_[self.id].grad.array() * (sig * (1.0f + xa * (1.0f - sig)));
    };
  }
  return self;
}

Var Graph::leaky_relu(Var x, float slope) {
  const auto& xa = value(x).array();
  Tensor<float> out(value(x).dims(), Tensor<float>::Array((xa > 0.0f).select(xa, slope * xa)));
  Var self = push(std::move(out), needs(x));
  if (needs(x)) {
    nodes_[self.id].back = [this, x, self, slope]() {
      const auto& xa = value(x).array();
      const auto& g = nodes_[self.id].grad.array();
      grad_ref(x).array() += (xa > 0.0f).select(g, slope * g);
    };
  }
  return self;
}

Var Graph::concat_channels(Var a, Var b) {
  const Tensor<float>& av = value(a);
  const Tensor<float>& bv = value(b);
  if (av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(2) || av.dim(3) != bv.dim(3)) {
    throw ShapeError("concat_channels: " + dims_to_string(av.dims()) + " vs " + dims_to_string(bv.dims()));
  }
  const Index batch = av.dim(0), ca = av.dim(1), cb = bv.dim(1), hw = av.dim(2) * av.dim(3);
  Tensor<float> out({batch, ca + cb, av.dim(2), av.dim(3)});
  for (Index n = 0; n < batch; ++n) {
    out.array().segment(n * (ca + cb) * hw, ca * hw) = av.array().segment(n * ca * hw, ca * hw);
    out.array().segment((n * (ca + cb) + ca) * hw, cb * hw) = bv.array().segment(n * cb * hw, cb * hw);
  }
  const bool req = needs(a) || needs(b);
  Var self = push(std::move(out), req);
  if (req) {
    nodes_[self.id].back = [this, a, b, self, batch, ca, cb, hw]() {
      const auto& g = nodes_[self.id].grad.array();
      for (Index n = 0; n < batch; ++n) {
        if (needs(a)) grad_ref(a).array().segment(n * ca * hw, ca * hw) += g.segment(n * (ca + cb) * hw, ca * hw);
        if (needs(b))
          grad_ref(b).array().segment(n * cb * hw, cb * hw) += g.segment((n * (ca + cb) + ca) * hw, cb * hw);
      }
    };
  }
  return self;
}

Var Graph::upsample2(Var x) {
  const Tensor<float>& xv = value(x);
  const Index planes = xv.dim(0) * xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  Tensor<float> out({xv.dim(0), xv.dim(1), 2 * h, 2 * w});
  for (Index p = 0; p < planes; ++p) {
    const float* src = xv.data() + p * h * w;
    float* dst = out.data() + p * 4 * h * w;
    for (Index y = 0; y < 2 * h; ++y)
      for (Index xx = 0; xx < 2 * w; ++xx) dst[y * 2 * w + xx] = src[(y / 2) * w + xx / 2];
  }
  Var self = push(std::move(out), needs(x));
  if (needs(x)) {
    nodes_[self.id].back = [this, x, self, planes, h, w]() {
      const float* g = nodes_[self.id].grad.data();
      float* dx = grad_ref(x).data();
      for (Index p = 0; p < planes; ++p)
        for (Index y = 0; y < 2 * h; ++y)
          for (Index xx = 0; xx < 2 * w; ++xx)
            dx[p * h * w + (y / 2) * w + xx / 2] += g[p * 4 * h * w + y * 2 * w + xx];
    };
  }
  return self;
}

Var Graph::dense(Var x, Var w, Var b) {
  const Tensor<float>& wv = value(w);
  const Index out_n = wv.dim(0), in_n = wv.dim(1);
  if (value(x).size() != in_n || value(b).size() != out_n) throw ShapeError("dense: shape mismatch");
  const ConstRowMap wm(wv.data(), out_n, in_n);
  Tensor<float> out({1, out_n});
  out.array().matrix() = wm * value(x).array().matrix() + value(b).array().matrix();
  const bool req = needs(x) || needs(w) || needs(b);
  Var self = push(std::move(out), req);
  if (req) {
    nodes_[self.id].back = [this, x, w, b, self, out_n, in_n]() {
      const auto g = nodes_[self.id].grad.array().matrix();
      if (needs(w)) {
        RowMap dw(grad_ref(w).data(), out_n, in_n);
        dw.noalias() += g * value(x).array().matrix().transpose();
      }
      if (needs(b)) grad_ref(b).array() += g.array();
      if (needs(x)) {
        const ConstRowMap wm(value(w).data(), out_n, in_n);
        grad_ref(x).array().matrix() += wm.transpose() * g;
      }
    };
  }
  return self;
}

Var Graph::clamp01(Var x) {
  const auto& xa = value(x).array();
  Tensor<float> out(value(x).dims(), Tensor<float>::Array(xa.max(0.0f).min(1.0f)));
  Var self = push(std::move(out), needs(x));
  if (needs(x)) {
    nodes_[self.id].back = [this, x, self]() {
      const auto& xa = value(x).array();
      grad_ref(x).array() += ((xa > 0.0f) && (xa < 1.0f)).select(nodes_[self.id].grad.array(), 0.0f);
    };
  }
  return self;
}

void Graph::backward(Var out, const Tensor<float>& seed) {
  require_same_shape(value(out), seed, "Graph::backward seed");
  if (!needs(out)) return;
  grad_ref(out).array() += seed.array();
  for (int id = out.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.back) n.back();
    if (n.param >= 0 && store_) (*store_)[static_cast<std::size_t>(n.param)].grad.array() += n.grad.array();
  }
}

Tensor<float> sinusoidal_embedding(double t, Index dim) {
  Tensor<float> out({1, dim});
  const Index half = dim / 2;
  for (Index k = 0; k < half; ++k) {
    const double freq = std::pow(10000.0, -static_cast<double>(k) / static_cast<double>(half));
    out[k] = static_cast<float>(std::sin(t * freq));
    out[k + half] = static_cast<float>(std::cos(t * freq));
  }
  return out;
}

}  // namespace flowguide::nn
