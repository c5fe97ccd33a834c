#pragma once

#include <functional>
#include <vector>

#include "flowguide/core/tensor.hpp"
#include "flowguide/nn/parameters.hpp"

namespace flowguide::nn {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Single-use reverse-mode tape over [B, C, H, W] float tensors. Build the
/// forward pass with the op methods, seed an output gradient with
/// `backward`, and parameter gradients are accumulated into the store.
/// Frozen (non-trainable) parameters receive no gradient, and data gradients
/// are only propagated into nodes that need them.
class Graph {
 public:
  /// Training graph: gradients of trainable parameters go to `store`.
  explicit Graph(ParameterStore* store = nullptr) : store_(store), read_(store) {}
  /// Inference graph: parameters are read-only and nothing tracks gradients.
  explicit Graph(const ParameterStore& store) : store_(nullptr), read_(&store) {}

  Var input(Tensor<float> value, bool requires_grad = false);
  Var param(std::size_t handle);

  const Tensor<float>& value(Var v) const { return nodes_.at(v.id).value; }
  /// Gradient after `backward`; zero tensor if none reached the node.
  Tensor<float> grad(Var v) const;

  /// 2-D convolution, square kernel, zero padding k/2.
  /// x [B, Ci, H, W], w [Co, Ci, k, k], b [Co].
  Var conv2d(Var x, Var w, Var b, int stride = 1);
  /// Kernel-3 convolution over the frame axis B at every spatial site with
  /// reflect padding at the sequence ends. w [C, C, 3], b [C].
  Var temporal_conv(Var x, Var w, Var b);
  Var add(Var a, Var b);
  Var scale(Var a, float s);
  /// x [B, C, H, W] + bias [1, C] broadcast.
  Var add_channel_bias(Var x, Var bias);
  Var silu(Var x);
  Var leaky_relu(Var x, float slope = 0.2f);
  Var concat_channels(Var a, Var b);
  Var upsample2(Var x);
  /// x [1, In], w [Out, In], b [Out] -> [1, Out].
  Var dense(Var x, Var w, Var b);
  /// Clamp to [0, 1]; gradient passes only strictly inside the interval.
  Var clamp01(Var x);

  /// Reverse sweep from `out` seeded with d(loss)/d(out).
  void backward(Var out, const Tensor<float>& seed);

 private:
  struct Node {
    Tensor<float> value;
    Tensor<float> grad;
    bool requires_grad = false;
    long param = -1;
    std::function<void()> back;
  };

  Var push(Tensor<float> value, bool requires_grad, std::function<void()> back = {});
  bool needs(Var v) const { return nodes_[v.id].requires_grad; }
  Tensor<float>& grad_ref(Var v);

  ParameterStore* store_;
  const ParameterStore* read_;
  std::vector<Node> nodes_;
};

/// Sinusoidal embedding of a scalar time value: [sin(t w_k), cos(t w_k)] with
/// w_k = 10000^(-k / (dim/2)).
Tensor<float> sinusoidal_embedding(double t, Index dim);

}  // namespace flowguide::nn
