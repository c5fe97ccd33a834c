#pragma once

#include <filesystem>
#include <vector>

#include "flowguide/nn/graph.hpp"
#include "flowguide/nn/parameters.hpp"

namespace flowguide {

/// Where the feature-warping fusion sits relative to the temporal conv in
/// each decoder stage.
enum class FusionOrder { kTemporalThenCfw, kCfwThenTemporal };

struct AutoencoderConfig {
  Index image_channels = 3;
  Index latent_channels = 8;
  Index width = 32;  ///< channels of the two coarse stages; the finest uses width / 2
  FusionOrder order = FusionOrder::kTemporalThenCfw;
};

/// Encoder stage outputs kept for feature fusion in the decoder. Stage s has
/// spatial size H / 2^(s+1): stages[0] is the finest.
struct EncoderFeatures {
  std::vector<Tensor<float>> stages;
};

struct Encoded {
  Tensor<float> latent;  ///< [N, Cz, H/8, W/8]
  EncoderFeatures features;
};

/// Convolutional autoencoder with an 8x latent and a temporal-aware decoder.
///
/// Encoder: three stride-2 conv + SiLU stages (widths w/2, w, w) and a 3x3
/// projection to the latent. Decoder, coarse to fine, after a 3x3 input conv:
///   h = silu(conv(h))                                   spatial (frozen when fine-tuning)
///   h += temporal_conv(h)                               over the frame axis
///   h += cfw_weight * conv(concat(h, feature_s))        controllable feature warping
///   h = upsample2(h)
/// and a final 3x3 conv to image channels. Every temporal and fusion conv
/// starts at zero, so a fresh or freshly pretrained decoder is exactly
/// frame-independent. Weight groups are prefixed encoder., decoder.,
/// temporal. and cfw.
class Autoencoder {
 public:
  Autoencoder(AutoencoderConfig config, std::uint64_t seed);

  const AutoencoderConfig& config() const { return config_; }
  nn::ParameterStore& params() { return params_; }
  const nn::ParameterStore& params() const { return params_; }

  /// Frames [N, C, H, W] with H, W divisible by 8.
  Encoded encode(const Tensor<float>& frames) const;
  /// Decoder output clamped to [0, 1]. With `features` null, or when
  /// `temporal_on` is false, the corresponding residual branches are skipped.
  Tensor<float> decode(const Tensor<float>& latent, const EncoderFeatures* features, double cfw_weight,
                       bool temporal_on = true) const;
  /// Spatial-only decoding: what the decoder produces with every temporal
  /// and fusion branch removed.
  Tensor<float> decode_frame_independent(const Tensor<float>& latent) const { return decode(latent, nullptr, 0.0, false); }

  nn::Var encode_graph(nn::Graph& g, nn::Var frames, std::vector<nn::Var>* features) const;
  /// Unclamped decoder output. `features` may be null to skip fusion.
  nn::Var decode_graph(nn::Graph& g, nn::Var latent, const std::vector<nn::Var>* features, double cfw_weight,
                       bool temporal_on) const;

  void save(const std::filesystem::path& path) const;
  static Autoencoder load(const std::filesystem::path& path);

 private:
  struct Conv {
    std::size_t w, b;
  };
  struct Stage {
    Conv spatial, temporal, cfw;
    Index channels, feature_channels;
  };

  Conv add_conv(const std::string& name, Index out, Index in, nn::Init init, Prng& rng);
  nn::Var conv(nn::Graph& g, nn::Var x, const Conv& c, int stride = 1) const;
  void check_frames(const Tensor<float>& frames) const;

  AutoencoderConfig config_;
  nn::ParameterStore params_;
  std::vector<Conv> enc_;  ///< three stride-2 stages
  Conv enc_out_, dec_in_, dec_out_;
  std::vector<Stage> dec_;  ///< coarse to fine
};

/// Per-frame patch discriminator: conv s2 + leaky ReLU, conv s2 + leaky ReLU,
/// conv to a one-channel logit map. Parameters are prefixed disc.
class Discriminator {
 public:
  Discriminator(Index image_channels, Index width, std::uint64_t seed);

  nn::ParameterStore& params() { return params_; }
  const nn::ParameterStore& params() const { return params_; }
  nn::Var forward(nn::Graph& g, nn::Var frames) const;

 private:
  nn::ParameterStore params_;
  std::size_t w1_, b1_, w2_, b2_, w3_, b3_;
};

}  // namespace flowguide
