#include "flowguide/decoder/autoencoder.hpp"

#include <cmath>

#include "flowguide/core/errors.hpp"

namespace flowguide {

namespace {

constexpr int kEncoderStages = 3;

Tensor<float> meta_value(float v) { return Tensor<float>({1}, v); }

Index meta_index(const nn::Checkpoint& ckpt, const std::string& name) {
  if (!ckpt.has(name)) throw IoError("autoencoder checkpoint is missing " + name);
  return static_cast<Index>(std::lround(ckpt.get(name)[0]));
}

}  // namespace

Autoencoder::Conv Autoencoder::add_conv(const std::string& name, Index out, Index in, nn::Init init, Prng& rng) {
  Conv c{};
  c.w = params_.add(name + ".w", {out, in, 3, 3}, init, rng);
  c.b = params_.add(name + ".b", {out}, nn::Init::kZero, rng);
  return c;
}

Autoencoder::Autoencoder(AutoencoderConfig config, std::uint64_t seed) : config_(config) {
  if (config_.image_channels != 1 && config_.image_channels != 3) throw ConfigError("autoencoder: image channels must be 1 or 3");
  if (config_.latent_channels <= 0 || config_.width < 2 || config_.width % 2 != 0) {
    throw ConfigError("autoencoder: latent channels must be positive and width even");
  }
  Prng rng(seed);
  using nn::Init;
  const Index w = config_.width, half = w / 2;
  const Index enc_width[kEncoderStages] = {half, w, w};
  Index in = config_.image_channels;
  for (int s = 0; s < kEncoderStages; ++s) {
    enc_.push_back(add_conv("encoder.stage" + std::to_string(s), enc_width[s], in, Init::kHe, rng));
    in = enc_width[s];
  }
  enc_out_ = add_conv("encoder.out", config_.latent_channels, w, Init::kHe, rng);

  dec_in_ = add_conv("decoder.in", w, config_.latent_channels, Init::kHe, rng);
  in = w;
  for (int s = 0; s < kEncoderStages; ++s) {
    Stage st{};
    st.channels = s == kEncoderStages - 1 ? half : w;
    st.feature_channels = enc_width[kEncoderStages - 1 - s];
    const std::string idx = std::to_string(s);
    st.spatial = add_conv("decoder.stage" + idx, st.channels, in, Init::kHe, rng);
    st.temporal.w = params_.add("temporal.stage" + idx + ".w", {st.channels, st.channels, 3}, Init::kZero, rng);
    st.temporal.b = params_.add("temporal.stage" + idx + ".b", {st.channels}, Init::kZero, rng);
    st.cfw = add_conv("cfw.stage" + idx, st.channels, st.channels + st.feature_channels, Init::kZero, rng);
    dec_.push_back(st);
    in = st.channels;
  }
  dec_out_ = add_conv("decoder.out", config_.image_channels, half, Init::kHe, rng);
}

nn::Var Autoencoder::conv(nn::Graph& g, nn::Var x, const Conv& c, int stride) const {
  return g.conv2d(x, g.param(c.w), g.param(c.b), stride);
}

void Autoencoder::check_frames(const Tensor<float>& frames) const {
  require_rank(frames.rank(), 4, "autoencoder frames");
  if (frames.dim(1) != config_.image_channels) throw ShapeError("autoencoder: frame channel count does not match");
  if (frames.dim(2) % 8 != 0 || frames.dim(3) % 8 != 0) {
    throw ShapeError("autoencoder: frame size " + std::to_string(frames.dim(2)) + "x" + std::to_string(frames.dim(3)) +
                     " is not divisible by 8");
  }
}

nn::Var Autoencoder::encode_graph(nn::Graph& g, nn::Var frames, std::vector<nn::Var>* features) const {
  // Frames live in [0, 1]; centre them.
  nn::Var h = g.add_channel_bias(g.scale(frames, 2.0f),
                                 g.input(Tensor<float>({1, config_.image_channels}, -1.0f)));
  if (features) features->clear();
  for (const Conv& c : enc_) {
    h = g.silu(conv(g, h, c, 2));
    if (features) features->push_back(h);
  }
  return conv(g, h, enc_out_);
}

nn::Var Autoencoder::decode_graph(nn::Graph& g, nn::Var latent, const std::vector<nn::Var>* features,
                                  double cfw_weight, bool temporal_on) const {
  if (features && features->size() != static_cast<std::size_t>(kEncoderStages)) {
    throw ShapeError("autoencoder: expected one feature map per encoder stage");
  }
  nn::Var h = conv(g, latent, dec_in_);
  for (int s = 0; s < kEncoderStages; ++s) {
    const Stage& st = dec_[static_cast<std::size_t>(s)];
    h = g.silu(conv(g, h, st.spatial));
    auto temporal = [&] {
      if (temporal_on) h = g.add(h, g.temporal_conv(h, g.param(st.temporal.w), g.param(st.temporal.b)));
    };
    auto fuse = [&] {
      if (!features || cfw_weight == 0.0) return;
      const nn::Var feat = (*features)[static_cast<std::size_t>(kEncoderStages - 1 - s)];
      const Tensor<float>& fv = g.value(feat);
      const Tensor<float>& hv = g.value(h);
      if (fv.dim(0) != hv.dim(0)) throw ShapeError("autoencoder: latent and feature frame counts differ");
      if (fv.dim(2) != hv.dim(2) || fv.dim(3) != hv.dim(3)) throw ShapeError("autoencoder: feature grid mismatch");
      const nn::Var delta = conv(g, g.concat_channels(h, feat), st.cfw);
      h = g.add(h, g.scale(delta, static_cast<float>(cfw_weight)));
    };
    if (config_.order == FusionOrder::kTemporalThenCfw) {
      temporal();
      fuse();
    } else {
      fuse();
      temporal();
    }
    h = g.upsample2(h);
  }
  return conv(g, h, dec_out_);
}

Encoded Autoencoder::encode(const Tensor<float>& frames) const {
  check_frames(frames);
  nn::Graph g(params_);
  std::vector<nn::Var> feats;
  const nn::Var z = encode_graph(g, g.input(frames), &feats);
  Encoded out{g.value(z), {}};
  for (const nn::Var f : feats) out.features.stages.push_back(g.value(f));
  return out;
}

Tensor<float> Autoencoder::decode(const Tensor<float>& latent, const EncoderFeatures* features, double cfw_weight,
                                  bool temporal_on) const {
  require_rank(latent.rank(), 4, "autoencoder latent");
  if (latent.dim(1) != config_.latent_channels) throw ShapeError("autoencoder: latent channel count does not match");
  if (!(cfw_weight >= 0.0 && cfw_weight <= 1.0)) throw ConfigError("cfw_weight must be in [0, 1]");
  nn::Graph g(params_);
  std::vector<nn::Var> feats;
  if (features) {
    if (features->stages.size() != static_cast<std::size_t>(kEncoderStages)) {
      throw ShapeError("autoencoder: expected one feature map per encoder stage");
    }
    for (const Tensor<float>& f : features->stages) {
      if (f.dim(0) != latent.dim(0)) throw ShapeError("autoencoder: latent and feature frame counts differ");
      feats.push_back(g.input(f));
    }
  }
  const nn::Var out = decode_graph(g, g.input(latent), features ? &feats : nullptr, cfw_weight, temporal_on);
  return g.value(g.clamp01(out));
}

void Autoencoder::save(const std::filesystem::path& path) const {
  nn::Checkpoint ckpt;
  ckpt.put("meta.image_channels", meta_value(static_cast<float>(config_.image_channels)));
  ckpt.put("meta.latent_channels", meta_value(static_cast<float>(config_.latent_channels)));
  ckpt.put("meta.width", meta_value(static_cast<float>(config_.width)));
  ckpt.put("meta.order", meta_value(config_.order == FusionOrder::kTemporalThenCfw ? 0.0f : 1.0f));
  nn::export_parameters(params_, ckpt);
  ckpt.save(path);
}

Autoencoder Autoencoder::load(const std::filesystem::path& path) {
  const nn::Checkpoint ckpt = nn::Checkpoint::load(path);
  AutoencoderConfig cfg;
  cfg.image_channels = meta_index(ckpt, "meta.image_channels");
  cfg.latent_channels = meta_index(ckpt, "meta.latent_channels");
  cfg.width = meta_index(ckpt, "meta.width");
  cfg.order = meta_index(ckpt, "meta.order") == 0 ? FusionOrder::kTemporalThenCfw : FusionOrder::kCfwThenTemporal;
  Autoencoder model(cfg, 0);
  nn::import_parameters(model.params_, ckpt);
  return model;
}

Discriminator::Discriminator(Index image_channels, Index width, std::uint64_t seed) {
  if (image_channels <= 0 || width <= 0) throw ConfigError("discriminator: channel counts must be positive");
  Prng rng(seed);
  using nn::Init;
  w1_ = params_.add("disc.conv1.w", {width, image_channels, 3, 3}, Init::kHe, rng);
  b1_ = params_.add("disc.conv1.b", {width}, Init::kZero, rng);
  w2_ = params_.add("disc.conv2.w", {2 * width, width, 3, 3}, Init::kHe, rng);
  b2_ = params_.add("disc.conv2.b", {2 * width}, Init::kZero, rng);
  w3_ = params_.add("disc.conv3.w", {1, 2 * width, 3, 3}, Init::kHe, rng, 0.1f);
  b3_ = params_.add("disc.conv3.b", {1}, Init::kZero, rng);
}

nn::Var Discriminator::forward(nn::Graph& g, nn::Var frames) const {
  nn::Var h = g.leaky_relu(g.conv2d(frames, g.param(w1_), g.param(b1_), 2));
  h = g.leaky_relu(g.conv2d(h, g.param(w2_), g.param(b2_), 2));
  return g.conv2d(h, g.param(w3_), g.param(b3_));
}

}  // namespace flowguide
