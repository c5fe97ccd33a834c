#include "flowguide/decoder/training.hpp"

#include <cmath>
#include <string>

#include "flowguide/core/errors.hpp"
#include "flowguide/metrics/metrics.hpp"

namespace flowguide {

namespace {

/// Frames [start, start + count) of a [N, ...] tensor.
Tensor<float> frame_window(const Tensor<float>& t, Index start, Index count) {
  Dims dims = t.dims();
  dims[0] = count;
  const Index m = t.stride0();
  return Tensor<float>(dims, Tensor<float>::Array(t.array().segment(start * m, count * m)));
}

/// Square crop of one frame [C, H, W] -> [1, C, crop, crop].
Tensor<float> crop_frame(const Tensor<float>& frame, Index y0, Index x0, Index crop) {
  const Index c = frame.dim(0);
  Tensor<float> out({1, c, crop, crop});
  for (Index ch = 0; ch < c; ++ch) out.plane(0, ch) = frame.plane(ch).block(y0, x0, crop, crop);
  return out;
}

/// Exponential running loss with a divergence bound relative to the first value.
class DivergenceGuard {
 public:
  DivergenceGuard(double factor, std::string what) : factor_(factor), what_(std::move(what)) {}

  void update(int it, double loss) {
    if (!std::isfinite(loss)) throw TrainingDiverged(what_ + " loss became non-finite at iteration " + std::to_string(it));
    if (initial_ < 0.0) {
      initial_ = running_ = loss;
    } else {
      running_ = 0.95 * running_ + 0.05 * loss;
    }
    if (running_ > factor_ * initial_) {
      throw TrainingDiverged(what_ + " loss diverged at iteration " + std::to_string(it) + " (running " +
                             std::to_string(running_) + ", initial " + std::to_string(initial_) + ")");
    }
  }

 private:
  double factor_;
  std::string what_;
  double initial_ = -1.0, running_ = 0.0;
};

bool should_log(int it, int every, int last) { return it == 1 || it % std::max(1, every) == 0 || it == last; }

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Mean softplus(sign * logit) and its gradient with respect to the logits.
double logistic_term(const Tensor<float>& logits, float sign, Tensor<float>& grad) {
  grad = Tensor<float>(logits.dims());
  const double n = static_cast<double>(logits.size());
  double total = 0.0;
  for (Index k = 0; k < logits.size(); ++k) {
    const double x = sign * static_cast<double>(logits[k]);
    total += softplus(x);
    grad[k] = static_cast<float>(sign * sigmoid(x) / n);
  }
  return total / n;
}

}  // namespace

LossCurve pretrain_autoencoder(Autoencoder& model, const std::vector<VideoSequence>& dataset,
                               const AutoencoderTrainConfig& config, Prng& rng) {
  if (dataset.empty()) throw ConfigError("pretrain_autoencoder: empty dataset");
  if (config.iterations < 0 || config.batch_frames <= 0) throw ConfigError("pretrain_autoencoder: bad iteration counts");
  if (config.crop <= 0 || config.crop % 8 != 0) throw ConfigError("pretrain_autoencoder: crop must be a positive multiple of 8");
  for (const VideoSequence& s : dataset) {
    if (s.height() < config.crop || s.width() < config.crop) throw ConfigError("pretrain_autoencoder: crop exceeds frame size");
  }

  nn::ParameterStore& store = model.params();
  store.set_trainable("", true);
  store.set_trainable("temporal.", false);
  store.set_trainable("cfw.", false);
  nn::Adam adam(config.adam);
  DivergenceGuard guard(config.divergence_factor, "autoencoder");
  LossCurve curve;
  const Index c = model.config().image_channels, crop = config.crop;

  for (int it = 1; it <= config.iterations; ++it) {
    Tensor<float> batch({config.batch_frames, c, crop, crop});
    for (Index b = 0; b < config.batch_frames; ++b) {
      const VideoSequence& seq =
          dataset[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(dataset.size()) - 1))];
      const Index f = rng.uniform_int(0, seq.frames() - 1);
      const Index y0 = rng.uniform_int(0, seq.height() - crop), x0 = rng.uniform_int(0, seq.width() - crop);
      batch.set_slice(b, crop_frame(seq.frame(f), y0, x0, crop).slice(0));
    }
    store.zero_grad();
    nn::Graph g(&store);
    const nn::Var x = g.input(batch);
    const nn::Var z = model.encode_graph(g, x, nullptr);
    const nn::Var y = model.decode_graph(g, z, nullptr, 0.0, false);
    const Tensor<float>::Array diff = g.value(y).array() - batch.array();
    const double loss = diff.cast<double>().abs().mean();
    g.backward(y, Tensor<float>(batch.dims(), Tensor<float>::Array(diff.sign() / static_cast<float>(diff.size()))));
    adam.step(store);
    guard.update(it, loss);
    if (should_log(it, config.log_every, config.iterations)) curve.losses.emplace_back(it, loss);
  }
  store.set_trainable("", true);
  return curve;
}

double reconstruction_psnr(const Autoencoder& model, const std::vector<VideoSequence>& dataset) {
  if (dataset.empty()) throw ConfigError("reconstruction_psnr: empty dataset");
  double total = 0.0;
  Index frames = 0;
  for (const VideoSequence& s : dataset) {
    const Tensor<float> rec = model.decode_frame_independent(model.encode(s.tensor()).latent);
    for (Index i = 0; i < s.frames(); ++i) total += psnr(rec.slice(i), s.frame(i));
    frames += s.frames();
  }
  return total / static_cast<double>(frames);
}

FinetuneLog finetune_decoder(Autoencoder& model, Discriminator& disc, const std::vector<FinetuneExample>& data,
                             const FinetuneConfig& config, Prng& rng) {
  if (data.empty()) throw ConfigError("finetune_decoder: empty dataset");
  if (config.iterations < 0 || config.window < 2) throw ConfigError("finetune_decoder: bad iteration count or window");
  if (!(config.cfw_weight >= 0.0 && config.cfw_weight <= 1.0)) throw ConfigError("cfw_weight must be in [0, 1]");
  for (const FinetuneExample& ex : data) {
    const Index n = ex.hr.dim(0);
    if (n < config.window) throw ConfigError("finetune_decoder: sequence shorter than the training window");
    if (ex.degraded.dims() != ex.hr.dims() || ex.latent.dim(0) != n) throw ShapeError("finetune_decoder: example shapes disagree");
    ex.flows.check(n);
  }

  nn::ParameterStore& store = model.params();
  store.set_trainable("", false);
  store.set_trainable("temporal.", true);
  store.set_trainable("cfw.", true);
  const std::uint64_t frozen_encoder = store.checksum("encoder.");
  const std::uint64_t frozen_decoder = store.checksum("decoder.");

  nn::Adam adam(config.adam), disc_adam(config.disc_adam);
  DivergenceGuard guard(config.divergence_factor, "decoder fine-tuning");
  FinetuneLog log;
  const LossWeights& w = config.weights;

  for (int it = 1; it <= config.iterations; ++it) {
    const FinetuneExample& ex =
        data[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(data.size()) - 1))];
    const Index n = config.window;
    const Index start = rng.uniform_int(0, ex.hr.dim(0) - n);
    const Tensor<float> hr = frame_window(ex.hr, start, n);
    FlowSet<float> flows;
    MaskSet<float> masks;
    for (Index i = start; i + 1 < start + n; ++i) {
      flows.forward.push_back(ex.flows.forward[static_cast<std::size_t>(i)]);
      flows.backward.push_back(ex.flows.backward[static_cast<std::size_t>(i)]);
      masks.forward.push_back(ex.masks.forward[static_cast<std::size_t>(i)]);
      masks.backward.push_back(ex.masks.backward[static_cast<std::size_t>(i)]);
    }
    const EncoderFeatures feats = model.encode(frame_window(ex.degraded, start, n)).features;

    // Generator pass.
    store.zero_grad();
    nn::Graph g(&store);
    std::vector<nn::Var> fvars;
    for (const Tensor<float>& f : feats.stages) fvars.push_back(g.input(f));
    const nn::Var out = model.decode_graph(g, g.input(frame_window(ex.latent, start, n)), &fvars, config.cfw_weight, true);
    const Tensor<float>& pred = g.value(out);
    const double elems = static_cast<double>(pred.size());

    Tensor<float> g_l1, g_sobel, g_diff, g_swc, g_gan;
    const double l1 = l1_loss(pred, hr, &g_l1);
    const double sob = sobel_l1_loss(pred, hr, &g_sobel);
    const double recon = (l1 + sob / 8.0) / elems;
    const double diff = w.alpha != 0.0 ? frame_diff_loss(pred, hr, &g_diff) / elems : 0.0;
    const double swc =
        w.beta != 0.0 ? swc_loss(pred, flows, masks, sobel_structures(hr, w.w), &g_swc) / elems : 0.0;

    double gan = 0.0;
    Tensor<float> gan_seed(pred.dims());
    if (w.gamma != 0.0) {
      disc.params().set_trainable("", false);
      nn::Graph dg(&disc.params());
      const nn::Var fake = dg.input(pred, true);
      const nn::Var logits = disc.forward(dg, fake);
      gan = logistic_term(dg.value(logits), -1.0f, g_gan);
      dg.backward(logits, g_gan);
      gan_seed = dg.grad(fake);
      disc.params().set_trainable("", true);
    }

    const double total = total_video_loss(recon, diff, swc, gan, w);
    const double parts = recon + w.alpha * diff + w.beta * swc + w.gamma * gan;
    if (std::abs(total - parts) > 1e-9 * std::max(1.0, std::abs(total))) {
      throw CheckFailure("fine-tuning loss decomposition does not sum to the total at iteration " + std::to_string(it));
    }

    Tensor<float>::Array seed = (g_l1.array() + g_sobel.array() / 8.0f) / static_cast<float>(elems);
    if (w.alpha != 0.0) seed += static_cast<float>(w.alpha / elems) * g_diff.array();
    if (w.beta != 0.0) seed += static_cast<float>(w.beta / elems) * g_swc.array();
    if (w.gamma != 0.0) seed += static_cast<float>(w.gamma) * gan_seed.array();
    g.backward(out, Tensor<float>(pred.dims(), std::move(seed)));
    adam.step(store);

    // Discriminator pass on real and generated frames.
    double disc_loss = 0.0;
    if (w.gamma != 0.0) {
      disc.params().zero_grad();
      for (const auto& [frames, sign] : {std::pair<const Tensor<float>*, float>{&hr, -1.0f}, {&pred, 1.0f}}) {
        nn::Graph dg(&disc.params());
        const nn::Var logits = disc.forward(dg, dg.input(*frames));
        Tensor<float> seed_d;
        disc_loss += logistic_term(dg.value(logits), sign, seed_d);
        dg.backward(logits, seed_d);
      }
      disc_adam.step(disc.params());
    }

    guard.update(it, total);
    if (should_log(it, config.log_every, config.iterations)) {
      log.steps.push_back({it, recon, diff, swc, gan, total, disc_loss});
    }
  }

  store.set_trainable("", true);
  if (store.checksum("encoder.") != frozen_encoder || store.checksum("decoder.") != frozen_decoder) {
    throw CheckFailure("finetune_decoder: a frozen spatial weight changed");
  }
  return log;
}

}  // namespace flowguide
