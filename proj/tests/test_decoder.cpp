#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "flowguide/core/errors.hpp"
#include "flowguide/decoder/autoencoder.hpp"
#include "flowguide/decoder/training.hpp"
#include "flowguide/diffusion/condition.hpp"
#include "flowguide/synth/degrade.hpp"
#include "flowguide/synth/scene.hpp"

namespace fg = flowguide;
namespace sy = flowguide::synth;

namespace {

fg::AutoencoderConfig small_config() {
  fg::AutoencoderConfig c;
  c.width = 8;
  c.latent_channels = 4;
  return c;
}

fg::Tensor<float> random_frames(fg::Index n, fg::Index c, fg::Index h, fg::Index w, std::uint64_t seed) {
  fg::Prng rng(seed);
  fg::Tensor<float> t({n, c, h, w});
  for (fg::Index k = 0; k < t.size(); ++k) t[k] = static_cast<float>(rng.uniform());
  return t;
}

void randomize(fg::nn::ParameterStore& store, const std::string& prefix, float scale, std::uint64_t seed) {
  fg::Prng rng(seed);
  for (fg::nn::Parameter& p : store.all()) {
    if (p.name.rfind(prefix, 0) != 0) continue;
    for (fg::Index k = 0; k < p.value.size(); ++k) p.value[k] = static_cast<float>(scale * rng.normal());
  }
}

fg::Tensor<float> permute_frames(const fg::Tensor<float>& t, const std::vector<fg::Index>& order) {
  fg::Tensor<float> out(t.dims());
  for (std::size_t i = 0; i < order.size(); ++i) out.set_slice(static_cast<fg::Index>(i), t.slice(order[i]));
  return out;
}

float max_abs_diff(const fg::Tensor<float>& a, const fg::Tensor<float>& b) {
  return (a.array() - b.array()).abs().maxCoeff();
}

/// Unclamped decoder output for a given fusion weight.
fg::Tensor<float> decode_raw(const fg::Autoencoder& model, const fg::Tensor<float>& latent,
                             const fg::EncoderFeatures& feats, double cfw_weight) {
  fg::nn::Graph g(model.params());
  std::vector<fg::nn::Var> fv;
  for (const auto& f : feats.stages) fv.push_back(g.input(f));
  return g.value(model.decode_graph(g, g.input(latent), &fv, cfw_weight, true));
}

std::vector<fg::VideoSequence> small_dataset(int count, fg::Index size, fg::Index frames) {
  std::vector<fg::VideoSequence> out;
  for (int s = 0; s < count; ++s) {
    out.push_back(sy::synth_sequence(sy::random_scene(100 + s, size, size, frames, 3)).frames);
  }
  return out;
}

fg::FinetuneExample make_example(const fg::Autoencoder& model, std::uint64_t seed, fg::Index size, fg::Index frames) {
  const sy::SynthResult r = sy::synth_sequence(sy::random_scene(seed, size, size, frames, 3));
  fg::Prng rng(seed);
  sy::DegradationSpec spec;
  const fg::VideoSequence lr = sy::degrade_sequence(r.frames, spec, rng);
  fg::FinetuneExample ex;
  ex.degraded = fg::upscale_lr(lr, size, size);
  ex.latent = model.encode(r.frames.tensor()).latent;
  ex.hr = r.frames.tensor();
  ex.flows = r.flows;
  ex.masks = r.masks;
  return ex;
}

}  // namespace

TEST(Autoencoder, LatentIsEightTimesSmaller) {
  const fg::Autoencoder model(small_config(), 1);
  const fg::Encoded e = model.encode(random_frames(2, 3, 64, 64, 2));
  EXPECT_EQ(e.latent.dims(), (fg::Dims{2, 4, 8, 8}));
  ASSERT_EQ(e.features.stages.size(), 3u);
  EXPECT_EQ(e.features.stages[0].dim(2), 32);
  EXPECT_EQ(e.features.stages[2].dim(2), 8);
  EXPECT_EQ(model.decode(e.latent, &e.features, 0.5).dims(), (fg::Dims{2, 3, 64, 64}));
}

TEST(Autoencoder, RejectsIndivisibleSizes) {
  const fg::Autoencoder model(small_config(), 1);
  EXPECT_THROW(model.encode(random_frames(1, 3, 60, 64, 2)), fg::ShapeError);
  EXPECT_THROW(model.encode(random_frames(1, 1, 64, 64, 2)), fg::ShapeError);
  EXPECT_THROW(model.decode(fg::Tensor<float>({1, 3, 8, 8}), nullptr, 0.0), fg::ShapeError);
  EXPECT_THROW(model.decode(fg::Tensor<float>({1, 4, 8, 8}), nullptr, 1.5), fg::ConfigError);
}

TEST(Autoencoder, FreshDecoderIsFrameIndependent) {
  const fg::Autoencoder model(small_config(), 3);
  const fg::Encoded e = model.encode(random_frames(4, 3, 32, 32, 4));
  const fg::Tensor<float> full = model.decode(e.latent, &e.features, 0.7, true);
  const fg::Tensor<float> plain = model.decode_frame_independent(e.latent);
  EXPECT_EQ(max_abs_diff(full, plain), 0.0f);
}

TEST(Autoencoder, FrameIndependentDecodingCommutesWithPermutation) {
  const fg::Autoencoder model(small_config(), 5);
  const fg::Tensor<float> z = model.encode(random_frames(4, 3, 32, 32, 6)).latent;
  const std::vector<fg::Index> order{2, 0, 3, 1};
  const fg::Tensor<float> a = model.decode_frame_independent(permute_frames(z, order));
  const fg::Tensor<float> b = permute_frames(model.decode_frame_independent(z), order);
  EXPECT_EQ(max_abs_diff(a, b), 0.0f);
}

TEST(Autoencoder, ZeroFusionWeightIgnoresFeatures) {
  fg::Autoencoder model(small_config(), 7);
  randomize(model.params(), "cfw.", 0.2f, 8);
  randomize(model.params(), "temporal.", 0.2f, 9);
  const fg::Encoded e = model.encode(random_frames(3, 3, 32, 32, 10));
  fg::EncoderFeatures other = model.encode(random_frames(3, 3, 32, 32, 11)).features;
  EXPECT_EQ(max_abs_diff(model.decode(e.latent, &e.features, 0.0), model.decode(e.latent, &other, 0.0)), 0.0f);
  EXPECT_GT(max_abs_diff(model.decode(e.latent, &e.features, 0.5), model.decode(e.latent, &other, 0.5)), 0.0f);
}

TEST(Autoencoder, FusionIsAffineInWeightAtTheFinestStage) {
  // Only the finest fusion conv is active and it has no bias; everything
  // after it is linear, so the raw output is affine in the fusion weight.
  fg::Autoencoder model(small_config(), 12);
  fg::nn::ParameterStore& store = model.params();
  randomize(store, "cfw.stage2.w", 0.3f, 13);
  const fg::Encoded e = model.encode(random_frames(2, 3, 32, 32, 14));
  const fg::Tensor<float> y0 = decode_raw(model, e.latent, e.features, 0.0);
  const fg::Tensor<float> y1 = decode_raw(model, e.latent, e.features, 1.0);
  for (const double wt : {0.25, 0.5, 0.8}) {
    const fg::Tensor<float> yw = decode_raw(model, e.latent, e.features, wt);
    const fg::Tensor<float>::Array expect = y0.array() + static_cast<float>(wt) * (y1.array() - y0.array());
    EXPECT_LT((yw.array() - expect).abs().maxCoeff(), 1e-5f) << "weight " << wt;
  }
  EXPECT_GT(max_abs_diff(y0, y1), 1e-3f);
}

TEST(Autoencoder, TemporalReceptiveFieldIsThreeFrames) {
  fg::Autoencoder model(small_config(), 15);
  randomize(model.params(), "temporal.", 0.3f, 16);
  const fg::Tensor<float> z = model.encode(random_frames(6, 3, 32, 32, 17)).latent;
  fg::Tensor<float> z2 = z;
  z2.set_slice(0, model.encode(random_frames(1, 3, 32, 32, 18)).latent.slice(0));
  const fg::Tensor<float> a = model.decode(z, nullptr, 0.0, true);
  const fg::Tensor<float> b = model.decode(z2, nullptr, 0.0, true);
  EXPECT_GT(max_abs_diff(a.slice(1), b.slice(1)), 0.0f);
  EXPECT_GT(max_abs_diff(a.slice(3), b.slice(3)), 0.0f);
  EXPECT_EQ(max_abs_diff(a.slice(4), b.slice(4)), 0.0f);
  EXPECT_EQ(max_abs_diff(a.slice(5), b.slice(5)), 0.0f);
}

TEST(Autoencoder, OutputStaysInUnitRange) {
  fg::Autoencoder model(small_config(), 19);
  randomize(model.params(), "", 1.0f, 20);
  const fg::Encoded e = model.encode(random_frames(3, 3, 32, 32, 21));
  const fg::Tensor<float> y = model.decode(e.latent, &e.features, 1.0);
  EXPECT_GE(y.array().minCoeff(), 0.0f);
  EXPECT_LE(y.array().maxCoeff(), 1.0f);
}

TEST(Autoencoder, CheckpointRoundTrip) {
  fg::AutoencoderConfig cfg = small_config();
  cfg.order = fg::FusionOrder::kCfwThenTemporal;
  fg::Autoencoder model(cfg, 22);
  randomize(model.params(), "cfw.", 0.1f, 23);
  const auto path = std::filesystem::temp_directory_path() / "fg_test_ae.ckpt";
  model.save(path);
  const fg::Autoencoder back = fg::Autoencoder::load(path);
  std::filesystem::remove(path);
  EXPECT_EQ(back.config().latent_channels, 4);
  EXPECT_EQ(back.config().width, 8);
  EXPECT_EQ(back.config().order, fg::FusionOrder::kCfwThenTemporal);
  EXPECT_EQ(back.params().checksum(), model.params().checksum());
}

TEST(AutoencoderTraining, ZeroIterationsLeavesWeightsUnchanged) {
  fg::Autoencoder model(small_config(), 24);
  const auto before = model.params().checksum();
  fg::AutoencoderTrainConfig cfg;
  cfg.iterations = 0;
  cfg.crop = 32;
  fg::Prng rng(1);
  const fg::LossCurve curve = fg::pretrain_autoencoder(model, small_dataset(2, 32, 3), cfg, rng);
  EXPECT_TRUE(curve.losses.empty());
  EXPECT_EQ(model.params().checksum(), before);
}

TEST(AutoencoderTraining, DeterministicLowersLossAndSkipsTemporalWeights) {
  const auto data = small_dataset(3, 32, 3);
  fg::AutoencoderTrainConfig cfg;
  cfg.iterations = 60;
  cfg.crop = 32;
  cfg.batch_frames = 4;
  cfg.log_every = 10;
  auto run = [&](fg::Autoencoder& m) {
    fg::Prng rng(2);
    return fg::pretrain_autoencoder(m, data, cfg, rng);
  };
  fg::Autoencoder a(small_config(), 25), b(small_config(), 25);
  const auto temporal_before = a.params().checksum("temporal.");
  const auto cfw_before = a.params().checksum("cfw.");
  const double psnr_before = fg::reconstruction_psnr(a, data);
  const fg::LossCurve ca = run(a);
  run(b);
  EXPECT_EQ(a.params().checksum(), b.params().checksum());
  EXPECT_EQ(a.params().checksum("temporal."), temporal_before);
  EXPECT_EQ(a.params().checksum("cfw."), cfw_before);
  ASSERT_GE(ca.losses.size(), 2u);
  EXPECT_LT(ca.losses.back().second, ca.losses.front().second);
  EXPECT_GT(fg::reconstruction_psnr(a, data), psnr_before);
}

TEST(AutoencoderTraining, RejectsBadConfigs) {
  fg::Autoencoder model(small_config(), 26);
  fg::AutoencoderTrainConfig cfg;
  cfg.crop = 30;
  fg::Prng rng(1);
  EXPECT_THROW(fg::pretrain_autoencoder(model, small_dataset(1, 32, 2), cfg, rng), fg::ConfigError);
  cfg.crop = 64;
  EXPECT_THROW(fg::pretrain_autoencoder(model, small_dataset(1, 32, 2), cfg, rng), fg::ConfigError);
  EXPECT_THROW(fg::pretrain_autoencoder(model, {}, cfg, rng), fg::ConfigError);
}

TEST(DecoderFinetune, OnlyTemporalAndFusionWeightsMove) {
  fg::Autoencoder model(small_config(), 27);
  fg::Discriminator disc(3, 8, 28);
  const std::vector<fg::FinetuneExample> data{make_example(model, 200, 32, 6), make_example(model, 201, 32, 6)};
  const auto enc = model.params().checksum("encoder.");
  const auto dec = model.params().checksum("decoder.");
  const auto tmp = model.params().checksum("temporal.");
  const auto cfw = model.params().checksum("cfw.");
  const auto dsc = disc.params().checksum();
  fg::FinetuneConfig cfg;
  cfg.iterations = 6;
  cfg.log_every = 1;
  fg::Prng rng(3);
  const fg::FinetuneLog log = fg::finetune_decoder(model, disc, data, cfg, rng);
  EXPECT_EQ(model.params().checksum("encoder."), enc);
  EXPECT_EQ(model.params().checksum("decoder."), dec);
  EXPECT_NE(model.params().checksum("temporal."), tmp);
  EXPECT_NE(model.params().checksum("cfw."), cfw);
  EXPECT_NE(disc.params().checksum(), dsc);
  ASSERT_EQ(log.steps.size(), 6u);
  for (const fg::FinetuneStep& s : log.steps) {
    EXPECT_TRUE(std::isfinite(s.total));
    EXPECT_GT(s.disc, 0.0);
    const double parts = s.recon + cfg.weights.alpha * s.diff + cfg.weights.beta * s.swc + cfg.weights.gamma * s.gan;
    EXPECT_NEAR(s.total, parts, 1e-12);
  }
}

TEST(DecoderFinetune, ZeroWeightsReduceToReconstruction) {
  fg::Autoencoder model(small_config(), 29);
  fg::Discriminator disc(3, 8, 30);
  const std::vector<fg::FinetuneExample> data{make_example(model, 202, 32, 5)};
  const auto dsc = disc.params().checksum();
  fg::FinetuneConfig cfg;
  cfg.iterations = 4;
  cfg.log_every = 1;
  cfg.weights.alpha = cfg.weights.beta = cfg.weights.gamma = 0.0;
  fg::Prng rng(4);
  const fg::FinetuneLog log = fg::finetune_decoder(model, disc, data, cfg, rng);
  for (const fg::FinetuneStep& s : log.steps) EXPECT_EQ(s.total, s.recon);
  EXPECT_EQ(disc.params().checksum(), dsc);
}

TEST(DecoderFinetune, ZeroIterationsAndBadConfigs) {
  fg::Autoencoder model(small_config(), 31);
  fg::Discriminator disc(3, 8, 32);
  const std::vector<fg::FinetuneExample> data{make_example(model, 203, 32, 4)};
  const auto before = model.params().checksum();
  fg::FinetuneConfig cfg;
  cfg.iterations = 0;
  cfg.window = 4;
  fg::Prng rng(5);
  EXPECT_TRUE(fg::finetune_decoder(model, disc, data, cfg, rng).steps.empty());
  EXPECT_EQ(model.params().checksum(), before);
  cfg.window = 5;
  EXPECT_THROW(fg::finetune_decoder(model, disc, data, cfg, rng), fg::ConfigError);
  cfg.window = 4;
  cfg.cfw_weight = -0.1;
  EXPECT_THROW(fg::finetune_decoder(model, disc, data, cfg, rng), fg::ConfigError);
}

TEST(Condition, DimensionsFollowTheLatentGrid) {
  const fg::VideoSequence lr(random_frames(3, 3, 16, 24, 33));
  const fg::Tensor<float> up = fg::upscale_lr(lr, 64, 96);
  EXPECT_EQ(up.dims(), (fg::Dims{3, 3, 64, 96}));
  EXPECT_GE(up.array().minCoeff(), 0.0f);
  EXPECT_LE(up.array().maxCoeff(), 1.0f);
  EXPECT_EQ(fg::make_condition(lr, 64, 96).dims(), (fg::Dims{3, 3, 8, 12}));
  EXPECT_THROW(fg::make_condition(lr, 60, 96), fg::ShapeError);
}

TEST(Condition, ConstantInputGivesConstantCondition) {
  const fg::VideoSequence lr(fg::Tensor<float>({2, 1, 8, 8}, 0.375f));
  const fg::Tensor<float> c = fg::make_condition(lr, 32, 32);
  EXPECT_LT((c.array() - 0.375f).abs().maxCoeff(), 1e-6f);
}
