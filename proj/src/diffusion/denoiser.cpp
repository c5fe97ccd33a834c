#include "flowguide/diffusion/denoiser.hpp"

#include <algorithm>
#include <cmath>

#include "flowguide/core/errors.hpp"
#include "flowguide/diffusion/ddpm.hpp"

namespace flowguide {

namespace {

Tensor<float> meta_value(float v) {
  Tensor<float> t({1});
  t[0] = v;
  return t;
}

Index meta_index(const nn::Checkpoint& ckpt, const std::string& name) {
  if (!ckpt.has(name)) throw IoError("denoiser checkpoint is missing " + name);
  return static_cast<Index>(std::lround(ckpt.get(name)[0]));
}

}  // namespace

Denoiser::Denoiser(DenoiserConfig config, std::uint64_t seed) : config_(config) {
  if (config_.latent_channels <= 0 || config_.cond_channels <= 0 || config_.width <= 0 || config_.stages <= 0 ||
      config_.time_dim <= 0 || config_.time_dim % 2 != 0) {
    throw ConfigError("denoiser: channel counts must be positive and time_dim even");
  }
  Prng rng(seed);
  const Index cz = config_.latent_channels, cw = config_.width, td = config_.time_dim;
  using nn::Init;
  in_w_ = params_.add("denoiser.in.w", {cw, cz + config_.cond_channels, 3, 3}, Init::kHe, rng);
  in_b_ = params_.add("denoiser.in.b", {cw}, Init::kZero, rng);
  time_w_ = params_.add("denoiser.time.w", {td, td}, Init::kHe, rng);
  time_b_ = params_.add("denoiser.time.b", {td}, Init::kZero, rng);
  for (Index s = 0; s < config_.stages; ++s) {
    const std::string p = "denoiser.stage" + std::to_string(s) + ".";
    Stage st{};
    st.conv1_w = params_.add(p + "conv1.w", {cw, cw, 3, 3}, Init::kHe, rng);
    st.conv1_b = params_.add(p + "conv1.b", {cw}, Init::kZero, rng);
    st.conv2_w = params_.add(p + "conv2.w", {cw, cw, 3, 3}, Init::kHe, rng, 0.2f);
    st.conv2_b = params_.add(p + "conv2.b", {cw}, Init::kZero, rng);
    st.time_w = params_.add(p + "time.w", {cw, td}, Init::kHe, rng);
    st.time_b = params_.add(p + "time.b", {cw}, Init::kZero, rng);
    st.temporal_w = params_.add(p + "temporal.w", {cw, cw, 3}, Init::kZero, rng);
    st.temporal_b = params_.add(p + "temporal.b", {cw}, Init::kZero, rng);
    stages_.push_back(st);
  }
  out_w_ = params_.add("denoiser.out.w", {cz, cw, 3, 3}, Init::kZero, rng);
  out_b_ = params_.add("denoiser.out.b", {cz}, Init::kZero, rng);
}

nn::Var Denoiser::forward(nn::Graph& g, const Tensor<float>& z_t, int timestep, const Tensor<float>& cond) const {
  require_rank(z_t.rank(), 4, "denoiser latent");
  require_rank(cond.rank(), 4, "denoiser condition");
  if (z_t.dim(1) != config_.latent_channels || cond.dim(1) != config_.cond_channels || z_t.dim(0) != cond.dim(0) ||
      z_t.dim(2) != cond.dim(2) || z_t.dim(3) != cond.dim(3)) {
    throw ShapeError("denoiser: latent " + dims_to_string(z_t.dims()) + " and condition " +
                     dims_to_string(cond.dims()) + " do not match the model");
  }
  // Condition frames live in [0, 1]; centre them.
  const Tensor<float> centred(cond.dims(), Tensor<float>::Array(cond.array() * 2.0f - 1.0f));
  const nn::Var x = g.concat_channels(g.input(z_t), g.input(centred));
  nn::Var h = g.conv2d(x, g.param(in_w_), g.param(in_b_));

  const nn::Var emb = g.input(nn::sinusoidal_embedding(static_cast<double>(timestep), config_.time_dim));
  const nn::Var temb = g.silu(g.dense(emb, g.param(time_w_), g.param(time_b_)));

  for (const Stage& st : stages_) {
    const nn::Var bias = g.dense(temb, g.param(st.time_w), g.param(st.time_b));
    nn::Var r = g.conv2d(g.silu(h), g.param(st.conv1_w), g.param(st.conv1_b));
    r = g.add_channel_bias(r, bias);
    r = g.conv2d(g.silu(r), g.param(st.conv2_w), g.param(st.conv2_b));
    h = g.add(h, r);
    h = g.add(h, g.temporal_conv(h, g.param(st.temporal_w), g.param(st.temporal_b)));
  }
  return g.conv2d(g.silu(h), g.param(out_w_), g.param(out_b_));
}

Tensor<float> Denoiser::predict(const Tensor<float>& z_t, int timestep, const Tensor<float>& cond) const {
  nn::Graph g(params_);
  return g.value(forward(g, z_t, timestep, cond));
}

EpsilonModel Denoiser::as_model() const {
  return [this](const Tensor<float>& z, int t, const Tensor<float>& c) { return predict(z, t, c); };
}

void Denoiser::save(const std::filesystem::path& path) const {
  nn::Checkpoint ckpt;
  ckpt.put("meta.latent_channels", meta_value(static_cast<float>(config_.latent_channels)));
  ckpt.put("meta.cond_channels", meta_value(static_cast<float>(config_.cond_channels)));
  ckpt.put("meta.width", meta_value(static_cast<float>(config_.width)));
  ckpt.put("meta.stages", meta_value(static_cast<float>(config_.stages)));
  ckpt.put("meta.time_dim", meta_value(static_cast<float>(config_.time_dim)));
  nn::export_parameters(params_, ckpt);
  ckpt.save(path);
}

Denoiser Denoiser::load(const std::filesystem::path& path) {
  const nn::Checkpoint ckpt = nn::Checkpoint::load(path);
  DenoiserConfig cfg;
  cfg.latent_channels = meta_index(ckpt, "meta.latent_channels");
  cfg.cond_channels = meta_index(ckpt, "meta.cond_channels");
  cfg.width = meta_index(ckpt, "meta.width");
  cfg.stages = meta_index(ckpt, "meta.stages");
  cfg.time_dim = meta_index(ckpt, "meta.time_dim");
  Denoiser model(cfg, 0);
  nn::import_parameters(model.params_, ckpt);
  return model;
}

double denoiser_loss(const EpsilonModel& model, const std::vector<LatentExample>& batch, const NoiseSchedule& sched,
                     Prng& rng) {
  if (batch.empty()) throw ConfigError("denoiser_loss: empty batch");
  double total = 0.0;
  for (const LatentExample& ex : batch) {
    const int t = static_cast<int>(rng.uniform_int(1, sched.steps()));
    const Tensor<float> eps = gaussian_noise<float>(ex.latent.dims(), rng);
    const Tensor<float> zt = forward_diffuse(ex.latent, t, eps, sched);
    const Tensor<float> pred = model(zt, t, ex.cond);
    require_same_shape(pred, eps, "denoiser_loss");
    total += (pred.array() - eps.array()).cast<double>().square().mean();
  }
  return total / static_cast<double>(batch.size());
}

double denoiser_loss(const Denoiser& model, const std::vector<LatentExample>& batch, const NoiseSchedule& sched,
                     Prng& rng) {
  return denoiser_loss(model.as_model(), batch, sched, rng);
}

TrainLog train_denoiser(Denoiser& model, const std::vector<LatentExample>& dataset, const NoiseSchedule& sched,
                        const DenoiserTrainConfig& config, Prng& rng) {
  if (dataset.empty()) throw ConfigError("train_denoiser: empty dataset");
  if (config.iterations < 0 || config.batch_sequences <= 0) throw ConfigError("train_denoiser: bad iteration counts");
  nn::Adam adam(config.adam);
  TrainLog log;
  double initial = -1.0, running = 0.0;
  constexpr double kSmoothing = 0.05;
  for (int it = 1; it <= config.iterations; ++it) {
    model.params().zero_grad();
    double loss = 0.0;
    for (int b = 0; b < config.batch_sequences; ++b) {
      const LatentExample& ex =
          dataset[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(dataset.size()) - 1))];
      const int t = static_cast<int>(rng.uniform_int(1, sched.steps()));
      const Tensor<float> eps = gaussian_noise<float>(ex.latent.dims(), rng);
      const Tensor<float> zt = forward_diffuse(ex.latent, t, eps, sched);
      nn::Graph g(&model.params());
      const nn::Var out = model.forward(g, zt, t, ex.cond);
      const Tensor<float>::Array diff = g.value(out).array() - eps.array();
      loss += diff.cast<double>().square().mean() / config.batch_sequences;
      const float k = 2.0f / static_cast<float>(diff.size() * config.batch_sequences);
      g.backward(out, Tensor<float>(eps.dims(), Tensor<float>::Array(k * diff)));
    }
    adam.step(model.params());

    if (!std::isfinite(loss)) throw TrainingDiverged("denoiser loss became non-finite at iteration " + std::to_string(it));
    if (initial < 0.0) {
      initial = loss;
      running = loss;
    } else {
      running = (1.0 - kSmoothing) * running + kSmoothing * loss;
    }
    if (running > config.divergence_factor * initial) {
      throw TrainingDiverged("denoiser loss diverged at iteration " + std::to_string(it) + " (running " +
                             std::to_string(running) + ", initial " + std::to_string(initial) + ")");
    }
    if (it == 1 || it % std::max(1, config.log_every) == 0 || it == config.iterations) log.losses.emplace_back(it, loss);
  }
  return log;
}

}  // namespace flowguide
