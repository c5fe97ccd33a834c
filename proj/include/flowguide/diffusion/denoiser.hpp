#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "flowguide/core/prng.hpp"
#include "flowguide/core/schedule.hpp"
#include "flowguide/nn/graph.hpp"
#include "flowguide/nn/parameters.hpp"

namespace flowguide {

struct DenoiserConfig {
  Index latent_channels = 8;
  Index cond_channels = 3;
  Index width = 32;
  Index stages = 4;
  Index time_dim = 32;
};

/// Epsilon-prediction interface: (z_t [N, Cz, h, w], trained timestep, condition [N, Cy, h, w]) -> eps_hat.
using EpsilonModel = std::function<Tensor<float>(const Tensor<float>&, int, const Tensor<float>&)>;

/// Small convolutional epsilon-prediction network over a latent sequence.
///
/// conv_in(concat(z_t, cond)) feeds `stages` residual stages of
///   h += conv2(silu(conv1(silu(h)) + time_bias_s))
///   h += temporal_conv(h)
/// followed by conv_out(silu(h)). conv_out and every temporal conv start at
/// zero, so a fresh network predicts exactly 0 and treats frames independently.
/// The time bias of stage s is dense_s(silu(dense(sinusoid(t)))).
class Denoiser {
 public:
  Denoiser(DenoiserConfig config, std::uint64_t seed);

  const DenoiserConfig& config() const { return config_; }
  nn::ParameterStore& params() { return params_; }
  const nn::ParameterStore& params() const { return params_; }

  /// eps_hat for every frame of the sequence at trained timestep t.
  Tensor<float> predict(const Tensor<float>& z_t, int timestep, const Tensor<float>& cond) const;

  /// Builds the forward graph; returns the output node.
  nn::Var forward(nn::Graph& graph, const Tensor<float>& z_t, int timestep, const Tensor<float>& cond) const;

  EpsilonModel as_model() const;

  void save(const std::filesystem::path& path) const;
  static Denoiser load(const std::filesystem::path& path);

 private:
  struct Stage {
    std::size_t conv1_w, conv1_b, conv2_w, conv2_b, time_w, time_b, temporal_w, temporal_b;
  };

  DenoiserConfig config_;
  nn::ParameterStore params_;
  std::size_t in_w_, in_b_, out_w_, out_b_, time_w_, time_b_;
  std::vector<Stage> stages_;
};

/// One training sample: a clean latent sequence and its condition.
struct LatentExample {
  Tensor<float> latent;  ///< [N, Cz, h, w]
  Tensor<float> cond;    ///< [N, Cy, h, w]
};

/// Monte-Carlo estimate of E_{t, eps} |eps - eps_hat(z_t; t, y)|^2: one
/// t ~ U(1, T) and one eps per example, mean squared error over elements,
/// averaged over the batch.
double denoiser_loss(const EpsilonModel& model, const std::vector<LatentExample>& batch,
                     const NoiseSchedule& sched, Prng& rng);
double denoiser_loss(const Denoiser& model, const std::vector<LatentExample>& batch, const NoiseSchedule& sched,
                     Prng& rng);

struct DenoiserTrainConfig {
  int iterations = 2000;
  int batch_sequences = 4;
  nn::AdamConfig adam{2e-4f, 0.9f, 0.999f, 1e-8f, 1.0f};
  double divergence_factor = 10.0;
  int log_every = 50;
};

struct TrainLog {
  std::vector<std::pair<int, double>> losses;  ///< (iteration, loss)
};

/// Trains `model` in place with Adam on the epsilon-prediction loss. Throws
/// TrainingDiverged when a running loss exceeds divergence_factor times the
/// initial one.
TrainLog train_denoiser(Denoiser& model, const std::vector<LatentExample>& dataset, const NoiseSchedule& sched,
                        const DenoiserTrainConfig& config, Prng& rng);

}  // namespace flowguide
