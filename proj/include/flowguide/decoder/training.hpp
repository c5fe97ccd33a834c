#pragma once

#include <vector>

#include "flowguide/core/prng.hpp"
#include "flowguide/core/sequence.hpp"
#include "flowguide/decoder/autoencoder.hpp"
#include "flowguide/metrics/losses.hpp"
#include "flowguide/motion/flow.hpp"

namespace flowguide {

struct AutoencoderTrainConfig {
  int iterations = 800;
  int batch_frames = 8;
  Index crop = 64;  ///< square training crops; must be a multiple of 8
  nn::AdamConfig adam{2e-3f, 0.9f, 0.999f, 1e-8f, 1.0f};
  double divergence_factor = 10.0;
  int log_every = 50;
};

struct LossCurve {
  std::vector<std::pair<int, double>> losses;  ///< (iteration, loss)
};

/// Trains the spatial encoder and decoder frame-wise on random crops with a
/// mean absolute reconstruction error. Temporal and fusion weights are not
/// touched. Throws TrainingDiverged on a runaway or non-finite loss.
LossCurve pretrain_autoencoder(Autoencoder& model, const std::vector<VideoSequence>& dataset,
                               const AutoencoderTrainConfig& config, Prng& rng);

/// Mean per-frame PSNR of the frame-independent reconstruction.
double reconstruction_psnr(const Autoencoder& model, const std::vector<VideoSequence>& dataset);

/// One fine-tuning sequence.
struct FinetuneExample {
  Tensor<float> degraded;  ///< LR frames resized to the HR grid [N, C, H, W]
  Tensor<float> latent;    ///< sampled latents [N, Cz, H/8, W/8]
  Tensor<float> hr;        ///< ground truth [N, C, H, W]
  FlowSet<float> flows;    ///< ground-truth flows at HR
  MaskSet<float> masks;
};

struct FinetuneConfig {
  int iterations = 300;
  Index window = 5;  ///< frames per training window
  LossWeights weights;
  double cfw_weight = 0.5;
  nn::AdamConfig adam{1e-3f, 0.9f, 0.999f, 1e-8f, 1.0f};
  nn::AdamConfig disc_adam{2e-4f, 0.5f, 0.999f, 1e-8f, 1.0f};
  double divergence_factor = 10.0;
  int log_every = 25;
};

/// Per-element loss components of one step; `total` is recomputed through
/// total_video_loss and checked against the parts.
struct FinetuneStep {
  int iteration = 0;
  double recon = 0.0, diff = 0.0, swc = 0.0, gan = 0.0, total = 0.0;
  double disc = 0.0;
};

struct FinetuneLog {
  std::vector<FinetuneStep> steps;
};

/// Fine-tunes only the temporal and fusion weights (plus the discriminator)
/// on windows of the examples with
///   L = recon + alpha diff + beta swc + gamma gan,
/// where recon = |x - y|_1 + |Sobel(x - y)|_1 / 8 and the three sequence
/// terms are normalised per output element; gan is the non-saturating
/// logistic generator loss averaged over the logit map. Throws CheckFailure
/// if any encoder or spatial decoder weight changes.
FinetuneLog finetune_decoder(Autoencoder& model, Discriminator& disc, const std::vector<FinetuneExample>& data,
                             const FinetuneConfig& config, Prng& rng);

}  // namespace flowguide
