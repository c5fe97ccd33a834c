#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "flowguide/pipeline/config.hpp"
#include "flowguide/pipeline/dataset.hpp"
#include "flowguide/pipeline/gradcheck.hpp"

namespace flowguide {

/// Behaviour shared by every command. Progress lines always go to
/// `<output dir>/log.txt` with timestamps; `echo` also prints them to stderr.
struct CommandOptions {
  bool echo = false;
};

// ---- artifact locations ----

std::filesystem::path autoencoder_path(const ExperimentConfig& config);
std::filesystem::path denoiser_path(const ExperimentConfig& config);
std::filesystem::path latent_stats_path(const ExperimentConfig& config);
std::filesystem::path finetuned_decoder_path(const ExperimentConfig& config);
std::filesystem::path discriminator_path(const ExperimentConfig& config);
std::filesystem::path samples_dir(const ExperimentConfig& config);

// ---- synth ----

enum class PartialPolicy { kResume, kError };

struct SynthSummary {
  int generated = 0;
  int skipped = 0;  ///< already complete on disk
};

/// Writes the train and held-out splits. Complete sequences whose manifest
/// matches are left alone; incomplete ones are regenerated (kResume) or
/// reported (kError, as an IoError).
SynthSummary cmd_synth(const ExperimentConfig& config, PartialPolicy policy = PartialPolicy::kResume,
                       const CommandOptions& options = {});

// ---- train-denoiser ----

struct TrainSummary {
  double autoencoder_heldout_psnr = 0.0;
  double latent_scale = 1.0;  ///< diffusion latent = autoencoder latent * scale
  double denoiser_heldout_loss_init = 0.0;
  double denoiser_heldout_loss_final = 0.0;
};

/// Pretrains the autoencoder on the training frames, encodes the training
/// set, and trains the denoiser on the scaled latents with LR conditions.
TrainSummary cmd_train_denoiser(const ExperimentConfig& config, const CommandOptions& options = {});

// ---- sampling and decoding helpers ----

/// Diffusion-space latent scale stored next to the models.
double load_latent_scale(const ExperimentConfig& config);

/// Samples one sequence on the latent grid of the HR size. Guidance follows
/// `gcfg` (scale 0 gives plain DDPM with the same noise stream).
Tensor<float> sample_sequence(const Denoiser& denoiser, const VideoSequence& lr, const LatentMotion& motion,
                              const ExperimentConfig& config, const GuidanceConfig& gcfg, Prng& rng);

/// Temporal-aware decoding with fusion features taken from the upscaled LR input.
Tensor<float> decode_with_features(const Autoencoder& model, const Tensor<float>& latent, const VideoSequence& lr,
                                   Index height, Index width, double cfw_weight);

// ---- sample ----

struct SampleSummary {
  int sequences = 0;
  bool guided = false;
  std::string decoder;  ///< "frame_independent" or "temporal"
};

/// Samples latents for the given splits and writes them with decoded frames
/// to `<workdir>/samples/<split>/<id>/` (latent.ckpt, out_NNNN.*).
SampleSummary cmd_sample(const ExperimentConfig& config, const std::vector<Split>& splits,
                         const CommandOptions& options = {});

// ---- finetune-decoder ----

struct FinetuneSummary {
  int logged_steps = 0;
  FinetuneStep first, last;
};

/// Fine-tunes the temporal and fusion weights on (LR, sampled latent, HR)
/// triples of the training split.
FinetuneSummary cmd_finetune_decoder(const ExperimentConfig& config, const CommandOptions& options = {});

// ---- evaluate ----

struct SequenceMetrics {
  std::string id;
  Index frames = 0;
  double psnr = 0.0, ssim = 0.0, we = 0.0;
};

struct EvalSummary {
  std::vector<SequenceMetrics> rows;  ///< sorted by id
  double mean_psnr = 0.0, mean_ssim = 0.0, mean_we = 0.0;
};

/// Metrics of decoded frames against the ground truth: PSNR and SSIM per
/// frame averaged, WE with the ground-truth backward flows.
SequenceMetrics sequence_metrics(const std::string& id, const Tensor<float>& pred, const SequenceRecord& truth);

/// Scores every `<results>/<id>/out_*` directory against the dataset and
/// writes `<workdir>/eval/metrics.csv`. An empty `results` means the held-out
/// samples directory.
EvalSummary cmd_evaluate(const ExperimentConfig& config, const std::filesystem::path& results = {},
                         const CommandOptions& options = {});

// ---- ablate ----

struct AblationCell {
  bool mds_on = false, tsd_on = false;
  int sequences = 0;
  double we = 0.0, psnr = 0.0, ssim = 0.0;
  double latent_energy = 0.0;  ///< mean unsmoothed latent warping energy of the sampled latents
};

struct AblationRow {
  std::string id;
  bool mds_on = false, tsd_on = false;
  double we = 0.0, psnr = 0.0, ssim = 0.0, latent_energy = 0.0;
};

struct AblationSummary {
  std::vector<AblationCell> cells;  ///< (off, off), (on, off), (off, on), (on, on)
  std::vector<AblationRow> rows;
  const AblationCell& cell(bool mds, bool tsd) const;
};

/// Runs the 2x2 guidance / temporal-decoder grid on the held-out split with
/// paired noise per sequence. Writes ablation.csv and per_sequence.csv under
/// `<workdir>/ablation`.
AblationSummary cmd_ablate(const ExperimentConfig& config, const CommandOptions& options = {});

// ---- gradcheck ----

/// Runs the gradient checks and writes `<workdir>/gradcheck/report.csv`.
/// Throws CheckFailure when a tolerance is exceeded.
GradcheckReport cmd_gradcheck(const ExperimentConfig& config, const CommandOptions& options = {});

}  // namespace flowguide
