#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "flowguide/core/schedule.hpp"
#include "flowguide/decoder/autoencoder.hpp"
#include "flowguide/decoder/training.hpp"
#include "flowguide/diffusion/denoiser.hpp"
#include "flowguide/diffusion/sampler.hpp"
#include "flowguide/motion/horn_schunck.hpp"
#include "flowguide/synth/degrade.hpp"

namespace flowguide {

/// Every knob of an experiment. Serialized as sectioned `key = value` text:
///
///   [run]
///   seed = 2024
///   workdir = "runs/default"
///
/// Strings are double-quoted, booleans are true/false, `#` starts a comment.
/// Unknown sections or keys are errors.
struct ExperimentConfig {
  struct Run {
    std::uint64_t seed = 2024;
    int workers = 1;
    std::string workdir = "runs/default";
    std::string data_dir;        ///< empty: <workdir>/data
    std::string checkpoint_dir;  ///< empty: <workdir>/models
  } run;

  struct Data {
    int train_sequences = 30;
    int heldout_sequences = 10;
    int frames = 8;
    int height = 128;
    int width = 128;
    int channels = 3;
    std::string scene = "random";  ///< random | occluder | mixed (alternating)
  } data;

  synth::DegradationSpec degradation;

  struct Flow {
    int levels = 3;
    int iterations = 100;
    double smoothness = 15.0;
    int warps = 1;
    int median_radius = 0;
    double alpha1 = 0.01;
    double alpha2 = 0.5;
  } flow;

  struct Schedule {
    int steps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    std::string variance = "posterior";  ///< posterior | beta
    int sample_steps = 50;
  } schedule;

  struct Guidance {
    bool mds_on = true;
    double scale = 1.0;
    double charbonnier_eps = 1e-3;
    std::string eval_point = "after_ddpm_step";  ///< after_ddpm_step | at_previous_latent
    bool use_masks = true;                       ///< false replaces every mask with ones
  } guidance;

  struct AutoencoderSection {
    int width = 32;
    int latent_channels = 8;
    int iterations = 800;
    int batch_frames = 8;
    int crop = 64;
    double lr = 2e-3;
  } autoencoder;

  struct DenoiserSection {
    int width = 32;
    int stages = 4;
    int time_dim = 32;
    int iterations = 2000;
    int batch_sequences = 4;
    double lr = 2e-4;
  } denoiser;

  struct Decoder {
    bool tsd_on = true;
    std::string order = "temporal_then_cfw";  ///< temporal_then_cfw | cfw_then_temporal
    double cfw_weight = 0.5;
    int iterations = 300;
    int window = 5;
    double lr = 1e-3;
    double disc_lr = 2e-4;
    int disc_width = 16;
    double alpha = 0.5;
    double beta = 0.5;
    double gamma = 0.025;
    double w = 3.0;
  } decoder;

  struct Gradcheck {
    int instances = 50;
    double energy_tolerance = 1e-3;
    double vjp_tolerance = 1e-5;
    bool corrupt_gradient = false;  ///< negative-control hook: perturbs the analytic gradient
  } gradcheck;

  /// Throws ConfigError describing the first invalid value.
  void validate() const;

  std::filesystem::path workdir() const { return run.workdir; }
  std::filesystem::path data_dir() const;
  std::filesystem::path checkpoint_dir() const;

  // Typed views used by the commands.
  FlowSolverParams flow_params() const;
  NoiseSchedule noise_schedule() const;
  GuidanceConfig guidance_config() const;
  AutoencoderConfig autoencoder_config() const;
  AutoencoderTrainConfig autoencoder_train_config() const;
  DenoiserConfig denoiser_config() const;
  DenoiserTrainConfig denoiser_train_config() const;
  FinetuneConfig finetune_config() const;
  LossWeights loss_weights() const;

  bool operator==(const ExperimentConfig& other) const;
};

/// Parses config text on top of the defaults. Throws ConfigError with the
/// offending line number.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig parse_config(const std::string& text, const ExperimentConfig& base);
std::string serialize_config(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Applies one `section.key=value` override.
void apply_override(ExperimentConfig& config, const std::string& assignment);

}  // namespace flowguide
