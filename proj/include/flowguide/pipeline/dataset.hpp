#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "flowguide/diffusion/sampler.hpp"
#include "flowguide/pipeline/config.hpp"
#include "flowguide/synth/scene.hpp"

namespace flowguide {

enum class Split { kTrain, kHeldout };

std::string split_name(Split split);
/// "train_0003", "heldout_0012".
std::string sequence_id(Split split, int index);
int split_size(const ExperimentConfig& config, Split split);

/// Independent random streams per purpose and sequence, so results never
/// depend on processing order or worker count.
enum class Stream : std::uint64_t {
  kScene = 1,
  kDegrade = 2,
  kSample = 3,
  kAblate = 4,
  kAutoencoder = 5,
  kDenoiser = 6,
  kDenoiserEval = 7,
  kFinetune = 8,
  kModelInit = 9,
  kGradcheck = 10,
  kAcceptance = 11,
};
Prng stream_rng(std::uint64_t seed, Stream stream, Split split, int index);
Prng stream_rng(std::uint64_t seed, Stream stream);

/// One synthetic sequence with its degraded input and exact motion.
struct SequenceRecord {
  std::string id;
  VideoSequence hr;
  VideoSequence lr;
  FlowSet<float> flows;  ///< ground truth on the HR grid
  MaskSet<float> masks;
};

synth::SceneSpec scene_for(const ExperimentConfig& config, Split split, int index);
SequenceRecord generate_sequence(const ExperimentConfig& config, Split split, int index);

/// The manifest describing how a sequence was produced; a sequence on disk
/// is complete when its manifest exists and equals this one.
std::map<std::string, std::string> sequence_manifest(const ExperimentConfig& config, Split split, int index);

/// Layout of one sequence directory:
///   hr_NNNN.ppm|pgm, lr_NNNN.ppm|pgm, flow_fwd_NNNN.flo, flow_bwd_NNNN.flo,
///   mask_fwd_NNNN.pgm, mask_bwd_NNNN.pgm, manifest.txt (written last).
void write_sequence(const std::filesystem::path& dir, const SequenceRecord& record,
                    const std::map<std::string, std::string>& manifest);
SequenceRecord read_sequence(const std::filesystem::path& dir);
bool sequence_complete(const std::filesystem::path& dir, const std::map<std::string, std::string>& manifest);

/// Reads every sequence of a split from the dataset directory, in id order.
std::vector<SequenceRecord> load_split(const ExperimentConfig& config, Split split);
std::filesystem::path split_dir(const ExperimentConfig& config, Split split);

/// Frame writers that pick PGM or PPM from the channel count.
std::string frame_extension(Index channels);
void write_frames(const std::filesystem::path& dir, const std::string& prefix, const Tensor<float>& frames);
Tensor<float> read_frames(const std::filesystem::path& dir, const std::string& prefix, Index count, Index channels);

/// Guidance motion for one sequence: Horn-Schunck flows and forward-backward
/// occlusion masks estimated on the LR frames, then reduced to the latent
/// grid. With `use_masks` off every mask is one.
LatentMotion guidance_motion(const VideoSequence& lr, const ExperimentConfig& config, Index latent_h, Index latent_w);

}  // namespace flowguide
