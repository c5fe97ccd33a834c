#include "flowguide/pipeline/dataset.hpp"

#include <algorithm>
#include <cstdio>

#include "flowguide/core/errors.hpp"
#include "flowguide/io/formats.hpp"
#include "flowguide/motion/horn_schunck.hpp"
#include "flowguide/synth/degrade.hpp"

namespace flowguide {

namespace fs = std::filesystem;

namespace {

bool occluder_kind(const ExperimentConfig& config, int index) {
  if (config.data.scene == "occluder") return true;
  if (config.data.scene == "mixed") return index % 2 == 1;
  return false;
}

}  // namespace

std::string split_name(Split split) { return split == Split::kTrain ? "train" : "heldout"; }

std::string sequence_id(Split split, int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d", index);
  return split_name(split) + "_" + buf;
}

int split_size(const ExperimentConfig& config, Split split) {
  return split == Split::kTrain ? config.data.train_sequences : config.data.heldout_sequences;
}

Prng stream_rng(std::uint64_t seed, Stream stream, Split split, int index) {
  const std::uint64_t key = (static_cast<std::uint64_t>(stream) << 40) ^
                            (static_cast<std::uint64_t>(split == Split::kTrain ? 1 : 2) << 32) ^
                            static_cast<std::uint64_t>(index);
  return Prng(seed).split(key);
}

Prng stream_rng(std::uint64_t seed, Stream stream) { return Prng(seed).split(static_cast<std::uint64_t>(stream) << 40); }

synth::SceneSpec scene_for(const ExperimentConfig& config, Split split, int index) {
  const std::uint64_t scene_seed = stream_rng(config.run.seed, Stream::kScene, split, index).next_u64();
  const auto& d = config.data;
  return occluder_kind(config, index) ? synth::occluder_scene(scene_seed, d.height, d.width, d.frames, d.channels)
                                      : synth::random_scene(scene_seed, d.height, d.width, d.frames, d.channels);
}

SequenceRecord generate_sequence(const ExperimentConfig& config, Split split, int index) {
  const synth::SynthResult r = synth::synth_sequence(scene_for(config, split, index));
  Prng rng = stream_rng(config.run.seed, Stream::kDegrade, split, index);
  SequenceRecord rec;
  rec.id = sequence_id(split, index);
  rec.hr = r.frames;
  rec.lr = synth::degrade_sequence(r.frames, config.degradation, rng);
  rec.flows = r.flows;
  rec.masks = r.masks;
  return rec;
}

std::map<std::string, std::string> sequence_manifest(const ExperimentConfig& config, Split split, int index) {
  const synth::SceneSpec scene = scene_for(config, split, index);
  const auto& d = config.data;
  const auto& g = config.degradation;
  return {
      {"id", sequence_id(split, index)},
      {"split", split_name(split)},
      {"index", std::to_string(index)},
      {"run_seed", std::to_string(config.run.seed)},
      {"scene_seed", std::to_string(scene.seed)},
      {"scene_kind", occluder_kind(config, index) ? "occluder" : "random"},
      {"sprites", std::to_string(scene.sprites.size())},
      {"frames", std::to_string(d.frames)},
      {"channels", std::to_string(d.channels)},
      {"hr_height", std::to_string(d.height)},
      {"hr_width", std::to_string(d.width)},
      {"lr_height", std::to_string(d.height / g.factor)},
      {"lr_width", std::to_string(d.width / g.factor)},
      {"blur_sigma", io::format_double(g.blur_sigma)},
      {"factor", std::to_string(g.factor)},
      {"noise_sigma", io::format_double(g.noise_sigma)},
      {"levels", std::to_string(g.levels)},
      {"pan_x", io::format_double(scene.pan_x)},
      {"pan_y", io::format_double(scene.pan_y)},
  };
}

std::string frame_extension(Index channels) { return channels == 1 ? ".pgm" : ".ppm"; }

void write_frames(const fs::path& dir, const std::string& prefix, const Tensor<float>& frames) {
  const std::string ext = frame_extension(frames.dim(1));
  for (Index i = 0; i < frames.dim(0); ++i) {
    io::write_frame(dir / io::indexed_name(prefix, static_cast<std::size_t>(i), ext), frames.slice(i));
  }
}

Tensor<float> read_frames(const fs::path& dir, const std::string& prefix, Index count, Index channels) {
  std::vector<Tensor<float>> frames;
  for (Index i = 0; i < count; ++i) {
    frames.push_back(io::read_frame(dir / io::indexed_name(prefix, static_cast<std::size_t>(i), frame_extension(channels))));
    if (frames.back().dim(0) != channels) throw IoError("unexpected channel count in " + dir.string());
  }
  return VideoSequence::from_frames(frames).tensor();
}

void write_sequence(const fs::path& dir, const SequenceRecord& rec, const std::map<std::string, std::string>& manifest) {
  io::ensure_directory(dir);
  // A stale manifest would mark a half-written directory as complete.
  std::error_code ec;
  fs::remove(dir / "manifest.txt", ec);
  write_frames(dir, "hr", rec.hr.tensor());
  write_frames(dir, "lr", rec.lr.tensor());
  for (std::size_t i = 0; i < rec.flows.pairs(); ++i) {
    io::write_flo(dir / io::indexed_name("flow_fwd", i, ".flo"), rec.flows.forward[i]);
    io::write_flo(dir / io::indexed_name("flow_bwd", i, ".flo"), rec.flows.backward[i]);
    io::write_mask(dir / io::indexed_name("mask_fwd", i, ".pgm"), rec.masks.forward[i]);
    io::write_mask(dir / io::indexed_name("mask_bwd", i, ".pgm"), rec.masks.backward[i]);
  }
  io::write_manifest(dir / "manifest.txt", manifest);
}

SequenceRecord read_sequence(const fs::path& dir) {
  if (!fs::exists(dir / "manifest.txt")) throw IoError("incomplete sequence directory (no manifest): " + dir.string());
  const auto manifest = io::read_manifest(dir / "manifest.txt");
  auto field = [&](const std::string& key) {
    const auto it = manifest.find(key);
    if (it == manifest.end()) throw IoError("manifest in " + dir.string() + " lacks " + key);
    return it->second;
  };
  const Index frames = std::stol(field("frames"));
  const Index channels = std::stol(field("channels"));
  SequenceRecord rec;
  rec.id = field("id");
  rec.hr = VideoSequence(read_frames(dir, "hr", frames, channels));
  rec.lr = VideoSequence(read_frames(dir, "lr", frames, channels));
  for (Index i = 0; i + 1 < frames; ++i) {
    const auto k = static_cast<std::size_t>(i);
    rec.flows.forward.push_back(io::read_flo(dir / io::indexed_name("flow_fwd", k, ".flo")));
    rec.flows.backward.push_back(io::read_flo(dir / io::indexed_name("flow_bwd", k, ".flo")));
    rec.masks.forward.push_back(io::read_mask(dir / io::indexed_name("mask_fwd", k, ".pgm")));
    rec.masks.backward.push_back(io::read_mask(dir / io::indexed_name("mask_bwd", k, ".pgm")));
  }
  return rec;
}

bool sequence_complete(const fs::path& dir, const std::map<std::string, std::string>& manifest) {
  const fs::path path = dir / "manifest.txt";
  if (!fs::exists(path)) return false;
  return io::read_manifest(path) == manifest;
}

fs::path split_dir(const ExperimentConfig& config, Split split) { return config.data_dir() / split_name(split); }

std::vector<SequenceRecord> load_split(const ExperimentConfig& config, Split split) {
  const int count = split_size(config, split);
  std::vector<SequenceRecord> out(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const fs::path dir = split_dir(config, split) / sequence_id(split, i);
    if (!fs::exists(dir)) throw IoError("missing dataset sequence " + dir.string() + " (run synth first)");
    out[static_cast<std::size_t>(i)] = read_sequence(dir);
  }
  return out;
}

LatentMotion guidance_motion(const VideoSequence& lr, const ExperimentConfig& config, Index latent_h, Index latent_w) {
  const FlowSet<float> flows = estimate_flows(lr.tensor(), config.flow_params());
  LatentMotion motion;
  motion.flows = downsample_flows(flows, latent_h, latent_w);
  if (config.guidance.use_masks) {
    const MaskSet<float> masks =
        occlusion_masks(flows, static_cast<float>(config.flow.alpha1), static_cast<float>(config.flow.alpha2));
    motion.masks = downsample_masks(masks, latent_h, latent_w);
  } else {
    motion.masks = MaskSet<float>::full(flows.pairs(), latent_h, latent_w);
  }
  return motion;
}

}  // namespace flowguide
