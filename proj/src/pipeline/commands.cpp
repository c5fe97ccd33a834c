#include "flowguide/pipeline/commands.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>

#include "flowguide/core/errors.hpp"
#include "flowguide/diffusion/condition.hpp"
#include "flowguide/diffusion/energy.hpp"
#include "flowguide/io/formats.hpp"
#include "flowguide/metrics/metrics.hpp"
#include "flowguide/pipeline/parallel.hpp"

namespace flowguide {

namespace fs = std::filesystem;

namespace {

/// Timestamped progress log for one command's output directory.
class RunLog {
 public:
  RunLog(const fs::path& dir, const std::string& command, bool echo)
      : path_(dir / "log.txt"), echo_(echo), start_(std::chrono::steady_clock::now()) {
    line("begin " + command);
  }

  void line(const std::string& text) {
    std::lock_guard<std::mutex> lock(mutex_);
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << " +" << std::fixed << std::setprecision(1) << elapsed << "s "
       << text << "\n";
    std::ofstream out(path_, std::ios::app);
    if (!out) throw IoError("cannot append to log file " + path_.string());
    out << os.str();
    if (echo_) std::cerr << text << "\n";
  }

 private:
  fs::path path_;
  bool echo_;
  std::chrono::steady_clock::time_point start_;
  std::mutex mutex_;
};

/// Creates the output directory and archives the config used.
void prepare_output(const fs::path& dir, const ExperimentConfig& config) {
  io::ensure_directory(dir);
  io::write_text(dir / "config.toml", serialize_config(config));
}

void require_artifact(const fs::path& path, const std::string& what, const std::string& producer) {
  if (!fs::exists(path)) throw IoError("missing " + what + " " + path.string() + " (run " + producer + " first)");
}

std::string fmt(double v) { return io::format_double(v); }
std::string on_off(bool v) { return v ? "on" : "off"; }

Dims latent_dims(const ExperimentConfig& config) {
  return {config.data.frames, config.autoencoder.latent_channels, config.data.height / kLatentFactor,
          config.data.width / kLatentFactor};
}

std::uint64_t model_seed(const ExperimentConfig& config, std::uint64_t which) {
  return stream_rng(config.run.seed, Stream::kModelInit).split(which).next_u64();
}

Tensor<float> scaled(const Tensor<float>& t, double s) {
  return Tensor<float>(t.dims(), Tensor<float>::Array(t.array() * static_cast<float>(s)));
}

std::vector<Split> both_splits() { return {Split::kTrain, Split::kHeldout}; }

}  // namespace

fs::path autoencoder_path(const ExperimentConfig& c) { return c.checkpoint_dir() / "autoencoder.ckpt"; }
fs::path denoiser_path(const ExperimentConfig& c) { return c.checkpoint_dir() / "denoiser.ckpt"; }
fs::path latent_stats_path(const ExperimentConfig& c) { return c.checkpoint_dir() / "latent_stats.txt"; }
fs::path finetuned_decoder_path(const ExperimentConfig& c) { return c.checkpoint_dir() / "decoder_finetuned.ckpt"; }
fs::path discriminator_path(const ExperimentConfig& c) { return c.checkpoint_dir() / "discriminator.ckpt"; }
fs::path samples_dir(const ExperimentConfig& c) { return c.workdir() / "samples"; }

// ---- synth ----

SynthSummary cmd_synth(const ExperimentConfig& config, PartialPolicy policy, const CommandOptions& options) {
  config.validate();
  const fs::path root = config.data_dir();
  prepare_output(root, config);
  RunLog log(root, "synth", options.echo);
  SynthSummary summary;
  std::mutex m;
  for (const Split split : both_splits()) {
    const int count = split_size(config, split);
    parallel_for(static_cast<std::size_t>(count), config.run.workers, [&](std::size_t k) {
      const int i = static_cast<int>(k);
      const fs::path dir = split_dir(config, split) / sequence_id(split, i);
      const auto manifest = sequence_manifest(config, split, i);
      if (sequence_complete(dir, manifest)) {
        std::lock_guard<std::mutex> lock(m);
        ++summary.skipped;
        return;
      }
      if (fs::exists(dir) && policy == PartialPolicy::kError) {
        throw IoError("sequence directory " + dir.string() + " is incomplete or was produced by a different config");
      }
      write_sequence(dir, generate_sequence(config, split, i), manifest);
      std::lock_guard<std::mutex> lock(m);
      ++summary.generated;
    });
  }
  io::write_manifest(root / "manifest.txt", {{"train_sequences", std::to_string(config.data.train_sequences)},
                                             {"heldout_sequences", std::to_string(config.data.heldout_sequences)},
                                             {"frames", std::to_string(config.data.frames)},
                                             {"seed", std::to_string(config.run.seed)}});
  log.line("generated " + std::to_string(summary.generated) + ", already complete " + std::to_string(summary.skipped));
  return summary;
}

// ---- train-denoiser ----

double load_latent_scale(const ExperimentConfig& config) {
  require_artifact(latent_stats_path(config), "latent statistics", "train-denoiser");
  const auto stats = io::read_manifest(latent_stats_path(config));
  const auto it = stats.find("latent_scale");
  if (it == stats.end()) throw IoError("latent statistics lack latent_scale: " + latent_stats_path(config).string());
  return std::stod(it->second);
}

TrainSummary cmd_train_denoiser(const ExperimentConfig& config, const CommandOptions& options) {
  config.validate();
  const fs::path out = config.workdir() / "train";
  prepare_output(out, config);
  io::ensure_directory(config.checkpoint_dir());
  RunLog log(out, "train-denoiser", options.echo);

  const std::vector<SequenceRecord> train = load_split(config, Split::kTrain);
  const std::vector<SequenceRecord> heldout = load_split(config, Split::kHeldout);
  std::vector<VideoSequence> train_frames, heldout_frames;
  for (const auto& r : train) train_frames.push_back(r.hr);
  for (const auto& r : heldout) heldout_frames.push_back(r.hr);

  TrainSummary summary;

  Autoencoder ae(config.autoencoder_config(), model_seed(config, 1));
  {
    Prng rng = stream_rng(config.run.seed, Stream::kAutoencoder);
    const LossCurve curve = pretrain_autoencoder(ae, train_frames, config.autoencoder_train_config(), rng);
    io::CsvWriter csv(out / "autoencoder_loss.csv", {"iteration", "loss"});
    for (const auto& [it, loss] : curve.losses) csv.row({std::to_string(it), fmt(loss)});
  }
  ae.save(autoencoder_path(config));
  summary.autoencoder_heldout_psnr = reconstruction_psnr(ae, heldout_frames);
  log.line("autoencoder held-out reconstruction PSNR " + fmt(summary.autoencoder_heldout_psnr) + " dB");

  // Latents of the clean frames, rescaled to unit variance for diffusion.
  const Index h = config.data.height, w = config.data.width;
  auto encode_split = [&](const std::vector<SequenceRecord>& recs) {
    std::vector<LatentExample> out_examples(recs.size());
    parallel_for(recs.size(), config.run.workers, [&](std::size_t i) {
      out_examples[i] = {ae.encode(recs[i].hr.tensor()).latent, make_condition(recs[i].lr, h, w)};
    });
    return out_examples;
  };
  std::vector<LatentExample> train_latents = encode_split(train);
  std::vector<LatentExample> heldout_latents = encode_split(heldout);
  double sum_sq = 0.0;
  Index count = 0;
  for (const auto& ex : train_latents) {
    sum_sq += ex.latent.array().cast<double>().square().sum();
    count += ex.latent.size();
  }
  const double rms = std::sqrt(sum_sq / static_cast<double>(count));
  summary.latent_scale = rms > 0.0 ? 1.0 / rms : 1.0;
  for (auto* set : {&train_latents, &heldout_latents}) {
    for (auto& ex : *set) ex.latent = scaled(ex.latent, summary.latent_scale);
  }
  io::write_manifest(latent_stats_path(config), {{"latent_scale", fmt(summary.latent_scale)}, {"latent_rms", fmt(rms)}});

  const NoiseSchedule sched = config.noise_schedule();
  Denoiser denoiser(config.denoiser_config(), model_seed(config, 2));
  auto heldout_loss = [&] {
    Prng rng = stream_rng(config.run.seed, Stream::kDenoiserEval);
    constexpr int kRepeats = 8;
    double total = 0.0;
    for (int r = 0; r < kRepeats; ++r) total += denoiser_loss(denoiser, heldout_latents, sched, rng);
    return total / kRepeats;
  };
  summary.denoiser_heldout_loss_init = heldout_loss();
  {
    Prng rng = stream_rng(config.run.seed, Stream::kDenoiser);
    const TrainLog tlog = train_denoiser(denoiser, train_latents, sched, config.denoiser_train_config(), rng);
    io::CsvWriter csv(out / "denoiser_loss.csv", {"iteration", "loss"});
    for (const auto& [it, loss] : tlog.losses) csv.row({std::to_string(it), fmt(loss)});
  }
  summary.denoiser_heldout_loss_final = heldout_loss();
  denoiser.save(denoiser_path(config));
  log.line("denoiser held-out loss " + fmt(summary.denoiser_heldout_loss_init) + " -> " +
           fmt(summary.denoiser_heldout_loss_final));

  io::write_manifest(out / "report.txt",
                     {{"autoencoder_heldout_psnr", fmt(summary.autoencoder_heldout_psnr)},
                      {"latent_scale", fmt(summary.latent_scale)},
                      {"denoiser_heldout_loss_init", fmt(summary.denoiser_heldout_loss_init)},
                      {"denoiser_heldout_loss_final", fmt(summary.denoiser_heldout_loss_final)},
                      {"denoiser_parameters", std::to_string(denoiser.params().scalar_count())},
                      {"autoencoder_parameters", std::to_string(ae.params().scalar_count())}});
  return summary;
}

// ---- sampling helpers ----

Tensor<float> sample_sequence(const Denoiser& denoiser, const VideoSequence& lr, const LatentMotion& motion,
                              const ExperimentConfig& config, const GuidanceConfig& gcfg, Prng& rng) {
  const Index h = config.data.height, w = config.data.width;
  const Tensor<float> cond = make_condition(lr, h, w);
  return motion_guided_sample(denoiser.as_model(), cond, motion, config.noise_schedule(), gcfg,
                              config.schedule.sample_steps, latent_dims(config), rng);
}

Tensor<float> decode_with_features(const Autoencoder& model, const Tensor<float>& latent, const VideoSequence& lr,
                                   Index height, Index width, double cfw_weight) {
  const EncoderFeatures feats = model.encode(upscale_lr(lr, height, width)).features;
  return model.decode(latent, &feats, cfw_weight, true);
}

// ---- sample ----

SampleSummary cmd_sample(const ExperimentConfig& config, const std::vector<Split>& splits, const CommandOptions& options) {
  config.validate();
  const fs::path out = samples_dir(config);
  prepare_output(out, config);
  RunLog log(out, "sample", options.echo);
  require_artifact(autoencoder_path(config), "autoencoder checkpoint", "train-denoiser");
  require_artifact(denoiser_path(config), "denoiser checkpoint", "train-denoiser");
  const Autoencoder base = Autoencoder::load(autoencoder_path(config));
  const Denoiser denoiser = Denoiser::load(denoiser_path(config));
  const double scale = load_latent_scale(config);

  const bool temporal = config.decoder.tsd_on && fs::exists(finetuned_decoder_path(config));
  const Autoencoder decoder = temporal ? Autoencoder::load(finetuned_decoder_path(config)) : base;
  const GuidanceConfig gcfg = config.guidance_config();
  const Index lh = config.data.height / kLatentFactor, lw = config.data.width / kLatentFactor;

  SampleSummary summary;
  summary.guided = gcfg.scale > 0.0;
  summary.decoder = temporal ? "temporal" : "frame_independent";
  for (const Split split : splits) {
    const std::vector<SequenceRecord> recs = load_split(config, split);
    parallel_for(recs.size(), config.run.workers, [&](std::size_t i) {
      const SequenceRecord& rec = recs[i];
      Prng rng = stream_rng(config.run.seed, Stream::kSample, split, static_cast<int>(i));
      const LatentMotion motion = guidance_motion(rec.lr, config, lh, lw);
      const Tensor<float> z0 = sample_sequence(denoiser, rec.lr, motion, config, gcfg, rng);
      const Tensor<float> latent = scaled(z0, 1.0 / scale);
      const Tensor<float> frames =
          temporal ? decode_with_features(decoder, latent, rec.lr, config.data.height, config.data.width,
                                          config.decoder.cfw_weight)
                   : decoder.decode_frame_independent(latent);
      const fs::path dir = out / split_name(split) / rec.id;
      io::ensure_directory(dir);
      nn::Checkpoint ckpt;
      ckpt.put("latent", latent);
      ckpt.put("z0", z0);
      ckpt.save(dir / "latent.ckpt");
      write_frames(dir, "out", frames);
      io::write_manifest(dir / "manifest.txt", {{"id", rec.id},
                                                {"frames", std::to_string(frames.dim(0))},
                                                {"channels", std::to_string(frames.dim(1))},
                                                {"guided", summary.guided ? "true" : "false"},
                                                {"decoder", summary.decoder}});
    });
    summary.sequences += static_cast<int>(recs.size());
    log.line("sampled " + std::to_string(recs.size()) + " " + split_name(split) + " sequences (guidance " +
             on_off(summary.guided) + ", decoder " + summary.decoder + ")");
  }
  return summary;
}

// ---- finetune-decoder ----

FinetuneSummary cmd_finetune_decoder(const ExperimentConfig& config, const CommandOptions& options) {
  config.validate();
  const fs::path out = config.workdir() / "finetune";
  prepare_output(out, config);
  RunLog log(out, "finetune-decoder", options.echo);
  require_artifact(autoencoder_path(config), "autoencoder checkpoint", "train-denoiser");
  Autoencoder model = Autoencoder::load(autoencoder_path(config));
  if (model.config().order != config.autoencoder_config().order) {
    // The fusion order is a decoder-only choice; rebuild with the configured one.
    Autoencoder reordered(config.autoencoder_config(), 0);
    for (std::size_t i = 0; i < model.params().size(); ++i) reordered.params()[i].value = model.params()[i].value;
    model = std::move(reordered);
  }

  const std::vector<SequenceRecord> train = load_split(config, Split::kTrain);
  const Index h = config.data.height, w = config.data.width;
  std::vector<FinetuneExample> data(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    const fs::path ckpt_path = samples_dir(config) / "train" / train[i].id / "latent.ckpt";
    require_artifact(ckpt_path, "sampled latent", "sample");
    const nn::Checkpoint ckpt = nn::Checkpoint::load(ckpt_path);
    data[i].latent = ckpt.get("latent");
    data[i].degraded = upscale_lr(train[i].lr, h, w);
    data[i].hr = train[i].hr.tensor();
    data[i].flows = train[i].flows;
    data[i].masks = train[i].masks;
  }

  Discriminator disc(config.data.channels, config.decoder.disc_width, model_seed(config, 3));
  Prng rng = stream_rng(config.run.seed, Stream::kFinetune);
  const FinetuneLog flog = finetune_decoder(model, disc, data, config.finetune_config(), rng);
  model.save(finetuned_decoder_path(config));
  {
    nn::Checkpoint ckpt;
    nn::export_parameters(disc.params(), ckpt);
    ckpt.save(discriminator_path(config));
  }

  io::CsvWriter csv(out / "finetune_loss.csv", {"iteration", "recon", "diff", "swc", "gan", "total", "disc"});
  for (const FinetuneStep& s : flog.steps) {
    csv.row({std::to_string(s.iteration), fmt(s.recon), fmt(s.diff), fmt(s.swc), fmt(s.gan), fmt(s.total), fmt(s.disc)});
  }
  FinetuneSummary summary;
  summary.logged_steps = static_cast<int>(flog.steps.size());
  if (!flog.steps.empty()) {
    summary.first = flog.steps.front();
    summary.last = flog.steps.back();
    log.line("fine-tuning total loss " + fmt(summary.first.total) + " -> " + fmt(summary.last.total));
  }
  return summary;
}

// ---- evaluate ----

SequenceMetrics sequence_metrics(const std::string& id, const Tensor<float>& pred, const SequenceRecord& truth) {
  require_same_shape(pred, truth.hr.tensor(), "sequence_metrics");
  SequenceMetrics m;
  m.id = id;
  m.frames = pred.dim(0);
  m.psnr = sequence_psnr(pred, truth.hr.tensor());
  m.ssim = sequence_ssim(pred, truth.hr.tensor());
  m.we = warping_error_metric(pred, truth.flows.backward);
  return m;
}

EvalSummary cmd_evaluate(const ExperimentConfig& config, const fs::path& results, const CommandOptions& options) {
  config.validate();
  const fs::path in = results.empty() ? samples_dir(config) / "heldout" : results;
  const fs::path out = config.workdir() / "eval";
  prepare_output(out, config);
  RunLog log(out, "evaluate", options.echo);
  if (!fs::is_directory(in)) throw IoError("results directory not found: " + in.string());

  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(in)) {
    if (entry.is_directory() && fs::exists(entry.path() / "manifest.txt")) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw IoError("no result sequences in " + in.string());

  EvalSummary summary;
  summary.rows.resize(dirs.size());
  parallel_for(dirs.size(), config.run.workers, [&](std::size_t i) {
    const auto manifest = io::read_manifest(dirs[i] / "manifest.txt");
    const std::string id = dirs[i].filename().string();
    const std::string split = id.substr(0, id.find('_'));
    const fs::path truth_dir = config.data_dir() / split / id;
    if (!fs::exists(truth_dir)) throw IoError("no ground truth for " + id + " at " + truth_dir.string());
    const SequenceRecord truth = read_sequence(truth_dir);
    const Tensor<float> pred = read_frames(dirs[i], "out", std::stol(manifest.at("frames")), std::stol(manifest.at("channels")));
    summary.rows[i] = sequence_metrics(id, pred, truth);
  });

  io::CsvWriter csv(out / "metrics.csv", {"sequence_id", "frame_count", "psnr", "ssim", "we"});
  for (const SequenceMetrics& m : summary.rows) {
    csv.row({m.id, std::to_string(m.frames), fmt(m.psnr), fmt(m.ssim), fmt(m.we)});
    summary.mean_psnr += m.psnr;
    summary.mean_ssim += m.ssim;
    summary.mean_we += m.we;
  }
  const double n = static_cast<double>(summary.rows.size());
  summary.mean_psnr /= n;
  summary.mean_ssim /= n;
  summary.mean_we /= n;
  io::write_manifest(out / "summary.txt", {{"sequences", std::to_string(summary.rows.size())},
                                           {"results", in.string()},
                                           {"mean_psnr", fmt(summary.mean_psnr)},
                                           {"mean_ssim", fmt(summary.mean_ssim)},
                                           {"mean_we", fmt(summary.mean_we)}});
  log.line("evaluated " + std::to_string(summary.rows.size()) + " sequences: PSNR " + fmt(summary.mean_psnr) + ", SSIM " +
           fmt(summary.mean_ssim) + ", WE " + fmt(summary.mean_we));
  return summary;
}

// ---- ablate ----

const AblationCell& AblationSummary::cell(bool mds, bool tsd) const {
  for (const AblationCell& c : cells) {
    if (c.mds_on == mds && c.tsd_on == tsd) return c;
  }
  throw ConfigError("ablation cell not found");
}

AblationSummary cmd_ablate(const ExperimentConfig& config, const CommandOptions& options) {
  config.validate();
  const fs::path out = config.workdir() / "ablation";
  prepare_output(out, config);
  RunLog log(out, "ablate", options.echo);
  require_artifact(autoencoder_path(config), "autoencoder checkpoint", "train-denoiser");
  require_artifact(denoiser_path(config), "denoiser checkpoint", "train-denoiser");
  require_artifact(finetuned_decoder_path(config), "fine-tuned decoder checkpoint", "finetune-decoder");
  const Autoencoder base = Autoencoder::load(autoencoder_path(config));
  const Autoencoder tuned = Autoencoder::load(finetuned_decoder_path(config));
  const Denoiser denoiser = Denoiser::load(denoiser_path(config));
  const double scale = load_latent_scale(config);

  const std::vector<SequenceRecord> heldout = load_split(config, Split::kHeldout);
  const Index lh = config.data.height / kLatentFactor, lw = config.data.width / kLatentFactor;
  GuidanceConfig guided = config.guidance_config();
  guided.scale = config.guidance.scale;
  GuidanceConfig plain = guided;
  plain.scale = 0.0;

  // rows_by_seq[i][cell]; cell index = mds + 2 * tsd
  std::vector<std::array<AblationRow, 4>> rows_by_seq(heldout.size());
  parallel_for(heldout.size(), config.run.workers, [&](std::size_t i) {
    const SequenceRecord& rec = heldout[i];
    const LatentMotion motion = guidance_motion(rec.lr, config, lh, lw);
    const Prng pair_rng = stream_rng(config.run.seed, Stream::kAblate, Split::kHeldout, static_cast<int>(i));
    for (const bool mds : {false, true}) {
      Prng rng = pair_rng;
      const Tensor<float> z0 = sample_sequence(denoiser, rec.lr, motion, config, mds ? guided : plain, rng);
      const double energy = warping_energy(z0, motion.flows, motion.masks, 0.0);
      const Tensor<float> latent = scaled(z0, 1.0 / scale);
      for (const bool tsd : {false, true}) {
        const Tensor<float> frames =
            tsd ? decode_with_features(tuned, latent, rec.lr, config.data.height, config.data.width,
                                       config.decoder.cfw_weight)
                : base.decode_frame_independent(latent);
        const SequenceMetrics m = sequence_metrics(rec.id, frames, rec);
        rows_by_seq[i][(mds ? 1 : 0) + (tsd ? 2 : 0)] = {rec.id, mds, tsd, m.we, m.psnr, m.ssim, energy};
      }
    }
  });

  AblationSummary summary;
  for (int c = 0; c < 4; ++c) {
    AblationCell cell;
    cell.mds_on = (c & 1) != 0;
    cell.tsd_on = (c & 2) != 0;
    for (const auto& seq : rows_by_seq) {
      const AblationRow& r = seq[static_cast<std::size_t>(c)];
      cell.we += r.we;
      cell.psnr += r.psnr;
      cell.ssim += r.ssim;
      cell.latent_energy += r.latent_energy;
    }
    cell.sequences = static_cast<int>(rows_by_seq.size());
    const double n = static_cast<double>(cell.sequences);
    cell.we /= n;
    cell.psnr /= n;
    cell.ssim /= n;
    cell.latent_energy /= n;
    summary.cells.push_back(cell);
  }
  for (int c = 0; c < 4; ++c) {
    for (const auto& seq : rows_by_seq) summary.rows.push_back(seq[static_cast<std::size_t>(c)]);
  }

  const std::vector<std::string> echo = {fmt(config.guidance.scale), config.guidance.use_masks ? "true" : "false",
                                         fmt(config.decoder.cfw_weight)};
  io::CsvWriter table(out / "ablation.csv", {"mds", "tsd", "sequences", "we", "psnr", "ssim", "latent_energy",
                                             "guidance_scale", "use_masks", "cfw_weight"});
  for (const AblationCell& c : summary.cells) {
    std::vector<std::string> row{on_off(c.mds_on), on_off(c.tsd_on), std::to_string(c.sequences), fmt(c.we), fmt(c.psnr),
                                 fmt(c.ssim), fmt(c.latent_energy)};
    row.insert(row.end(), echo.begin(), echo.end());
    table.row(row);
    log.line("MDS " + on_off(c.mds_on) + " TSD " + on_off(c.tsd_on) + ": WE " + fmt(c.we) + ", PSNR " + fmt(c.psnr) +
             ", SSIM " + fmt(c.ssim));
  }
  io::CsvWriter per_seq(out / "per_sequence.csv",
                        {"sequence_id", "mds", "tsd", "we", "psnr", "ssim", "latent_energy"});
  for (const AblationRow& r : summary.rows) {
    per_seq.row({r.id, on_off(r.mds_on), on_off(r.tsd_on), fmt(r.we), fmt(r.psnr), fmt(r.ssim), fmt(r.latent_energy)});
  }
  return summary;
}

// ---- gradcheck ----

GradcheckReport cmd_gradcheck(const ExperimentConfig& config, const CommandOptions& options) {
  config.validate();
  const fs::path out = config.workdir() / "gradcheck";
  prepare_output(out, config);
  RunLog log(out, "gradcheck", options.echo);
  GradcheckSettings s;
  s.instances = config.gradcheck.instances;
  s.energy_tolerance = config.gradcheck.energy_tolerance;
  s.vjp_tolerance = config.gradcheck.vjp_tolerance;
  s.corrupt_gradient = config.gradcheck.corrupt_gradient;
  s.charbonnier_eps = config.guidance.charbonnier_eps;
  const GradcheckReport report = run_gradcheck(s, stream_rng(config.run.seed, Stream::kGradcheck).next_u64());

  io::CsvWriter csv(out / "report.csv", {"instance", "energy_rel_error", "vjp_rel_error"});
  for (const GradcheckInstance& inst : report.instances) {
    csv.row({std::to_string(inst.index), fmt(inst.energy_rel_error), fmt(inst.vjp_rel_error)});
  }
  io::write_manifest(out / "summary.txt", {{"instances", std::to_string(report.instances.size())},
                                           {"max_energy_rel_error", fmt(report.max_energy_rel_error)},
                                           {"max_vjp_rel_error", fmt(report.max_vjp_rel_error)},
                                           {"energy_tolerance", fmt(s.energy_tolerance)},
                                           {"vjp_tolerance", fmt(s.vjp_tolerance)},
                                           {"static_gradient_norm", fmt(report.static_gradient_norm)},
                                           {"passed", report.passed ? "true" : "false"}});
  log.line("max relative error: energy gradient " + fmt(report.max_energy_rel_error) + ", warp adjoint " +
           fmt(report.max_vjp_rel_error) + ", static gradient norm " + fmt(report.static_gradient_norm));
  if (!report.passed) {
    throw CheckFailure("gradient check failed: energy " + fmt(report.max_energy_rel_error) + " (tolerance " +
                       fmt(s.energy_tolerance) + "), adjoint " + fmt(report.max_vjp_rel_error) + " (tolerance " +
                       fmt(s.vjp_tolerance) + ")");
  }
  return report;
}

}  // namespace flowguide
