#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "flowguide/core/errors.hpp"
#include "flowguide/io/formats.hpp"
#include "flowguide/pipeline/commands.hpp"
#include "flowguide/pipeline/parallel.hpp"

namespace fg = flowguide;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fg_pipeline_" + name);
  fs::remove_all(p);
  return p;
}

/// A configuration small enough to run every command in seconds.
fg::ExperimentConfig tiny_config(const fs::path& workdir) {
  fg::ExperimentConfig c;
  c.run.workdir = workdir.string();
  c.data.train_sequences = 2;
  c.data.heldout_sequences = 2;
  c.data.frames = 4;
  c.data.height = 32;
  c.data.width = 32;
  c.autoencoder.width = 8;
  c.autoencoder.latent_channels = 4;
  c.autoencoder.iterations = 4;
  c.autoencoder.batch_frames = 2;
  c.autoencoder.crop = 32;
  c.denoiser.width = 8;
  c.denoiser.stages = 1;
  c.denoiser.time_dim = 8;
  c.denoiser.iterations = 4;
  c.schedule.sample_steps = 4;
  c.decoder.iterations = 3;
  c.decoder.window = 3;
  c.decoder.disc_width = 4;
  c.gradcheck.instances = 5;
  return c;
}

/// Path -> file bytes for every file under `root` except logs.
std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().filename() == "log.txt") continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    out[fs::relative(e.path(), root).string()] = ss.str();
  }
  return out;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(FLOWGUIDE_CLI_PATH) + " --quiet " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

// ---- configuration ----

TEST(Config, DefaultsRoundTrip) {
  const fg::ExperimentConfig c;
  EXPECT_NO_THROW(c.validate());
  const fg::ExperimentConfig back = fg::parse_config(fg::serialize_config(c));
  EXPECT_TRUE(back == c);
  EXPECT_EQ(fg::serialize_config(back), fg::serialize_config(c));
}

TEST(Config, DefaultsMatchTheDeskScale) {
  const fg::ExperimentConfig c;
  EXPECT_EQ(c.data.train_sequences, 30);
  EXPECT_EQ(c.data.heldout_sequences, 10);
  EXPECT_EQ(c.data.frames, 8);
  EXPECT_EQ(c.data.height, 128);
  EXPECT_EQ(c.data.height / c.degradation.factor, 32);
  EXPECT_EQ(c.schedule.sample_steps, 50);
  const fg::LossWeights w = c.loss_weights();
  EXPECT_EQ(w.alpha, 0.5);
  EXPECT_EQ(w.beta, 0.5);
  EXPECT_EQ(w.gamma, 0.025);
  EXPECT_EQ(w.w, 3.0);
  EXPECT_EQ(c.flow.alpha1, 0.01);
  EXPECT_EQ(c.flow.alpha2, 0.5);
}

TEST(Config, ModifiedValuesRoundTrip) {
  fg::ExperimentConfig c;
  c.run.seed = 18446744073709551615ull;
  c.run.workdir = "dir with \"quotes\" # and hash";
  c.guidance.scale = 0.1 + 0.2;
  c.guidance.mds_on = false;
  c.degradation.noise_sigma = 1e-7;
  c.decoder.order = "cfw_then_temporal";
  const fg::ExperimentConfig back = fg::parse_config(fg::serialize_config(c));
  EXPECT_EQ(back.run.seed, c.run.seed);
  EXPECT_EQ(back.run.workdir, c.run.workdir);
  EXPECT_EQ(back.guidance.scale, c.guidance.scale);
  EXPECT_FALSE(back.guidance.mds_on);
  EXPECT_EQ(back.degradation.noise_sigma, 1e-7);
  EXPECT_TRUE(back == c);
}

TEST(Config, ParsesCommentsAndKeepsUnsetDefaults) {
  const fg::ExperimentConfig c = fg::parse_config(
      "# experiment\n"
      "[guidance]\n"
      "scale = 2.5   # stronger\n"
      "eval_point = \"at_previous_latent\"\n"
      "\n"
      "[data]\n"
      "frames = 6\n");
  EXPECT_EQ(c.guidance.scale, 2.5);
  EXPECT_EQ(c.guidance.eval_point, "at_previous_latent");
  EXPECT_EQ(c.data.frames, 6);
  EXPECT_EQ(c.data.height, 128);
  EXPECT_EQ(c.guidance_config().eval_point, fg::GuidanceEvalPoint::kAtPreviousLatent);
}

TEST(Config, ErrorsNameTheLine) {
  auto message = [](const std::string& text) {
    try {
      fg::parse_config(text);
    } catch (const fg::ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(message("[data]\nframes = 4\nbogus = 1\n").find("line 3"), std::string::npos);
  EXPECT_NE(message("[data]\nframes = four\n").find("line 2"), std::string::npos);
  EXPECT_NE(message("frames = 4\n").find("outside"), std::string::npos);
  EXPECT_NE(message("[data]\nframes = 4\nframes = 5\n").find("duplicate"), std::string::npos);
  EXPECT_NE(message("[guidance]\nmds_on = yes\n").find("true or false"), std::string::npos);
  EXPECT_NE(message("[run]\nworkdir = unquoted\n").find("quoted"), std::string::npos);
}

TEST(Config, OverridesAndValidation) {
  fg::ExperimentConfig c;
  fg::apply_override(c, "guidance.scale=0.25");
  fg::apply_override(c, "run.workdir=/tmp/somewhere");
  fg::apply_override(c, "decoder.tsd_on=false");
  EXPECT_EQ(c.guidance.scale, 0.25);
  EXPECT_EQ(c.run.workdir, "/tmp/somewhere");
  EXPECT_FALSE(c.decoder.tsd_on);
  EXPECT_THROW(fg::apply_override(c, "scale=1"), fg::ConfigError);
  EXPECT_THROW(fg::apply_override(c, "guidance.nope=1"), fg::ConfigError);

  fg::ExperimentConfig bad;
  bad.data.height = 100;
  EXPECT_THROW(bad.validate(), fg::ConfigError);
  bad = {};
  bad.decoder.cfw_weight = 1.5;
  EXPECT_THROW(bad.validate(), fg::ConfigError);
  bad = {};
  bad.schedule.sample_steps = 2000;
  EXPECT_THROW(bad.validate(), fg::ConfigError);
  bad = {};
  bad.data.scene = "cartoon";
  EXPECT_THROW(bad.validate(), fg::ConfigError);
}

TEST(Config, MdsToggleZeroesTheGuidanceScale) {
  fg::ExperimentConfig c;
  c.guidance.scale = 3.0;
  EXPECT_EQ(c.guidance_config().scale, 3.0);
  c.guidance.mds_on = false;
  EXPECT_EQ(c.guidance_config().scale, 0.0);
}

// ---- streams and parallelism ----

TEST(Streams, IndependentOfOrderAndDistinctPerPurpose) {
  fg::Prng a = fg::stream_rng(7, fg::Stream::kSample, fg::Split::kTrain, 3);
  fg::Prng b = fg::stream_rng(7, fg::Stream::kSample, fg::Split::kTrain, 3);
  EXPECT_EQ(a.next_u64(), b.next_u64());
  const std::uint64_t base = fg::stream_rng(7, fg::Stream::kSample, fg::Split::kTrain, 3).next_u64();
  EXPECT_NE(base, fg::stream_rng(7, fg::Stream::kSample, fg::Split::kTrain, 4).next_u64());
  EXPECT_NE(base, fg::stream_rng(7, fg::Stream::kSample, fg::Split::kHeldout, 3).next_u64());
  EXPECT_NE(base, fg::stream_rng(7, fg::Stream::kAblate, fg::Split::kTrain, 3).next_u64());
  EXPECT_NE(base, fg::stream_rng(8, fg::Stream::kSample, fg::Split::kTrain, 3).next_u64());
  EXPECT_EQ(fg::sequence_id(fg::Split::kHeldout, 12), "heldout_0012");
}

TEST(Parallel, ResultsDoNotDependOnWorkerCount) {
  auto run = [](int workers) {
    std::vector<double> out(37);
    fg::parallel_for(out.size(), workers, [&](std::size_t i) {
      fg::Prng rng = fg::stream_rng(1, fg::Stream::kSample, fg::Split::kTrain, static_cast<int>(i));
      out[i] = rng.normal();
    });
    return out;
  };
  EXPECT_EQ(run(1), run(4));
  EXPECT_THROW(fg::parallel_for(10, 3,
                                [](std::size_t i) {
                                  if (i == 6) throw fg::IoError("boom");
                                }),
               fg::IoError);
}

// ---- gradcheck ----

TEST(Gradcheck, PassesAndCatchesACorruptedGradient) {
  fg::GradcheckSettings s;
  s.instances = 50;
  const fg::GradcheckReport ok = fg::run_gradcheck(s, 3);
  EXPECT_TRUE(ok.passed);
  EXPECT_EQ(ok.instances.size(), 50u);
  EXPECT_LT(ok.max_energy_rel_error, 1e-3);
  EXPECT_LT(ok.max_vjp_rel_error, 1e-5);
  EXPECT_LT(ok.static_gradient_norm, 1e-12);
  s.corrupt_gradient = true;
  EXPECT_FALSE(fg::run_gradcheck(s, 3).passed);
}

TEST(Gradcheck, CommandWritesReportAndFailsOnCorruption) {
  const fs::path dir = scratch("gradcheck");
  fg::ExperimentConfig c = tiny_config(dir);
  EXPECT_NO_THROW(fg::cmd_gradcheck(c));
  EXPECT_EQ(fg::io::read_csv(dir / "gradcheck" / "report.csv").size(), 6u);
  EXPECT_TRUE(fg::parse_config(fg::io::read_text(dir / "gradcheck" / "config.toml")) == c);
  c.gradcheck.corrupt_gradient = true;
  EXPECT_THROW(fg::cmd_gradcheck(c), fg::CheckFailure);
  fs::remove_all(dir);
}

// ---- synth ----

TEST(Synth, WritesTheDatasetAndIsIdempotent) {
  const fs::path dir = scratch("synth");
  const fg::ExperimentConfig c = tiny_config(dir / "nested" / "work");
  const fg::SynthSummary first = fg::cmd_synth(c);
  EXPECT_EQ(first.generated, 4);
  const fs::path seq = c.data_dir() / "train" / "train_0001";
  for (const char* f : {"hr_0000.ppm", "lr_0003.ppm", "flow_fwd_0002.flo", "flow_bwd_0000.flo", "mask_fwd_0002.pgm",
                        "mask_bwd_0002.pgm", "manifest.txt"}) {
    EXPECT_TRUE(fs::exists(seq / f)) << f;
  }
  EXPECT_FALSE(fs::exists(seq / "flow_fwd_0003.flo"));
  EXPECT_TRUE(fg::parse_config(fg::io::read_text(c.data_dir() / "config.toml")) == c);

  const auto before = snapshot(c.data_dir());
  const fg::SynthSummary second = fg::cmd_synth(c);
  EXPECT_EQ(second.generated, 0);
  EXPECT_EQ(second.skipped, 4);
  EXPECT_EQ(snapshot(c.data_dir()), before);

  // Regenerating from scratch reproduces every byte.
  fs::remove_all(c.data_dir());
  fg::cmd_synth(c);
  EXPECT_EQ(snapshot(c.data_dir()), before);

  // A partial sequence is resumed or reported.
  fs::remove(seq / "manifest.txt");
  fs::remove(seq / "hr_0002.ppm");
  EXPECT_THROW(fg::cmd_synth(c, fg::PartialPolicy::kError), fg::IoError);
  EXPECT_EQ(fg::cmd_synth(c, fg::PartialPolicy::kResume).generated, 1);
  EXPECT_EQ(snapshot(c.data_dir()), before);
  fs::remove_all(dir);
}

TEST(Synth, RecordsReadBackMatchTheGenerator) {
  const fs::path dir = scratch("readback");
  const fg::ExperimentConfig c = tiny_config(dir);
  fg::cmd_synth(c);
  const fg::SequenceRecord gen = fg::generate_sequence(c, fg::Split::kHeldout, 1);
  const fg::SequenceRecord disk = fg::read_sequence(c.data_dir() / "heldout" / "heldout_0001");
  EXPECT_EQ(disk.id, "heldout_0001");
  EXPECT_LE((disk.hr.tensor().array() - gen.hr.tensor().array()).abs().maxCoeff(), 0.5f / 255.0f + 1e-6f);
  EXPECT_EQ(disk.lr.height(), 8);
  ASSERT_EQ(disk.flows.pairs(), 3u);
  EXPECT_EQ((disk.flows.forward[1].tensor().array() - gen.flows.forward[1].tensor().array()).abs().maxCoeff(), 0.0f);
  EXPECT_EQ((disk.masks.backward[2].tensor().array() - gen.masks.backward[2].tensor().array()).abs().maxCoeff(), 0.0f);
  fs::remove_all(dir);
}

TEST(Synth, UnwritableWorkdirNamesThePath) {
  fg::ExperimentConfig c = tiny_config("/proc/flowguide_forbidden/work");
  try {
    fg::cmd_synth(c);
    FAIL() << "expected an I/O error";
  } catch (const fg::IoError& e) {
    EXPECT_NE(std::string(e.what()).find("/proc/flowguide_forbidden"), std::string::npos) << e.what();
  }
}

// ---- full pipeline at toy scale ----

TEST(Pipeline, MissingArtifactsAreNamed) {
  const fs::path dir = scratch("missing");
  const fg::ExperimentConfig c = tiny_config(dir);
  fg::cmd_synth(c);
  try {
    fg::cmd_ablate(c);
    FAIL() << "expected an I/O error";
  } catch (const fg::IoError& e) {
    EXPECT_NE(std::string(e.what()).find("autoencoder"), std::string::npos) << e.what();
  }
  EXPECT_THROW(fg::cmd_sample(c, {fg::Split::kTrain}), fg::IoError);
  fs::remove_all(dir);
}

TEST(Pipeline, EveryCommandRunsAndIsDeterministic) {
  const fs::path dir = scratch("e2e");
  const fg::ExperimentConfig c = tiny_config(dir / "work");
  auto run_all = [&] {
    fg::cmd_synth(c);
    const fg::TrainSummary t = fg::cmd_train_denoiser(c);
    EXPECT_GT(t.latent_scale, 0.0);
    EXPECT_EQ(fg::cmd_sample(c, {fg::Split::kTrain, fg::Split::kHeldout}).decoder, "frame_independent");
    const fg::FinetuneSummary f = fg::cmd_finetune_decoder(c);
    EXPECT_GT(f.logged_steps, 0);
    const fg::AblationSummary a = fg::cmd_ablate(c);
    EXPECT_EQ(a.cells.size(), 4u);
    EXPECT_EQ(a.rows.size(), 8u);
    const fg::EvalSummary e = fg::cmd_evaluate(c);
    EXPECT_EQ(e.rows.size(), 2u);
    fg::cmd_gradcheck(c);
  };
  run_all();
  const fs::path first = dir / "first";
  fs::rename(c.workdir(), first);
  run_all();
  EXPECT_EQ(snapshot(c.workdir()), snapshot(first));

  const auto csv = fg::io::read_csv(c.workdir() / "eval" / "metrics.csv");
  ASSERT_EQ(csv.size(), 3u);
  EXPECT_EQ(csv[0], (std::vector<std::string>{"sequence_id", "frame_count", "psnr", "ssim", "we"}));
  EXPECT_EQ(csv[1][0], "heldout_0000");
  const auto ablation = fg::io::read_csv(c.workdir() / "ablation" / "ablation.csv");
  ASSERT_EQ(ablation.size(), 5u);
  EXPECT_EQ(ablation[1][0], "off");
  EXPECT_EQ(ablation[4][1], "on");

  // Switching guidance off changes the sampled latents under the same noise stream.
  fg::ExperimentConfig off = c;
  off.guidance.mds_on = false;
  off.run.workdir = (dir / "off").string();
  fs::copy(c.workdir(), off.workdir(), fs::copy_options::recursive);
  fg::cmd_sample(off, {fg::Split::kHeldout});
  const auto a = fg::nn::Checkpoint::load(off.workdir() / "samples" / "heldout" / "heldout_0000" / "latent.ckpt");
  const auto b = fg::nn::Checkpoint::load(c.workdir() / "samples" / "heldout" / "heldout_0000" / "latent.ckpt");
  EXPECT_NE((a.get("z0").array() - b.get("z0").array()).abs().maxCoeff(), 0.0f);

  // Worker count does not change any output.
  fg::ExperimentConfig wide = c;
  wide.run.workers = 3;
  fg::cmd_ablate(wide);
  EXPECT_EQ(fg::io::read_text(c.workdir() / "ablation" / "per_sequence.csv"),
            fg::io::read_text(first / "ablation" / "per_sequence.csv"));
  fs::remove_all(dir);
}

// ---- command-line front end ----

TEST(Cli, ExitCodes) {
  const fs::path dir = scratch("cli");
  const std::string out = " --out " + dir.string();
  EXPECT_EQ(run_cli("gradcheck" + out), 0);
  EXPECT_EQ(run_cli("gradcheck --corrupt-gradient" + out), 2);
  EXPECT_EQ(run_cli("frobnicate" + out), 1);
  EXPECT_EQ(run_cli("gradcheck --set guidance.scale=-1" + out), 1);
  EXPECT_EQ(run_cli("gradcheck --set nosuch.key=1" + out), 1);
  EXPECT_EQ(run_cli("ablate" + out), 3);
  EXPECT_EQ(run_cli("--help"), 0);

  // A config file is read and flags override it.
  fs::create_directories(dir);
  fg::io::write_text(dir / "exp.toml", "[gradcheck]\ninstances = 7\n[run]\nseed = 5\n");
  EXPECT_EQ(run_cli("gradcheck --config " + (dir / "exp.toml").string() + " --seed 9" + out), 0);
  const fg::ExperimentConfig archived = fg::load_config(dir / "gradcheck" / "config.toml");
  EXPECT_EQ(archived.gradcheck.instances, 7);
  EXPECT_EQ(archived.run.seed, 9u);
  EXPECT_EQ(archived.run.workdir, dir.string());
  fs::remove_all(dir);
}
