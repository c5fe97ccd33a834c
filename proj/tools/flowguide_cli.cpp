// flowguide: experiment runner for motion-guided latent diffusion on synthetic video.
//
// Settings are resolved in this order, later sources winning:
//   built-in defaults < --config file < --set section.key=value < --seed/--workers/--out
//
// Exit codes: 0 success, 1 usage or configuration error, 2 failed check,
// 3 I/O error.

#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "flowguide/core/errors.hpp"
#include "flowguide/pipeline/commands.hpp"

namespace fg = flowguide;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kCheck = 2, kIo = 3 };

struct GlobalFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string out;
  std::vector<std::string> overrides;
  bool quiet = false;
};

fg::ExperimentConfig resolve_config(const GlobalFlags& flags) {
  fg::ExperimentConfig config = flags.config_path.empty() ? fg::ExperimentConfig{} : fg::load_config(flags.config_path);
  for (const std::string& o : flags.overrides) fg::apply_override(config, o);
  if (flags.seed) config.run.seed = *flags.seed;
  if (flags.workers) config.run.workers = *flags.workers;
  if (!flags.out.empty()) config.run.workdir = flags.out;
  config.validate();
  return config;
}

std::vector<fg::Split> parse_splits(const std::string& s) {
  if (s == "train") return {fg::Split::kTrain};
  if (s == "heldout") return {fg::Split::kHeldout};
  return {fg::Split::kTrain, fg::Split::kHeldout};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Motion-guided latent diffusion for video super-resolution on synthetic data"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalFlags flags;
  app.add_option("--config", flags.config_path, "Experiment config file (sectioned key = value)")->check(CLI::ExistingFile);
  app.add_option("--seed", flags.seed, "Master random seed");
  app.add_option("--workers", flags.workers, "Worker threads for per-sequence work")->check(CLI::PositiveNumber);
  app.add_option("--out", flags.out, "Working directory for data, models and results");
  app.add_option("--set", flags.overrides, "Override one setting, e.g. --set guidance.scale=0.5")->take_all();
  app.add_flag("--quiet", flags.quiet, "Only write progress to the log files");

  auto* synth = app.add_subcommand("synth", "Generate the synthetic train and held-out sequences");
  std::string on_partial = "resume";
  synth->add_option("--on-partial", on_partial, "What to do with incomplete sequence directories")
      ->check(CLI::IsMember({"resume", "error"}));

  auto* train = app.add_subcommand("train-denoiser", "Pretrain the autoencoder and train the denoiser");

  auto* sample = app.add_subcommand("sample", "Run (guided) sampling and decode the results");
  std::string split = "all";
  sample->add_option("--split", split, "Which split to sample")->check(CLI::IsMember({"train", "heldout", "all"}));

  auto* finetune = app.add_subcommand("finetune-decoder", "Fine-tune the temporal decoder on sampled latents");

  auto* evaluate = app.add_subcommand("evaluate", "Score decoded sequences against the ground truth");
  std::string results;
  evaluate->add_option("--results", results, "Directory of <sequence id>/out_* frames (default: held-out samples)");

  auto* ablate = app.add_subcommand("ablate", "Run the guidance x temporal-decoder ablation grid");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference checks of the guidance gradient");
  bool corrupt = false;
  gradcheck->add_flag("--corrupt-gradient", corrupt, "Negative control: perturb the analytic gradient");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? kOk : kUsage;
  }

  try {
    fg::ExperimentConfig config = resolve_config(flags);
    const fg::CommandOptions options{!flags.quiet};
    if (synth->parsed()) {
      const auto s = fg::cmd_synth(config, on_partial == "error" ? fg::PartialPolicy::kError : fg::PartialPolicy::kResume,
                                   options);
      std::cout << "synth: " << s.generated << " generated, " << s.skipped << " already complete\n";
    } else if (train->parsed()) {
      const auto s = fg::cmd_train_denoiser(config, options);
      std::cout << "autoencoder held-out PSNR " << s.autoencoder_heldout_psnr << " dB; denoiser held-out loss "
                << s.denoiser_heldout_loss_init << " -> " << s.denoiser_heldout_loss_final << "\n";
    } else if (sample->parsed()) {
      const auto s = fg::cmd_sample(config, parse_splits(split), options);
      std::cout << "sampled " << s.sequences << " sequences (guided " << (s.guided ? "yes" : "no") << ", decoder "
                << s.decoder << ")\n";
    } else if (finetune->parsed()) {
      const auto s = fg::cmd_finetune_decoder(config, options);
      std::cout << "fine-tuning total loss " << s.first.total << " -> " << s.last.total << "\n";
    } else if (evaluate->parsed()) {
      const auto s = fg::cmd_evaluate(config, results, options);
      std::cout << s.rows.size() << " sequences: PSNR " << s.mean_psnr << ", SSIM " << s.mean_ssim << ", WE "
                << s.mean_we << "\n";
    } else if (ablate->parsed()) {
      const auto s = fg::cmd_ablate(config, options);
      for (const auto& c : s.cells) {
        std::cout << "MDS " << (c.mds_on ? "on " : "off") << " TSD " << (c.tsd_on ? "on " : "off") << "  WE " << c.we
                  << "  PSNR " << c.psnr << "  SSIM " << c.ssim << "\n";
      }
    } else if (gradcheck->parsed()) {
      if (corrupt) config.gradcheck.corrupt_gradient = true;
      const auto r = fg::cmd_gradcheck(config, options);
      std::cout << "gradcheck passed: max relative error " << r.max_energy_rel_error << " (energy), "
                << r.max_vjp_rel_error << " (adjoint)\n";
    }
  } catch (const fg::CheckFailure& e) {
    std::cerr << "check failed: " << e.what() << "\n";
    return kCheck;
  } catch (const fg::TrainingDiverged& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return kCheck;
  } catch (const fg::IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const fg::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return kCheck;
  }
  return kOk;
}
