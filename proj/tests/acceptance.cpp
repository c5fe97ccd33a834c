// Acceptance run: prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails. Criteria 4-6 and 11 share one default-scale
// pipeline run; criterion 10 drives the command-line tool at a reduced scale.
//
//   flowguide_acceptance [--workdir DIR] [--cli PATH]

#include <CLI11.hpp>

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "flowguide/diffusion/denoiser.hpp"
#include "flowguide/diffusion/energy.hpp"
#include "flowguide/diffusion/sampler.hpp"
#include "flowguide/io/formats.hpp"
#include "flowguide/metrics/losses.hpp"
#include "flowguide/metrics/metrics.hpp"
#include "flowguide/motion/horn_schunck.hpp"
#include "flowguide/pipeline/commands.hpp"
#include "flowguide/synth/scene.hpp"
#include "oracles.hpp"

namespace fg = flowguide;
namespace fs = std::filesystem;
using fg::Index;
using fg::Tensor;

namespace {

// Tolerances and thresholds, fixed here rather than taken from any config.
constexpr double kEnergyGradTol = 1e-3;
constexpr double kVjpTol = 1e-5;
constexpr double kGradcheckSeconds = 10.0;
constexpr double kAdjointTol = 1e-6;
constexpr double kOracleTol = 1e-6;
constexpr double kSignTestAlpha = 0.05;
constexpr int kMinPairedSeeds = 20;
constexpr int kMinDecoderSequences = 10;
constexpr double kOcclusionF1 = 0.8;
constexpr double kBudgetSeconds = 30.0 * 60.0;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string num(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const Outcome& o) {
  if (!o.pass) ++failures;
  std::cout << "criterion " << std::setw(2) << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail
            << std::endl;
}

/// Runs `check`, turning an exception into a failed line.
void run_criterion(int id, const std::function<Outcome()>& check) {
  try {
    report(id, check());
  } catch (const std::exception& e) {
    report(id, {false, std::string("exception: ") + e.what()});
  }
}

/// One-sided sign test: P(X >= k) for X ~ Binomial(n, 1/2).
double sign_test_p(int k, int n) {
  double p = 0.0;
  for (int j = k; j <= n; ++j) p += std::exp(std::lgamma(n + 1.0) - std::lgamma(j + 1.0) - std::lgamma(n - j + 1.0) -
                                            n * std::log(2.0));
  return p;
}

double relative_gap(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

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

// ---- 1-3, 7, 8: numerical properties ----

Outcome gradient_correctness() {
  fg::GradcheckSettings s;
  s.instances = 50;
  s.energy_tolerance = kEnergyGradTol;
  s.vjp_tolerance = kVjpTol;
  const auto start = Clock::now();
  const fg::GradcheckReport r = fg::run_gradcheck(s, 2024);
  const double secs = seconds_since(start);
  const bool pass = r.passed && r.instances.size() == 50 && r.max_energy_rel_error < kEnergyGradTol &&
                    r.max_vjp_rel_error < kVjpTol && secs < kGradcheckSeconds;
  return {pass, "50 instances, energy grad max rel err " + num(r.max_energy_rel_error) + " (< " + num(kEnergyGradTol) +
                    "), adjoint max rel err " + num(r.max_vjp_rel_error) + " (< " + num(kVjpTol) + "), " + num(secs, 3) +
                    " s (< 10 s)"};
}

Outcome adjoint_identity() {
  fg::Prng rng(101);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Index c = rng.uniform_int(1, 3), h = rng.uniform_int(4, 12), w = rng.uniform_int(4, 12);
    const auto x = oracle::random_tensor<double>({c, h, w}, rng, -1, 1);
    const auto u = oracle::random_tensor<double>({c, h, w}, rng, -1, 1);
    const auto f = oracle::random_flow<double>(h, w, rng, 4.0);
    const double lhs = (fg::warp_bilinear(x, f).array() * u.array()).sum();
    const double rhs = (x.array() * fg::warp_vjp(x, f, u).array()).sum();
    worst = std::max(worst, relative_gap(lhs, rhs));
  }
  return {worst <= kAdjointTol, "100 triples, max relative gap " + num(worst) + " (<= 1e-6)"};
}

Outcome sampler_identity() {
  const fg::NoiseSchedule sched = fg::make_linear_schedule(1000, 1e-4, 0.02);
  const Index n = 4, cz = 4, h = 8, w = 8;
  int identical = 0;
  for (int seed = 0; seed < 10; ++seed) {
    fg::Prng setup(500 + seed);
    fg::Denoiser model({cz, 3, 8, 2, 8}, 600 + seed);
    for (auto& p : model.params().all()) {
      for (Index i = 0; i < p.value.size(); ++i) p.value[i] += static_cast<float>(0.02 * setup.normal());
    }
    const Tensor<float> cond = oracle::random_tensor<float>({n, 3, h, w}, setup);
    const fg::LatentMotion motion{oracle::random_flows<float>(n, h, w, setup, 1.5),
                                  oracle::random_masks<float>(n, h, w, setup)};
    fg::GuidanceConfig g;
    g.scale = 0.0;
    fg::Prng a(seed), b(seed);
    const Tensor<float> guided = fg::motion_guided_sample(model.as_model(), cond, motion, sched, g, 50, {n, cz, h, w}, a);
    const Tensor<float> plain = fg::ddpm_sample(model.as_model(), cond, sched, 50, {n, cz, h, w}, b);
    if ((guided.array() == plain.array()).all()) ++identical;
  }
  return {identical == 10, num(identical) + "/10 seeds bitwise identical with scale 0"};
}

Outcome loss_identities() {
  std::vector<std::string> broken;
  fg::Prng rng(7);

  const Tensor<double> gt = oracle::random_tensor<double>({4, 3, 8, 8}, rng);
  Tensor<double> offset = gt;
  offset.array() += 0.25;
  if (fg::frame_diff_loss(gt, gt) != 0.0) broken.push_back("frame_diff(pred=gt)");
  if (std::abs(fg::frame_diff_loss(offset, gt)) > 1e-12) broken.push_back("frame_diff(offset)");

  // Rigid one-pixel translation of a periodic texture; the wrapped column is masked.
  const Index n = 4, h = 6, w = 12;
  Tensor<double> moving({n, 1, h, w});
  for (Index i = 0; i < n; ++i)
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x) moving(i, 0, y, x) = 0.5 + 0.4 * std::sin(0.7 * (x - i) + 0.3 * y);
  fg::FlowSet<double> flows;
  fg::MaskSet<double> masks;
  Tensor<double> mf({1, h, w}, 1.0), mb({1, h, w}, 1.0);
  for (Index y = 0; y < h; ++y) {
    mf(0, y, w - 1) = 0.0;
    mb(0, y, 0) = 0.0;
  }
  for (Index i = 0; i + 1 < n; ++i) {
    flows.forward.push_back(fg::FlowField<double>::constant(h, w, 1.0, 0.0));
    flows.backward.push_back(fg::FlowField<double>::constant(h, w, -1.0, 0.0));
    masks.forward.emplace_back(mf);
    masks.backward.emplace_back(mb);
  }
  const double swc = fg::swc_loss(moving, flows, masks, fg::sobel_structures(moving, 3.0));
  if (std::abs(swc) > 1e-12) broken.push_back("swc(rigid translation) = " + num(swc));

  Tensor<double> edge({1, 8, 10});
  for (Index y = 0; y < 8; ++y)
    for (Index x = 5; x < 10; ++x) edge(0, y, x) = 1.0;
  const auto s = fg::sobel_structure(edge, 3.0);
  const double wmax = s.weights.array().maxCoeff();
  const double wform = (s.weights.array() - (1.0 + 3.0 * s.edges.array())).abs().maxCoeff();
  if (wmax != 4.0 || wform > 1e-15) broken.push_back("W = 1 + 3S (max " + num(wmax) + ")");

  // 1 + 0.5*2 + 0.5*4 + 0.025*40 = 5
  const double total = fg::total_video_loss(1.0, 2.0, 4.0, 40.0, fg::LossWeights{});
  if (total != 5.0) broken.push_back("composition = " + num(total));

  std::string detail = "frame_diff zero on identity and offset, swc zero on rigid translation, max W " + num(wmax) +
                       ", composition " + num(total) + " (expected 5)";
  for (const auto& b : broken) detail += "; broken: " + b;
  return {broken.empty(), detail};
}

Outcome oracle_equivalence() {
  fg::Prng rng(808);
  constexpr int kCases = 100;
  double e_energy = 0, e_we = 0, e_diff = 0, e_swc = 0, e_ssim = 0;
  for (int t = 0; t < kCases; ++t) {
    const Index n = rng.uniform_int(2, 4), c = rng.uniform_int(1, 3), h = rng.uniform_int(4, 7), w = rng.uniform_int(4, 7);
    const auto z = oracle::random_tensor<double>({n, c, h, w}, rng, -1, 1);
    const auto flows = oracle::random_flows<double>(n, h, w, rng, 2.0);
    const auto masks = oracle::random_masks<double>(n, h, w, rng);
    e_energy = std::max(e_energy, relative_gap(fg::warping_energy(z, flows, masks, 1e-3), oracle::energy(z, flows, masks, 1e-3)));
    e_we = std::max(e_we, relative_gap(fg::warping_error_metric(z, flows.backward), oracle::warping_error(z, flows.backward)));
    const auto gt = oracle::random_tensor<double>({n, c, h, w}, rng, -1, 1);
    e_diff = std::max(e_diff, relative_gap(fg::frame_diff_loss(z, gt), oracle::frame_diff(z, gt)));
    const auto p1 = oracle::random_tensor<double>({n, 1, h, w}, rng);
    const auto g1 = oracle::random_tensor<double>({n, 1, h, w}, rng);
    e_swc = std::max(e_swc, relative_gap(fg::swc_loss(p1, flows, masks, fg::sobel_structures(g1, 3.0)),
                                         oracle::swc(p1, g1, flows, masks, 3.0)));
    const auto a = oracle::random_tensor<double>({c, 11 + h, 11 + w}, rng);
    Tensor<double> b = a;
    b.array() = (b.array() + oracle::random_tensor<double>(a.dims(), rng, -0.3, 0.3).array()).max(0.0).min(1.0);
    e_ssim = std::max(e_ssim, std::abs(fg::ssim(a, b) - oracle::ssim(a, b)));
  }
  const double worst = std::max({e_energy, e_we, e_diff, e_swc, e_ssim});
  return {worst <= kOracleTol, "100 cases each, max gaps: energy " + num(e_energy) + ", WE " + num(e_we) +
                                   ", frame_diff " + num(e_diff) + ", swc " + num(e_swc) + ", ssim " + num(e_ssim) +
                                   " (<= 1e-6)"};
}

// ---- 9: occlusion ----

struct F1 {
  double tp = 0, fp = 0, fn = 0, tn = 0;
  double occluded() const { return 2 * tp / (2 * tp + fp + fn); }
  double valid() const { return 2 * tn / (2 * tn + fn + fp); }
};

/// Forward-backward masks from flows estimated on clean occluder frames,
/// scored against the generator's occlusion maps (occluded = positive).
F1 occlusion_f1(const fg::ExperimentConfig& config) {
  F1 f;
  for (int s = 0; s < 8; ++s) {
    const fg::synth::SynthResult r = fg::synth::synth_sequence(fg::synth::occluder_scene(900 + s));
    const fg::FlowSet<float> flows = fg::estimate_flows(r.frames.tensor(), config.flow_params());
    const fg::MaskSet<float> est = fg::occlusion_masks(flows, static_cast<float>(config.flow.alpha1),
                                                       static_cast<float>(config.flow.alpha2));
    for (std::size_t i = 0; i < flows.pairs(); ++i) {
      for (const auto& [pred, truth] : {std::pair{&est.forward[i], &r.masks.forward[i]},
                                        std::pair{&est.backward[i], &r.masks.backward[i]}}) {
        for (Index k = 0; k < pred->tensor().size(); ++k) {
          const bool p = pred->tensor()[k] == 0.0f, g = truth->tensor()[k] == 0.0f;
          f.tp += p && g;
          f.fp += p && !g;
          f.fn += !p && g;
          f.tn += !p && !g;
        }
      }
    }
  }
  return f;
}

/// Guided sampling on occluder scenes with estimated masks and with M = 1,
/// decoded frame-independently, using the models of `base`.
Outcome masking_effect(const fg::ExperimentConfig& base, const fs::path& dir) {
  fg::ExperimentConfig c = base;
  c.data.scene = "occluder";
  c.data.train_sequences = 1;
  c.data.heldout_sequences = 10;
  c.run.checkpoint_dir = base.checkpoint_dir().string();
  c.run.data_dir = (dir / "data").string();
  c.run.workdir = (dir / "masked").string();
  fg::cmd_synth(c);
  const fg::AblationSummary masked = fg::cmd_ablate(c);
  c.guidance.use_masks = false;
  c.run.workdir = (dir / "unmasked").string();
  const fg::AblationSummary unmasked = fg::cmd_ablate(c);
  const double we_m = masked.cell(true, false).we, we_u = unmasked.cell(true, false).we;
  return {we_m < we_u, "guided WE on 10 occluder sequences: masked " + num(we_m) + " vs M=1 " + num(we_u)};
}

// ---- 10: determinism through the command-line tool ----

int run_cli(const std::string& cli, const std::string& args) {
  const std::string cmd = cli + " --quiet " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome determinism(const std::string& cli, const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path cfg = dir / "small.toml";
  fg::io::write_text(cfg,
                     "[data]\ntrain_sequences = 3\nheldout_sequences = 2\nframes = 5\nheight = 64\nwidth = 64\n"
                     "[autoencoder]\nwidth = 16\niterations = 40\n"
                     "[denoiser]\nwidth = 16\nstages = 2\niterations = 40\nbatch_sequences = 2\n"
                     "[schedule]\nsample_steps = 10\n"
                     "[decoder]\niterations = 10\nwindow = 3\ndisc_width = 8\n"
                     "[gradcheck]\ninstances = 10\n");
  const fs::path work = dir / "work";
  const std::vector<std::string> commands = {"synth", "train-denoiser", "sample", "finetune-decoder",
                                             "evaluate", "ablate", "gradcheck"};
  auto run_all = [&]() -> std::string {
    for (const auto& cmd : commands) {
      const int code = run_cli(cli, cmd + " --config " + cfg.string() + " --out " + work.string());
      if (code != 0) return cmd + " exited with " + std::to_string(code);
    }
    return {};
  };
  if (auto err = run_all(); !err.empty()) return {false, "first run: " + err};
  const fs::path first = dir / "first";
  fs::rename(work, first);
  if (auto err = run_all(); !err.empty()) return {false, "second run: " + err};
  const auto a = snapshot(first), b = snapshot(work);
  std::size_t differing = 0;
  for (const auto& [path, bytes] : a) {
    const auto it = b.find(path);
    if (it == b.end() || it->second != bytes) ++differing;
  }
  differing += b.size() > a.size() ? b.size() - a.size() : 0;
  return {differing == 0 && !a.empty(), std::to_string(commands.size()) + " commands run twice, " +
                                            std::to_string(a.size()) + " files compared, " +
                                            std::to_string(differing) + " differ"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string workdir = "acceptance_runs";
  std::string cli = FLOWGUIDE_CLI_PATH;
  app.add_option("--workdir", workdir, "Scratch directory for the pipeline runs");
  app.add_option("--cli", cli, "Path to the flowguide executable");
  CLI11_PARSE(app, argc, argv);
  const fs::path root = fs::absolute(workdir);
  std::cout << std::unitbuf;

  run_criterion(1, gradient_correctness);
  run_criterion(2, adjoint_identity);
  run_criterion(3, sampler_identity);

  // Default desk scale; 20 held-out sequences give the paired sample for the sign test.
  fg::ExperimentConfig config;
  config.run.workdir = (root / "default").string();
  config.data.heldout_sequences = 20;
  fs::remove_all(config.workdir());
  double pipeline_seconds = -1.0;
  fg::AblationSummary ablation;
  std::string pipeline_error;
  try {
    const auto start = Clock::now();
    fg::cmd_synth(config);
    fg::cmd_train_denoiser(config);
    fg::cmd_sample(config, {fg::Split::kTrain, fg::Split::kHeldout});
    fg::cmd_finetune_decoder(config);
    ablation = fg::cmd_ablate(config);
    pipeline_seconds = seconds_since(start);
  } catch (const std::exception& e) {
    pipeline_error = std::string("pipeline failed: ") + e.what();
  }
  auto need_pipeline = [&] {
    if (!pipeline_error.empty()) throw std::runtime_error(pipeline_error);
  };

  run_criterion(4, [&]() -> Outcome {
    need_pipeline();
    std::map<std::string, std::pair<double, double>> energy;  // id -> (unguided, guided)
    for (const auto& r : ablation.rows) {
      if (r.tsd_on) continue;
      (r.mds_on ? energy[r.id].second : energy[r.id].first) = r.latent_energy;
    }
    int lower = 0;
    double sum_u = 0, sum_g = 0;
    for (const auto& [id, e] : energy) {
      lower += e.second < e.first;
      sum_u += e.first;
      sum_g += e.second;
    }
    const int n = static_cast<int>(energy.size());
    const double p = sign_test_p(lower, n);
    return {n >= kMinPairedSeeds && sum_g < sum_u && p < kSignTestAlpha,
            std::to_string(n) + " paired sequences, mean latent energy guided " + num(sum_g / n) + " vs unguided " +
                num(sum_u / n) + ", guided lower in " + std::to_string(lower) + ", sign test p = " + num(p)};
  });

  run_criterion(5, [&]() -> Outcome {
    need_pipeline();
    const auto& on = ablation.cell(true, true);
    const auto& off = ablation.cell(true, false);
    return {on.sequences >= kMinDecoderSequences && on.we < off.we,
            std::to_string(on.sequences) + " held-out sequences, guided latents: WE temporal decoder " + num(on.we) +
                " vs frame-independent " + num(off.we) + " (unguided: " + num(ablation.cell(false, true).we) +
                " vs " + num(ablation.cell(false, false).we) + ")"};
  });

  run_criterion(6, [&]() -> Outcome {
    need_pipeline();
    const double none = ablation.cell(false, false).we, mds = ablation.cell(true, false).we,
                 tsd = ablation.cell(false, true).we, both = ablation.cell(true, true).we;
    return {both < none && both < mds && both < tsd && mds < none && tsd < none,
            "WE neither " + num(none) + ", MDS " + num(mds) + ", TSD " + num(tsd) + ", both " + num(both)};
  });

  run_criterion(7, loss_identities);
  run_criterion(8, oracle_equivalence);

  run_criterion(9, [&]() -> Outcome {
    const F1 f = occlusion_f1(config);
    std::string detail = "occluded-class F1 " + num(f.occluded(), 3) + " (>= 0.8; P " + num(f.tp / (f.tp + f.fp), 3) +
                         ", R " + num(f.tp / (f.tp + f.fn), 3) + "), valid-class F1 " + num(f.valid(), 3);
    bool pass = f.occluded() >= kOcclusionF1;
    if (pipeline_error.empty()) {
      const Outcome m = masking_effect(config, root / "occluder");
      pass = pass && m.pass;
      detail += "; " + m.detail;
    } else {
      pass = false;
      detail += "; masking comparison skipped: " + pipeline_error;
    }
    return {pass, detail};
  });

  run_criterion(10, [&] { return determinism(cli, root / "determinism"); });

  run_criterion(11, [&]() -> Outcome {
    need_pipeline();
    return {pipeline_seconds < kBudgetSeconds,
            "synth -> train-denoiser -> sample -> finetune-decoder -> ablate at default scale (20 held-out) took " +
                num(pipeline_seconds / 60.0, 3) + " min (< 30 min)"};
  });

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
