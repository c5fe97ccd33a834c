#include "flowguide/pipeline/config.hpp"

#include <charconv>
#include <map>
#include <set>
#include <sstream>

#include "flowguide/core/errors.hpp"
#include "flowguide/io/formats.hpp"

namespace flowguide {

namespace {

/// Calls f(section, key, field) for every serialized field, in file order.
template <typename Config, typename F>
void visit_fields(Config& c, F&& f) {
  f("run", "seed", c.run.seed);
  f("run", "workers", c.run.workers);
  f("run", "workdir", c.run.workdir);
  f("run", "data_dir", c.run.data_dir);
  f("run", "checkpoint_dir", c.run.checkpoint_dir);

  f("data", "train_sequences", c.data.train_sequences);
  f("data", "heldout_sequences", c.data.heldout_sequences);
  f("data", "frames", c.data.frames);
  f("data", "height", c.data.height);
  f("data", "width", c.data.width);
  f("data", "channels", c.data.channels);
  f("data", "scene", c.data.scene);

  f("degradation", "blur_sigma", c.degradation.blur_sigma);
  f("degradation", "factor", c.degradation.factor);
  f("degradation", "noise_sigma", c.degradation.noise_sigma);
  f("degradation", "levels", c.degradation.levels);

  f("flow", "levels", c.flow.levels);
  f("flow", "iterations", c.flow.iterations);
  f("flow", "smoothness", c.flow.smoothness);
  f("flow", "warps", c.flow.warps);
  f("flow", "median_radius", c.flow.median_radius);
  f("flow", "alpha1", c.flow.alpha1);
  f("flow", "alpha2", c.flow.alpha2);

  f("schedule", "steps", c.schedule.steps);
  f("schedule", "beta_start", c.schedule.beta_start);
  f("schedule", "beta_end", c.schedule.beta_end);
  f("schedule", "variance", c.schedule.variance);
  f("schedule", "sample_steps", c.schedule.sample_steps);

  f("guidance", "mds_on", c.guidance.mds_on);
  f("guidance", "scale", c.guidance.scale);
  f("guidance", "charbonnier_eps", c.guidance.charbonnier_eps);
  f("guidance", "eval_point", c.guidance.eval_point);
  f("guidance", "use_masks", c.guidance.use_masks);

  f("autoencoder", "width", c.autoencoder.width);
  f("autoencoder", "latent_channels", c.autoencoder.latent_channels);
  f("autoencoder", "iterations", c.autoencoder.iterations);
  f("autoencoder", "batch_frames", c.autoencoder.batch_frames);
  f("autoencoder", "crop", c.autoencoder.crop);
  f("autoencoder", "lr", c.autoencoder.lr);

  f("denoiser", "width", c.denoiser.width);
  f("denoiser", "stages", c.denoiser.stages);
  f("denoiser", "time_dim", c.denoiser.time_dim);
  f("denoiser", "iterations", c.denoiser.iterations);
  f("denoiser", "batch_sequences", c.denoiser.batch_sequences);
  f("denoiser", "lr", c.denoiser.lr);

  f("decoder", "tsd_on", c.decoder.tsd_on);
  f("decoder", "order", c.decoder.order);
  f("decoder", "cfw_weight", c.decoder.cfw_weight);
  f("decoder", "iterations", c.decoder.iterations);
  f("decoder", "window", c.decoder.window);
  f("decoder", "lr", c.decoder.lr);
  f("decoder", "disc_lr", c.decoder.disc_lr);
  f("decoder", "disc_width", c.decoder.disc_width);
  f("decoder", "alpha", c.decoder.alpha);
  f("decoder", "beta", c.decoder.beta);
  f("decoder", "gamma", c.decoder.gamma);
  f("decoder", "w", c.decoder.w);

  f("gradcheck", "instances", c.gradcheck.instances);
  f("gradcheck", "energy_tolerance", c.gradcheck.energy_tolerance);
  f("gradcheck", "vjp_tolerance", c.gradcheck.vjp_tolerance);
  f("gradcheck", "corrupt_gradient", c.gradcheck.corrupt_gradient);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// Drops a trailing `#` comment that is not inside a quoted string.
std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

std::string encode_string(const std::string& s) {
  std::string out = "\"";
  for (const char ch : s) {
    if (ch == '"' || ch == '\\') out += '\\';
    out += ch;
  }
  return out + "\"";
}

template <typename Int>
Int parse_integer(const std::string& text, const std::string& key) {
  Int v{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) throw ConfigError(key + ": expected an integer, got '" + text + "'");
  return v;
}

void assign(const std::string& key, const std::string& text, std::string& field) {
  if (text.size() < 2 || text.front() != '"' || text.back() != '"') throw ConfigError(key + ": expected a quoted string");
  std::string out;
  for (std::size_t i = 1; i + 1 < text.size(); ++i) {
    if (text[i] == '\\' && i + 2 < text.size()) ++i;
    out += text[i];
  }
  field = out;
}
void assign(const std::string& key, const std::string& text, bool& field) {
  if (text == "true") field = true;
  else if (text == "false") field = false;
  else throw ConfigError(key + ": expected true or false, got '" + text + "'");
}
void assign(const std::string& key, const std::string& text, double& field) {
  std::size_t used = 0;
  try {
    field = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) throw ConfigError(key + ": expected a number, got '" + text + "'");
}
void assign(const std::string& key, const std::string& text, int& field) { field = parse_integer<int>(text, key); }
void assign(const std::string& key, const std::string& text, long& field) { field = parse_integer<long>(text, key); }
void assign(const std::string& key, const std::string& text, long long& field) {
  field = parse_integer<long long>(text, key);
}
void assign(const std::string& key, const std::string& text, unsigned long& field) {
  field = parse_integer<unsigned long>(text, key);
}
void assign(const std::string& key, const std::string& text, unsigned long long& field) {
  field = parse_integer<unsigned long long>(text, key);
}

std::string render(const std::string& v) { return encode_string(v); }
std::string render(bool v) { return v ? "true" : "false"; }
std::string render(double v) {
  std::string s = io::format_double(v);
  // Keep doubles recognisable as reals.
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}
template <typename Int>
std::string render(Int v) {
  return std::to_string(v);
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

void apply_pairs(ExperimentConfig& c, const std::vector<std::tuple<std::string, std::string, int>>& pairs) {
  std::map<std::string, std::pair<std::string, int>> values;
  for (const auto& [key, value, line] : pairs) {
    if (values.count(key)) throw ConfigError("line " + std::to_string(line) + ": duplicate key " + key);
    values[key] = {value, line};
  }
  std::set<std::string> used;
  visit_fields(c, [&](const char* section, const char* name, auto& field) {
    const std::string key = std::string(section) + "." + name;
    const auto it = values.find(key);
    if (it == values.end()) return;
    try {
      assign(key, it->second.first, field);
    } catch (const ConfigError& e) {
      throw ConfigError(it->second.second > 0 ? "line " + std::to_string(it->second.second) + ": " + e.what()
                                              : std::string(e.what()));
    }
    used.insert(key);
  });
  for (const auto& [key, v] : values) {
    if (!used.count(key)) {
      throw ConfigError((v.second > 0 ? "line " + std::to_string(v.second) + ": " : std::string()) + "unknown key " + key);
    }
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  require(run.workers >= 1, "run.workers must be >= 1");
  require(!run.workdir.empty(), "run.workdir must not be empty");
  require(data.train_sequences >= 1 && data.heldout_sequences >= 1, "data: need at least one train and one held-out sequence");
  require(data.frames >= 2, "data.frames must be >= 2");
  require(data.channels == 1 || data.channels == 3, "data.channels must be 1 or 3");
  require(data.height > 0 && data.width > 0 && data.height % 8 == 0 && data.width % 8 == 0,
          "data.height and data.width must be positive multiples of 8");
  require(data.scene == "random" || data.scene == "occluder" || data.scene == "mixed",
          "data.scene must be random, occluder or mixed");
  degradation.validate();
  require(data.height % degradation.factor == 0 && data.width % degradation.factor == 0,
          "degradation.factor must divide the frame size");
  const Index latent_h = data.height / 8, latent_w = data.width / 8;
  const Index lr_h = data.height / degradation.factor, lr_w = data.width / degradation.factor;
  require(lr_h % latent_h == 0 && lr_w % latent_w == 0,
          "the LR frame size must be an integer multiple of the latent grid (factor <= 8 dividing 8)");
  require(flow.levels >= 1 && flow.iterations >= 0 && flow.smoothness > 0.0 && flow.warps >= 1 && flow.median_radius >= 0,
          "flow: invalid solver settings");
  require(flow.alpha1 >= 0.0 && flow.alpha2 >= 0.0, "flow: occlusion thresholds must be nonnegative");
  require(schedule.steps >= 1 && schedule.beta_start > 0.0 && schedule.beta_end < 1.0 && schedule.beta_start <= schedule.beta_end,
          "schedule: invalid beta range or step count");
  require(schedule.variance == "posterior" || schedule.variance == "beta", "schedule.variance must be posterior or beta");
  require(schedule.sample_steps >= 1 && schedule.sample_steps <= schedule.steps,
          "schedule.sample_steps must be in [1, schedule.steps]");
  require(guidance.scale >= 0.0 && guidance.charbonnier_eps >= 0.0, "guidance: scale and eps must be nonnegative");
  require(guidance.eval_point == "after_ddpm_step" || guidance.eval_point == "at_previous_latent",
          "guidance.eval_point must be after_ddpm_step or at_previous_latent");
  require(autoencoder.width >= 2 && autoencoder.width % 2 == 0 && autoencoder.latent_channels >= 1,
          "autoencoder: width must be even and latent_channels positive");
  require(autoencoder.iterations >= 0 && autoencoder.batch_frames >= 1 && autoencoder.crop >= 8 && autoencoder.crop % 8 == 0 &&
              autoencoder.crop <= std::min(data.height, data.width) && autoencoder.lr > 0.0,
          "autoencoder: invalid training settings");
  require(denoiser.width >= 1 && denoiser.stages >= 1 && denoiser.time_dim >= 2 && denoiser.time_dim % 2 == 0,
          "denoiser: invalid architecture");
  require(denoiser.iterations >= 0 && denoiser.batch_sequences >= 1 && denoiser.lr > 0.0, "denoiser: invalid training settings");
  require(decoder.order == "temporal_then_cfw" || decoder.order == "cfw_then_temporal",
          "decoder.order must be temporal_then_cfw or cfw_then_temporal");
  require(decoder.cfw_weight >= 0.0 && decoder.cfw_weight <= 1.0, "decoder.cfw_weight must be in [0, 1]");
  require(decoder.iterations >= 0 && decoder.window >= 2 && decoder.window <= data.frames, "decoder: window must be in [2, frames]");
  require(decoder.lr > 0.0 && decoder.disc_lr > 0.0 && decoder.disc_width >= 1, "decoder: invalid optimizer settings");
  require(decoder.alpha >= 0.0 && decoder.beta >= 0.0 && decoder.gamma >= 0.0 && decoder.w >= 0.0,
          "decoder: loss weights must be nonnegative");
  require(gradcheck.instances >= 1 && gradcheck.energy_tolerance > 0.0 && gradcheck.vjp_tolerance > 0.0,
          "gradcheck: invalid settings");
}

std::filesystem::path ExperimentConfig::data_dir() const {
  return run.data_dir.empty() ? workdir() / "data" : std::filesystem::path(run.data_dir);
}

std::filesystem::path ExperimentConfig::checkpoint_dir() const {
  return run.checkpoint_dir.empty() ? workdir() / "models" : std::filesystem::path(run.checkpoint_dir);
}

FlowSolverParams ExperimentConfig::flow_params() const {
  FlowSolverParams p;
  p.levels = flow.levels;
  p.iterations = flow.iterations;
  p.smoothness = flow.smoothness;
  p.warps = flow.warps;
  p.median_radius = flow.median_radius;
  return p;
}

NoiseSchedule ExperimentConfig::noise_schedule() const {
  return make_linear_schedule(schedule.steps, schedule.beta_start, schedule.beta_end,
                              schedule.variance == "beta" ? ReverseVariance::kBeta : ReverseVariance::kPosterior);
}

GuidanceConfig ExperimentConfig::guidance_config() const {
  GuidanceConfig g;
  g.scale = guidance.mds_on ? guidance.scale : 0.0;
  g.charbonnier_eps = guidance.charbonnier_eps;
  g.eval_point = guidance.eval_point == "at_previous_latent" ? GuidanceEvalPoint::kAtPreviousLatent
                                                              : GuidanceEvalPoint::kAfterDdpmStep;
  return g;
}

AutoencoderConfig ExperimentConfig::autoencoder_config() const {
  AutoencoderConfig a;
  a.image_channels = data.channels;
  a.latent_channels = autoencoder.latent_channels;
  a.width = autoencoder.width;
  a.order = decoder.order == "cfw_then_temporal" ? FusionOrder::kCfwThenTemporal : FusionOrder::kTemporalThenCfw;
  return a;
}

AutoencoderTrainConfig ExperimentConfig::autoencoder_train_config() const {
  AutoencoderTrainConfig t;
  t.iterations = autoencoder.iterations;
  t.batch_frames = autoencoder.batch_frames;
  t.crop = autoencoder.crop;
  t.adam.learning_rate = static_cast<float>(autoencoder.lr);
  return t;
}

DenoiserConfig ExperimentConfig::denoiser_config() const {
  DenoiserConfig d;
  d.latent_channels = autoencoder.latent_channels;
  d.cond_channels = data.channels;
  d.width = denoiser.width;
  d.stages = denoiser.stages;
  d.time_dim = denoiser.time_dim;
  return d;
}

DenoiserTrainConfig ExperimentConfig::denoiser_train_config() const {
  DenoiserTrainConfig t;
  t.iterations = denoiser.iterations;
  t.batch_sequences = denoiser.batch_sequences;
  t.adam.learning_rate = static_cast<float>(denoiser.lr);
  return t;
}

LossWeights ExperimentConfig::loss_weights() const { return {decoder.alpha, decoder.beta, decoder.gamma, decoder.w}; }

FinetuneConfig ExperimentConfig::finetune_config() const {
  FinetuneConfig f;
  f.iterations = decoder.iterations;
  f.window = decoder.window;
  f.weights = loss_weights();
  f.cfw_weight = decoder.cfw_weight;
  f.adam.learning_rate = static_cast<float>(decoder.lr);
  f.disc_adam.learning_rate = static_cast<float>(decoder.disc_lr);
  return f;
}

bool ExperimentConfig::operator==(const ExperimentConfig& other) const {
  return serialize_config(*this) == serialize_config(other);
}

ExperimentConfig parse_config(const std::string& text) { return parse_config(text, ExperimentConfig{}); }

ExperimentConfig parse_config(const std::string& text, const ExperimentConfig& base) {
  ExperimentConfig c = base;
  std::vector<std::tuple<std::string, std::string, int>> pairs;
  std::istringstream in(text);
  std::string raw, section;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) throw ConfigError("line " + std::to_string(line_no) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    if (section.empty()) throw ConfigError("line " + std::to_string(line_no) + ": key outside of a section");
    pairs.emplace_back(section + "." + trim(line.substr(0, eq)), trim(line.substr(eq + 1)), line_no);
  }
  apply_pairs(c, pairs);
  return c;
}

std::string serialize_config(const ExperimentConfig& config) {
  std::ostringstream out;
  std::string current;
  visit_fields(const_cast<ExperimentConfig&>(config), [&](const char* section, const char* name, auto& field) {
    if (current != section) {
      if (!current.empty()) out << "\n";
      out << "[" << section << "]\n";
      current = section;
    }
    out << name << " = " << render(field) << "\n";
  });
  return out.str();
}

ExperimentConfig load_config(const std::filesystem::path& path) { return parse_config(io::read_text(path)); }

void apply_override(ExperimentConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const std::string key = trim(assignment.substr(0, eq));
  if (eq == std::string::npos || key.find('.') == std::string::npos) {
    throw ConfigError("override '" + assignment + "' must look like section.key=value");
  }
  std::string value = trim(assignment.substr(eq + 1));
  // Allow unquoted strings on the command line.
  bool is_string = false;
  visit_fields(config, [&](const char* section, const char* name, auto& field) {
    if (key == std::string(section) + "." + name) is_string = std::is_same_v<std::decay_t<decltype(field)>, std::string>;
  });
  if (is_string && (value.empty() || value.front() != '"')) value = encode_string(value);
  apply_pairs(config, {{key, value, 0}});
}

}  // namespace flowguide
