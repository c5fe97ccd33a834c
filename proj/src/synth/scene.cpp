#include "flowguide/synth/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "flowguide/core/errors.hpp"

namespace flowguide::synth {

double Texture::eval(Index channel, double x, double y) const {
  double v = offset;
  for (const Wave& w : channels.at(static_cast<std::size_t>(channel))) {
    v += w.amplitude * std::sin(2.0 * std::numbers::pi * (w.fx * x + w.fy * y) + w.phase);
  }
  return v;
}

Texture random_texture(Prng& rng, Index channels, int waves, double min_period, double max_period, double offset,
                       double spread) {
  Texture t;
  t.offset = offset;
  const double amplitude = waves > 0 ? spread / waves : 0.0;
  for (Index c = 0; c < channels; ++c) {
    std::vector<Wave> list;
    for (int k = 0; k < waves; ++k) {
      const double period = min_period + (max_period - min_period) * rng.uniform();
      const double theta = 2.0 * std::numbers::pi * rng.uniform();
      Wave w;
      w.amplitude = amplitude;
      w.fx = std::cos(theta) / period;
      w.fy = std::sin(theta) / period;
      w.phase = 2.0 * std::numbers::pi * rng.uniform();
      list.push_back(w);
    }
    t.channels.push_back(std::move(list));
  }
  return t;
}

double SpriteSpec::coverage(Index frame, double x, double y) const {
  const double dx = x - cx(frame), dy = y - cy(frame);
  const double d = shape == SpriteShape::kDisc ? std::hypot(dx, dy) : std::max(std::abs(dx), std::abs(dy));
  if (edge_softness <= 0.0) return d <= radius ? 1.0 : 0.0;
  return std::clamp((radius - d) / edge_softness + 0.5, 0.0, 1.0);
}

void SceneSpec::validate() const {
  if (height < 8 || width < 8) throw ConfigError("scene canvas must be at least 8x8");
  if (frames < 1) throw ConfigError("scene needs at least one frame");
  if (channels != 1 && channels != 3) throw ConfigError("scene channels must be 1 or 3");
  if (static_cast<Index>(background.channels.size()) != channels) {
    throw ConfigError("background texture channel count does not match the scene");
  }
  if (!std::isfinite(pan_x) || !std::isfinite(pan_y)) throw ConfigError("pan velocity must be finite");
  for (std::size_t s = 0; s < sprites.size(); ++s) {
    const SpriteSpec& sp = sprites[s];
    if (!(sp.radius > 0.0)) throw ConfigError("sprite " + std::to_string(s) + " radius must be positive");
    if (static_cast<Index>(sp.texture.channels.size()) != channels) {
      throw ConfigError("sprite " + std::to_string(s) + " texture channel count does not match the scene");
    }
    for (Index i = 0; i < frames; ++i) {
      const double x = sp.cx(i), y = sp.cy(i);
      if (!std::isfinite(x) || !std::isfinite(y) || x < 0.0 || y < 0.0 || x > static_cast<double>(width - 1) ||
          y > static_cast<double>(height - 1)) {
        throw ConfigError("sprite " + std::to_string(s) + " leaves the canvas at frame " + std::to_string(i));
      }
    }
  }
}

namespace {

constexpr int kBackground = -1;

// Top-most surface covering each pixel by at least half.
std::vector<int> layers(const SceneSpec& spec, Index frame) {
  const Index h = spec.height, w = spec.width;
  std::vector<int> out(static_cast<std::size_t>(h * w), kBackground);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      for (int s = static_cast<int>(spec.sprites.size()) - 1; s >= 0; --s) {
        if (spec.sprites[static_cast<std::size_t>(s)].coverage(frame, static_cast<double>(x),
                                                               static_cast<double>(y)) >= 0.5) {
          out[static_cast<std::size_t>(y * w + x)] = s;
          break;
        }
      }
    }
  return out;
}

void velocity(const SceneSpec& spec, int surface, double& vx, double& vy) {
  if (surface == kBackground) {
    vx = spec.pan_x;
    vy = spec.pan_y;
  } else {
    vx = spec.sprites[static_cast<std::size_t>(surface)].vx;
    vy = spec.sprites[static_cast<std::size_t>(surface)].vy;
  }
}

// Correspondence p -> p + (dx, dy) into `dst` is valid when every bilinear
// tap with non-zero weight is on canvas and on the same surface.
bool correspondence_valid(const std::vector<int>& dst, Index h, Index w, double x, double y, int surface) {
  const double fx = std::floor(x), fy = std::floor(y);
  const double ax = x - fx, ay = y - fy;
  for (int oy = 0; oy < 2; ++oy)
    for (int ox = 0; ox < 2; ++ox) {
      const double weight = (ox ? ax : 1.0 - ax) * (oy ? ay : 1.0 - ay);
      if (weight == 0.0) continue;
      const Index tx = static_cast<Index>(fx) + ox, ty = static_cast<Index>(fy) + oy;
      if (tx < 0 || ty < 0 || tx >= w || ty >= h) return false;
      if (dst[static_cast<std::size_t>(ty * w + tx)] != surface) return false;
    }
  return true;
}

// Flow on `from`'s grid pointing into `to`, with sign +1 for forward time.
void motion_field(const SceneSpec& spec, const std::vector<int>& from, const std::vector<int>& to, double sign,
                  FlowField<float>& flow, Tensor<float>& mask) {
  const Index h = spec.height, w = spec.width;
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      const int s = from[static_cast<std::size_t>(y * w + x)];
      double vx = 0.0, vy = 0.0;
      velocity(spec, s, vx, vy);
      vx *= sign;
      vy *= sign;
      flow.dx(y, x) = static_cast<float>(vx);
      flow.dy(y, x) = static_cast<float>(vy);
      const bool ok = correspondence_valid(to, h, w, static_cast<double>(x) + vx, static_cast<double>(y) + vy, s);
      mask(0, y, x) = ok ? 1.0f : 0.0f;
    }
}

}  // namespace

SynthResult synth_sequence(const SceneSpec& spec) {
  spec.validate();
  const Index n = spec.frames, c = spec.channels, h = spec.height, w = spec.width;
  Tensor<float> frames({n, c, h, w});
  for (Index i = 0; i < n; ++i) {
    const double bx = spec.pan_x * static_cast<double>(i), by = spec.pan_y * static_cast<double>(i);
    for (Index ch = 0; ch < c; ++ch)
      for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) {
          const double px = static_cast<double>(x), py = static_cast<double>(y);
          double v = spec.background.eval(ch, px - bx, py - by);
          for (const SpriteSpec& sp : spec.sprites) {
            const double a = sp.coverage(i, px, py);
            if (a <= 0.0) continue;
            v = a * sp.texture.eval(ch, px - sp.cx(i), py - sp.cy(i)) + (1.0 - a) * v;
          }
          frames(i, ch, y, x) = static_cast<float>(v);
        }
  }

  SynthResult result{VideoSequence::clamped(std::move(frames)), {}, {}};
  std::vector<std::vector<int>> all;
  all.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) all.push_back(layers(spec, i));
  for (Index i = 0; i + 1 < n; ++i) {
    FlowField<float> fwd(h, w), bwd(h, w);
    Tensor<float> mf({1, h, w}), mb({1, h, w});
    motion_field(spec, all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(i + 1)], 1.0, fwd, mf);
    motion_field(spec, all[static_cast<std::size_t>(i + 1)], all[static_cast<std::size_t>(i)], -1.0, bwd, mb);
    result.flows.forward.push_back(std::move(fwd));
    result.flows.backward.push_back(std::move(bwd));
    result.masks.forward.emplace_back(std::move(mf));
    result.masks.backward.emplace_back(std::move(mb));
  }
  return result;
}

namespace {

double uniform(Prng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

// Start coordinate so that start and start + travel both lie in [margin, extent - 1 - margin].
double start_for(Prng& rng, double travel, Index extent, double margin) {
  const double lo = std::max(margin, margin - travel);
  const double hi = std::min(static_cast<double>(extent - 1) - margin, static_cast<double>(extent - 1) - margin - travel);
  if (hi < lo) throw ConfigError("scene too small for the requested sprite motion");
  return uniform(rng, lo, hi);
}

}  // namespace

SceneSpec random_scene(std::uint64_t seed, Index height, Index width, Index frames, Index channels) {
  Prng rng(seed);
  SceneSpec spec;
  spec.height = height;
  spec.width = width;
  spec.frames = frames;
  spec.channels = channels;
  spec.seed = seed;
  spec.background = random_texture(rng, channels, 6, 8.0, 40.0, 0.5, 0.35);
  spec.pan_x = uniform(rng, -1.0, 1.0);
  spec.pan_y = uniform(rng, -1.0, 1.0);
  const int count = static_cast<int>(rng.uniform_int(2, 4));
  const double span = static_cast<double>(frames - 1);
  const double scale = static_cast<double>(std::min(height, width)) / 128.0;
  for (int s = 0; s < count; ++s) {
    SpriteSpec sp;
    sp.shape = rng.uniform() < 0.5 ? SpriteShape::kDisc : SpriteShape::kSquare;
    sp.radius = uniform(rng, 8.0, 18.0) * scale;
    sp.vx = uniform(rng, -2.5, 2.5);
    sp.vy = uniform(rng, -2.5, 2.5);
    sp.x0 = start_for(rng, sp.vx * span, width, 4.0);
    sp.y0 = start_for(rng, sp.vy * span, height, 4.0);
    sp.texture = random_texture(rng, channels, 4, 5.0, 20.0, uniform(rng, 0.25, 0.75), 0.2);
    spec.sprites.push_back(std::move(sp));
  }
  return spec;
}

SceneSpec occluder_scene(std::uint64_t seed, Index height, Index width, Index frames, Index channels) {
  Prng rng(seed ^ 0x6f63636cULL);
  SceneSpec spec;
  spec.height = height;
  spec.width = width;
  spec.frames = frames;
  spec.channels = channels;
  spec.seed = seed;
  spec.background = random_texture(rng, channels, 6, 8.0, 32.0, 0.5, 0.35);
  spec.pan_x = static_cast<double>(rng.uniform_int(-1, 1));
  spec.pan_y = 0.0;
  const double span = static_cast<double>(frames - 1);
  const double scale = static_cast<double>(std::min(height, width)) / 128.0;
  const double mid_y = static_cast<double>(height - 1) / 2.0;
  for (int s = 0; s < 2; ++s) {
    SpriteSpec sp;
    sp.shape = s == 0 ? SpriteShape::kDisc : SpriteShape::kSquare;
    sp.radius = uniform(rng, 16.0, 24.0) * scale;
    const double speed = static_cast<double>(rng.uniform_int(2, 4));
    sp.vx = s == 0 ? speed : -speed;
    sp.vy = static_cast<double>(rng.uniform_int(-1, 1));
    const double travel_x = sp.vx * span;
    const double margin = 4.0;
    sp.x0 = s == 0 ? std::max(margin, static_cast<double>(width) / 2.0 - travel_x / 2.0 - 10.0 * scale)
                   : std::min(static_cast<double>(width - 1) - margin,
                              static_cast<double>(width) / 2.0 - travel_x / 2.0 + 10.0 * scale);
    sp.y0 = mid_y - sp.vy * span / 2.0 + uniform(rng, -8.0, 8.0) * scale;
    sp.texture = random_texture(rng, channels, 4, 5.0, 16.0, s == 0 ? 0.3 : 0.7, 0.2);
    spec.sprites.push_back(std::move(sp));
  }
  return spec;
}

}  // namespace flowguide::synth
