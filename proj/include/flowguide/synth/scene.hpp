#pragma once

#include <cstdint>
#include <vector>

#include "flowguide/core/prng.hpp"
#include "flowguide/core/sequence.hpp"
#include "flowguide/motion/flow.hpp"

namespace flowguide::synth {

/// One sinusoidal component: amplitude * sin(2 pi (fx x + fy y) + phase).
struct Wave {
  double amplitude = 0.0;
  double fx = 0.0;  ///< cycles per pixel
  double fy = 0.0;
  double phase = 0.0;
};

/// Band-limited texture evaluated analytically, so sampling at subpixel
/// positions is exact: value = offset + sum of waves, per channel.
struct Texture {
  double offset = 0.5;
  std::vector<std::vector<Wave>> channels;  ///< one wave list per channel

  double eval(Index channel, double x, double y) const;
};

/// Random texture with `waves` components per channel whose wavelengths lie
/// in [min_period, max_period] pixels. The range of the sum stays inside
/// [offset - spread, offset + spread].
Texture random_texture(Prng& rng, Index channels, int waves, double min_period, double max_period, double offset,
                       double spread);

enum class SpriteShape { kDisc, kSquare };

struct SpriteSpec {
  SpriteShape shape = SpriteShape::kDisc;
  double radius = 10.0;  ///< disc radius or square half-side, pixels
  double edge_softness = 1.0;  ///< width of the linear coverage ramp, pixels; 0 gives hard edges
  double x0 = 0.0;       ///< centre at frame 0
  double y0 = 0.0;
  double vx = 0.0;  ///< pixels per frame
  double vy = 0.0;
  Texture texture;

  double cx(Index frame) const { return x0 + vx * static_cast<double>(frame); }
  double cy(Index frame) const { return y0 + vy * static_cast<double>(frame); }
  /// Fraction of pixel (x, y) covered in `frame`, ramping linearly over
  /// `edge_softness` pixels across the boundary.
  double coverage(Index frame, double x, double y) const;
};

/// Sprites are drawn in list order, so later sprites sit on top.
struct SceneSpec {
  Index height = 128;
  Index width = 128;
  Index frames = 8;
  Index channels = 1;
  Texture background;
  double pan_x = 0.0;  ///< global background velocity, pixels per frame
  double pan_y = 0.0;
  std::vector<SpriteSpec> sprites;
  std::uint64_t seed = 0;

  /// Throws ConfigError for bad dims and when a sprite centre leaves the canvas.
  void validate() const;
};

struct SynthResult {
  VideoSequence frames;
  FlowSet<float> flows;  ///< exact ground-truth motion
  MaskSet<float> masks;  ///< 1 where the correspondence is valid
};

/// Renders the scene with exact flows and occlusion maps.
///
/// Each pixel belongs to the top-most surface covering it by at least half.
/// forward[i] carries that surface's velocity on frame i's grid, backward[i]
/// the negated velocity of the surface on frame i+1's grid. A correspondence
/// is marked occluded (0) when it leaves the canvas or lands on a different
/// surface. With hard sprite edges the frames agree exactly along every valid
/// integer correspondence; soft edges blend up to one pixel around each sprite.
SynthResult synth_sequence(const SceneSpec& spec);

/// Random scene: panning background plus 2-4 textured sprites that stay on canvas.
SceneSpec random_scene(std::uint64_t seed, Index height = 128, Index width = 128, Index frames = 8,
                       Index channels = 1);

/// Occlusion-heavy scene: large sprites at integer velocities crossing each
/// other over a static or slowly panning background.
SceneSpec occluder_scene(std::uint64_t seed, Index height = 128, Index width = 128, Index frames = 8,
                         Index channels = 1);

}  // namespace flowguide::synth
