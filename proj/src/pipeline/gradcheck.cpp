#include "flowguide/pipeline/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "flowguide/core/errors.hpp"
#include "flowguide/diffusion/energy.hpp"

namespace flowguide {

namespace {

Tensor<double> uniform_tensor(const Dims& dims, double lo, double hi, Prng& rng) {
  Tensor<double> t(dims);
  for (Index k = 0; k < t.size(); ++k) t[k] = lo + (hi - lo) * rng.uniform();
  return t;
}

Tensor<double> unit_direction(const Dims& dims, Prng& rng) {
  Tensor<double> d = gaussian_noise<double>(dims, rng);
  d.array() /= std::sqrt(d.array().square().sum());
  return d;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) { return (a.array() * b.array()).sum(); }

}  // namespace

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(std::abs(numeric), 1e-8);
}

FlowSet<double> random_flow_set(Index frames, Index height, Index width, double amplitude, Prng& rng) {
  FlowSet<double> fs;
  for (Index i = 0; i + 1 < frames; ++i) {
    fs.forward.emplace_back(uniform_tensor({2, height, width}, -amplitude, amplitude, rng));
    fs.backward.emplace_back(uniform_tensor({2, height, width}, -amplitude, amplitude, rng));
  }
  return fs;
}

MaskSet<double> random_mask_set(Index frames, Index height, Index width, double valid, Prng& rng) {
  auto one = [&] {
    Tensor<double> m({1, height, width});
    for (Index k = 0; k < m.size(); ++k) m[k] = rng.uniform() < valid ? 1.0 : 0.0;
    return OcclusionMask<double>(std::move(m));
  };
  MaskSet<double> ms;
  for (Index i = 0; i + 1 < frames; ++i) {
    ms.forward.push_back(one());
    ms.backward.push_back(one());
  }
  return ms;
}

GradcheckReport run_gradcheck(const GradcheckSettings& s, std::uint64_t seed) {
  if (s.instances < 1 || s.directions < 1 || s.step <= 0.0) throw ConfigError("gradcheck: invalid settings");
  Prng rng(seed);
  GradcheckReport report;
  const Dims dims{s.frames, s.channels, s.height, s.width};
  const Dims frame_dims{s.channels, s.height, s.width};

  for (int n = 0; n < s.instances; ++n) {
    const Tensor<double> z = uniform_tensor(dims, -1.0, 1.0, rng);
    const FlowSet<double> flows = random_flow_set(s.frames, s.height, s.width, s.flow_amplitude, rng);
    const MaskSet<double> masks = random_mask_set(s.frames, s.height, s.width, s.mask_valid, rng);

    Tensor<double> grad = warping_energy_grad(z, flows, masks, s.charbonnier_eps);
    if (s.corrupt_gradient) grad.array() += 0.05;

    GradcheckInstance inst;
    inst.index = n;
    for (int k = 0; k < s.directions; ++k) {
      const Tensor<double> d = unit_direction(dims, rng);
      Tensor<double> zp = z, zm = z;
      zp.array() += s.step * d.array();
      zm.array() -= s.step * d.array();
      const double fd = (warping_energy(zp, flows, masks, s.charbonnier_eps) -
                         warping_energy(zm, flows, masks, s.charbonnier_eps)) /
                        (2.0 * s.step);
      inst.energy_rel_error = std::max(inst.energy_rel_error, relative_error(dot(grad, d), fd));

      // warp_vjp: d/dh <warp(x + h d, f), u> = <d, vjp(u)>.
      const Tensor<double> x = z.slice(0);
      const FlowField<double>& f = flows.forward[0];
      const Tensor<double> u = uniform_tensor(frame_dims, -1.0, 1.0, rng);
      const Tensor<double> dx = unit_direction(frame_dims, rng);
      Tensor<double> xp = x, xm = x;
      xp.array() += s.step * dx.array();
      xm.array() -= s.step * dx.array();
      const double fd_vjp = (dot(warp_bilinear(xp, f), u) - dot(warp_bilinear(xm, f), u)) / (2.0 * s.step);
      inst.vjp_rel_error = std::max(inst.vjp_rel_error, relative_error(dot(dx, warp_vjp(x, f, u)), fd_vjp));
    }
    report.max_energy_rel_error = std::max(report.max_energy_rel_error, inst.energy_rel_error);
    report.max_vjp_rel_error = std::max(report.max_vjp_rel_error, inst.vjp_rel_error);
    report.instances.push_back(inst);
  }

  // Static instance: identical frames, zero flows, full masks.
  const Tensor<double> frame = uniform_tensor(frame_dims, -1.0, 1.0, rng);
  Tensor<double> z(dims);
  for (Index i = 0; i < s.frames; ++i) z.set_slice(i, frame);
  FlowSet<double> zero;
  for (Index i = 0; i + 1 < s.frames; ++i) {
    zero.forward.emplace_back(s.height, s.width);
    zero.backward.emplace_back(s.height, s.width);
  }
  const auto full = MaskSet<double>::full(zero.pairs(), s.height, s.width);
  report.static_gradient_norm =
      std::sqrt(warping_energy_grad(z, zero, full, s.charbonnier_eps).array().square().sum());

  report.passed = report.max_energy_rel_error <= s.energy_tolerance && report.max_vjp_rel_error <= s.vjp_tolerance &&
                  report.static_gradient_norm < 1e-12;
  return report;
}

}  // namespace flowguide
