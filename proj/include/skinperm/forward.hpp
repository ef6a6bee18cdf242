#pragma once

// Dominant-mode reflection coefficient of a flanged open-ended rectangular
// waveguide radiating into a planar stack.
//
// The aperture field is the TE10 profile cos(pi x / a) on |x| < a/2, |y| < b/2.
// The aperture admittance is split into two pieces:
//
//   Y_ap = Y_hs(eps_top) + (1/4pi^2) Int F^2 [dY_TE kx^2/krho^2 + dY_TM ky^2/krho^2] dkx dky
//
// Y_hs is the admittance of the same aperture facing a homogeneous half-space
// of the medium touching the aperture. It is evaluated in the spatial domain,
// where the kernel is exp(-jkR)/R and the 1/R singularity disappears in polar
// coordinates. dY = Y_stack - Y_c(eps_top) decays like exp(-2 krho d_top), so
// the remaining spectral integral converges quickly and is truncated at
// krho_max_factor * k0.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>

#include "skinperm/em_core.hpp"
#include "skinperm/parallel.hpp"
#include "skinperm/quadrature.hpp"

namespace skinperm {

struct QuadratureConfig {
  double krho_max_factor = 40.0;
  double rel_tol = 1e-7;
  unsigned max_depth = 30;

  void validate() const {
    if (!(krho_max_factor >= 10.0)) throw InvalidArgument("krho_max_factor must be >= 10");
    if (!(rel_tol > 0.0 && rel_tol < 1e-2)) throw InvalidArgument("rel_tol must lie in (0, 1e-2)");
    if (max_depth == 0) throw InvalidArgument("max_depth must be positive");
  }
};

/// Stack, waveguide and quadrature used for every forward evaluation. The
/// layer at `skin_index` is the one whose permittivity is swept.
struct ForwardConfig {
  LayerStack stack = default_stack(ComplexPermittivity{4.7, 2.4});
  std::size_t skin_index = 1;
  WaveguideSpec waveguide{};
  QuadratureConfig quadrature{};
};

struct ReflectionSample {
  double freq = 0.0;
  ComplexPermittivity eps;
  cdouble gamma;
};

/// Fourier transform of the TE10 aperture field, even in both arguments.
inline double aperture_spectrum(double kx, double ky, const WaveguideSpec& wg) {
  using constants::pi;
  const double u = std::abs(kx) * wg.a;
  double fx;
  const double delta = pi - u; // pi^2 - u^2 = delta (2 pi - delta)
  if (std::abs(delta) < 1e-4) {
    // sin(delta/2)/delta
    const double s = 0.5 * (1.0 - delta * delta / 24.0);
    fx = 2.0 * pi * wg.a * s / (2.0 * pi - delta);
  } else {
    fx = 2.0 * pi * wg.a * std::cos(0.5 * u) / ((pi - u) * (pi + u));
  }
  const double v = 0.5 * ky * wg.b;
  const double fy = std::abs(v) < 1e-8 ? wg.b * (1.0 - v * v / 6.0) : 2.0 * std::sin(v) / ky;
  return fx * fy;
}

/// TE10 modal admittance (S) of the empty guide.
inline double te10_admittance(double freq, const WaveguideSpec& wg) {
  const double k0 = free_space_wavenumber(freq);
  const double kc = constants::pi / wg.a;
  if (!(k0 > kc)) throw InvalidArgument("TE10 is cut off at " + std::to_string(freq) + " Hz");
  return std::sqrt(k0 * k0 - kc * kc) / (angular_frequency(freq) * constants::mu0);
}

/// Admittance (S) of the aperture facing a homogeneous half-space. Exact up to
/// the fixed Gauss rule: the integrand is analytic on both polar triangles.
inline cdouble halfspace_aperture_admittance(double freq, const ComplexPermittivity& eps,
                                             const WaveguideSpec& wg) {
  using constants::pi;
  using Rule = boost::math::quadrature::gauss<double, 48>;
  const double a = wg.a, b = wg.b;
  const cdouble k = transverse_wavenumber(0.0, freq, eps);
  const cdouble k2 = k * k;
  const double kc2 = (pi / a) * (pi / a);

  // autocorrelations of cos(pi x/a) and sin(pi x/a) at lag u in [0, a]
  auto corr_cos = [&](double u) {
    return 0.5 * (a - u) * std::cos(pi * u / a) + a / (2.0 * pi) * std::sin(pi * u / a);
  };
  auto corr_sin = [&](double u) {
    return 0.5 * (a - u) * std::cos(pi * u / a) - a / (2.0 * pi) * std::sin(pi * u / a);
  };
  auto radial = [&](double phi, double r_max) {
    const double c = std::cos(phi), s = std::sin(phi);
    auto f = [&](double r) {
      const double u = r * c, v = r * s;
      return std::exp(cdouble{0.0, -1.0} * k * r) * (k2 * corr_cos(u) - kc2 * corr_sin(u)) * (b - v);
    };
    return Rule::integrate(f, 0.0, r_max);
  };

  const double phi_corner = std::atan2(b, a);
  const cdouble lower = Rule::integrate(
      [&](double phi) { return radial(phi, a / std::cos(phi)); }, 0.0, phi_corner);
  const cdouble upper = Rule::integrate(
      [&](double phi) { return radial(phi, b / std::sin(phi)); }, phi_corner, pi / 2.0);

  // four quadrants of the lag plane
  return cdouble{0.0, 4.0} / (2.0 * pi * angular_frequency(freq) * constants::mu0) * (lower + upper);
}

/// Angular moments of F^2 on the circle of radius k_rho:
/// real part = Int_0^{pi/2} F^2 cos^2, imaginary part = Int_0^{pi/2} F^2 sin^2.
inline cdouble spectrum_angular_moments(double k_rho, const WaveguideSpec& wg, double rel_tol,
                                        unsigned max_depth) {
  auto f = [&](double phi) {
    const double c = std::cos(phi), s = std::sin(phi);
    const double f2 = std::pow(aperture_spectrum(k_rho * c, k_rho * s, wg), 2);
    return cdouble{f2 * c * c, f2 * s * s};
  };
  // roughly one panel per oscillation of the broad-wall factor
  const auto n = 1 + static_cast<std::size_t>(k_rho * wg.a / (2.0 * constants::pi));
  std::vector<double> edges(n + 1);
  for (std::size_t i = 0; i <= n; ++i) edges[i] = constants::pi / 2.0 * static_cast<double>(i) / static_cast<double>(n);
  const quad::Result r = quad::integrate(f, edges, rel_tol, max_depth);
  if (!r.converged)
    throw ConvergenceFailure("angular spectrum moment did not converge at k_rho = " + std::to_string(k_rho),
                             r.value.real(), r.value.imag(), r.error);
  return r.value;
}

struct ApertureResult {
  cdouble y_norm;              // Y_ap / (Y10 a b / 2)
  bool infinite = false;       // flush short
  double error_estimate = 0.0; // absolute, in units of y_norm
  double tail_magnitude = 0.0; // |integrand| at the truncation radius, relative to |y_norm| per k0
  cdouble halfspace_part;      // normalized Y_hs
  std::size_t evaluations = 0; // outer integrand evaluations
};

inline ApertureResult aperture_admittance(double freq, const LayerStack& stack,
                                          const WaveguideSpec& wg, const QuadratureConfig& q) {
  q.validate();
  wg.validate();
  if (stack.is_short()) {
    ApertureResult shorted;
    shorted.infinite = true;
    return shorted;
  }

  const double norm = te10_admittance(freq, wg) * wg.a * wg.b / 2.0;
  const ComplexPermittivity& top = stack.aperture_medium();
  const cdouble y_hs = halfspace_aperture_admittance(freq, top, wg);

  ApertureResult out;
  out.halfspace_part = y_hs / norm;
  if (stack.layers().empty()) {
    out.y_norm = out.halfspace_part;
    return out;
  }

  const double k0 = free_space_wavenumber(freq);
  const double k_max = q.krho_max_factor * k0;
  const double inner_tol = q.rel_tol * 1e-2;

  auto integrand = [&](double k_rho) -> cdouble {
    const cdouble m = spectrum_angular_moments(k_rho, wg, inner_tol, q.max_depth);
    auto delta = [&](Polarization pol) {
      const InputAdmittance y = stack_input_admittance(k_rho, freq, stack, pol);
      if (y.infinite) throw SingularPoint("stack admittance is infinite at k_rho = " + std::to_string(k_rho));
      return y.value - characteristic_admittance(k_rho, freq, top, pol);
    };
    return k_rho * (delta(Polarization::TE) * m.real() + delta(Polarization::TM) * m.imag());
  };

  // panel edges every k0 plus every branch point of the stack materials
  std::vector<double> edges;
  for (double k = 0.0; k < k_max; k += k0) edges.push_back(k);
  edges.push_back(k_max);
  auto add_branch = [&](const ComplexPermittivity& eps) {
    const double kb = k0 * std::sqrt(eps.real());
    if (kb > 0.0 && kb < k_max) edges.push_back(kb);
  };
  for (const Layer& layer : stack.layers()) add_branch(layer.permittivity);
  if (const auto* hs = std::get_if<HalfSpace>(&stack.termination())) add_branch(hs->permittivity);
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end(),
                          [&](double x, double y) { return std::abs(x - y) < 1e-9 * k0; }),
              edges.end());

  const quad::Result r = quad::integrate(integrand, edges, q.rel_tol * 0.1, q.max_depth);
  const cdouble spectral = r.value;
  const double error = r.error;
  out.evaluations = r.evaluations;

  const double scale = 1.0 / (constants::pi * constants::pi * norm); // 4 quadrants / 4 pi^2
  out.y_norm = out.halfspace_part + spectral * scale;
  out.error_estimate = error * scale;
  out.tail_magnitude = std::abs(integrand(k_max)) * scale * k0 / std::max(std::abs(out.y_norm), 1e-300);

  if (!std::isfinite(out.y_norm.real()) || !std::isfinite(out.y_norm.imag()) ||
      !r.converged || out.error_estimate > q.rel_tol * std::abs(out.y_norm)) {
    throw ConvergenceFailure("aperture integral did not converge at " + std::to_string(freq) +
                                 " Hz (estimate error " + std::to_string(out.error_estimate) + ")",
                             out.y_norm.real(), out.y_norm.imag(), out.error_estimate);
  }
  return out;
}

inline cdouble gamma_from_admittance(const ApertureResult& y) {
  if (y.infinite) return {-1.0, 0.0};
  return (1.0 - y.y_norm) / (1.0 + y.y_norm);
}

/// Gamma at the aperture plane with the swept layer set to eps_skin.
inline cdouble reflection_coefficient(double freq, const ComplexPermittivity& eps_skin,
                                      const ForwardConfig& cfg) {
  const bool sweepable = cfg.skin_index < cfg.stack.layers().size() ||
                         (cfg.skin_index == cfg.stack.layers().size() && !cfg.stack.pec_backed());
  const LayerStack stack = sweepable ? cfg.stack.with_permittivity(cfg.skin_index, eps_skin) : cfg.stack;
  return gamma_from_admittance(aperture_admittance(freq, stack, cfg.waveguide, cfg.quadrature));
}

// ---------------------------------------------------------------------------
// Training tables

struct SweepBox {
  double real_min = 3.0, real_max = 6.0;
  double imag_min = 1.0, imag_max = 4.0;

  void validate() const {
    if (!(real_min < real_max && imag_min < imag_max))
      throw InvalidArgument("sweep box bounds must be ordered");
    if (!(real_min > 0.0 && imag_min >= 0.0))
      throw InvalidArgument("sweep box must lie in the passive half-plane");
  }
  bool contains(const ComplexPermittivity& e) const {
    return e.real() >= real_min && e.real() <= real_max && e.imag() >= imag_min && e.imag() <= imag_max;
  }
  friend bool operator==(const SweepBox&, const SweepBox&) = default;
};

enum class Sampling { Random, Lattice };

inline const char* to_string(Sampling s) { return s == Sampling::Random ? "random" : "lattice"; }

struct TrainingTable {
  FrequencyGrid grid{140e9, 220e9, 2};
  SweepBox box{};
  std::uint64_t seed = 0;
  Sampling sampling = Sampling::Random;
  ForwardConfig config{};
  /// samples[f][s]: frequency index f, sample s in generation order
  std::vector<std::vector<ReflectionSample>> samples;

  std::size_t samples_per_frequency() const { return samples.empty() ? 0 : samples.front().size(); }

  void validate() const {
    if (samples.size() != grid.size()) throw InvalidArgument("table does not cover every grid frequency");
    for (const auto& row : samples) {
      if (row.size() != samples_per_frequency())
        throw InvalidArgument("table has unequal sample counts per frequency");
      for (const auto& s : row)
        if (!box.contains(s.eps)) throw InvalidArgument("table sample lies outside the sweep box");
    }
  }
};

/// Uniform double in [0, 1) from the top 53 bits, identical on every platform.
inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline std::vector<ComplexPermittivity> draw_sweep_points(const SweepBox& box, std::size_t n,
                                                          std::uint64_t seed, Sampling sampling) {
  box.validate();
  std::vector<ComplexPermittivity> pts;
  pts.reserve(n);
  if (sampling == Sampling::Lattice) {
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
    if (side * side != n || side < 2) throw InvalidArgument("lattice sampling needs a square sample count >= 4");
    for (std::size_t i = 0; i < side; ++i)
      for (std::size_t j = 0; j < side; ++j) {
        const double tr = static_cast<double>(i) / static_cast<double>(side - 1);
        const double ti = static_cast<double>(j) / static_cast<double>(side - 1);
        pts.emplace_back(box.real_min + tr * (box.real_max - box.real_min),
                         box.imag_min + ti * (box.imag_max - box.imag_min));
      }
    return pts;
  }
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const double ur = unit_uniform(rng);
    const double ui = unit_uniform(rng);
    pts.emplace_back(box.real_min + ur * (box.real_max - box.real_min),
                     box.imag_min + ui * (box.imag_max - box.imag_min));
  }
  return pts;
}

inline TrainingTable generate_training_table(const SweepBox& box, std::size_t n_samples,
                                             const FrequencyGrid& grid, std::uint64_t seed,
                                             const ForwardConfig& cfg,
                                             Sampling sampling = Sampling::Random, unsigned workers = 0) {
  if (n_samples < 4) throw InvalidArgument("need at least 4 samples");
  cfg.quadrature.validate();
  cfg.waveguide.check_single_mode(grid.start(), grid.stop());

  TrainingTable table;
  table.grid = grid;
  table.box = box;
  table.seed = seed;
  table.sampling = sampling;
  table.config = cfg;
  const auto points = draw_sweep_points(box, n_samples, seed, sampling);
  table.samples.assign(grid.size(), std::vector<ReflectionSample>(n_samples));

  parallel_for(grid.size() * n_samples, workers, [&](std::size_t k) {
    const std::size_t fi = k / n_samples, si = k % n_samples;
    const double f = grid[fi];
    const ComplexPermittivity& eps = points[si];
    auto context = [&] {
      return " [eps = " + std::to_string(eps.real()) + " - j" + std::to_string(eps.imag()) +
             ", f = " + std::to_string(f) + " Hz]";
    };
    try {
      table.samples[fi][si] = {f, eps, reflection_coefficient(f, eps, cfg)};
    } catch (const ConvergenceFailure& e) {
      throw ConvergenceFailure(e.what() + context(), e.estimate_real(), e.estimate_imag(), e.error_bound());
    } catch (const SingularPoint& e) {
      throw SingularPoint(e.what() + context());
    }
  });
  return table;
}

} // namespace skinperm
