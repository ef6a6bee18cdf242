#pragma once

// Material models and transverse-equivalent-network admittances for planar
// stacks. Time convention is e^{+jwt}; a lossy medium has eps = eps' - j eps''
// with eps'' >= 0, and longitudinal wavenumbers take the branch Im(kz) <= 0.

#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <variant>
#include <vector>

#include "skinperm/error.hpp"

namespace skinperm {

using cdouble = std::complex<double>;

namespace constants {
inline constexpr double c0 = 2.99792458e8;        // m/s
inline constexpr double eps0 = 8.8541878128e-12;  // F/m
inline constexpr double mu0 = 1.25663706212e-6;   // H/m
inline constexpr double pi = std::numbers::pi;
} // namespace constants

inline double angular_frequency(double freq) { return 2.0 * constants::pi * freq; }
inline double free_space_wavenumber(double freq) { return angular_frequency(freq) / constants::c0; }

/// Relative permittivity eps' - j eps''. The loss factor is stored non-negative.
class ComplexPermittivity {
public:
  ComplexPermittivity() = default;
  ComplexPermittivity(double eps_real, double eps_imag) : real_(eps_real), imag_(eps_imag) {
    if (!(eps_real > 0.0) || !std::isfinite(eps_real))
      throw InvalidArgument("dielectric constant must be positive, got " + std::to_string(eps_real));
    if (!(eps_imag >= 0.0) || !std::isfinite(eps_imag))
      throw InvalidArgument("loss factor must be non-negative, got " + std::to_string(eps_imag));
  }

  /// Builds from the physical complex value eps' - j eps''.
  static ComplexPermittivity from_complex(cdouble value) { return {value.real(), -value.imag()}; }

  double real() const noexcept { return real_; }
  double imag() const noexcept { return imag_; }
  cdouble value() const noexcept { return {real_, -imag_}; }

  friend bool operator==(const ComplexPermittivity&, const ComplexPermittivity&) = default;

private:
  double real_ = 1.0;
  double imag_ = 0.0;
};

inline const ComplexPermittivity kVacuum{1.0, 0.0};

struct Layer {
  ComplexPermittivity permittivity;
  double thickness = 0.0; // m

  Layer() = default;
  Layer(ComplexPermittivity eps, double d) : permittivity(eps), thickness(d) {
    if (!(d > 0.0) || !std::isfinite(d))
      throw InvalidArgument("layer thickness must be positive and finite");
  }
};

struct HalfSpace {
  ComplexPermittivity permittivity;
};
struct PerfectConductor {};

using Termination = std::variant<HalfSpace, PerfectConductor>;

/// Layers ordered from the aperture outward, then the termination.
class LayerStack {
public:
  LayerStack(std::vector<Layer> layers, Termination termination)
      : layers_(std::move(layers)), termination_(termination) {}

  const std::vector<Layer>& layers() const noexcept { return layers_; }
  const Termination& termination() const noexcept { return termination_; }
  bool pec_backed() const noexcept { return std::holds_alternative<PerfectConductor>(termination_); }
  /// Flush conductor at the aperture plane.
  bool is_short() const noexcept { return layers_.empty() && pec_backed(); }

  /// Medium in contact with the aperture; undefined for a flush short.
  const ComplexPermittivity& aperture_medium() const {
    if (!layers_.empty()) return layers_.front().permittivity;
    if (const auto* hs = std::get_if<HalfSpace>(&termination_)) return hs->permittivity;
    throw InvalidArgument("flush conductor has no aperture medium");
  }

  /// Copy with the permittivity of layer `index` replaced (or of the
  /// half-space when index == layers().size()).
  LayerStack with_permittivity(std::size_t index, ComplexPermittivity eps) const {
    LayerStack out = *this;
    if (index < out.layers_.size()) {
      out.layers_[index].permittivity = eps;
    } else if (index == out.layers_.size() && !out.pec_backed()) {
      out.termination_ = HalfSpace{eps};
    } else {
      throw InvalidArgument("layer index out of range");
    }
    return out;
  }

private:
  std::vector<Layer> layers_;
  Termination termination_;
};

struct WaveguideSpec {
  double a = 1.2954e-3; // broad wall, m
  double b = 0.6477e-3; // narrow wall, m

  double te10_cutoff() const { return constants::c0 / (2.0 * a); }
  /// Lowest cutoff among TE20 and TE01.
  double next_cutoff() const { return std::min(constants::c0 / a, constants::c0 / (2.0 * b)); }

  void validate() const {
    if (!(a > b && b > 0.0)) throw InvalidArgument("waveguide needs a > b > 0");
  }
  /// Throws unless TE10 is the only propagating mode over [f_min, f_max].
  void check_single_mode(double f_min, double f_max) const {
    validate();
    if (!(te10_cutoff() < f_min) || !(f_max < next_cutoff()))
      throw InvalidArgument("frequency range is not single-mode TE10 for this waveguide");
  }
};

/// Uniform inclusive frequency grid.
class FrequencyGrid {
public:
  FrequencyGrid(double start, double stop, std::size_t n_points)
      : start_(start), stop_(stop), n_(n_points) {
    if (!(start < stop)) throw InvalidArgument("frequency grid needs start < stop");
    if (n_points < 2) throw InvalidArgument("frequency grid needs at least 2 points");
    if (!(start > 0.0)) throw InvalidArgument("frequencies must be positive");
  }

  double start() const noexcept { return start_; }
  double stop() const noexcept { return stop_; }
  std::size_t size() const noexcept { return n_; }
  double spacing() const noexcept { return (stop_ - start_) / static_cast<double>(n_ - 1); }
  double operator[](std::size_t i) const noexcept {
    return i + 1 == n_ ? stop_ : start_ + static_cast<double>(i) * spacing();
  }
  std::vector<double> values() const {
    std::vector<double> v(n_);
    for (std::size_t i = 0; i < n_; ++i) v[i] = (*this)[i];
    return v;
  }

  friend bool operator==(const FrequencyGrid&, const FrequencyGrid&) = default;

private:
  double start_;
  double stop_;
  std::size_t n_;
};

enum class Polarization { TE, TM };

/// Conductivity-type skin model eps = 4.0 - j 16.0/(eps0 w).
inline ComplexPermittivity skin_model_default(double freq) {
  if (!(freq > 0.0)) throw InvalidArgument("frequency must be positive");
  return {4.0, 16.0 / (constants::eps0 * angular_frequency(freq))};
}

/// Rogers 4350B sheet, taken as non-dispersive.
inline const ComplexPermittivity kSheetPermittivity{3.33, 0.123};
inline constexpr double kSheetThickness = 0.1e-3;
inline constexpr double kSkinThickness = 3.0e-3;

/// Sheet + 3 mm skin block + conductor backing.
inline LayerStack default_stack(ComplexPermittivity skin) {
  return LayerStack({Layer{kSheetPermittivity, kSheetThickness}, Layer{skin, kSkinThickness}},
                    PerfectConductor{});
}

/// kz = sqrt(eps k0^2 - krho^2) on the branch Im(kz) <= 0 (Re(kz) >= 0 when real).
inline cdouble transverse_wavenumber(double k_rho, double freq, const ComplexPermittivity& eps) {
  const double k0 = free_space_wavenumber(freq);
  const cdouble arg = eps.value() * (k0 * k0) - k_rho * k_rho;
  cdouble kz = std::sqrt(arg);
  if (kz.imag() > 0.0) kz = -kz;
  if (kz.imag() == 0.0 && kz.real() < 0.0) kz = -kz;
  return kz;
}

inline cdouble characteristic_admittance(double k_rho, double freq, const ComplexPermittivity& eps,
                                         Polarization pol) {
  const double omega = angular_frequency(freq);
  const cdouble kz = transverse_wavenumber(k_rho, freq, eps);
  if (pol == Polarization::TE) return kz / (omega * constants::mu0);
  if (kz == cdouble{0.0, 0.0})
    throw SingularPoint("TM admittance is singular at kz = 0 (k_rho = " + std::to_string(k_rho) + ")");
  return omega * constants::eps0 * eps.value() / kz;
}

/// Admittance looking into the stack; `infinite` marks a flush short.
struct InputAdmittance {
  cdouble value{};
  bool infinite = false;
};

namespace detail {

// q = exp(-2j z) for Im(z) <= 0 stays inside the unit disk, so the
// tan/cot-based transforms below are written in q and never overflow.
inline cdouble half_turn_phase(cdouble z) {
  return std::exp(cdouble{0.0, -2.0} * z);
}

} // namespace detail

inline InputAdmittance stack_input_admittance(double k_rho, double freq, const LayerStack& stack,
                                              Polarization pol) {
  const auto& layers = stack.layers();
  if (stack.is_short()) return {{}, true};

  std::size_t remaining = layers.size();
  cdouble y_load;
  if (stack.pec_backed()) {
    // innermost layer shorted at its far face: Y = -j Yc cot(kz d)
    const Layer& inner = layers.back();
    const cdouble yc = characteristic_admittance(k_rho, freq, inner.permittivity, pol);
    const cdouble q = detail::half_turn_phase(
        transverse_wavenumber(k_rho, freq, inner.permittivity) * inner.thickness);
    if (q == cdouble{1.0, 0.0}) return {{}, true};
    y_load = yc * (1.0 + q) / (1.0 - q);
    --remaining;
  } else {
    y_load = characteristic_admittance(k_rho, freq, std::get<HalfSpace>(stack.termination()).permittivity, pol);
  }

  // Y = Yc (YL + j Yc tan) / (Yc + j YL tan), with j tan = (1 - q)/(1 + q)
  for (std::size_t i = remaining; i-- > 0;) {
    const Layer& layer = layers[i];
    const cdouble yc = characteristic_admittance(k_rho, freq, layer.permittivity, pol);
    const cdouble q = detail::half_turn_phase(
        transverse_wavenumber(k_rho, freq, layer.permittivity) * layer.thickness);
    y_load = yc * (y_load * (1.0 + q) + yc * (1.0 - q)) / (yc * (1.0 + q) + y_load * (1.0 - q));
  }
  return {y_load, false};
}

} // namespace skinperm
