#pragma once

// Per-frequency radial-basis network eps = F^-1(gamma).
//
// Every training sample is a center. Inputs are standardized per component
// (training mean and standard deviation) before the kernel is applied; the
// kernel is exp(-(kernel_scale r / spread)^2), so phi(spread) = 1/2. The
// weights solve [G | 1][W; b] = T in the ridge least-squares sense with
// lambda = ridge_factor * trace(G) / N. The ridge system is solved through a
// QR factorization of the stacked matrix [A; sqrt(lambda) I], which is the
// same minimizer as the regularized normal equations without squaring the
// condition number.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "skinperm/em_core.hpp"
#include "skinperm/error.hpp"
#include "skinperm/forward.hpp"
#include "skinperm/parallel.hpp"

namespace skinperm {

inline constexpr double kKernelScale = 0.8325546111576977; // sqrt(ln 2)
inline constexpr double kDefaultRidgeFactor = 1e-12;
inline constexpr double kDuplicateTolerance = 1e-14;
inline constexpr double kExtrapolationRadius = 3.0; // in spreads
inline constexpr double kBoxOvershoot = 0.10;

struct RbnSample {
  cdouble gamma;
  ComplexPermittivity eps;
};

/// Affine map u = (gamma - shift) / scale applied per component.
struct InputNormalization {
  double shift_re = 0.0, shift_im = 0.0;
  double scale_re = 1.0, scale_im = 1.0;

  void to_unit(cdouble g, double& ur, double& ui) const {
    ur = (g.real() - shift_re) / scale_re;
    ui = (g.imag() - shift_im) / scale_im;
  }
  friend bool operator==(const InputNormalization&, const InputNormalization&) = default;
};

struct RbnModel {
  double freq = 0.0;
  double spread = 1.0;
  InputNormalization input;
  std::vector<cdouble> centers;                // raw gamma values
  std::vector<std::array<double, 2>> weights;  // (w_eps', w_eps'') per center
  std::array<double, 2> bias{0.0, 0.0};
  SweepBox box{};                              // prior used for the extrapolation flag

  void validate() const {
    if (centers.empty()) throw InvalidArgument("model has no centers");
    if (weights.size() != centers.size()) throw InvalidArgument("weights and centers differ in length");
    if (!(spread > 0.0) || !std::isfinite(spread)) throw InvalidArgument("spread must be positive");
    if (!(input.scale_re > 0.0 && input.scale_im > 0.0)) throw InvalidArgument("input scale must be positive");
  }
};

/// Raw network output. Values outside the passive half-plane are possible
/// under extrapolation, so they are not forced into ComplexPermittivity.
struct RbnEstimate {
  double eps_real = 0.0;
  double eps_imag = 0.0;
  bool extrapolated = false;

  cdouble value() const { return {eps_real, -eps_imag}; }
  ComplexPermittivity permittivity() const { return {eps_real, eps_imag}; }
};

namespace detail {

inline double kernel(double r, double spread) {
  const double t = kKernelScale * r / spread;
  return std::exp(-t * t);
}

/// Sample mean and standard deviation; a degenerate spread maps to scale 1.
inline InputNormalization fit_normalization(const std::vector<RbnSample>& samples) {
  const auto n = static_cast<double>(samples.size());
  double mr = 0.0, mi = 0.0;
  for (const auto& s : samples) {
    mr += s.gamma.real();
    mi += s.gamma.imag();
  }
  mr /= n;
  mi /= n;
  double vr = 0.0, vi = 0.0;
  for (const auto& s : samples) {
    vr += (s.gamma.real() - mr) * (s.gamma.real() - mr);
    vi += (s.gamma.imag() - mi) * (s.gamma.imag() - mi);
  }
  const double sr = std::sqrt(vr / n), si = std::sqrt(vi / n);
  InputNormalization out;
  out.shift_re = mr;
  out.shift_im = mi;
  out.scale_re = sr > 1e-12 ? sr : 1.0;
  out.scale_im = si > 1e-12 ? si : 1.0;
  return out;
}

inline bool outside_box(const SweepBox& box, double er, double ei) {
  return er < box.real_min * (1.0 - kBoxOvershoot) || er > box.real_max * (1.0 + kBoxOvershoot) ||
         ei < box.imag_min * (1.0 - kBoxOvershoot) || ei > box.imag_max * (1.0 + kBoxOvershoot);
}

} // namespace detail

/// Trains one network. ridge_factor = 0 gives the plain least-squares solve,
/// which throws ConditioningError when [G | 1] is numerically rank deficient.
inline RbnModel train_rbn(const std::vector<RbnSample>& samples, double freq, double spread = 1.0,
                          const SweepBox& box = {}, double ridge_factor = kDefaultRidgeFactor) {
  if (samples.empty()) throw InvalidArgument("train_rbn needs at least one sample");
  if (!(spread > 0.0) || !std::isfinite(spread)) throw InvalidArgument("spread must be positive");
  if (!(ridge_factor >= 0.0)) throw InvalidArgument("ridge factor must be non-negative");
  const std::size_t n = samples.size();

  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(samples[i].gamma - samples[j].gamma) <= kDuplicateTolerance)
        throw DuplicateCenter("samples " + std::to_string(i) + " and " + std::to_string(j) +
                                  " have the same gamma",
                              i, j);

  RbnModel model;
  model.freq = freq;
  model.spread = spread;
  model.box = box;
  model.input = detail::fit_normalization(samples);

  std::vector<double> ur(n), ui(n);
  for (std::size_t i = 0; i < n; ++i) model.input.to_unit(samples[i].gamma, ur[i], ui[i]);

  Eigen::MatrixXd a(n, n + 1);
  double trace = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j)
      a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          detail::kernel(std::hypot(ur[i] - ur[j], ui[i] - ui[j]), spread);
    a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(n)) = 1.0;
    trace += a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
  }
  Eigen::MatrixXd t(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    t(static_cast<Eigen::Index>(i), 0) = samples[i].eps.real();
    t(static_cast<Eigen::Index>(i), 1) = samples[i].eps.imag();
  }

  const double lambda = ridge_factor * trace / static_cast<double>(n);
  const auto rows = static_cast<Eigen::Index>(n);
  const auto cols = static_cast<Eigen::Index>(n + 1);
  Eigen::MatrixXd x;
  if (lambda > 0.0) {
    Eigen::MatrixXd stacked = Eigen::MatrixXd::Zero(rows + cols, cols);
    stacked.topRows(rows) = a;
    stacked.bottomRows(cols).diagonal().setConstant(std::sqrt(lambda));
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(rows + cols, 2);
    rhs.topRows(rows) = t;
    x = stacked.householderQr().solve(rhs);
  } else {
    // minimum-norm solution; [G | 1] has one more column than rows
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a);
    cod.setThreshold(1e-13);
    if (cod.rank() < rows)
      throw ConditioningError("kernel system has numerical rank " + std::to_string(cod.rank()) + " < " +
                              std::to_string(n) + " without ridge");
    x = cod.solve(t);
  }
  if (!x.allFinite()) throw ConditioningError("kernel system solve produced non-finite weights");

  model.centers.resize(n);
  model.weights.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    model.centers[i] = samples[i].gamma;
    model.weights[i] = {x(static_cast<Eigen::Index>(i), 0), x(static_cast<Eigen::Index>(i), 1)};
  }
  model.bias = {x(cols - 1, 0), x(cols - 1, 1)};
  return model;
}

inline RbnEstimate predict(const RbnModel& model, cdouble gamma) {
  double ur, ui;
  model.input.to_unit(gamma, ur, ui);
  double er = model.bias[0], ei = model.bias[1];
  double nearest = INFINITY;
  for (std::size_t k = 0; k < model.centers.size(); ++k) {
    double cr, ci;
    model.input.to_unit(model.centers[k], cr, ci);
    const double r = std::hypot(ur - cr, ui - ci);
    nearest = std::min(nearest, r);
    const double phi = detail::kernel(r, model.spread);
    er += model.weights[k][0] * phi;
    ei += model.weights[k][1] * phi;
  }
  const bool far = !(nearest <= kExtrapolationRadius * model.spread);
  return {er, ei, far || detail::outside_box(model.box, er, ei) || !std::isfinite(er) || !std::isfinite(ei)};
}

// ---------------------------------------------------------------------------
// Banks

struct ModelBank {
  std::vector<RbnModel> models; // strictly ascending freq
  std::string provenance;       // hash of the training table
  WaveguideSpec waveguide{};
  LayerStack stack = default_stack(ComplexPermittivity{4.7, 2.4});
  std::size_t skin_index = 1;

  std::vector<double> frequencies() const {
    std::vector<double> f;
    f.reserve(models.size());
    for (const auto& m : models) f.push_back(m.freq);
    return f;
  }

  void validate() const {
    if (models.empty()) throw InvalidArgument("bank has no models");
    for (std::size_t i = 0; i < models.size(); ++i) {
      models[i].validate();
      if (models[i].spread != models.front().spread) throw InvalidArgument("bank models disagree on spread");
      if (i > 0 && !(models[i].freq > models[i - 1].freq))
        throw NonMonotone("bank frequencies must be strictly ascending");
    }
  }
};

inline std::vector<RbnSample> samples_at(const TrainingTable& table, std::size_t freq_index) {
  std::vector<RbnSample> out;
  out.reserve(table.samples[freq_index].size());
  for (const auto& s : table.samples[freq_index]) out.push_back({s.gamma, s.eps});
  return out;
}

inline ModelBank train_bank(const TrainingTable& table, double spread = 1.0, std::string provenance = {},
                            unsigned workers = 0, double ridge_factor = kDefaultRidgeFactor) {
  table.validate();
  ModelBank bank;
  bank.provenance = std::move(provenance);
  bank.waveguide = table.config.waveguide;
  bank.stack = table.config.stack;
  bank.skin_index = table.config.skin_index;
  bank.models.resize(table.grid.size());
  parallel_for(table.grid.size(), workers, [&](std::size_t f) {
    bank.models[f] = train_rbn(samples_at(table, f), table.grid[f], spread, table.box, ridge_factor);
  });
  return bank;
}

// ---------------------------------------------------------------------------
// Hold-out protocol

struct ErrorReport {
  double freq = 0.0;
  std::vector<double> per_sample; // |eps_hat - eps| / |eps| over the test split
  double mean = 0.0;
  double max = 0.0;
  std::size_t n_train = 0, n_test = 0;
  std::uint64_t seed = 0;

  friend bool operator==(const ErrorReport&, const ErrorReport&) = default;
};

inline double relative_error(const RbnEstimate& est, const ComplexPermittivity& truth) {
  return std::abs(est.value() - truth.value()) / std::abs(truth.value());
}

/// Seeded Fisher-Yates permutation of [0, n); portable across standard libraries.
inline std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(unit_uniform(rng) * static_cast<double>(i));
    std::swap(idx[i - 1], idx[std::min(j, i - 1)]);
  }
  return idx;
}

inline std::size_t train_count(std::size_t n, double train_fraction) {
  return static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n) + 1e-9));
}

inline std::vector<ErrorReport> evaluate_holdout(const TrainingTable& table, double train_fraction,
                                                 std::uint64_t seed, double spread = 1.0,
                                                 unsigned workers = 0,
                                                 double ridge_factor = kDefaultRidgeFactor) {
  table.validate();
  const std::size_t n = table.samples_per_frequency();
  if (n < 10) throw InvalidArgument("hold-out needs at least 10 samples per frequency");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw InvalidArgument("train fraction must lie in (0, 1)");
  const std::size_t n_train = train_count(n, train_fraction);
  if (n_train == 0 || n_train == n) throw InvalidArgument("split leaves an empty train or test set");

  const auto order = shuffled_indices(n, seed);
  std::vector<ErrorReport> reports(table.grid.size());
  parallel_for(table.grid.size(), workers, [&](std::size_t f) {
    const auto& row = table.samples[f];
    std::vector<RbnSample> train;
    train.reserve(n_train);
    for (std::size_t k = 0; k < n_train; ++k) train.push_back({row[order[k]].gamma, row[order[k]].eps});
    const RbnModel model = train_rbn(train, table.grid[f], spread, table.box, ridge_factor);

    ErrorReport& rep = reports[f];
    rep.freq = table.grid[f];
    rep.n_train = n_train;
    rep.n_test = n - n_train;
    rep.seed = seed;
    double sum = 0.0;
    for (std::size_t k = n_train; k < n; ++k) {
      const auto& s = row[order[k]];
      const double e = relative_error(predict(model, s.gamma), s.eps);
      rep.per_sample.push_back(e);
      sum += e;
      rep.max = std::max(rep.max, e);
    }
    rep.mean = sum / static_cast<double>(rep.n_test);
  });
  return reports;
}

} // namespace skinperm
