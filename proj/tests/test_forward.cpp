#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracle/spectral_oracle.hpp"
#include "skinperm/forward.hpp"

using namespace skinperm;

namespace {
double rel(cdouble a, cdouble b) { return std::abs(a - b) / std::abs(b); }

// Held fixed after the adaptive solver and the Cartesian oracle agreed to
// 8e-8 relative at 140 GHz, default sheet, skin 4.7 - 2.4j.
const cdouble kPinnedGamma{-0.489628121744, 0.028111085804};
} // namespace

TEST(ApertureSpectrum, OriginValue) {
  const WaveguideSpec wg;
  EXPECT_NEAR(aperture_spectrum(0.0, 0.0, wg), 2.0 * wg.a * wg.b / constants::pi, 1e-20);
  EXPECT_NEAR(aperture_spectrum(0.0, 0.0, wg), 5.341e-7, 5e-11);
}

TEST(ApertureSpectrum, RemovableSingularity) {
  const WaveguideSpec wg;
  const double kx = constants::pi / wg.a;
  EXPECT_NEAR(aperture_spectrum(kx, 0.0, wg), wg.a / 2.0 * wg.b, 1e-18);
  // continuity either side of the singular point
  EXPECT_NEAR(aperture_spectrum(kx * (1 + 1e-7), 0.0, wg), wg.a / 2.0 * wg.b, 1e-13);
  EXPECT_NEAR(aperture_spectrum(kx * (1 - 1e-5), 0.0, wg), wg.a / 2.0 * wg.b, 1e-11);
}

TEST(ApertureSpectrum, EvenSymmetry) {
  const WaveguideSpec wg;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-3e5, 3e5);
  for (int i = 0; i < 200; ++i) {
    const double kx = u(rng), ky = u(rng);
    const double v = aperture_spectrum(kx, ky, wg);
    EXPECT_EQ(aperture_spectrum(-kx, ky, wg), v);
    EXPECT_EQ(aperture_spectrum(kx, -ky, wg), v);
  }
}

TEST(ApertureAdmittance, FlushShortBypass) {
  const auto y = aperture_admittance(140e9, LayerStack({}, PerfectConductor{}), {}, {});
  EXPECT_TRUE(y.infinite);
  EXPECT_EQ(gamma_from_admittance(y), cdouble(-1.0, 0.0));
}

TEST(ApertureAdmittance, PassiveWithDefaultSkinModel) {
  const auto y = aperture_admittance(180e9, default_stack(skin_model_default(180e9)), {}, {});
  EXPECT_GT(y.y_norm.real(), 0.0);
  EXPECT_LT(y.tail_magnitude, 1e-8);
}

TEST(ApertureAdmittance, HalfSpaceSpatialMatchesSpectral) {
  // bare half-space: the spatial-domain path alone against the Cartesian spectral rule, which needs
  // some loss to resolve the 1/kz ridge on the circle |k| = k
  for (const ComplexPermittivity e : {ComplexPermittivity{3.33, 0.123}, ComplexPermittivity{1.0, 0.03},
                                      ComplexPermittivity{4.7, 2.4}}) {
    const LayerStack s({}, HalfSpace{e});
    const cdouble adaptive = aperture_admittance(160e9, s, {}, {}).y_norm;
    const cdouble reference = oracle::aperture_admittance(160e9, s);
    EXPECT_LT(rel(adaptive, reference), 1e-6) << e.real();
  }
}

TEST(ApertureAdmittance, LosslessLimitIsContinuous) {
  const auto at = [](double loss) {
    return aperture_admittance(160e9, LayerStack({}, HalfSpace{ComplexPermittivity{1.0, loss}}), {}, {}).y_norm;
  };
  const cdouble y0 = at(0.0), y1 = at(1e-3), y2 = at(2e-3);
  EXPECT_GT(y0.real(), 0.0);
  // linear in the loss near zero: the step from 0 matches the next step
  EXPECT_LT(std::abs((y1 - y0) - (y2 - y1)), 0.05 * std::abs(y1 - y0));
}

TEST(ReflectionCoefficient, OracleAgreementAndPinnedValue) {
  const ForwardConfig cfg;
  const ComplexPermittivity e{4.7, 2.4};
  const cdouble g = reflection_coefficient(140e9, e, cfg);
  const cdouble ref = oracle::reflection_coefficient(140e9, e, cfg);
  EXPECT_LT(rel(g, ref), 1e-5);
  EXPECT_LT(rel(g, kPinnedGamma), 1e-9);
}

TEST(ReflectionCoefficient, FlushConductorIsMinusOne) {
  ForwardConfig cfg;
  cfg.stack = LayerStack({}, PerfectConductor{});
  EXPECT_EQ(reflection_coefficient(140e9, {4.7, 2.4}, cfg), cdouble(-1.0, 0.0));
}

TEST(ReflectionCoefficient, PassiveStacksStayInsideUnitCircle) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 12; ++i) {
    ForwardConfig cfg;
    cfg.stack = LayerStack({Layer{{1.5 + 3.0 * u(rng), 0.01 + 0.5 * u(rng)}, 5e-5 + 3e-4 * u(rng)},
                            Layer{{3.0 + 3.0 * u(rng), 1.0 + 3.0 * u(rng)}, 3e-3}},
                           PerfectConductor{});
    const double f = 140e9 + 80e9 * u(rng);
    EXPECT_LT(std::abs(reflection_coefficient(f, {3.0 + 3.0 * u(rng), 1.0 + 3.0 * u(rng)}, cfg)), 1.0);
  }
}

TEST(ReflectionCoefficient, SmoothAlongSweepSegment) {
  const ForwardConfig cfg;
  std::vector<cdouble> g;
  for (int i = 0; i < 100; ++i) {
    const double t = i / 99.0;
    g.push_back(reflection_coefficient(170e9, {3.0 + 3.0 * t, 1.0 + 3.0 * t}, cfg));
  }
  // a smooth curve has second differences that scale as h^2; quadrature noise or a branch jump would not
  for (std::size_t i = 2; i + 2 < g.size(); i += 7) {
    const cdouble d1 = g[i + 1] - 2.0 * g[i] + g[i - 1];
    const cdouble d2 = g[i + 2] - 2.0 * g[i] + g[i - 2];
    EXPECT_GT(std::abs(d1), 0.0);
    EXPECT_LT(std::abs(d2 / (4.0 * d1) - 1.0), 0.05) << i;
  }
}

TEST(ReflectionCoefficient, ContinuousInFrequency) {
  const ForwardConfig cfg;
  cdouble prev = reflection_coefficient(140e9, {4.7, 2.4}, cfg);
  for (int i = 1; i <= 40; ++i) {
    const cdouble cur = reflection_coefficient(140e9 + 2e9 * i, {4.7, 2.4}, cfg);
    EXPECT_LT(std::abs(cur - prev), 0.05);
    prev = cur;
  }
}

TEST(Quadrature, ConvergenceFailureCarriesEstimate) {
  ForwardConfig cfg;
  cfg.quadrature = {40.0, 1e-9, 1};
  try {
    reflection_coefficient(140e9, {4.7, 2.4}, cfg);
    FAIL() << "expected ConvergenceFailure";
  } catch (const ConvergenceFailure& e) {
    EXPECT_GT(e.error_bound(), 0.0);
    EXPECT_TRUE(std::isfinite(e.estimate_real()));
  }
}

TEST(Quadrature, ConfigValidation) {
  EXPECT_THROW((QuadratureConfig{5.0, 1e-7, 30}.validate()), InvalidArgument);
  EXPECT_THROW((QuadratureConfig{40.0, 0.1, 30}.validate()), InvalidArgument);
}

TEST(TrainingTable, ShapeAndPassivity) {
  const auto t = generate_training_table({}, 4, FrequencyGrid(140e9, 220e9, 2), 1, {});
  ASSERT_EQ(t.samples.size(), 2u);
  for (const auto& row : t.samples) {
    ASSERT_EQ(row.size(), 4u);
    for (const auto& s : row) {
      EXPECT_LT(std::abs(s.gamma), 1.0);
      EXPECT_TRUE(t.box.contains(s.eps));
    }
  }
  EXPECT_THROW(generate_training_table({}, 3, FrequencyGrid(140e9, 220e9, 2), 1, {}), InvalidArgument);
}

TEST(TrainingTable, DeterministicAndIndependentOfWorkers) {
  const FrequencyGrid g(140e9, 220e9, 3);
  const auto a = generate_training_table({}, 6, g, 42, {}, Sampling::Random, 1);
  const auto b = generate_training_table({}, 6, g, 42, {}, Sampling::Random, 4);
  const auto c = generate_training_table({}, 6, g, 42, {}, Sampling::Random, 1);
  for (std::size_t f = 0; f < 3; ++f)
    for (std::size_t s = 0; s < 6; ++s) {
      EXPECT_EQ(a.samples[f][s].gamma, b.samples[f][s].gamma);
      EXPECT_EQ(a.samples[f][s].gamma, c.samples[f][s].gamma);
      EXPECT_EQ(a.samples[f][s].eps, b.samples[f][s].eps);
    }
}

TEST(TrainingTable, LatticeSampling) {
  const auto pts = draw_sweep_points({}, 16, 0, Sampling::Lattice);
  ASSERT_EQ(pts.size(), 16u);
  EXPECT_EQ(pts.front(), ComplexPermittivity(3.0, 1.0));
  EXPECT_EQ(pts.back(), ComplexPermittivity(6.0, 4.0));
  EXPECT_THROW(draw_sweep_points({}, 15, 0, Sampling::Lattice), InvalidArgument);
}

TEST(TrainingTable, RandomSamplingFillsBox) {
  const auto pts = draw_sweep_points({}, 4000, 3, Sampling::Random);
  double mr = 0, mi = 0;
  for (const auto& p : pts) {
    mr += p.real();
    mi += p.imag();
  }
  EXPECT_NEAR(mr / 4000, 4.5, 0.05);
  EXPECT_NEAR(mi / 4000, 2.5, 0.05);
}
