#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "skinperm/measurement.hpp"

using namespace skinperm;
namespace fs = std::filesystem;

namespace {

std::size_t error_line(const std::string& text) {
  try {
    parse_touchstone(text);
  } catch (const ParseError& e) {
    return e.line();
  }
  return static_cast<std::size_t>(-1);
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("skinperm_meas_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << text;
}

} // namespace

TEST(Touchstone, RealImaginaryRow) {
  const auto t = parse_touchstone("# GHz S RI R 50\n140 0.1 -0.2\n");
  ASSERT_EQ(t.points.size(), 1u);
  EXPECT_EQ(t.points[0].freq, 140e9);
  EXPECT_EQ(t.points[0].gamma, cdouble(0.1, -0.2));
  EXPECT_EQ(t.meta.format, TouchstoneFormat::RI);
  EXPECT_EQ(t.meta.reference_impedance, 50.0);
}

TEST(Touchstone, MagnitudeAngleRow) {
  const auto t = parse_touchstone("# GHz S MA R 50\n180 0.5 90\n");
  EXPECT_EQ(t.points[0].freq, 180e9);
  EXPECT_NEAR(t.points[0].gamma.real(), 0.0, 1e-16);
  EXPECT_NEAR(t.points[0].gamma.imag(), 0.5, 1e-16);
}

TEST(Touchstone, DecibelRowAndUnits) {
  const auto t = parse_touchstone("! comment\n#mhz s db r 75\n\n140000 -6.020599913279624 180 ! trailing\n");
  EXPECT_EQ(t.points[0].freq, 140e9);
  EXPECT_NEAR(t.points[0].gamma.real(), -0.5, 1e-15);
  EXPECT_NEAR(t.points[0].gamma.imag(), 0.0, 1e-15);
  EXPECT_EQ(t.meta.reference_impedance, 75.0);
  EXPECT_EQ(parse_touchstone("# HZ S RI R 50\n1.4e11 0 0\n").points[0].freq, 140e9);
  EXPECT_EQ(parse_touchstone("# KHZ S RI R 50\n1.4e8 0 0\n").points[0].freq, 140e9);
}

TEST(Touchstone, DefaultsWhenOptionTokensOmitted) {
  // unit GHz, format MA by Touchstone v1 convention
  const auto t = parse_touchstone("#\n140 0.5 0\n");
  EXPECT_EQ(t.points[0].freq, 140e9);
  EXPECT_EQ(t.points[0].gamma, cdouble(0.5, 0.0));
}

TEST(Touchstone, MalformedInputsNameTheirLine) {
  EXPECT_EQ(error_line("# GHz S RI R 50\n140 0.1\n"), 2u);
  EXPECT_EQ(error_line("! hdr\n# GHz S RI R 50\n140 0.1 0.2\n141 0.1 0.2 0.3\n"), 4u);
  EXPECT_EQ(error_line("140 0.1 0.2\n"), 1u);
  EXPECT_EQ(error_line("# GHz S RI R 50\n# GHz S RI R 50\n"), 2u);
  EXPECT_EQ(error_line("# GHz Y RI R 50\n140 0.1 0.2\n"), 1u);
  EXPECT_EQ(error_line("# GHz S RI R 50\n140 0.1 0.2\n139 0.1 0.2\n"), 3u);
  EXPECT_EQ(error_line("# GHz S RI R 50\n140 0.1 0.2\n140 0.1 0.2\n"), 3u);
  EXPECT_EQ(error_line("# GHz S RI R 50\n140 1.1 0.0\n"), 2u);
  EXPECT_EQ(error_line("# GHz S RI R 50\n140 abc 0.0\n"), 2u);
  EXPECT_EQ(error_line("[Version] 2.0\n"), 1u);
  EXPECT_EQ(error_line("# GHz S RI R\n"), 1u);
  try {
    parse_touchstone("# GHz S RI R 50\n140 0.1\n");
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(Touchstone, ToleratesSmallCalibrationOvershoot) {
  EXPECT_NO_THROW(parse_touchstone("# GHz S MA R 50\n140 1.04 10\n"));
  EXPECT_THROW(parse_touchstone("# GHz S MA R 50\n140 1.06 10\n"), ParseError);
}

TEST(Touchstone, FormatsAgreeOnCanonicalTrace) {
  const auto ri = parse_touchstone("# GHz S RI R 50\n140 0 0.5\n180 -0.25 0\n");
  const auto ma = parse_touchstone("# GHz S MA R 50\n140 0.5 90\n180 0.25 180\n");
  const auto db = parse_touchstone("# GHz S DB R 50\n140 -6.0205999132796239 90\n180 -12.041199826559248 180\n");
  for (const auto* t : {&ma, &db})
    for (std::size_t i = 0; i < 2; ++i) {
      EXPECT_EQ(t->points[i].freq, ri.points[i].freq);
      EXPECT_LT(std::abs(t->points[i].gamma - ri.points[i].gamma), 1e-15);
    }
}

TEST(Touchstone, CanonicalRoundTripIsBitwise) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-0.7, 0.7);
  std::string text = "# GHz S MA R 50\n";
  for (int i = 0; i < 50; ++i)
    text += std::to_string(140 + i) + ".123456789 " + std::to_string(std::abs(u(rng))) + " " +
            std::to_string(u(rng) * 250) + "\n";
  const auto first = parse_touchstone(text);
  const auto canon = to_touchstone(first);
  const auto second = parse_touchstone(canon);
  ASSERT_EQ(first.points.size(), second.points.size());
  for (std::size_t i = 0; i < first.points.size(); ++i) {
    EXPECT_EQ(first.points[i].freq, second.points[i].freq);
    EXPECT_EQ(first.points[i].gamma, second.points[i].gamma);
  }
  EXPECT_EQ(to_touchstone(second), canon);
}

TEST(TraceCsv, Header) {
  const auto t = parse_touchstone("# GHz S RI R 50\n140 0.1 -0.2\n");
  EXPECT_EQ(to_trace_csv(t).substr(0, 30), "freq_hz,gamma_real,gamma_imag\n");
}

TEST(Align, PassthroughOnOwnGrid) {
  const auto t = parse_touchstone("# GHz S RI R 50\n140 0.1 -0.2\n180 0.3 0.1\n220 -0.1 0.0\n");
  const std::vector<double> f{140e9, 180e9, 220e9};
  const auto a = align_trace(t, std::span<const double>(f));
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a.points[i].freq, t.points[i].freq);
    EXPECT_EQ(a.points[i].gamma, t.points[i].gamma);
  }
}

TEST(Align, LinearMidpoint) {
  const auto t = parse_touchstone("# GHz S RI R 50\n140 0 0\n220 0.4 0\n");
  const std::vector<double> f{180e9};
  EXPECT_NEAR(align_trace(t, std::span<const double>(f)).points[0].gamma.real(), 0.2, 1e-15);
}

TEST(Align, CoverageErrorNamesBothRanges) {
  const auto t = parse_touchstone("# GHz S RI R 50\n140 0 0\n220 0.4 0\n");
  try {
    align_trace(t, FrequencyGrid(130e9, 220e9, 10));
    FAIL();
  } catch (const CoverageError& e) {
    const std::string w = e.what();
    EXPECT_NE(w.find("1.3e+11"), std::string::npos);
    EXPECT_NE(w.find("1.4e+11"), std::string::npos);
  }
}

TEST(Align, IsLinearInTheTrace) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-0.4, 0.4);
  MeasurementTrace t1, t2, mix;
  const cdouble a{0.3, -0.2}, b{-0.5, 0.1};
  for (int i = 0; i < 37; ++i) {
    const double f = 139e9 + 2.3e9 * i;
    const cdouble g1{u(rng), u(rng)}, g2{u(rng), u(rng)};
    t1.points.push_back({f, g1});
    t2.points.push_back({f, g2});
    mix.points.push_back({f, a * g1 + b * g2});
  }
  const FrequencyGrid grid(140e9, 220e9, 101);
  const auto r1 = align_trace(t1, grid), r2 = align_trace(t2, grid), rm = align_trace(mix, grid);
  for (std::size_t i = 0; i < grid.size(); ++i)
    EXPECT_LT(std::abs(rm.points[i].gamma - (a * r1.points[i].gamma + b * r2.points[i].gamma)), 1e-15);
}

TEST(Dataset, EnumeratesTree) {
  const fs::path root = fresh_dir("tree");
  const std::string body = "# GHz S RI R 50\n140 0.1 0.0\n220 0.2 0.0\n";
  for (const char* v : {"v01", "v02"})
    for (const char* l : {"index", "thumb"}) write(root / v / l / "r1.s1p", body);
  write(root / "v01" / "index" / "notes.txt", "ignored");
  const auto load = load_dataset(root);
  EXPECT_EQ(load.index.trace_count(), 4u);
  EXPECT_TRUE(load.errors.empty());
  EXPECT_EQ(load.index.volunteers.begin()->first, "v01");
}

TEST(Dataset, CorruptFileIsRecordedNotFatal) {
  const fs::path root = fresh_dir("corrupt");
  const std::string body = "# GHz S RI R 50\n140 0.1 0.0\n220 0.2 0.0\n";
  for (int i = 0; i < 10; ++i) write(root / "v1" / "loc" / ("r" + std::to_string(i) + ".s1p"), i == 6 ? "# GHz S RI R 50\n140 0.1\n" : body);
  const auto load = load_dataset(root);
  EXPECT_EQ(load.index.trace_count(), 9u);
  ASSERT_EQ(load.errors.size(), 1u);
  EXPECT_NE(load.errors[0].path.find("r6.s1p"), std::string::npos);
  EXPECT_NE(load.errors[0].message.find("line 2"), std::string::npos);
}

TEST(Dataset, EmptyRootAndMissingRoot) {
  const fs::path root = fresh_dir("empty");
  const auto load = load_dataset(root);
  EXPECT_EQ(load.index.trace_count(), 0u);
  EXPECT_TRUE(load.errors.empty());
  EXPECT_THROW(load_dataset(root / "missing"), IoError);
}
