#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include <gtest/gtest.h>

#include "skinperm/skinperm.hpp"

using namespace skinperm;
namespace fs = std::filesystem;

namespace {

const fs::path kDir = fs::temp_directory_path() / "skinperm_cli";

int run(const std::string& args) {
  const std::string cmd = std::string(SKINPERM_CLI) + " " + args + " >" + (kDir / "stdout.txt").string() + " 2>" +
                          (kDir / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string path(const std::string& name) { return (kDir / name).string(); }

class Cli : public ::testing::Test {
protected:
  static void SetUpTestSuite() {
    fs::remove_all(kDir);
    fs::create_directories(kDir);
  }
};

} // namespace

TEST_F(Cli, ForwardWritesTableAndSidecar) {
  ASSERT_EQ(run("forward --samples 4 --grid 140e9:220e9:2 --seed 3 --out " + path("t4.csv")), 0);
  const std::string csv = read_file(path("t4.csv"));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 8);
  const std::string meta = read_file(path("t4.csv.meta.json"));
  EXPECT_NE(meta.find("\"seed\": 3"), std::string::npos);
  EXPECT_NE(meta.find(sha256_hex(csv)), std::string::npos);
}

TEST_F(Cli, ForwardIsDeterministicAcrossWorkers) {
  ASSERT_EQ(run("forward --samples 5 --grid 140e9:220e9:3 --seed 9 --workers 1 --out " + path("a.csv")), 0);
  ASSERT_EQ(run("forward --samples 5 --grid 140e9:220e9:3 --seed 9 --workers 3 --out " + path("b.csv")), 0);
  EXPECT_EQ(read_file(path("a.csv")), read_file(path("b.csv")));
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("forward --samples 0 --out " + path("x.csv")), 2);
  EXPECT_EQ(run("forward --grid 140e9:220e9 --out " + path("x.csv")), 2);
  EXPECT_EQ(run("forward --grid 100e9:220e9:5 --out " + path("x.csv")), 2);
  EXPECT_EQ(run("forward --lattice --samples 10 --out " + path("x.csv")), 2);
  EXPECT_EQ(run("forward"), 2);
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("bogus"), 2);
  EXPECT_FALSE(fs::exists(path("x.csv")));
}

TEST_F(Cli, TrainInvertAndStatsPipeline) {
  ASSERT_EQ(run("forward --samples 120 --grid 140e9:220e9:2 --seed 4 --out " + path("t.csv")), 0);
  ASSERT_EQ(run("train --table " + path("t.csv") + " --out " + path("bank.json") + " --holdout 0.9 --seed 2"), 0);
  EXPECT_NE(read_file(path("stdout.txt")).find("holdout overall mean="), std::string::npos);
  const ModelBank bank = load_bank(path("bank.json"));
  EXPECT_EQ(bank.models.size(), 2u);
  EXPECT_EQ(bank.provenance, sha256_hex(read_file(path("t.csv"))));

  // synthetic measurement at a planted permittivity
  const ComplexPermittivity planted{4.7, 2.4};
  MeasurementTrace trace;
  for (double f : {140e9, 160e9, 180e9, 200e9, 220e9}) trace.points.push_back({f, reflection_coefficient(f, planted, {})});
  write_file_atomic(path("m.s1p"), to_touchstone(trace));
  ASSERT_EQ(run("invert --bank " + path("bank.json") + " --input " + path("m.s1p") + " --out " + path("eps.csv")), 0);
  const std::string out1 = read_file(path("eps.csv"));
  ASSERT_EQ(run("invert --bank " + path("bank.json") + " --input " + path("m.s1p") + " --out " + path("eps.csv")), 0);
  EXPECT_EQ(read_file(path("eps.csv")), out1);
  EXPECT_EQ(out1.substr(0, out1.find('\n')), "freq_hz,eps_real,eps_imag,extrapolated");
  // parse back and compare with the planted value
  std::size_t pos = out1.find('\n') + 1, rows = 0;
  while (pos < out1.size()) {
    const std::size_t eol = out1.find('\n', pos);
    const std::string line = out1.substr(pos, eol - pos);
    double f, er, ei;
    int flag;
    ASSERT_EQ(std::sscanf(line.c_str(), "%lf,%lf,%lf,%d", &f, &er, &ei, &flag), 4);
    EXPECT_LT(std::abs(cdouble(er, -ei) - planted.value()) / std::abs(planted.value()), 1e-3);
    pos = eol + 1;
    ++rows;
  }
  EXPECT_EQ(rows, 2u);

  // trace that does not span the bank grid
  MeasurementTrace narrow;
  narrow.points = {{150e9, {-0.4, 0.0}}, {220e9, {-0.3, 0.0}}};
  write_file_atomic(path("narrow.s1p"), to_touchstone(narrow));
  EXPECT_EQ(run("invert --bank " + path("bank.json") + " --input " + path("narrow.s1p") + " --out " + path("n.csv")), 1);
  EXPECT_NE(read_file(path("stderr.txt")).find("not covered"), std::string::npos);

  // dataset with one corrupt file
  const fs::path ds = kDir / "dataset";
  write_file_atomic(ds / "v1" / "index" / "r1.s1p", to_touchstone(trace));
  write_file_atomic(ds / "v1" / "index" / "r2.s1p", to_touchstone(trace));
  write_file_atomic(ds / "v2" / "thumb" / "r1.s1p", "# GHz S RI R 50\n140 0.1\n");
  EXPECT_EQ(run("stats --dataset " + ds.string() + " --bank " + path("bank.json") + " --out " + path("report")), 0);
  EXPECT_TRUE(fs::exists(path("report/summary.json")));
  EXPECT_TRUE(fs::exists(path("report/volunteers/v1_mean.csv")));
  EXPECT_NE(read_file(path("stderr.txt")).find("r1.s1p"), std::string::npos);

  fs::create_directories(kDir / "empty");
  EXPECT_EQ(run("stats --dataset " + (kDir / "empty").string() + " --bank " + path("bank.json") + " --out " +
                path("report2")),
            1);
}

TEST_F(Cli, MissingOrCorruptTableExitsOne) {
  EXPECT_EQ(run("train --table " + path("missing.csv") + " --out " + path("b.json")), 1);
  ASSERT_EQ(run("forward --samples 4 --grid 140e9:220e9:2 --out " + path("c.csv")), 0);
  write_file_atomic(path("c.csv"), read_file(path("c.csv")) + "garbage\n");
  EXPECT_EQ(run("train --table " + path("c.csv") + " --out " + path("b.json")), 1);
}
