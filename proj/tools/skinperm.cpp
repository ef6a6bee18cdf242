// skinperm: forward sweeps, RBN training, trace inversion and cohort reports.
//
// Exit codes: 0 success, 1 runtime or data failure, 2 usage error.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "skinperm/skinperm.hpp"

namespace fs = std::filesystem;
using namespace skinperm;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

FrequencyGrid parse_grid(const std::string& spec) {
  const auto c1 = spec.find(':');
  const auto c2 = c1 == std::string::npos ? c1 : spec.find(':', c1 + 1);
  if (c2 == std::string::npos || spec.find(':', c2 + 1) != std::string::npos)
    throw UsageError("--grid expects start:stop:npoints, got '" + spec + "'");
  double start = 0, stop = 0;
  long long n = 0;
  try {
    std::size_t used = 0;
    start = std::stod(spec.substr(0, c1), &used);
    if (used != c1) throw std::invalid_argument("start");
    const std::string s2 = spec.substr(c1 + 1, c2 - c1 - 1);
    stop = std::stod(s2, &used);
    if (used != s2.size()) throw std::invalid_argument("stop");
    const std::string s3 = spec.substr(c2 + 1);
    n = std::stoll(s3, &used);
    if (used != s3.size()) throw std::invalid_argument("n");
  } catch (const std::logic_error&) {
    throw UsageError("--grid expects numeric start:stop:npoints, got '" + spec + "'");
  }
  if (n < 2) throw UsageError("--grid needs at least 2 points");
  try {
    return FrequencyGrid(start, stop, static_cast<std::size_t>(n));
  } catch (const InvalidArgument& e) {
    throw UsageError(std::string("--grid: ") + e.what());
  }
}

std::pair<double, double> parse_range(const std::string& spec, const char* flag) {
  const auto c = spec.find(':');
  try {
    if (c == std::string::npos) throw std::invalid_argument("range");
    std::size_t u1 = 0, u2 = 0;
    const double lo = std::stod(spec.substr(0, c), &u1);
    const std::string rest = spec.substr(c + 1);
    const double hi = std::stod(rest, &u2);
    if (u1 != c || u2 != rest.size()) throw std::invalid_argument("range");
    return {lo, hi};
  } catch (const std::logic_error&) {
    throw UsageError(std::string(flag) + " expects lo:hi, got '" + spec + "'");
  }
}

std::string quoted(const std::string& s) { return json_string(s); }

void warn_errors(const std::vector<FileError>& errors) {
  for (const auto& e : errors) std::cerr << "error: " << e.path << ": " << e.message << "\n";
}

// ---------------------------------------------------------------------------

struct ForwardArgs {
  std::string grid = "140e9:220e9:101";
  long long samples = 200;
  std::uint64_t seed = 7;
  std::string out;
  unsigned workers = 0;
  bool lattice = false;
  std::string eps_real = "3:6", eps_imag = "1:4";
  double krho_max = 40.0, rel_tol = 1e-7;
  unsigned max_depth = 30;
};

int cmd_forward(const ForwardArgs& a) {
  const FrequencyGrid grid = parse_grid(a.grid);
  if (a.samples < 4) throw UsageError("--samples must be at least 4");
  const auto [rlo, rhi] = parse_range(a.eps_real, "--eps-real");
  const auto [ilo, ihi] = parse_range(a.eps_imag, "--eps-imag");
  ForwardConfig cfg;
  SweepBox box{rlo, rhi, ilo, ihi};
  cfg.quadrature = {a.krho_max, a.rel_tol, a.max_depth};
  const auto n = static_cast<std::size_t>(a.samples);
  try {
    box.validate();
    cfg.quadrature.validate();
    cfg.waveguide.check_single_mode(grid.start(), grid.stop());
    if (a.lattice) draw_sweep_points(box, n, a.seed, Sampling::Lattice);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  const unsigned workers = a.workers ? a.workers : default_workers();
  const TrainingTable table = generate_training_table(box, n, grid, a.seed, cfg,
                                                      a.lattice ? Sampling::Lattice : Sampling::Random, workers);
  const std::string run = "  \"run\": {\"command\": \"forward\", \"grid\": " + quoted(a.grid) +
                          ", \"workers\": " + std::to_string(workers) + "}";
  save_table(table, a.out, run);
  std::cout << "wrote " << a.out << " (" << grid.size() << " frequencies x " << n << " samples)\n";
  return 0;
}

struct TrainArgs {
  std::string table, out;
  double spread = 1.0;
  std::optional<double> holdout;
  std::uint64_t seed = 1;
  unsigned workers = 0;
};

int cmd_train(const TrainArgs& a) {
  if (!(a.spread > 0.0)) throw UsageError("--spread must be positive");
  if (a.holdout && !(*a.holdout > 0.0 && *a.holdout < 1.0)) throw UsageError("--holdout must lie in (0, 1)");
  const unsigned workers = a.workers ? a.workers : default_workers();
  const LoadedTable loaded = load_table(a.table);
  const ModelBank bank = train_bank(loaded.table, a.spread, loaded.sha256, workers);
  save_bank(bank, a.out);

  std::string holdout_json = "null";
  if (a.holdout) {
    const auto reports = evaluate_holdout(loaded.table, *a.holdout, a.seed, a.spread, workers);
    double sum = 0.0, worst_mean = 0.0, worst = 0.0;
    std::size_t count = 0;
    holdout_json = "{\"train_fraction\": " + fmt17(*a.holdout) + ", \"seed\": " + std::to_string(a.seed) +
                   ", \"per_frequency\": [";
    for (std::size_t i = 0; i < reports.size(); ++i) {
      const auto& r = reports[i];
      for (double e : r.per_sample) sum += e;
      count += r.per_sample.size();
      worst_mean = std::max(worst_mean, r.mean);
      worst = std::max(worst, r.max);
      std::printf("holdout f=%.6e Hz  n_train=%zu n_test=%zu  mean=%.4e%%  max=%.4e%%\n", r.freq, r.n_train,
                  r.n_test, 100.0 * r.mean, 100.0 * r.max);
      holdout_json += std::string(i ? ", " : "") + "{\"freq_hz\": " + fmt17(r.freq) + ", \"mean\": " +
                      fmt17(r.mean) + ", \"max\": " + fmt17(r.max) + "}";
    }
    const double overall = sum / static_cast<double>(count);
    std::printf("holdout overall mean=%.4e%%  worst per-frequency mean=%.4e%%  max=%.4e%%\n", 100.0 * overall,
                100.0 * worst_mean, 100.0 * worst);
    holdout_json += "], \"overall_mean\": " + fmt17(overall) + ", \"worst_frequency_mean\": " + fmt17(worst_mean) +
                    ", \"max\": " + fmt17(worst) + "}";
  }
  const std::string meta = "{\n  \"tool_version\": \"" + std::string(kToolVersion) + "\",\n" +
                           "  \"run\": {\"command\": \"train\", \"table\": " + quoted(a.table) +
                           ", \"spread\": " + fmt17(a.spread) + ", \"ridge_factor\": " + fmt17(kDefaultRidgeFactor) +
                           ", \"workers\": " + std::to_string(workers) + "},\n" +
                           "  \"table_sha256\": \"" + loaded.sha256 + "\",\n" +
                           "  \"bank_sha256\": \"" + sha256_hex(bank_json(bank)) + "\",\n" +
                           "  \"holdout\": " + holdout_json + "\n}\n";
  write_file_atomic(sidecar_path(a.out), meta);
  std::cout << "wrote " << a.out << " (" << bank.models.size() << " models)\n";
  return 0;
}

struct InvertArgs {
  std::string bank, input, out;
  bool flag_extrapolation = false;
};

int cmd_invert(const InvertArgs& a) {
  const std::string bank_text = read_file(a.bank);
  const ModelBank bank = parse_bank(bank_text, a.bank);
  const std::string input_text = read_file(a.input);
  MeasurementTrace trace;
  try {
    trace = parse_touchstone(input_text, a.input);
  } catch (const ParseError& e) {
    throw ParseError(a.input + ": " + e.what(), e.line());
  }
  const auto freqs = bank.frequencies();
  const PermittivityTrace result = invert_trace(bank, align_trace(trace, std::span<const double>(freqs)));
  write_file_atomic(a.out, to_permittivity_csv(result));

  std::size_t flagged = 0;
  for (const auto& p : result.points) {
    if (!p.extrapolated) continue;
    ++flagged;
    if (a.flag_extrapolation)
      std::fprintf(stderr, "warning: extrapolation at %.6e Hz (eps = %.6g - j%.6g)\n", p.freq, p.eps_real,
                   p.eps_imag);
  }
  if (flagged && !a.flag_extrapolation)
    std::fprintf(stderr, "warning: %zu of %zu points flagged as extrapolated (use --flag-extrapolation)\n", flagged,
                 result.points.size());
  const std::string meta = "{\n  \"tool_version\": \"" + std::string(kToolVersion) + "\",\n" +
                           "  \"run\": {\"command\": \"invert\", \"bank\": " + quoted(a.bank) +
                           ", \"input\": " + quoted(a.input) + "},\n" +
                           "  \"bank_sha256\": \"" + sha256_hex(bank_text) + "\",\n" +
                           "  \"input_sha256\": \"" + sha256_hex(input_text) + "\",\n" +
                           "  \"n_points\": " + std::to_string(result.points.size()) + ",\n" +
                           "  \"n_flagged\": " + std::to_string(flagged) + "\n}\n";
  write_file_atomic(sidecar_path(a.out), meta);
  std::cout << "wrote " << a.out << "\n";
  return 0;
}

struct StatsArgs {
  std::string dataset, bank, out;
  unsigned workers = 0;
};

int cmd_stats(const StatsArgs& a) {
  const std::string bank_text = read_file(a.bank);
  const ModelBank bank = parse_bank(bank_text, a.bank);
  DatasetLoad load = load_dataset(a.dataset);
  const unsigned workers = a.workers ? a.workers : default_workers();
  const CohortReport rep = emit_report(load.index, bank, a.out, std::move(load.errors), sha256_hex(bank_text), workers);
  warn_errors(rep.errors);
  if (rep.volunteers.empty()) {
    std::cerr << "error: no volunteer could be processed under " << a.dataset << "\n";
    return 1;
  }
  for (const auto& v : rep.volunteers) {
    if (!std::any_of(v.locations.begin(), v.locations.end(), [](const auto& l) { return l.has_repeatability; }))
      std::cerr << "note: volunteer " << v.id << " has no location with repeats; repeatability omitted\n";
  }
  std::cout << "wrote report for " << rep.volunteers.size() << " volunteer(s) to " << a.out << "\n";
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Skin permittivity from open-ended waveguide reflection data"};
  app.require_subcommand(1);

  ForwardArgs fa;
  auto* forward = app.add_subcommand("forward", "Generate a training table with the forward solver");
  forward->add_option("--grid", fa.grid, "Frequency grid start:stop:npoints in Hz")->capture_default_str();
  forward->add_option("--samples", fa.samples, "Permittivity samples per frequency")->capture_default_str();
  forward->add_option("--seed", fa.seed, "Sampling seed")->capture_default_str();
  forward->add_option("--out", fa.out, "Output table CSV (sidecar: <out>.meta.json)")->required();
  forward->add_option("--workers", fa.workers, "Worker threads (0 = all cores)");
  forward->add_flag("--lattice", fa.lattice, "Square lattice instead of seeded random sampling");
  forward->add_option("--eps-real", fa.eps_real, "Dielectric-constant range lo:hi")->capture_default_str();
  forward->add_option("--eps-imag", fa.eps_imag, "Loss-factor range lo:hi")->capture_default_str();
  forward->add_option("--krho-max", fa.krho_max, "Spectral truncation in units of k0")->capture_default_str();
  forward->add_option("--rel-tol", fa.rel_tol, "Quadrature relative tolerance")->capture_default_str();
  forward->add_option("--max-depth", fa.max_depth, "Adaptive subdivision cap")->capture_default_str();

  TrainArgs ta;
  double holdout = 0.0;
  auto* train = app.add_subcommand("train", "Train one RBN per frequency from a table");
  train->add_option("--table", ta.table, "Training table CSV")->required();
  train->add_option("--out", ta.out, "Output bank JSON")->required();
  train->add_option("--spread", ta.spread, "Kernel spread")->capture_default_str();
  auto* holdout_opt = train->add_option("--holdout", holdout, "Train fraction for a seeded hold-out report");
  train->add_option("--seed", ta.seed, "Hold-out split seed")->capture_default_str();
  train->add_option("--workers", ta.workers, "Worker threads (0 = all cores)");

  InvertArgs ia;
  auto* invert = app.add_subcommand("invert", "Invert one .s1p trace through a bank");
  invert->add_option("--bank", ia.bank, "Model bank JSON")->required();
  invert->add_option("--input", ia.input, "Touchstone .s1p file")->required();
  invert->add_option("--out", ia.out, "Output permittivity CSV")->required();
  invert->add_flag("--flag-extrapolation", ia.flag_extrapolation, "Print a warning for every extrapolated point");

  StatsArgs sa;
  auto* stats = app.add_subcommand("stats", "Invert a dataset tree and write the cohort report");
  stats->add_option("--dataset", sa.dataset, "Root of <volunteer>/<location>/<repeat>.s1p")->required();
  stats->add_option("--bank", sa.bank, "Model bank JSON")->required();
  stats->add_option("--out", sa.out, "Report directory")->required();
  stats->add_option("--workers", sa.workers, "Worker threads (0 = all cores)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*forward) return cmd_forward(fa);
    if (*train) {
      if (*holdout_opt) ta.holdout = holdout;
      return cmd_train(ta);
    }
    if (*invert) return cmd_invert(ia);
    if (*stats) return cmd_stats(sa);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
