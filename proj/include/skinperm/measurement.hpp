#pragma once

// One-port Touchstone v1 ingestion, grid alignment and the
// <root>/<volunteer>/<location>/<repeat>.s1p dataset layout.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "skinperm/em_core.hpp"
#include "skinperm/error.hpp"

namespace skinperm {

enum class TouchstoneFormat { RI, MA, DB };

inline const char* to_string(TouchstoneFormat f) {
  switch (f) {
  case TouchstoneFormat::RI: return "RI";
  case TouchstoneFormat::MA: return "MA";
  case TouchstoneFormat::DB: return "DB";
  }
  return "?";
}

struct TracePoint {
  double freq = 0.0; // Hz
  cdouble gamma;
};

struct TraceMeta {
  std::string source;
  TouchstoneFormat format = TouchstoneFormat::RI;
  double reference_impedance = 50.0;
};

struct MeasurementTrace {
  std::vector<TracePoint> points;
  TraceMeta meta;
};

inline constexpr double kMaxGammaMagnitude = 1.05;
inline constexpr double kFrequencyMatchTolerance = 1e6; // Hz

namespace detail {

inline std::string upper(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline bool parse_double(std::string_view token, double& value) {
  // strtod accepts forms (hex, inf) that from_chars does not; be strict
  const auto* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, value);
  return ec == std::errc{} && ptr == end && std::isfinite(value);
}

} // namespace detail

inline MeasurementTrace parse_touchstone(std::string_view text, std::string source = {}) {
  MeasurementTrace trace;
  trace.meta.source = std::move(source);
  bool have_options = false;
  double unit = 1e9; // Touchstone v1 default: GHz
  trace.meta.format = TouchstoneFormat::MA;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (const auto bang = line.find('!'); bang != std::string_view::npos) line = line.substr(0, bang);
    const auto tokens = detail::split_ws(line);
    if (tokens.empty()) {
      if (eol == text.size()) break;
      continue;
    }

    if (tokens.front().front() == '[')
      throw ParseError("Touchstone v2 keyword " + std::string(tokens.front()) + " is not supported (v1 only)",
                       line_no);

    if (tokens.front().front() == '#') {
      if (have_options) throw ParseError("duplicate option line", line_no);
      have_options = true;
      std::vector<std::string> opts;
      if (tokens.front().size() > 1) opts.push_back(detail::upper(tokens.front().substr(1)));
      for (std::size_t i = 1; i < tokens.size(); ++i) opts.push_back(detail::upper(tokens[i]));
      for (std::size_t i = 0; i < opts.size(); ++i) {
        const std::string& t = opts[i];
        if (t == "HZ") unit = 1.0;
        else if (t == "KHZ") unit = 1e3;
        else if (t == "MHZ") unit = 1e6;
        else if (t == "GHZ") unit = 1e9;
        else if (t == "S") continue;
        else if (t == "Y" || t == "Z" || t == "H" || t == "G")
          throw ParseError("parameter type " + t + " is not supported (S only)", line_no);
        else if (t == "RI") trace.meta.format = TouchstoneFormat::RI;
        else if (t == "MA") trace.meta.format = TouchstoneFormat::MA;
        else if (t == "DB") trace.meta.format = TouchstoneFormat::DB;
        else if (t == "R") {
          if (i + 1 >= opts.size() || !detail::parse_double(opts[i + 1], trace.meta.reference_impedance))
            throw ParseError("option R needs a numeric reference impedance", line_no);
          ++i;
        } else {
          throw ParseError("unrecognized option token '" + t + "'", line_no);
        }
      }
      continue;
    }

    if (!have_options) throw ParseError("data before option line (missing '# <unit> S <fmt> R <z0>')", line_no);
    if (tokens.size() != 3)
      throw ParseError("expected 3 columns for a one-port row, found " + std::to_string(tokens.size()), line_no);
    double v[3];
    for (int k = 0; k < 3; ++k)
      if (!detail::parse_double(tokens[k], v[k]))
        throw ParseError("non-numeric value '" + std::string(tokens[k]) + "'", line_no);

    TracePoint p;
    p.freq = v[0] * unit;
    const double deg = constants::pi / 180.0;
    switch (trace.meta.format) {
    case TouchstoneFormat::RI: p.gamma = {v[1], v[2]}; break;
    case TouchstoneFormat::MA: p.gamma = std::polar(v[1], v[2] * deg); break;
    case TouchstoneFormat::DB: p.gamma = std::polar(std::pow(10.0, v[1] / 20.0), v[2] * deg); break;
    }
    if (!trace.points.empty() && !(p.freq > trace.points.back().freq))
      throw ParseError("frequencies must be strictly ascending", line_no);
    if (std::abs(p.gamma) > kMaxGammaMagnitude)
      throw ParseError("|gamma| = " + std::to_string(std::abs(p.gamma)) + " exceeds " +
                           std::to_string(kMaxGammaMagnitude),
                       line_no);
    trace.points.push_back(p);
  }

  if (!have_options) throw ParseError("missing option line", 0);
  if (trace.points.empty()) throw ParseError("no data rows", 0);
  return trace;
}

inline MeasurementTrace read_touchstone(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_touchstone(ss.str(), path.string());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.line());
  }
}

/// Canonical form: Hz, RI, 17 significant digits.
inline std::string to_touchstone(const MeasurementTrace& trace) {
  std::string out;
  char buf[128];
  std::snprintf(buf, sizeof buf, "# HZ S RI R %.17g\n", trace.meta.reference_impedance);
  out += buf;
  for (const TracePoint& p : trace.points) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", p.freq, p.gamma.real(), p.gamma.imag());
    out += buf;
  }
  return out;
}

inline std::string to_trace_csv(const MeasurementTrace& trace) {
  std::string out = "freq_hz,gamma_real,gamma_imag\n";
  char buf[128];
  for (const TracePoint& p : trace.points) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", p.freq, p.gamma.real(), p.gamma.imag());
    out += buf;
  }
  return out;
}

/// Linear interpolation of gamma onto `freqs`. Points within 1 MHz of a trace
/// sample are copied unchanged.
inline MeasurementTrace align_trace(const MeasurementTrace& trace, std::span<const double> freqs) {
  const auto& pts = trace.points;
  if (pts.empty()) throw CoverageError("empty trace");
  if (freqs.empty()) return {{}, trace.meta};
  const double lo = pts.front().freq, hi = pts.back().freq;
  const double want_lo = *std::min_element(freqs.begin(), freqs.end());
  const double want_hi = *std::max_element(freqs.begin(), freqs.end());
  if (want_lo < lo - kFrequencyMatchTolerance || want_hi > hi + kFrequencyMatchTolerance) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "grid %.6g-%.6g Hz is not covered by trace %.6g-%.6g Hz", want_lo, want_hi,
                  lo, hi);
    throw CoverageError(buf);
  }

  MeasurementTrace out;
  out.meta = trace.meta;
  out.points.reserve(freqs.size());
  for (const double f : freqs) {
    auto it = std::lower_bound(pts.begin(), pts.end(), f,
                               [](const TracePoint& p, double x) { return p.freq < x; });
    // nearest neighbour for the passthrough check
    const TracePoint* nearest = nullptr;
    if (it != pts.end()) nearest = &*it;
    if (it != pts.begin() && (!nearest || f - std::prev(it)->freq < nearest->freq - f)) nearest = &*std::prev(it);
    if (std::abs(nearest->freq - f) <= kFrequencyMatchTolerance) {
      out.points.push_back({f, nearest->gamma});
      continue;
    }
    const TracePoint& right = *it;
    const TracePoint& left = *std::prev(it);
    const double t = (f - left.freq) / (right.freq - left.freq);
    const cdouble g{left.gamma.real() + t * (right.gamma.real() - left.gamma.real()),
                    left.gamma.imag() + t * (right.gamma.imag() - left.gamma.imag())};
    out.points.push_back({f, g});
  }
  return out;
}

inline MeasurementTrace align_trace(const MeasurementTrace& trace, const FrequencyGrid& grid) {
  const auto f = grid.values();
  return align_trace(trace, std::span<const double>(f));
}

// ---------------------------------------------------------------------------
// Dataset tree

struct Repeat {
  std::string id; // file stem
  MeasurementTrace trace;
};

struct DatasetIndex {
  /// volunteer id -> location id -> repeats (lexicographic path order)
  std::map<std::string, std::map<std::string, std::vector<Repeat>>> volunteers;

  std::size_t trace_count() const {
    std::size_t n = 0;
    for (const auto& [v, locs] : volunteers)
      for (const auto& [l, reps] : locs) n += reps.size();
    return n;
  }
};

struct FileError {
  std::string path;
  std::string message;
};

struct DatasetLoad {
  DatasetIndex index;
  std::vector<FileError> errors;
};

inline DatasetLoad load_dataset(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw IoError("dataset root is not a readable directory: " + root.string());

  auto sorted_children = [](const fs::path& dir, bool want_dirs) {
    std::vector<fs::path> out;
    std::error_code err;
    fs::directory_iterator it(dir, err);
    if (err) throw IoError("cannot list " + dir.string() + ": " + err.message());
    for (const auto& entry : it) {
      if (want_dirs ? entry.is_directory() : entry.is_regular_file()) out.push_back(entry.path());
    }
    std::sort(out.begin(), out.end());
    return out;
  };

  DatasetLoad load;
  for (const fs::path& vdir : sorted_children(root, true)) {
    for (const fs::path& ldir : sorted_children(vdir, true)) {
      for (const fs::path& file : sorted_children(ldir, false)) {
        if (detail::upper(file.extension().string()) != ".S1P") continue;
        try {
          Repeat r{file.stem().string(), read_touchstone(file)};
          load.index.volunteers[vdir.filename().string()][ldir.filename().string()].push_back(std::move(r));
        } catch (const Error& e) {
          load.errors.push_back({file.string(), e.what()});
        }
      }
    }
  }
  return load;
}

} // namespace skinperm
