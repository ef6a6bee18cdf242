#pragma once

// File formats: training-table CSV with a JSON sidecar, and the model-bank
// JSON. Numbers are written with 17 significant digits and parsed back
// exactly, so every round trip is bitwise.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "skinperm/em_core.hpp"
#include "skinperm/error.hpp"
#include "skinperm/files.hpp"
#include "skinperm/forward.hpp"
#include "skinperm/measurement.hpp"
#include "skinperm/rbn.hpp"

namespace skinperm {

inline constexpr int kBankFormatVersion = 1;
inline constexpr int kTableFormatVersion = 1;
inline constexpr const char* kKernelName = "gauss-half-at-spread";
inline constexpr const char* kTableHeader = "freq_hz,eps_real,eps_imag,gamma_real,gamma_imag";

// ---------------------------------------------------------------------------
// Configuration objects as JSON text

inline std::string permittivity_json(const ComplexPermittivity& e) {
  return "{\"eps_real\": " + fmt17(e.real()) + ", \"eps_imag\": " + fmt17(e.imag()) + "}";
}

inline std::string waveguide_json(const WaveguideSpec& wg) {
  return "{\"a_m\": " + fmt17(wg.a) + ", \"b_m\": " + fmt17(wg.b) + "}";
}

inline std::string stack_json(const LayerStack& stack) {
  std::string s = "{\"layers\": [";
  for (std::size_t i = 0; i < stack.layers().size(); ++i) {
    const Layer& l = stack.layers()[i];
    if (i) s += ", ";
    s += "{\"eps_real\": " + fmt17(l.permittivity.real()) + ", \"eps_imag\": " + fmt17(l.permittivity.imag()) +
         ", \"thickness_m\": " + fmt17(l.thickness) + "}";
  }
  s += "], \"termination\": ";
  if (const auto* hs = std::get_if<HalfSpace>(&stack.termination()))
    s += "{\"kind\": \"half-space\", \"eps_real\": " + fmt17(hs->permittivity.real()) +
         ", \"eps_imag\": " + fmt17(hs->permittivity.imag()) + "}";
  else
    s += "{\"kind\": \"pec\"}";
  return s + "}";
}

inline std::string quadrature_json(const QuadratureConfig& q) {
  return "{\"krho_max_factor\": " + fmt17(q.krho_max_factor) + ", \"rel_tol\": " + fmt17(q.rel_tol) +
         ", \"max_depth\": " + std::to_string(q.max_depth) + "}";
}

inline std::string box_json(const SweepBox& b) {
  return "{\"eps_real\": [" + fmt17(b.real_min) + ", " + fmt17(b.real_max) + "], \"eps_imag\": [" +
         fmt17(b.imag_min) + ", " + fmt17(b.imag_max) + "]}";
}

inline std::string grid_json(const FrequencyGrid& g) {
  return "{\"start_hz\": " + fmt17(g.start()) + ", \"stop_hz\": " + fmt17(g.stop()) +
         ", \"n_points\": " + std::to_string(g.size()) + "}";
}

namespace detail {

using nlohmann::json;

inline WaveguideSpec waveguide_from(const json& j) {
  WaveguideSpec wg{j.at("a_m").get<double>(), j.at("b_m").get<double>()};
  wg.validate();
  return wg;
}

inline LayerStack stack_from(const json& j) {
  std::vector<Layer> layers;
  for (const json& l : j.at("layers"))
    layers.emplace_back(ComplexPermittivity{l.at("eps_real").get<double>(), l.at("eps_imag").get<double>()},
                        l.at("thickness_m").get<double>());
  const json& t = j.at("termination");
  const std::string kind = t.at("kind").get<std::string>();
  if (kind == "pec") return LayerStack(std::move(layers), PerfectConductor{});
  if (kind == "half-space")
    return LayerStack(std::move(layers), HalfSpace{ComplexPermittivity{t.at("eps_real").get<double>(),
                                                                       t.at("eps_imag").get<double>()}});
  throw MalformedFile("unknown termination kind '" + kind + "'");
}

inline QuadratureConfig quadrature_from(const json& j) {
  QuadratureConfig q{j.at("krho_max_factor").get<double>(), j.at("rel_tol").get<double>(),
                     j.at("max_depth").get<unsigned>()};
  q.validate();
  return q;
}

inline SweepBox box_from(const json& j) {
  SweepBox b{j.at("eps_real").at(0).get<double>(), j.at("eps_real").at(1).get<double>(),
             j.at("eps_imag").at(0).get<double>(), j.at("eps_imag").at(1).get<double>()};
  b.validate();
  return b;
}

inline FrequencyGrid grid_from(const json& j) {
  return {j.at("start_hz").get<double>(), j.at("stop_hz").get<double>(), j.at("n_points").get<std::size_t>()};
}

inline json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw MalformedFile(what + ": " + e.what());
  }
}

template <class F>
auto guarded(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw MalformedFile(what + ": " + e.what());
  } catch (const InvalidArgument& e) {
    throw MalformedFile(what + ": " + e.what());
  }
}

} // namespace detail

// ---------------------------------------------------------------------------
// Training tables

inline std::string table_csv(const TrainingTable& table) {
  std::string out = std::string(kTableHeader) + "\n";
  for (const auto& row : table.samples)
    for (const auto& s : row)
      out += fmt17(s.freq) + "," + fmt17(s.eps.real()) + "," + fmt17(s.eps.imag()) + "," +
             fmt17(s.gamma.real()) + "," + fmt17(s.gamma.imag()) + "\n";
  return out;
}

/// Sidecar metadata; `extra` is spliced in verbatim as additional members.
inline std::string table_sidecar_json(const TrainingTable& table, const std::string& csv_sha256,
                                      const std::string& extra = {}) {
  const ForwardConfig& c = table.config;
  std::string s = "{\n";
  s += "  \"format\": \"skinperm-training-table\",\n";
  s += "  \"format_version\": " + std::to_string(kTableFormatVersion) + ",\n";
  s += "  \"tool_version\": \"" + std::string(kToolVersion) + "\",\n";
  s += "  \"grid\": " + grid_json(table.grid) + ",\n";
  s += "  \"sweep_box\": " + box_json(table.box) + ",\n";
  s += "  \"sampling\": \"" + std::string(to_string(table.sampling)) + "\",\n";
  s += "  \"seed\": " + std::to_string(table.seed) + ",\n";
  s += "  \"n_samples\": " + std::to_string(table.samples_per_frequency()) + ",\n";
  s += "  \"skin_index\": " + std::to_string(c.skin_index) + ",\n";
  s += "  \"stack\": " + stack_json(c.stack) + ",\n";
  s += "  \"waveguide\": " + waveguide_json(c.waveguide) + ",\n";
  s += "  \"quadrature\": " + quadrature_json(c.quadrature) + ",\n";
  if (!extra.empty()) s += extra + ",\n";
  s += "  \"table_sha256\": \"" + csv_sha256 + "\"\n}\n";
  return s;
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& csv) {
  std::filesystem::path p = csv;
  p += ".meta.json";
  return p;
}

inline void save_table(const TrainingTable& table, const std::filesystem::path& csv_path,
                       const std::string& extra = {}) {
  const std::string csv = table_csv(table);
  write_file_atomic(csv_path, csv);
  write_file_atomic(sidecar_path(csv_path), table_sidecar_json(table, sha256_hex(csv), extra));
}

/// Parses the CSV body against metadata already read from the sidecar.
inline void parse_table_rows(std::string_view csv, TrainingTable& table, std::size_t n_samples) {
  std::size_t pos = 0, line_no = 0;
  auto next_line = [&](std::string_view& line) {
    if (pos >= csv.size()) return false;
    const std::size_t eol = std::min(csv.find('\n', pos), csv.size());
    line = csv.substr(pos, eol - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = eol + 1;
    ++line_no;
    return true;
  };
  std::string_view line;
  if (!next_line(line) || line != kTableHeader) throw ParseError("expected header '" + std::string(kTableHeader) + "'", 1);

  table.samples.assign(table.grid.size(), std::vector<ReflectionSample>(n_samples));
  std::size_t count = 0;
  while (next_line(line)) {
    if (line.empty()) continue;
    if (std::count(line.begin(), line.end(), ',') != 4) throw ParseError("expected 5 comma-separated fields", line_no);
    double v[5];
    std::size_t start = 0;
    for (int k = 0; k < 5; ++k) {
      const std::size_t comma = k < 4 ? line.find(',', start) : line.size();
      if (comma == std::string_view::npos) throw ParseError("expected 5 comma-separated fields", line_no);
      if (!detail::parse_double(line.substr(start, comma - start), v[k]))
        throw ParseError("non-numeric field " + std::to_string(k + 1), line_no);
      start = comma + 1;
    }
    if (count >= table.grid.size() * n_samples) throw ParseError("more rows than the sidecar declares", line_no);
    const std::size_t fi = count / n_samples, si = count % n_samples;
    if (v[0] != table.grid[fi])
      throw ParseError("frequency " + fmt17(v[0]) + " does not match grid point " + fmt17(table.grid[fi]), line_no);
    try {
      table.samples[fi][si] = {v[0], ComplexPermittivity{v[1], v[2]}, {v[3], v[4]}};
    } catch (const InvalidArgument& e) {
      throw ParseError(e.what(), line_no);
    }
    if (fi > 0 && !(table.samples[fi][si].eps == table.samples[0][si].eps))
      throw ParseError("sample " + std::to_string(si) + " changes permittivity across frequencies", line_no);
    ++count;
  }
  if (count != table.grid.size() * n_samples)
    throw ParseError("table has " + std::to_string(count) + " rows, sidecar declares " +
                         std::to_string(table.grid.size() * n_samples),
                     0);
}

struct LoadedTable {
  TrainingTable table;
  std::string sha256; // of the CSV bytes
};

inline LoadedTable load_table(const std::filesystem::path& csv_path) {
  const std::string csv = read_file(csv_path);
  const std::string meta_path = sidecar_path(csv_path).string();
  const nlohmann::json meta = detail::parse_json(read_file(meta_path), meta_path);

  LoadedTable out;
  out.sha256 = sha256_hex(csv);
  std::size_t n_samples = 0;
  detail::guarded(meta_path, [&] {
    if (meta.at("format_version").get<int>() != kTableFormatVersion)
      throw VersionMismatch(meta_path + ": unsupported table format_version");
    TrainingTable& t = out.table;
    t.grid = detail::grid_from(meta.at("grid"));
    t.box = detail::box_from(meta.at("sweep_box"));
    const std::string sampling = meta.at("sampling").get<std::string>();
    if (sampling != "random" && sampling != "lattice") throw MalformedFile(meta_path + ": unknown sampling");
    t.sampling = sampling == "random" ? Sampling::Random : Sampling::Lattice;
    t.seed = meta.at("seed").get<std::uint64_t>();
    n_samples = meta.at("n_samples").get<std::size_t>();
    t.config.stack = detail::stack_from(meta.at("stack"));
    t.config.skin_index = meta.at("skin_index").get<std::size_t>();
    t.config.waveguide = detail::waveguide_from(meta.at("waveguide"));
    t.config.quadrature = detail::quadrature_from(meta.at("quadrature"));
    if (meta.at("table_sha256").get<std::string>() != out.sha256)
      throw MalformedFile(csv_path.string() + ": content does not match the sidecar hash");
    return 0;
  });
  if (n_samples == 0) throw MalformedFile(meta_path + ": n_samples must be positive");
  try {
    parse_table_rows(csv, out.table, n_samples);
  } catch (const ParseError& e) {
    throw ParseError(csv_path.string() + ": " + e.what(), e.line());
  }
  try {
    out.table.validate();
  } catch (const InvalidArgument& e) {
    throw MalformedFile(csv_path.string() + ": " + e.what());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model banks

inline std::string bank_json(const ModelBank& bank) {
  bank.validate();
  const RbnModel& first = bank.models.front();
  std::string s = "{\n";
  s += "  \"format_version\": " + std::to_string(kBankFormatVersion) + ",\n";
  s += "  \"tool_version\": \"" + std::string(kToolVersion) + "\",\n";
  s += "  \"spread\": " + fmt17(first.spread) + ",\n";
  s += "  \"kernel\": \"" + std::string(kKernelName) + "\",\n";
  s += "  \"kernel_scale\": " + fmt17(kKernelScale) + ",\n";
  s += "  \"input_normalization\": \"zscore\",\n";
  s += "  \"provenance\": \"" + bank.provenance + "\",\n";
  s += "  \"waveguide\": " + waveguide_json(bank.waveguide) + ",\n";
  s += "  \"stack\": " + stack_json(bank.stack) + ",\n";
  s += "  \"skin_index\": " + std::to_string(bank.skin_index) + ",\n";
  s += "  \"sweep_box\": " + box_json(first.box) + ",\n";
  s += "  \"frequencies\": [";
  for (std::size_t i = 0; i < bank.models.size(); ++i) s += (i ? ", " : "") + fmt17(bank.models[i].freq);
  s += "],\n  \"models\": [\n";
  for (std::size_t m = 0; m < bank.models.size(); ++m) {
    const RbnModel& md = bank.models[m];
    s += "    {\"freq_hz\": " + fmt17(md.freq) + ",\n";
    s += "     \"input_shift\": [" + fmt17(md.input.shift_re) + ", " + fmt17(md.input.shift_im) + "],\n";
    s += "     \"input_scale\": [" + fmt17(md.input.scale_re) + ", " + fmt17(md.input.scale_im) + "],\n";
    s += "     \"centers\": [";
    for (std::size_t i = 0; i < md.centers.size(); ++i)
      s += (i ? ", [" : "[") + fmt17(md.centers[i].real()) + ", " + fmt17(md.centers[i].imag()) + "]";
    s += "],\n     \"weights\": [";
    for (std::size_t i = 0; i < md.weights.size(); ++i)
      s += (i ? ", [" : "[") + fmt17(md.weights[i][0]) + ", " + fmt17(md.weights[i][1]) + "]";
    s += "],\n     \"bias\": [" + fmt17(md.bias[0]) + ", " + fmt17(md.bias[1]) + "]}";
    s += m + 1 < bank.models.size() ? ",\n" : "\n";
  }
  s += "  ]\n}\n";
  return s;
}

inline void save_bank(const ModelBank& bank, const std::filesystem::path& path) {
  write_file_atomic(path, bank_json(bank));
}

inline ModelBank parse_bank(const std::string& text, const std::string& what = "bank") {
  const nlohmann::json j = detail::parse_json(text, what);
  return detail::guarded(what, [&] {
    if (!j.is_object()) throw MalformedFile(what + ": top level is not an object");
    const int version = j.at("format_version").get<int>();
    if (version != kBankFormatVersion)
      throw VersionMismatch(what + ": format_version " + std::to_string(version) + ", expected " +
                            std::to_string(kBankFormatVersion));
    if (j.at("kernel").get<std::string>() != kKernelName) throw MalformedFile(what + ": unknown kernel");
    if (j.at("input_normalization").get<std::string>() != "zscore")
      throw MalformedFile(what + ": unknown input normalization");

    ModelBank bank;
    bank.provenance = j.at("provenance").get<std::string>();
    bank.waveguide = detail::waveguide_from(j.at("waveguide"));
    bank.stack = detail::stack_from(j.at("stack"));
    bank.skin_index = j.at("skin_index").get<std::size_t>();
    const SweepBox box = detail::box_from(j.at("sweep_box"));
    const double spread = j.at("spread").get<double>();
    const auto freqs = j.at("frequencies").get<std::vector<double>>();
    for (std::size_t i = 1; i < freqs.size(); ++i)
      if (!(freqs[i] > freqs[i - 1])) throw NonMonotone(what + ": frequencies are not strictly ascending");

    const auto& models = j.at("models");
    if (!models.is_array() || models.size() != freqs.size())
      throw MalformedFile(what + ": models do not match the frequency list");
    for (std::size_t m = 0; m < models.size(); ++m) {
      const auto& jm = models[m];
      RbnModel md;
      md.freq = jm.at("freq_hz").get<double>();
      if (md.freq != freqs[m]) throw MalformedFile(what + ": model " + std::to_string(m) + " frequency mismatch");
      md.spread = spread;
      md.box = box;
      md.input.shift_re = jm.at("input_shift").at(0).get<double>();
      md.input.shift_im = jm.at("input_shift").at(1).get<double>();
      md.input.scale_re = jm.at("input_scale").at(0).get<double>();
      md.input.scale_im = jm.at("input_scale").at(1).get<double>();
      for (const auto& c : jm.at("centers")) md.centers.emplace_back(c.at(0).get<double>(), c.at(1).get<double>());
      for (const auto& w : jm.at("weights")) md.weights.push_back({w.at(0).get<double>(), w.at(1).get<double>()});
      md.bias = {jm.at("bias").at(0).get<double>(), jm.at("bias").at(1).get<double>()};
      bank.models.push_back(std::move(md));
    }
    if (bank.models.empty()) throw MalformedFile(what + ": bank has no models");
    bank.validate();
    return bank;
  });
}

inline ModelBank load_bank(const std::filesystem::path& path) { return parse_bank(read_file(path), path.string()); }

} // namespace skinperm
