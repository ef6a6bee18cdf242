#pragma once

// Inversion of measured traces and the cohort statistics built on it.
//
// Aggregation hierarchy: repeats at one location are averaged into a
// location mean; a volunteer mean is the mean of its location means; the
// cohort mean is the mean of volunteer means (volunteers weigh equally).

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "skinperm/error.hpp"
#include "skinperm/files.hpp"
#include "skinperm/measurement.hpp"
#include "skinperm/parallel.hpp"
#include "skinperm/rbn.hpp"
#include "skinperm/serialize.hpp"

namespace skinperm {

struct PermittivityPoint {
  double freq = 0.0;
  double eps_real = 0.0;
  double eps_imag = 0.0; // loss factor, eps = eps_real - j eps_imag
  bool extrapolated = false;

  friend bool operator==(const PermittivityPoint&, const PermittivityPoint&) = default;
};

struct PermittivityTrace {
  std::vector<PermittivityPoint> points;

  friend bool operator==(const PermittivityTrace&, const PermittivityTrace&) = default;
};

inline PermittivityTrace invert_trace(const ModelBank& bank, const MeasurementTrace& trace) {
  if (trace.points.size() != bank.models.size())
    throw GridMismatch("trace has " + std::to_string(trace.points.size()) + " points, bank has " +
                       std::to_string(bank.models.size()) + " frequencies");
  PermittivityTrace out;
  out.points.reserve(trace.points.size());
  for (std::size_t i = 0; i < trace.points.size(); ++i) {
    const TracePoint& p = trace.points[i];
    const RbnModel& m = bank.models[i];
    if (std::abs(p.freq - m.freq) > kFrequencyMatchTolerance)
      throw GridMismatch("trace frequency " + fmt17(p.freq) + " Hz does not match bank frequency " +
                         fmt17(m.freq) + " Hz");
    const RbnEstimate e = predict(m, p.gamma);
    out.points.push_back({m.freq, e.eps_real, e.eps_imag, e.extrapolated});
  }
  return out;
}

inline std::string to_permittivity_csv(const PermittivityTrace& t) {
  std::string s = "freq_hz,eps_real,eps_imag,extrapolated\n";
  for (const auto& p : t.points)
    s += fmt17(p.freq) + "," + fmt17(p.eps_real) + "," + fmt17(p.eps_imag) + "," + (p.extrapolated ? "1" : "0") + "\n";
  return s;
}

namespace detail {

inline void check_shared_grid(const std::vector<PermittivityTrace>& traces, std::size_t min_count,
                              const char* what) {
  if (traces.size() < min_count)
    throw InvalidArgument(std::string(what) + " needs at least " + std::to_string(min_count) + " trace(s)");
  const auto& ref = traces.front().points;
  for (const auto& t : traces) {
    if (t.points.size() != ref.size()) throw GridMismatch(std::string(what) + ": traces differ in length");
    for (std::size_t i = 0; i < ref.size(); ++i)
      if (t.points[i].freq != ref[i].freq) throw GridMismatch(std::string(what) + ": traces differ in frequency");
  }
}

} // namespace detail

/// Per-frequency arithmetic mean; a flagged input point flags the mean.
inline PermittivityTrace volunteer_mean(const std::vector<PermittivityTrace>& traces) {
  detail::check_shared_grid(traces, 1, "mean");
  PermittivityTrace out = traces.front();
  const auto n = static_cast<double>(traces.size());
  for (std::size_t i = 0; i < out.points.size(); ++i) {
    double sr = 0.0, si = 0.0;
    bool flag = false;
    for (const auto& t : traces) {
      sr += t.points[i].eps_real;
      si += t.points[i].eps_imag;
      flag = flag || t.points[i].extrapolated;
    }
    out.points[i].eps_real = sr / n;
    out.points[i].eps_imag = si / n;
    out.points[i].extrapolated = flag;
  }
  return out;
}

struct RepeatabilityPoint {
  double freq = 0.0;
  double rel_dev_real = 0.0; // max_k |x_k - mean| / |mean|
  double rel_dev_imag = 0.0;
  double std_real = 0.0;     // sample standard deviation (n - 1)
  double std_imag = 0.0;
};

struct RepeatabilityReport {
  std::vector<RepeatabilityPoint> per_freq;
  double max_rel_dev_real = 0.0;
  double max_rel_dev_imag = 0.0;
  std::size_t n_repeats = 0;
};

inline RepeatabilityReport repeatability(const std::vector<PermittivityTrace>& traces) {
  detail::check_shared_grid(traces, 2, "repeatability");
  RepeatabilityReport rep;
  rep.n_repeats = traces.size();
  const PermittivityTrace mean = volunteer_mean(traces);
  const auto n = static_cast<double>(traces.size());
  for (std::size_t i = 0; i < mean.points.size(); ++i) {
    const double mr = mean.points[i].eps_real, mi = mean.points[i].eps_imag;
    double dr = 0.0, di = 0.0, vr = 0.0, vi = 0.0;
    for (const auto& t : traces) {
      const double xr = t.points[i].eps_real - mr, xi = t.points[i].eps_imag - mi;
      dr = std::max(dr, std::abs(xr));
      di = std::max(di, std::abs(xi));
      vr += xr * xr;
      vi += xi * xi;
    }
    RepeatabilityPoint p{mean.points[i].freq, mr != 0.0 ? dr / std::abs(mr) : 0.0,
                         mi != 0.0 ? di / std::abs(mi) : 0.0, std::sqrt(vr / (n - 1.0)),
                         std::sqrt(vi / (n - 1.0))};
    rep.max_rel_dev_real = std::max(rep.max_rel_dev_real, p.rel_dev_real);
    rep.max_rel_dev_imag = std::max(rep.max_rel_dev_imag, p.rel_dev_imag);
    rep.per_freq.push_back(p);
  }
  return rep;
}

struct VariationPoint {
  double freq = 0.0;
  double width_real = 0.0; // max - min
  double width_imag = 0.0;
};

struct VariationReport {
  std::vector<VariationPoint> per_freq;
  double max_width_real = 0.0;
  double max_width_imag = 0.0;
  std::size_t n_traces = 0;
};

inline VariationReport variation_report(const std::vector<PermittivityTrace>& traces) {
  detail::check_shared_grid(traces, 1, "variation");
  VariationReport rep;
  rep.n_traces = traces.size();
  for (std::size_t i = 0; i < traces.front().points.size(); ++i) {
    double lo_r = INFINITY, hi_r = -INFINITY, lo_i = INFINITY, hi_i = -INFINITY;
    for (const auto& t : traces) {
      lo_r = std::min(lo_r, t.points[i].eps_real);
      hi_r = std::max(hi_r, t.points[i].eps_real);
      lo_i = std::min(lo_i, t.points[i].eps_imag);
      hi_i = std::max(hi_i, t.points[i].eps_imag);
    }
    VariationPoint p{traces.front().points[i].freq, hi_r - lo_r, hi_i - lo_i};
    rep.max_width_real = std::max(rep.max_width_real, p.width_real);
    rep.max_width_imag = std::max(rep.max_width_imag, p.width_imag);
    rep.per_freq.push_back(p);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Report emission

inline std::string mean_csv(const PermittivityTrace& t) {
  std::string s = "freq_hz,eps_real_mean,eps_imag_mean\n";
  for (const auto& p : t.points) s += fmt17(p.freq) + "," + fmt17(p.eps_real) + "," + fmt17(p.eps_imag) + "\n";
  return s;
}

inline std::string repeatability_csv(const RepeatabilityReport& r) {
  std::string s = "freq_hz,rel_dev_real,rel_dev_imag\n";
  for (const auto& p : r.per_freq) s += fmt17(p.freq) + "," + fmt17(p.rel_dev_real) + "," + fmt17(p.rel_dev_imag) + "\n";
  return s;
}

inline std::string repeatability_std_csv(const RepeatabilityReport& r) {
  std::string s = "freq_hz,std_real,std_imag\n";
  for (const auto& p : r.per_freq) s += fmt17(p.freq) + "," + fmt17(p.std_real) + "," + fmt17(p.std_imag) + "\n";
  return s;
}

inline std::string variation_csv(const VariationReport& r) {
  std::string s = "freq_hz,width_real,width_imag\n";
  for (const auto& p : r.per_freq) s += fmt17(p.freq) + "," + fmt17(p.width_real) + "," + fmt17(p.width_imag) + "\n";
  return s;
}

inline std::string json_string(const std::string& v) { return nlohmann::json(v).dump(); }

struct LocationResult {
  std::string id;
  std::vector<std::string> repeats;
  PermittivityTrace mean;
  bool has_repeatability = false;
  RepeatabilityReport repeatability;
};

struct VolunteerResult {
  std::string id;
  std::vector<LocationResult> locations;
  PermittivityTrace mean;
  VariationReport variation;
  std::size_t n_flagged = 0; // mean points carrying the extrapolation flag
};

struct CohortReport {
  std::vector<VolunteerResult> volunteers;
  PermittivityTrace cohort_mean;
  std::vector<FileError> errors; // load errors plus traces rejected during alignment
  std::vector<std::string> files; // written, relative to out_dir, in write order
};

/// Aligns and inverts every trace, then aggregates. Traces that fail
/// alignment or inversion are recorded in `errors` and skipped.
inline CohortReport build_report(const DatasetIndex& dataset, const ModelBank& bank,
                                 std::vector<FileError> load_errors = {}, unsigned workers = 0) {
  bank.validate();
  const auto freqs = bank.frequencies();
  CohortReport rep;
  rep.errors = std::move(load_errors);

  struct Job {
    std::string vol, loc, rep_id;
    const MeasurementTrace* trace;
  };
  std::vector<Job> jobs;
  for (const auto& [vol, locs] : dataset.volunteers)
    for (const auto& [loc, reps] : locs)
      for (const auto& r : reps) jobs.push_back({vol, loc, r.id, &r.trace});

  std::vector<PermittivityTrace> inverted(jobs.size());
  std::vector<std::string> failure(jobs.size());
  parallel_for(jobs.size(), workers, [&](std::size_t k) {
    try {
      inverted[k] = invert_trace(bank, align_trace(*jobs[k].trace, std::span<const double>(freqs)));
    } catch (const Error& e) {
      failure[k] = e.what();
    }
  });

  std::size_t k = 0;
  for (const auto& [vol, locs] : dataset.volunteers) {
    VolunteerResult vr;
    vr.id = vol;
    for (const auto& [loc, reps] : locs) {
      LocationResult lr;
      lr.id = loc;
      std::vector<PermittivityTrace> good;
      for (std::size_t r = 0; r < reps.size(); ++r, ++k) {
        if (!failure[k].empty()) {
          rep.errors.push_back({jobs[k].trace->meta.source, failure[k]});
          continue;
        }
        lr.repeats.push_back(jobs[k].rep_id);
        good.push_back(std::move(inverted[k]));
      }
      if (good.empty()) continue;
      lr.mean = volunteer_mean(good);
      if (good.size() >= 2) {
        lr.has_repeatability = true;
        lr.repeatability = repeatability(good);
      }
      vr.locations.push_back(std::move(lr));
    }
    if (vr.locations.empty()) continue;
    std::vector<PermittivityTrace> loc_means;
    for (const auto& lr : vr.locations) loc_means.push_back(lr.mean);
    vr.mean = volunteer_mean(loc_means);
    vr.variation = variation_report(loc_means);
    for (const auto& p : vr.mean.points) vr.n_flagged += p.extrapolated ? 1 : 0;
    rep.volunteers.push_back(std::move(vr));
  }
  if (!rep.volunteers.empty()) {
    std::vector<PermittivityTrace> means;
    for (const auto& v : rep.volunteers) means.push_back(v.mean);
    rep.cohort_mean = volunteer_mean(means);
  }
  return rep;
}

/// Content hash over every trace source and its canonical form, in index order.
inline std::string dataset_sha256(const DatasetIndex& dataset) {
  std::string acc;
  for (const auto& [vol, locs] : dataset.volunteers)
    for (const auto& [loc, reps] : locs)
      for (const auto& r : reps) acc += vol + "/" + loc + "/" + r.id + "\n" + to_touchstone(r.trace);
  return sha256_hex(acc);
}

inline std::string summary_json(const CohortReport& rep, const ModelBank& bank, const std::string& inputs_sha256,
                                const std::string& bank_sha256) {
  std::string s = "{\n";
  s += "  \"format\": \"skinperm-report\",\n";
  s += "  \"tool_version\": \"" + std::string(kToolVersion) + "\",\n";
  s += "  \"bank_sha256\": \"" + bank_sha256 + "\",\n";
  s += "  \"bank_provenance\": \"" + bank.provenance + "\",\n";
  s += "  \"inputs_sha256\": \"" + inputs_sha256 + "\",\n";
  s += "  \"deviation_definition\": \"max_k |x_k - mean| / |mean| per frequency, real and imaginary parts separately\",\n";
  s += "  \"n_frequencies\": " + std::to_string(bank.models.size()) + ",\n";
  s += "  \"n_volunteers\": " + std::to_string(rep.volunteers.size()) + ",\n";
  s += "  \"volunteers\": [\n";
  for (std::size_t v = 0; v < rep.volunteers.size(); ++v) {
    const auto& vr = rep.volunteers[v];
    std::size_t traces = 0;
    for (const auto& l : vr.locations) traces += l.repeats.size();
    s += "    {\"id\": " + json_string(vr.id) + ", \"n_locations\": " + std::to_string(vr.locations.size()) +
         ", \"n_traces\": " + std::to_string(traces) + ", \"n_flagged_points\": " + std::to_string(vr.n_flagged) +
         ",\n     \"max_width_real\": " + fmt17(vr.variation.max_width_real) +
         ", \"max_width_imag\": " + fmt17(vr.variation.max_width_imag) + ",\n     \"repeatability\": [";
    bool first = true;
    for (const auto& l : vr.locations) {
      if (!l.has_repeatability) continue;
      s += std::string(first ? "" : ", ") + "{\"location\": " + json_string(l.id) +
           ", \"n_repeats\": " + std::to_string(l.repeatability.n_repeats) +
           ", \"max_rel_dev_real\": " + fmt17(l.repeatability.max_rel_dev_real) +
           ", \"max_rel_dev_imag\": " + fmt17(l.repeatability.max_rel_dev_imag) + "}";
      first = false;
    }
    s += "],\n     \"repeatability_omitted\": " + std::string(first ? "true" : "false") + "}";
    s += v + 1 < rep.volunteers.size() ? ",\n" : "\n";
  }
  s += "  ],\n  \"errors\": [";
  for (std::size_t i = 0; i < rep.errors.size(); ++i)
    s += std::string(i ? ", " : "") + "{\"path\": " + json_string(rep.errors[i].path) +
         ", \"message\": " + json_string(rep.errors[i].message) + "}";
  s += "],\n  \"files\": [";
  for (std::size_t i = 0; i < rep.files.size(); ++i) s += std::string(i ? ", " : "") + json_string(rep.files[i]);
  s += "]\n}\n";
  return s;
}

/// Writes volunteers/<id>_mean.csv, cohort_mean.csv, repeatability/<vol>__<loc>.csv
/// (plus _std companions), variation/<id>.csv and summary.json under out_dir.
inline CohortReport emit_report(const DatasetIndex& dataset, const ModelBank& bank,
                                const std::filesystem::path& out_dir, std::vector<FileError> load_errors = {},
                                const std::string& bank_sha256 = {}, unsigned workers = 0) {
  CohortReport rep = build_report(dataset, bank, std::move(load_errors), workers);
  auto put = [&](const std::string& rel, const std::string& content) {
    write_file_atomic(out_dir / rel, content);
    rep.files.push_back(rel);
  };
  for (const auto& vr : rep.volunteers) {
    put("volunteers/" + vr.id + "_mean.csv", mean_csv(vr.mean));
    put("variation/" + vr.id + ".csv", variation_csv(vr.variation));
    for (const auto& l : vr.locations) {
      if (!l.has_repeatability) continue;
      put("repeatability/" + vr.id + "__" + l.id + ".csv", repeatability_csv(l.repeatability));
      put("repeatability/" + vr.id + "__" + l.id + "_std.csv", repeatability_std_csv(l.repeatability));
    }
  }
  if (!rep.volunteers.empty()) put("cohort_mean.csv", mean_csv(rep.cohort_mean));
  write_file_atomic(out_dir / "summary.json", summary_json(rep, bank, dataset_sha256(dataset), bank_sha256));
  return rep;
}

} // namespace skinperm
