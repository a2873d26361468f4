#pragma once

// Source-rate traces: seeded permutations of workload-unit multiples and
// replay from CSV (`t_start_s,source_id,rate[,duration_s]`).

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "conttune/error.hpp"
#include "conttune/simulator.hpp"

namespace conttune {

struct TraceEpoch {
  double duration_s = 0.0;
  RateMap rates;
  /// Workload-unit multiple for synthetic traces; 0 for replayed ones.
  int multiplier = 0;

  bool operator==(const TraceEpoch&) const = default;
};

struct WorkloadTrace {
  std::vector<TraceEpoch> epochs;
  /// Per-source workload unit (records/s); empty for replayed traces.
  RateMap workload_unit;

  double total_duration() const {
    double s = 0.0;
    for (const auto& e : epochs) s += e.duration_s;
    return s;
  }

  bool operator==(const WorkloadTrace&) const = default;
};

namespace detail {

// Unbiased draw in [0, bound) from raw 64-bit output; independent of the
// standard library's distribution implementations.
inline std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return x % bound;
}

}  // namespace detail

/// Seeded Fisher-Yates permutation of 1..n.
inline std::vector<int> seeded_permutation(int n, std::uint64_t seed) {
  std::vector<int> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), 1);
  std::mt19937_64 rng(seed);
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = detail::bounded(rng, i);
    std::swap(v[i - 1], v[j]);
  }
  return v;
}

/// A permutation of multipliers 1..length, repeated `replication` times.
/// Every source is scaled by the same multiplier within an epoch.
inline WorkloadTrace synthetic_permutation(const RateMap& workload_unit, int length,
                                           int replication, std::uint64_t seed,
                                           double epoch_s = 600.0) {
  if (length < 1) throw Error(ErrorCode::InvalidTrace, "permutation length must be >= 1");
  if (replication < 1) throw Error(ErrorCode::InvalidTrace, "replication must be >= 1");
  if (!(epoch_s > 0.0)) throw Error(ErrorCode::InvalidTrace, "epoch duration must be > 0");
  for (const auto& [id, r] : workload_unit) {
    if (!(r >= 0.0)) throw Error(ErrorCode::NegativeRate, "workload unit of '" + id + "'");
  }
  WorkloadTrace trace;
  trace.workload_unit = workload_unit;
  const auto perm = seeded_permutation(length, seed);
  for (int rep = 0; rep < replication; ++rep) {
    for (int m : perm) {
      TraceEpoch e;
      e.duration_s = epoch_s;
      e.multiplier = m;
      for (const auto& [id, r] : workload_unit) e.rates[id] = m * r;
      trace.epochs.push_back(std::move(e));
    }
  }
  return trace;
}

inline void write_trace(std::ostream& out, const WorkloadTrace& trace) {
  out.precision(17);
  out << "t_start_s,source_id,rate,duration_s\n";
  double t = 0.0;
  for (const auto& e : trace.epochs) {
    for (const auto& [id, r] : e.rates) {
      out << t << ',' << id << ',' << r << ',' << e.duration_s << '\n';
    }
    t += e.duration_s;
  }
}

/// Parses a trace CSV. Rows sharing a start time form one epoch. With the
/// optional `duration_s` column every epoch must end where the next starts;
/// without it, durations are the gaps between starts and the final epoch
/// lasts `last_epoch_s`.
inline WorkloadTrace parse_trace(const std::string& text, const std::string& origin = "trace",
                                 double last_epoch_s = 600.0) {
  struct Row {
    double t;
    std::string id;
    double rate;
    double duration;  // NaN when the column is absent
    std::size_t line;
  };
  std::vector<Row> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool with_duration = false;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (!header_seen) {
      header_seen = true;
      if (!f.empty() && f[0] == "t_start_s") {
        with_duration = f.size() >= 4 && f[3] == "duration_s";
        continue;
      }
      with_duration = f.size() >= 4;
    }
    const std::string where = origin + ": row " + std::to_string(line_no);
    if (f.size() != (with_duration ? 4u : 3u)) {
      throw Error(ErrorCode::InvalidTrace, where + ": wrong number of fields");
    }
    Row r{};
    try {
      r.t = std::stod(f[0]);
      r.rate = std::stod(f[2]);
      r.duration = with_duration ? std::stod(f[3]) : std::nan("");
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidTrace, where + ": non-numeric field");
    }
    r.id = f[1];
    r.line = line_no;
    if (r.id.empty()) throw Error(ErrorCode::InvalidTrace, where + ": empty source id");
    if (r.rate < 0.0) throw Error(ErrorCode::NegativeRate, where + ": rate " + f[2]);
    if (with_duration && !(r.duration > 0.0)) {
      throw Error(ErrorCode::InvalidTrace, where + ": duration must be > 0");
    }
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw Error(ErrorCode::InvalidTrace, origin + ": no epochs");

  WorkloadTrace trace;
  std::vector<double> starts;
  std::vector<std::size_t> first_line;
  for (const auto& r : rows) {
    if (starts.empty() || r.t != starts.back()) {
      if (!starts.empty() && r.t < starts.back()) {
        throw Error(ErrorCode::NonContiguousTrace,
                    origin + ": row " + std::to_string(r.line) + ": start times go backwards");
      }
      starts.push_back(r.t);
      first_line.push_back(r.line);
      trace.epochs.push_back(TraceEpoch{with_duration ? r.duration : 0.0, {}, 0});
    }
    auto& e = trace.epochs.back();
    if (with_duration && r.duration != e.duration_s) {
      throw Error(ErrorCode::InvalidTrace, origin + ": row " + std::to_string(r.line) +
                                               ": duration differs within one epoch");
    }
    if (!e.rates.emplace(r.id, r.rate).second) {
      throw Error(ErrorCode::InvalidTrace, origin + ": row " + std::to_string(r.line) +
                                               ": source listed twice in one epoch");
    }
  }
  for (std::size_t k = 0; k < trace.epochs.size(); ++k) {
    if (with_duration) {
      if (k + 1 < trace.epochs.size()) {
        const double end = starts[k] + trace.epochs[k].duration_s;
        if (std::abs(end - starts[k + 1]) > 1e-9 * std::max(1.0, std::abs(end))) {
          throw Error(ErrorCode::NonContiguousTrace,
                      origin + ": row " + std::to_string(first_line[k + 1]) +
                          ": epoch starts at " + std::to_string(starts[k + 1]) +
                          " but the previous one ends at " + std::to_string(end));
        }
      }
    } else {
      trace.epochs[k].duration_s =
          k + 1 < trace.epochs.size() ? starts[k + 1] - starts[k] : last_epoch_s;
    }
    if (trace.epochs[k].rates.size() != trace.epochs.front().rates.size()) {
      throw Error(ErrorCode::InvalidTrace, origin + ": row " + std::to_string(first_line[k]) +
                                               ": epoch does not list every source");
    }
    for (const auto& [id, r] : trace.epochs.front().rates) {
      if (!trace.epochs[k].rates.count(id)) {
        throw Error(ErrorCode::InvalidTrace, origin + ": row " + std::to_string(first_line[k]) +
                                                 ": source '" + id + "' missing");
      }
    }
  }
  return trace;
}

inline WorkloadTrace load_trace(const std::string& path, double last_epoch_s = 600.0) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_trace(ss.str(), path, last_epoch_s);
}

}  // namespace conttune
