#pragma once

// Historical observations <p, PA(p)> per operator. Each (operator, p) keeps
// its K most recent observations; tuners read the mean of those.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "conttune/dag.hpp"
#include "conttune/error.hpp"

namespace conttune {

struct Observation {
  OperatorId op;
  int p = 1;
  /// Records/s per unit of useful time.
  double pa = 0.0;
  /// Seconds since the epoch of the run (simulated clock).
  double ts = 0.0;

  bool operator==(const Observation&) const = default;
};

struct Coverage {
  double len_all = 0.0;
  double pr_use = 0.0;
};

/// Total length of the union of [max(p - alpha, 1), min(p + alpha, p_max)]
/// over the given levels, and its share of p_max. Parallelism starts at 1,
/// so nothing below 1 counts as known.
inline Coverage known_region_coverage(const std::vector<int>& levels, double alpha, double p_max) {
  Coverage c;
  if (levels.empty() || !(p_max >= 1.0)) return c;
  std::vector<std::pair<double, double>> segs;
  for (int p : levels) {
    const double lo = std::max(p - alpha, 1.0);
    const double hi = std::min(p + alpha, p_max);
    if (hi > lo) segs.emplace_back(lo, hi);
  }
  std::sort(segs.begin(), segs.end());
  double cur_lo = 0.0;
  double cur_hi = -1.0;
  for (const auto& [lo, hi] : segs) {
    if (lo > cur_hi) {
      if (cur_hi > cur_lo) c.len_all += cur_hi - cur_lo;
      cur_lo = lo;
      cur_hi = hi;
    } else {
      cur_hi = std::max(cur_hi, hi);
    }
  }
  if (cur_hi > cur_lo) c.len_all += cur_hi - cur_lo;
  c.pr_use = std::clamp(c.len_all / p_max, 0.0, 1.0);
  return c;
}

/// What to do with a malformed final line that lacks its newline (a write
/// interrupted by a crash).
enum class TailPolicy { Strict, DropPartialTail };

class HistoryStore {
 public:
  explicit HistoryStore(int k = 3) : k_(k) {
    if (k_ < 1) throw Error(ErrorCode::ConfigError, "history K must be >= 1");
  }

  int k() const { return k_; }

  void record(const OperatorId& op, int p, double pa, double ts) {
    if (p < 1) {
      throw Error(ErrorCode::NonPositiveParallelism,
                  "observation for '" + op + "' at p=" + std::to_string(p));
    }
    if (!(pa >= 0.0) || !std::isfinite(pa)) {
      throw Error(ErrorCode::NegativeRate, "observation for '" + op + "' with PA " +
                                               std::to_string(pa));
    }
    auto& ring = rings_[op][p];
    ring.push_back(Entry{pa, ts, next_seq_++});
    while (static_cast<int>(ring.size()) > k_) ring.pop_front();
  }

  void record(const Observation& o) { record(o.op, o.p, o.pa, o.ts); }

  /// Mean of the retained observations at (op, p); over fewer than K when
  /// fewer exist.
  std::optional<double> topk_pa(const OperatorId& op, int p) const {
    const auto* ring = find(op, p);
    if (!ring || ring->empty()) return std::nullopt;
    double sum = 0.0;
    for (const auto& e : *ring) sum += e.pa;
    return sum / static_cast<double>(ring->size());
  }

  /// min |p_candidate - p| over observed levels; +inf when nothing is known.
  double nearest_distance(const OperatorId& op, int p_candidate) const {
    double best = std::numeric_limits<double>::infinity();
    auto it = rings_.find(op);
    if (it == rings_.end()) return best;
    for (const auto& [p, ring] : it->second) {
      if (ring.empty()) continue;
      best = std::min(best, static_cast<double>(std::abs(p_candidate - p)));
    }
    return best;
  }

  Coverage known_region_coverage(const OperatorId& op, double alpha, double p_max) const {
    return conttune::known_region_coverage(levels(op), alpha, p_max);
  }

  /// Observed levels of one operator, ascending.
  std::vector<int> levels(const OperatorId& op) const {
    std::vector<int> out;
    auto it = rings_.find(op);
    if (it == rings_.end()) return out;
    for (const auto& [p, ring] : it->second) {
      if (!ring.empty()) out.push_back(p);
    }
    return out;
  }

  /// One (p, Top-K mean) pair per observed level, ascending in p.
  std::vector<std::pair<int, double>> smoothed(const OperatorId& op) const {
    std::vector<std::pair<int, double>> out;
    for (int p : levels(op)) out.emplace_back(p, *topk_pa(op, p));
    return out;
  }

  /// Largest level retained for any operator of the job; 0 when empty.
  int p_max() const {
    int best = 0;
    for (const auto& [op, by_p] : rings_) {
      for (const auto& [p, ring] : by_p) {
        if (!ring.empty()) best = std::max(best, p);
      }
    }
    return best;
  }

  bool empty() const { return size() == 0; }

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& [op, by_p] : rings_) {
      for (const auto& [p, ring] : by_p) n += ring.size();
    }
    return n;
  }

  /// Retained observations in insertion order.
  std::vector<Observation> observations() const {
    std::vector<std::pair<std::uint64_t, Observation>> tagged;
    for (const auto& [op, by_p] : rings_) {
      for (const auto& [p, ring] : by_p) {
        for (const auto& e : ring) tagged.push_back({e.seq, Observation{op, p, e.pa, e.ts}});
      }
    }
    std::sort(tagged.begin(), tagged.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<Observation> out;
    out.reserve(tagged.size());
    for (auto& [seq, o] : tagged) out.push_back(std::move(o));
    return out;
  }

  /// Writes one `ts,op,p,pa` line per retained observation, oldest first.
  void persist(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
    write(out);
    if (!out) throw Error(ErrorCode::IoError, "write to '" + path + "' failed");
  }

  void write(std::ostream& out) const {
    out.precision(17);
    for (const auto& o : observations()) {
      if (o.op.find_first_of(",\n") != std::string::npos) {
        throw Error(ErrorCode::IoError, "operator id '" + o.op + "' cannot be persisted");
      }
      out << o.ts << ',' << o.op << ',' << o.p << ',' << o.pa << '\n';
    }
  }

  static HistoryStore load(const std::string& path, int k = 3,
                           TailPolicy tail = TailPolicy::Strict) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), k, tail, path);
  }

  static HistoryStore parse(const std::string& text, int k = 3,
                            TailPolicy tail = TailPolicy::Strict,
                            const std::string& origin = "history") {
    HistoryStore store(k);
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < text.size()) {
      const auto nl = text.find('\n', pos);
      const bool terminated = nl != std::string::npos;
      const std::string line = text.substr(pos, terminated ? nl - pos : std::string::npos);
      pos = terminated ? nl + 1 : text.size();
      ++line_no;
      if (line.empty()) continue;
      auto obs = parse_line(line);
      if (!obs) {
        if (!terminated && tail == TailPolicy::DropPartialTail) {
          std::clog << "warning: " << origin << ": dropping partial record at line " << line_no
                    << '\n';
          break;
        }
        throw Error(ErrorCode::CorruptRecord, origin + ": line " + std::to_string(line_no) +
                                                  ": expected ts,op,p,pa");
      }
      store.record(*obs);
    }
    return store;
  }

  /// Same K and the same retained observations per (operator, level), in
  /// the same order.
  bool operator==(const HistoryStore& other) const {
    if (k_ != other.k_) return false;
    auto strip = [](const HistoryStore& s) {
      std::map<OperatorId, std::map<int, std::vector<std::pair<double, double>>>> out;
      for (const auto& [op, by_p] : s.rings_) {
        for (const auto& [p, ring] : by_p) {
          if (ring.empty()) continue;
          auto& v = out[op][p];
          for (const auto& e : ring) v.emplace_back(e.pa, e.ts);
        }
      }
      return out;
    };
    return strip(*this) == strip(other);
  }

 private:
  struct Entry {
    double pa;
    double ts;
    std::uint64_t seq;
  };

  const std::deque<Entry>* find(const OperatorId& op, int p) const {
    auto it = rings_.find(op);
    if (it == rings_.end()) return nullptr;
    auto jt = it->second.find(p);
    return jt == it->second.end() ? nullptr : &jt->second;
  }

  static std::optional<double> parse_double(std::string_view s) {
    if (s.empty()) return std::nullopt;
    try {
      std::size_t used = 0;
      const double v = std::stod(std::string(s), &used);
      if (used != s.size()) return std::nullopt;
      return v;
    } catch (const std::exception&) {
      return std::nullopt;
    }
  }

  static std::optional<Observation> parse_line(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    std::vector<std::string_view> f;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        f.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    }
    if (f.size() != 4 || f[1].empty()) return std::nullopt;
    auto ts = parse_double(f[0]);
    auto pa = parse_double(f[3]);
    int p = 0;
    auto [ptr, ec] = std::from_chars(f[2].data(), f[2].data() + f[2].size(), p);
    if (!ts || !pa || ec != std::errc() || ptr != f[2].data() + f[2].size()) return std::nullopt;
    if (p < 1 || *pa < 0.0) return std::nullopt;
    return Observation{std::string(f[1]), p, *pa, *ts};
  }

  int k_;
  std::map<OperatorId, std::map<int, std::deque<Entry>>> rings_;
  std::uint64_t next_seq_ = 0;
};

}  // namespace conttune
