#pragma once

// Deterministic discrete-time simulator of a running stream job. Rates are
// fluid (records/s); every operator owns an input queue. Backpressure is
// modelled by throttling producers whose consumer queue exceeds a threshold.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "conttune/capacity.hpp"
#include "conttune/dag.hpp"
#include "conttune/error.hpp"

namespace conttune {

using RateMap = std::map<OperatorId, double>;

struct SimConfig {
  double dt = 1.0;
  /// Length of one measurement window; also the block length of the
  /// per-window selectivity draws of stateful operators.
  double window_s = 30.0;
  /// Time the job is down during a reconfiguration (kill and restart).
  double downtime_s = 10.0;
  /// A consumer queue above `bp_queue_threshold_s * dt * PA` records blocks
  /// its producers.
  double bp_queue_threshold_s = 10.0;
  std::uint64_t seed = 1;
  /// Stateful operators spend useful time proportional to the output they
  /// emit, so their throughput in a window scales with 1 / selectivity draw.
  bool stateful_cost_follows_selectivity = true;

  void validate() const {
    if (!(dt > 0.0)) throw Error(ErrorCode::ConfigError, "simulator.dt must be > 0");
    if (!(window_s >= dt)) throw Error(ErrorCode::ConfigError, "simulator.window_s must be >= dt");
    if (!(downtime_s >= 0.0)) {
      throw Error(ErrorCode::ConfigError, "simulator.downtime_s must be >= 0");
    }
    if (!(bp_queue_threshold_s > 0.0)) {
      throw Error(ErrorCode::ConfigError, "simulator.bp_queue_threshold_s must be > 0");
    }
  }
};

/// Per-operator metrics for one step or one aggregated window. Times are in
/// ms per wall-clock second.
struct OperatorMetrics {
  double backpressured_ms = 0.0;
  double idle_ms = 0.0;
  double busy_ms = 0.0;
  /// Records consumed per second (lambda-hat). Equals min(offered, PA) for an
  /// unblocked operator and the throttled intake for a blocked one.
  double observed_rate = 0.0;
  /// Records emitted downstream per second.
  double processed_rate = 0.0;
  /// Records arriving per second (for sources: the external emission rate).
  double arrival_rate = 0.0;
  /// queue / dt + arrivals.
  double offered_rate = 0.0;
  /// Queue length in records at the end of the step/window.
  double queue = 0.0;
  /// Sources only: time the external feed is held back because the source
  /// lags by more than its queue threshold and falls further behind. The
  /// feed acts as the source's upstream.
  double feed_blocked_ms = 0.0;

  double all_time_ms() const { return backpressured_ms + idle_ms + busy_ms; }
  double busy_fraction() const { return busy_ms / 1000.0; }
};

struct MetricsSample {
  /// Clock at the end of the step/window.
  double t = 0.0;
  /// Seconds covered.
  double duration = 0.0;
  std::map<OperatorId, OperatorMetrics> ops;
  /// sum(busy_i * p_i) / sum(p_i).
  double cpu_usage = 0.0;

  const OperatorMetrics& op(const OperatorId& id) const {
    auto it = ops.find(id);
    if (it == ops.end()) throw Error(ErrorCode::UnknownOperator, id);
    return it->second;
  }
};

/// Processing ability seen by a tuner: lambda-hat over useful (busy) time.
inline double observed_pa(const MetricsSample& sample, const OperatorId& op) {
  const auto& m = sample.op(op);
  const double busy = m.busy_fraction();
  if (!(busy > 0.0)) {
    throw Error(ErrorCode::ZeroUsefulTime, "operator '" + op + "' processed no data");
  }
  return m.observed_rate / busy;
}

/// Time-weighted mean of consecutive samples; queues are taken from the last.
inline MetricsSample aggregate(const std::vector<MetricsSample>& samples) {
  MetricsSample out;
  if (samples.empty()) return out;
  double total = 0.0;
  for (const auto& s : samples) total += s.duration;
  for (const auto& s : samples) {
    const double w = total > 0.0 ? s.duration / total : 1.0 / samples.size();
    out.cpu_usage += w * s.cpu_usage;
    for (const auto& [id, m] : s.ops) {
      auto& a = out.ops[id];
      a.backpressured_ms += w * m.backpressured_ms;
      a.idle_ms += w * m.idle_ms;
      a.busy_ms += w * m.busy_ms;
      a.observed_rate += w * m.observed_rate;
      a.processed_rate += w * m.processed_rate;
      a.arrival_rate += w * m.arrival_rate;
      a.offered_rate += w * m.offered_rate;
      a.feed_blocked_ms += w * m.feed_blocked_ms;
    }
  }
  for (const auto& [id, m] : samples.back().ops) out.ops[id].queue = m.queue;
  out.t = samples.back().t;
  out.duration = total;
  return out;
}

/// True upstream rates: a forward pass with unlimited capacity and mean
/// selectivities. Every consumer receives the full output of each producer.
inline RateMap real_upstream_rates_oracle(const LogicalDag& dag, const RateMap& source_rates) {
  RateMap lambda;
  for (const auto& id : topological_order(dag)) {
    const auto& spec = dag.op(id);
    double in = 0.0;
    if (spec.kind == OperatorKind::Source) {
      auto it = source_rates.find(id);
      in = it == source_rates.end() ? 0.0 : it->second;
    } else {
      for (const auto& up : dag.upstream_of(id)) in += lambda[up] * dag.op(up).mean_selectivity;
    }
    lambda[id] = in;
  }
  return lambda;
}

struct DrainReport {
  double backlog_records = 0.0;
  /// +infinity when there is backlog but no spare capacity.
  double estimated_drain_s = 0.0;
};

class Simulator {
 public:
  Simulator(LogicalDag dag, std::map<OperatorId, CapacityCurve> curves,
            ParallelismAssignment initial, SimConfig config = {})
      : dag_(std::move(dag)), config_(config) {
    validate_dag(dag_);
    config_.validate();
    check_assignment(dag_, initial);
    order_ = topological_order(dag_);
    const std::size_t n = order_.size();
    curves_.resize(n);
    upstream_.resize(n);
    downstream_.resize(n);
    kind_.resize(n);
    mean_sel_.resize(n);
    noise_cv_.resize(n);
    p_.resize(n);
    queue_.assign(n, 0.0);
    last_arrivals_.assign(n, 0.0);
    last_edge_flow_.assign(n, {});
    noise_block_.assign(n, std::numeric_limits<std::int64_t>::min());
    noise_draw_.assign(n, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      index_[order_[i]] = i;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto& spec = dag_.op(order_[i]);
      auto it = curves.find(spec.id);
      if (it == curves.end()) {
        throw Error(ErrorCode::ConfigError, "no capacity curve for operator '" + spec.id + "'");
      }
      it->second.validate("curves." + spec.id);
      curves_[i] = it->second;
      kind_[i] = spec.kind;
      mean_sel_[i] = spec.mean_selectivity;
      noise_cv_[i] = spec.selectivity_noise_cv;
      p_[i] = initial.at(spec.id);
    }
    for (const auto& [from, to] : dag_.edges) {
      const auto f = index_.at(from);
      const auto t = index_.at(to);
      downstream_[f].push_back(t);
      upstream_[t].push_back(f);
    }
    for (std::size_t i = 0; i < n; ++i) last_edge_flow_[i].assign(upstream_[i].size(), 0.0);
  }

  const LogicalDag& dag() const { return dag_; }
  const SimConfig& config() const { return config_; }
  double clock() const { return clock_; }
  int reconfiguration_count() const { return reconfigurations_; }
  double total_core_seconds() const { return core_seconds_; }
  /// Records emitted by the external sources so far.
  double source_records_total() const { return source_records_; }
  /// Records that arrived while the job was down for reconfigurations.
  double downtime_backlog_records() const { return downtime_backlog_; }
  const RateMap& source_rates() const { return source_rates_; }
  const std::vector<OperatorId>& order() const { return order_; }

  ParallelismAssignment assignment() const {
    ParallelismAssignment a;
    for (std::size_t i = 0; i < order_.size(); ++i) a[order_[i]] = p_[i];
    return a;
  }

  int total_cores() const {
    int s = 0;
    for (int p : p_) s += p;
    return s;
  }

  std::map<OperatorId, double> queues() const {
    std::map<OperatorId, double> q;
    for (std::size_t i = 0; i < order_.size(); ++i) q[order_[i]] = queue_[i];
    return q;
  }

  double total_queue() const {
    double s = 0.0;
    for (double q : queue_) s += q;
    return s;
  }

  /// True when no queue holds more than `fraction` of its backpressure threshold.
  bool queues_below(double fraction) const {
    for (std::size_t i = 0; i < order_.size(); ++i) {
      if (queue_[i] > fraction * threshold(i, effective_capacity(i))) return false;
    }
    return true;
  }

  const CapacityCurve& curve(const OperatorId& id) const { return curves_[index_.at(id)]; }

  /// Capacity of the operator at its current parallelism, including the
  /// current window's work draw for stateful operators.
  double effective_capacity(const OperatorId& id) const {
    return effective_capacity(index_.at(id));
  }

  /// Changes the source rates used by subsequent steps and by downtime.
  void set_source_rates(const RateMap& rates) {
    for (const auto& [id, r] : rates) {
      auto it = index_.find(id);
      if (it == index_.end() || kind_[it->second] != OperatorKind::Source) {
        throw Error(ErrorCode::UnknownSource, "'" + id + "' is not a source operator");
      }
      if (!(r >= 0.0)) throw Error(ErrorCode::NegativeRate, "source '" + id + "'");
    }
    for (std::size_t i = 0; i < order_.size(); ++i) {
      if (kind_[i] == OperatorKind::Source && !rates.count(order_[i])) {
        throw Error(ErrorCode::UnknownSource, "missing rate for source '" + order_[i] + "'");
      }
    }
    source_rates_ = rates;
  }

  MetricsSample step(const RateMap& source_rates, double dt) {
    if (!(dt > 0.0)) throw Error(ErrorCode::ConfigError, "step dt must be > 0");
    set_source_rates(source_rates);
    return advance(dt);
  }

  MetricsSample step(const RateMap& source_rates) { return step(source_rates, config_.dt); }

  /// Steps with the current source rates.
  MetricsSample advance() { return advance(config_.dt); }

  /// Applies a new assignment. Identical assignments are a no-op and return
  /// false. Otherwise the job is down for `downtime_s`: arrivals from the
  /// external sources accumulate in the source queues and nothing is
  /// processed.
  bool reconfigure(const ParallelismAssignment& next) {
    check_assignment(dag_, next);
    bool changed = false;
    for (std::size_t i = 0; i < order_.size(); ++i) changed |= next.at(order_[i]) != p_[i];
    if (!changed) return false;
    for (std::size_t i = 0; i < order_.size(); ++i) p_[i] = next.at(order_[i]);
    ++reconfigurations_;
    const double down = config_.downtime_s;
    for (std::size_t i = 0; i < order_.size(); ++i) {
      if (kind_[i] != OperatorKind::Source) continue;
      const double r = rate_of(i);
      queue_[i] += r * down;
      downtime_backlog_ += r * down;
      source_records_ += r * down;
    }
    core_seconds_ += total_cores() * down;
    clock_ += down;
    return true;
  }

  DrainReport drain_report() const {
    DrainReport r;
    r.backlog_records = total_queue();
    if (r.backlog_records <= 0.0) return r;
    double spare = 0.0;
    for (std::size_t i = 0; i < order_.size(); ++i) {
      spare += std::max(0.0, effective_capacity(i) - last_arrivals_[i]);
    }
    r.estimated_drain_s = spare > 0.0 ? r.backlog_records / spare
                                      : std::numeric_limits<double>::infinity();
    return r;
  }

 private:
  double rate_of(std::size_t i) const {
    auto it = source_rates_.find(order_[i]);
    return it == source_rates_.end() ? 0.0 : it->second;
  }

  double threshold(std::size_t /*i*/, double cap) const {
    return config_.bp_queue_threshold_s * config_.dt * cap;
  }

  // Multiplicative log-normal draw with mean 1, fixed per (operator, window
  // block) and independent of the order in which blocks are visited.
  double noise_multiplier(std::size_t i) const {
    if (noise_cv_[i] <= 0.0) return 1.0;
    const auto block = static_cast<std::int64_t>(std::floor(clock_ / config_.window_s + 1e-9));
    if (noise_block_[i] != block) {
      std::seed_seq seq{static_cast<std::uint32_t>(config_.seed & 0xffffffffu),
                        static_cast<std::uint32_t>(config_.seed >> 32),
                        static_cast<std::uint32_t>(i),
                        static_cast<std::uint32_t>(block & 0xffffffff),
                        static_cast<std::uint32_t>(static_cast<std::uint64_t>(block) >> 32)};
      std::mt19937_64 rng(seq);
      std::normal_distribution<double> z(0.0, 1.0);
      const double s2 = std::log1p(noise_cv_[i] * noise_cv_[i]);
      noise_draw_[i] = std::exp(-0.5 * s2 + std::sqrt(s2) * z(rng));
      noise_block_[i] = block;
    }
    return noise_draw_[i];
  }

  double effective_capacity(std::size_t i) const {
    const double base = capacity(curves_[i], p_[i]);
    if (kind_[i] == OperatorKind::Stateful && config_.stateful_cost_follows_selectivity) {
      return base / noise_multiplier(i);
    }
    return base;
  }

  MetricsSample advance(double dt) {
    const std::size_t n = order_.size();
    std::vector<double> cap(n);
    std::vector<double> sel(n);
    std::vector<bool> blocked(n, false);
    for (std::size_t i = 0; i < n; ++i) {
      cap[i] = effective_capacity(i);
      sel[i] = mean_sel_[i] * noise_multiplier(i);
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (auto d : downstream_[i]) {
        if (queue_[d] > threshold(d, cap[d])) blocked[i] = true;
      }
    }
    // Most each operator can process this step. A blocked producer may only
    // emit what its full consumers drain, and those may be blocked too, so
    // limits are resolved from the sinks upward.
    std::vector<double> limit(cap);
    for (std::size_t r = n; r-- > 0;) {
      if (!blocked[r] || sel[r] <= 0.0) continue;
      for (auto d : downstream_[r]) {
        if (queue_[d] <= threshold(d, cap[d])) continue;
        limit[r] = std::min(limit[r], limit[d] * share_of(r, d) / sel[r]);
      }
    }

    MetricsSample sample;
    sample.duration = dt;
    std::vector<double> out(n, 0.0);
    double weighted_busy = 0.0;
    double cores = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double arrivals = 0.0;
      if (kind_[i] == OperatorKind::Source) {
        arrivals = rate_of(i);
      } else {
        for (std::size_t k = 0; k < upstream_[i].size(); ++k) {
          const double f = out[upstream_[i][k]];
          last_edge_flow_[i][k] = f;
          arrivals += f;
        }
      }
      const double offered = queue_[i] / dt + arrivals;
      const double processed = std::min(offered, limit[i]);
      queue_[i] = std::max(0.0, (offered - processed) * dt);
      out[i] = processed * sel[i];
      last_arrivals_[i] = arrivals;

      const double busy = cap[i] > 0.0 ? std::min(1.0, processed / cap[i]) : 0.0;
      const bool starved_by_output = blocked[i] && offered > processed * (1.0 + 1e-12);
      const double bp = starved_by_output ? 1.0 - busy : 0.0;
      OperatorMetrics m;
      m.busy_ms = 1000.0 * busy;
      m.backpressured_ms = 1000.0 * bp;
      m.idle_ms = std::max(0.0, 1000.0 - m.busy_ms - m.backpressured_ms);
      m.observed_rate = processed;
      m.processed_rate = out[i];
      m.arrival_rate = arrivals;
      m.offered_rate = offered;
      m.queue = queue_[i];
      if (kind_[i] == OperatorKind::Source && arrivals > 0.0 &&
          queue_[i] > threshold(i, cap[i])) {
        m.feed_blocked_ms = 1000.0 * std::max(0.0, 1.0 - processed / arrivals);
      }
      sample.ops[order_[i]] = m;
      weighted_busy += busy * p_[i];
      cores += p_[i];
      if (kind_[i] == OperatorKind::Source) source_records_ += arrivals * dt;
    }
    sample.cpu_usage = cores > 0.0 ? weighted_busy / cores : 0.0;
    clock_ += dt;
    core_seconds_ += cores * dt;
    sample.t = clock_;
    return sample;
  }

  // Fraction of d's inflow contributed by producer i in the previous step.
  double share_of(std::size_t i, std::size_t d) const {
    const auto& ups = upstream_[d];
    double total = 0.0;
    double mine = 0.0;
    for (std::size_t k = 0; k < ups.size(); ++k) {
      total += last_edge_flow_[d][k];
      if (ups[k] == i) mine = last_edge_flow_[d][k];
    }
    if (total <= 0.0) return 1.0 / static_cast<double>(ups.size());
    return mine / total;
  }

  LogicalDag dag_;
  SimConfig config_;
  std::vector<OperatorId> order_;
  std::map<OperatorId, std::size_t> index_;
  std::vector<CapacityCurve> curves_;
  std::vector<std::vector<std::size_t>> upstream_;
  std::vector<std::vector<std::size_t>> downstream_;
  std::vector<OperatorKind> kind_;
  std::vector<double> mean_sel_;
  std::vector<double> noise_cv_;
  std::vector<int> p_;
  std::vector<double> queue_;
  std::vector<double> last_arrivals_;
  std::vector<std::vector<double>> last_edge_flow_;
  mutable std::vector<std::int64_t> noise_block_;
  mutable std::vector<double> noise_draw_;
  RateMap source_rates_;
  double clock_ = 0.0;
  double core_seconds_ = 0.0;
  double source_records_ = 0.0;
  double downtime_backlog_ = 0.0;
  int reconfigurations_ = 0;
};

/// Streams metrics as CSV: `t,op,backpressured_ms,idle_ms,busy_ms,
/// observed_rate,processed_rate,queue,cpu_usage`, one row per operator.
class MetricsCsvWriter {
 public:
  explicit MetricsCsvWriter(std::ostream& out) : out_(out) {
    out_ << "t,op,backpressured_ms,idle_ms,busy_ms,observed_rate,processed_rate,queue,cpu_usage\n";
  }

  void write(const MetricsSample& s) {
    for (const auto& [id, m] : s.ops) {
      out_ << s.t << ',' << id << ',' << m.backpressured_ms << ',' << m.idle_ms << ','
           << m.busy_ms << ',' << m.observed_rate << ',' << m.processed_rate << ',' << m.queue
           << ',' << s.cpu_usage << '\n';
    }
  }

 private:
  std::ostream& out_;
};

}  // namespace conttune
