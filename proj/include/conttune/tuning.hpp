#pragma once

// Tuning against a running (simulated) job: the measure/apply driver, the
// Big phase, the CBO Small phase, the baselines, and the per-epoch loop.

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "conttune/controller.hpp"
#include "conttune/dag.hpp"
#include "conttune/error.hpp"
#include "conttune/gp.hpp"
#include "conttune/history.hpp"
#include "conttune/simulator.hpp"
#include "conttune/workloads.hpp"

namespace conttune {

enum class Phase { Big, Small };
enum class Provenance { FastExploitation, ConservativeExploration };
enum class ApplyOutcome { Applied, Unchanged, Gated };
enum class Acquisition { ContTune, Cei };

inline std::string_view to_string(Provenance p) {
  return p == Provenance::FastExploitation ? "fast_exploitation" : "conservative_exploration";
}

struct Measurement {
  MetricsSample sample;
  double backpressure_per = 0.0;
  PressureState pressure = PressureState::NonBackpressure;
  CpuState cpu = CpuState::Normal;
  Provisioning state = Provisioning::Steady;
  /// Some source consumed less than arrived: the job is falling behind,
  /// whether or not enough blocked time shows up to cross the threshold.
  bool sla_violated = false;
  ParallelismAssignment assignment;
};

/// True when a source consumed less than its external arrivals in `s`.
inline bool sources_falling_behind(const LogicalDag& dag, const MetricsSample& s) {
  for (const auto& id : dag.sources()) {
    const auto& m = s.op(id);
    if (m.observed_rate < m.arrival_rate * (1.0 - 1e-6)) return true;
  }
  return false;
}

inline Measurement make_measurement(MetricsSample sample, ParallelismAssignment assignment,
                                    const Thresholds& thr) {
  Measurement m;
  m.backpressure_per = backpressure_per(sample);
  m.pressure = classify_pressure(m.backpressure_per, thr);
  m.cpu = classify_cpu(sample.cpu_usage, thr);
  m.state = provisioning_state(m.pressure, m.cpu);
  m.sample = std::move(sample);
  m.assignment = std::move(assignment);
  return m;
}

/// Observed lambda-hat per operator.
inline RateMap observed_rates(const MetricsSample& s) {
  RateMap out;
  for (const auto& [id, m] : s.ops) out[id] = m.observed_rate;
  return out;
}

/// Running totals kept by the driver and the tuners.
struct JobCounters {
  int reconfigurations = 0;
  int big = 0;
  int small = 0;
  int gated = 0;
  /// Operators suggested by each provenance, summed over applied suggestions.
  int fast_ops = 0;
  int conservative_ops = 0;
  /// (tuning, operator) pairs that fell back to conservative exploration.
  int chi = 0;
  /// Largest number of fallback-driven reconfigurations inside one tuning.
  int phi_observed = 0;
  /// Small-phase reconfigurations with fast-exploited operators that left
  /// the job backpressured.
  int omega_observed = 0;
  int tunings = 0;
  int p_max_exceeded = 0;
  int max_cores = 0;
  double settle_s = 0.0;
};

struct MeasureConfig {
  /// Upper bound on post-reconfiguration settling.
  double settle_max_s = 3600.0;
  /// Settled once every queue is below this share of its blocking threshold.
  double settle_queue_fraction = 0.01;
  /// Scale-ups issued while the job is under-provisioned or falling behind
  /// bypass the decisionThr gate, so a small final correction cannot leave
  /// the SLA violated for the rest of an epoch. Off: every change is gated.
  bool gate_exempt_under_scale_up = true;
};

/// Larger summed parallelism, the quantity the decision gate compares.
inline bool is_scale_up(const ParallelismAssignment& next, const ParallelismAssignment& cur) {
  return total_parallelism(next) > total_parallelism(cur);
}

/// Drives a simulator the way a controller drives a real job: measure one
/// aligned window, apply gated reconfigurations, let backlogs drain.
class SimulatedJob {
 public:
  SimulatedJob(Simulator& sim, Thresholds thr, MeasureConfig mc = {})
      : sim_(sim), thr_(thr), mc_(mc) {
    thr_.validate();
    counters_.max_cores = sim_.total_cores();
  }

  void set_metrics_writer(MetricsCsvWriter* w) { writer_ = w; }

  Simulator& sim() { return sim_; }
  const Simulator& sim() const { return sim_; }
  const Thresholds& thresholds() const { return thr_; }
  ParallelismAssignment assignment() const { return sim_.assignment(); }
  JobCounters& counters() { return counters_; }
  const JobCounters& counters() const { return counters_; }
  bool has_measurement() const { return has_last_; }
  const Measurement& last() const {
    if (!has_last_) throw Error(ErrorCode::ConfigError, "no measurement taken yet");
    return last_;
  }

  /// Steps to the next window boundary, then aggregates one full window.
  const Measurement& measure() {
    const double w = sim_.config().window_s;
    const double dt = sim_.config().dt;
    for (;;) {
      const double r = std::fmod(sim_.clock(), w);
      if (r < 1e-9 || w - r < 1e-9) break;
      emit(sim_.advance());
    }
    std::vector<MetricsSample> window;
    const auto steps = static_cast<int>(std::llround(w / dt));
    window.reserve(static_cast<std::size_t>(steps));
    for (int i = 0; i < steps; ++i) {
      window.push_back(sim_.advance());
      emit(window.back());
    }
    last_ = make_measurement(aggregate(window), sim_.assignment(), thr_);
    last_.sla_violated = sources_falling_behind(sim_.dag(), last_.sample);
    has_last_ = true;
    return last_;
  }

  /// Applies `next` if it differs and passes the decisionThr gate, then
  /// settles and measures. Nothing happens otherwise.
  ApplyOutcome apply(const ParallelismAssignment& next, Phase phase) {
    const auto cur = sim_.assignment();
    if (next == cur) return ApplyOutcome::Unchanged;
    const bool exempt = mc_.gate_exempt_under_scale_up && has_last_ &&
                        (last_.state == Provisioning::Under || last_.sla_violated) &&
                        is_scale_up(next, cur);
    if (!exempt && !should_apply(next, cur, thr_.decision_thr)) {
      ++counters_.gated;
      return ApplyOutcome::Gated;
    }
    sim_.reconfigure(next);
    ++counters_.reconfigurations;
    (phase == Phase::Big ? counters_.big : counters_.small)++;
    counters_.max_cores = std::max(counters_.max_cores, sim_.total_cores());
    settle();
    measure();
    return ApplyOutcome::Applied;
  }

  /// Steps until the queues drain, the sources fall further behind over a
  /// window (the job cannot keep up, waiting longer is pointless), or the
  /// cap is hit.
  void settle() {
    const double start = sim_.clock();
    const double w = sim_.config().window_s;
    double prev = source_lag();
    double next_check = start + w;
    while (!sim_.queues_below(mc_.settle_queue_fraction) &&
           sim_.clock() - start < mc_.settle_max_s) {
      emit(sim_.advance());
      if (sim_.clock() + 1e-9 >= next_check) {
        const double lag = source_lag();
        if (lag > prev) break;
        prev = lag;
        next_check += w;
      }
    }
    counters_.settle_s += sim_.clock() - start;
  }

  /// Adds <p, PA> for every operator that did useful work in `m`.
  void record_observations(HistoryStore& store, const Measurement& m) const {
    for (const auto& [id, om] : m.sample.ops) {
      if (om.busy_ms <= 0.0 || om.observed_rate <= 0.0) continue;
      store.record(id, m.assignment.at(id), observed_pa(m.sample, id), m.sample.t);
    }
  }

 private:
  double source_lag() const {
    double lag = 0.0;
    const auto q = sim_.queues();
    for (const auto& id : sim_.dag().sources()) lag += q.at(id);
    return lag;
  }

  void emit(const MetricsSample& s) {
    if (writer_) writer_->write(s);
  }

  Simulator& sim_;
  Thresholds thr_;
  MeasureConfig mc_;
  MetricsCsvWriter* writer_ = nullptr;
  Measurement last_;
  bool has_last_ = false;
  JobCounters counters_;
};

struct TunerConfig {
  /// Known-region radius.
  double alpha = 3.0;
  /// Observations kept per (operator, level).
  int top_k = 3;
  /// p^max when nothing has been observed yet.
  int p_max_floor = 4;
  int hard_cap = 90;
  Acquisition acquisition = Acquisition::ContTune;
  /// Fall back to the linear suggestion outside the known region.
  bool conservative_fallback = true;
  KernelConfig kernel = default_kernel();
  /// Reconfiguration rounds allowed inside one tuning.
  int max_rounds = 10;
  /// Evaluate operators of the Small phase on worker threads.
  bool concurrent = false;

  static KernelConfig default_kernel() {
    KernelConfig k;
    k.prior_mean = PriorMean::Proportional;
    k.refine_length_scale = true;
    return k;
  }

  void validate() const {
    if (!(alpha >= 0.0)) throw Error(ErrorCode::ConfigError, "tuner.alpha must be >= 0");
    if (top_k < 1) throw Error(ErrorCode::ConfigError, "tuner.top_k must be >= 1");
    if (p_max_floor < 1) throw Error(ErrorCode::ConfigError, "tuner.p_max_floor must be >= 1");
    if (hard_cap < 1) throw Error(ErrorCode::ConfigError, "tuner.hard_cap must be >= 1");
    if (max_rounds < 1) throw Error(ErrorCode::ConfigError, "tuner.max_rounds must be >= 1");
    kernel.validate();
  }
};

// ---------------------------------------------------------------- Big phase

struct BigPhaseResult {
  std::vector<ParallelismAssignment> applied;
  int reconfigurations = 0;
  int final_p_max = 0;
  /// lambda-hat of every operator once the backpressure is gone.
  RateMap lambda;
};

/// Raises every operator to p^max, doubling p^max while the job stays
/// backpressured with everything already at p^max. Observations are
/// recorded after each measurement. Throws PMaxExceeded when doubling would
/// pass `hard_cap` (p^max itself is clamped to the cap first).
inline BigPhaseResult big_phase(SimulatedJob& job, HistoryStore& store, int p_max, int hard_cap) {
  if (p_max < 1) throw Error(ErrorCode::NonPositiveParallelism, "p^max must be >= 1");
  p_max = std::min(p_max, hard_cap);
  BigPhaseResult r;
  if (!job.has_measurement()) job.measure();
  while (job.last().pressure == PressureState::Backpressure) {
    const auto cur = job.assignment();
    bool all_at_max = true;
    for (const auto& [id, p] : cur) all_at_max = all_at_max && p >= p_max;
    if (all_at_max) {
      if (p_max >= hard_cap) {
        throw Error(ErrorCode::PMaxExceeded,
                    "backpressure persists at the hard cap " + std::to_string(hard_cap));
      }
      p_max = std::min(2 * p_max, hard_cap);
    }
    ParallelismAssignment next;
    for (const auto& [id, p] : cur) next[id] = std::max(p, p_max);
    const auto outcome = job.apply(next, Phase::Big);
    if (outcome == ApplyOutcome::Applied) {
      r.applied.push_back(next);
      ++r.reconfigurations;
      job.record_observations(store, job.last());
    } else {
      // Too small a step to pass the gate: treat the job as saturated at
      // p^max so the next iteration doubles.
      if (p_max >= hard_cap) {
        throw Error(ErrorCode::PMaxExceeded,
                    "backpressure persists at the hard cap " + std::to_string(hard_cap));
      }
      p_max = std::min(2 * p_max, hard_cap);
    }
  }
  r.final_p_max = p_max;
  r.lambda = observed_rates(job.last().sample);
  return r;
}

// ------------------------------------------------------------- acquisitions

/// argmax over p in [1, p_max] of (p_star - p) * I(mu(p) >= lambda), taken
/// over the feasible levels only; ties go to the smallest p.
inline std::optional<int> acquisition_conttune(const GpModel& model, double lambda, int p_max,
                                               int p_star) {
  std::optional<int> best;
  double best_v = -std::numeric_limits<double>::infinity();
  for (int p = 1; p <= p_max; ++p) {
    if (model.predict(p).mean < lambda) continue;
    const double v = static_cast<double>(p_star - p);
    if (v > best_v) {
      best_v = v;
      best = p;
    }
  }
  return best;
}

/// Probability that f(p) >= lambda under the predictive Gaussian.
inline double feasibility_probability(const Prediction& pr, double lambda) {
  if (pr.variance <= 0.0) return pr.mean >= lambda ? 1.0 : 0.0;
  const double z = (lambda - pr.mean) / std::sqrt(pr.variance);
  return 0.5 * std::erfc(z / std::sqrt(2.0));
}

/// argmax over p of (p_star - p) * Pr[f(p) >= lambda]; absent when no level
/// promises a positive improvement.
inline std::optional<int> acquisition_cei(const GpModel& model, double lambda, int p_max,
                                          int p_star) {
  std::optional<int> best;
  double best_v = 0.0;
  for (int p = 1; p <= p_max; ++p) {
    const double v = (p_star - p) * feasibility_probability(model.predict(p), lambda);
    if (v > best_v) {
      best_v = v;
      best = p;
    }
  }
  return best;
}

/// p_lin = ceil(lambda / (pa / p_now)), clamped to [1, hard_cap].
inline int ds2_suggest(int p_now, double lambda, double pa_observed, int hard_cap = 90) {
  if (p_now < 1) throw Error(ErrorCode::NonPositiveParallelism, "p_now must be >= 1");
  if (!(pa_observed > 0.0)) {
    throw Error(ErrorCode::ZeroProcessingAbility, "observed processing ability is zero");
  }
  const double r = pa_observed / p_now;
  const double x = lambda / r;
  // Absorb rounding noise so that exact multiples do not round up.
  const double c = std::ceil(x - 1e-9 * std::max(1.0, x));
  return static_cast<int>(std::clamp(c, 1.0, static_cast<double>(hard_cap)));
}

/// Smallest observed level whose Top-K PA covers lambda, else p_now.
inline int known_feasible_level(const HistoryStore& store, const OperatorId& op, double lambda,
                                int p_now) {
  for (const auto& [p, pa] : store.smoothed(op)) {
    if (pa >= lambda) return p;
  }
  return p_now;
}

// ---------------------------------------------------------------------- CBO

struct CboSuggestion {
  int p = 1;
  Provenance provenance = Provenance::ConservativeExploration;
  std::optional<int> p_acq;
  double d_nearest = std::numeric_limits<double>::infinity();
  std::optional<int> p_lin;
};

/// The fast/conservative decision given the acquisition point.
inline CboSuggestion cbo_decide(std::optional<int> p_acq, double d_nearest, double alpha,
                                std::optional<int> p_lin) {
  CboSuggestion s;
  s.p_acq = p_acq;
  s.d_nearest = d_nearest;
  s.p_lin = p_lin;
  if (p_acq && d_nearest <= alpha) {
    s.p = *p_acq;
    s.provenance = Provenance::FastExploitation;
  } else {
    if (!p_lin) {
      throw Error(ErrorCode::ZeroProcessingAbility, "no processing ability to extrapolate from");
    }
    s.p = *p_lin;
    s.provenance = Provenance::ConservativeExploration;
  }
  return s;
}

/// One operator of the Small phase. The GP is fit on Top-K means; the
/// linear fallback extrapolates from the Top-K PA at `p_now`, or from
/// `pa_now` when that level has not been recorded.
inline CboSuggestion cbo_suggest(const OperatorId& op, double lambda, const HistoryStore& store,
                                 const TunerConfig& cfg, int p_max, int p_now,
                                 std::optional<double> pa_now = std::nullopt) {
  std::optional<int> p_lin;
  const auto pa_here = store.topk_pa(op, p_now);
  const std::optional<double> pa_ref = pa_here ? pa_here : pa_now;
  if (pa_ref && *pa_ref > 0.0) p_lin = ds2_suggest(p_now, lambda, *pa_ref, cfg.hard_cap);
  if (lambda <= 0.0) p_lin = 1;

  const auto pts = store.smoothed(op);
  if (pts.empty()) return cbo_decide(std::nullopt, store.nearest_distance(op, 1), cfg.alpha, p_lin);

  std::vector<std::pair<double, double>> data;
  data.reserve(pts.size());
  for (const auto& [p, pa] : pts) data.emplace_back(p, pa);
  std::optional<int> p_acq;
  try {
    const auto model = GpModel::fit(data, cfg.kernel);
    const int p_star = known_feasible_level(store, op, lambda, p_now);
    p_acq = cfg.acquisition == Acquisition::ContTune
                ? acquisition_conttune(model, lambda, p_max, p_star)
                : acquisition_cei(model, lambda, p_max, p_star);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::SingularCovariance) throw;
  }
  const double d =
      p_acq ? store.nearest_distance(op, *p_acq) : std::numeric_limits<double>::infinity();
  if (!cfg.conservative_fallback && p_acq) {
    return cbo_decide(p_acq, d, std::numeric_limits<double>::infinity(), p_lin);
  }
  return cbo_decide(p_acq, d, cfg.alpha, p_lin);
}

struct SuggestionResult {
  ParallelismAssignment assignment;
  std::map<OperatorId, Provenance> provenance;
  std::map<OperatorId, CboSuggestion> detail;

  int count(Provenance p) const {
    int n = 0;
    for (const auto& [id, v] : provenance) n += v == p;
    return n;
  }
};

/// CBO for every operator of `current`; operators are independent, so the
/// concurrent evaluation returns exactly what the sequential one does.
inline SuggestionResult small_phase(const ParallelismAssignment& current, const RateMap& lambda,
                                    const HistoryStore& store, const TunerConfig& cfg, int p_max,
                                    const MetricsSample* sample = nullptr) {
  auto one = [&](const OperatorId& id, int p_now) {
    auto it = lambda.find(id);
    if (it == lambda.end()) {
      throw Error(ErrorCode::MissingAssignment, "no upstream rate for '" + id + "'");
    }
    std::optional<double> pa_now;
    if (sample) {
      const auto& m = sample->op(id);
      if (m.busy_ms > 0.0 && m.observed_rate > 0.0) pa_now = observed_pa(*sample, id);
    }
    return cbo_suggest(id, it->second, store, cfg, p_max, p_now, pa_now);
  };
  SuggestionResult r;
  if (cfg.concurrent) {
    std::vector<std::pair<OperatorId, std::future<CboSuggestion>>> jobs;
    for (const auto& [id, p] : current) {
      jobs.emplace_back(id, std::async(std::launch::async, one, id, p));
    }
    for (auto& [id, f] : jobs) r.detail.emplace(id, f.get());
  } else {
    for (const auto& [id, p] : current) r.detail.emplace(id, one(id, p));
  }
  for (const auto& [id, s] : r.detail) {
    r.assignment[id] = s.p;
    r.provenance[id] = s.provenance;
  }
  return r;
}

// ---------------------------------------------------------------- baselines

/// True upstream rates as DS2 estimates them: external source rates pushed
/// through the selectivities observed in `s`.
inline RateMap ds2_true_rates(const LogicalDag& dag, const MetricsSample& s) {
  RateMap lambda;
  std::map<OperatorId, double> out;
  for (const auto& id : topological_order(dag)) {
    const auto& m = s.op(id);
    double l = 0.0;
    if (dag.op(id).kind == OperatorKind::Source) {
      l = m.arrival_rate;
    } else {
      for (const auto& u : dag.upstream_of(id)) l += out[u];
    }
    lambda[id] = l;
    const double sel = m.observed_rate > 0.0 ? m.processed_rate / m.observed_rate : 1.0;
    out[id] = l * sel;
  }
  return lambda;
}

/// Rule-based scaling. A bottleneck is an operator that is not blocked
/// itself but either blocks an upstream operator or is saturated with more
/// arriving than it processes. Its factor is the largest of
/// arrivals / processed (when saturated) and (busy + blocked) / busy of the
/// upstreams it blocks; p <- max(p + 1, ceil(p * factor)). Without
/// backpressure and with low CPU the most idle operator loses one instance.
inline ParallelismAssignment dhalion_step(const LogicalDag& dag, const MetricsSample& s,
                                          const ParallelismAssignment& current,
                                          const Thresholds& thr, int hard_cap = 90) {
  ParallelismAssignment next = current;
  const auto state = classify(s, thr);
  auto blocked = [&](const OperatorId& id) {
    return classify_pressure(backpressure_per(s.op(id)), thr) == PressureState::Backpressure;
  };
  if (classify_pressure(backpressure_per(s), thr) == PressureState::Backpressure ||
      state == Provisioning::Under || sources_falling_behind(dag, s)) {
    bool any = false;
    for (const auto& id : topological_order(dag)) {
      if (blocked(id)) continue;
      const auto& m = s.op(id);
      double factor = 0.0;
      if (m.busy_fraction() >= 1.0 - 1e-9 && m.observed_rate > 0.0 &&
          m.arrival_rate > m.observed_rate * (1.0 + 1e-9)) {
        factor = m.arrival_rate / m.observed_rate;
      }
      for (const auto& u : dag.upstream_of(id)) {
        const auto& um = s.op(u);
        if (!blocked(u) || um.busy_ms <= 0.0) continue;
        factor = std::max(factor, (um.busy_ms + um.backpressured_ms) / um.busy_ms);
      }
      if (factor <= 0.0) continue;
      const int p = current.at(id);
      const int up = static_cast<int>(std::ceil(p * factor - 1e-9));
      next[id] = std::min(hard_cap, std::max(p + 1, up));
      any = true;
    }
    if (!any && state == Provisioning::Under) {
      // No identifiable culprit: grow the busiest operator.
      OperatorId busiest;
      double best = -1.0;
      for (const auto& [id, m] : s.ops) {
        if (m.busy_ms > best) {
          best = m.busy_ms;
          busiest = id;
        }
      }
      next[busiest] = std::min(hard_cap, current.at(busiest) + 1);
    }
    return next;
  }
  if (state == Provisioning::Over) {
    // Unit decrements on the currently idlest operator, batched until the
    // change clears the decision gate. Busy fractions are extrapolated
    // linearly; no operator is pushed past coreMaxThr.
    auto est_busy = [&](const OperatorId& id, int p) {
      return s.op(id).busy_fraction() * current.at(id) / p;
    };
    do {
      OperatorId idlest;
      double best = 2.0;
      for (const auto& [id, m] : s.ops) {
        const int p = next.at(id);
        if (p <= 1 || est_busy(id, p - 1) > thr.core_max_thr) continue;
        const double b = est_busy(id, p);
        if (b < best) {
          best = b;
          idlest = id;
        }
      }
      if (idlest.empty()) break;
      --next[idlest];
    } while (!should_apply(next, current, thr.decision_thr));
    if (next == current) {
      // Nothing fits under coreMaxThr: fall back to one unit step.
      OperatorId idlest;
      double most = -1.0;
      for (const auto& [id, m] : s.ops) {
        if (current.at(id) > 1 && m.idle_ms > most) {
          most = m.idle_ms;
          idlest = id;
        }
      }
      if (!idlest.empty()) next[idlest] = current.at(idlest) - 1;
    }
  }
  return next;
}

/// Uniform level in [1, p_max] per operator.
inline ParallelismAssignment random_search_step(std::mt19937_64& rng,
                                                const std::vector<OperatorId>& ops, int p_max) {
  if (p_max < 1) throw Error(ErrorCode::NonPositiveParallelism, "p_max must be >= 1");
  ParallelismAssignment a;
  for (const auto& id : ops) {
    a[id] = 1 + static_cast<int>(detail::bounded(rng, static_cast<std::uint64_t>(p_max)));
  }
  return a;
}

/// CEI over [1, p_max] on one rate bucket's history, no fallback. Without
/// observations the prior is mu = 0 with sigma = lambda, which favours p = 1.
inline int vanilla_bo_suggest(const OperatorId& op, double lambda, const HistoryStore& bucket,
                              const KernelConfig& kernel, int p_max, int p_now) {
  const auto pts = bucket.smoothed(op);
  const int p_star = known_feasible_level(bucket, op, lambda, p_now);
  if (pts.empty()) {
    if (lambda <= 0.0) return 1;
    const double pr = feasibility_probability(Prediction{0.0, lambda * lambda}, lambda);
    int best = p_star;
    double best_v = 0.0;
    for (int p = 1; p <= p_max; ++p) {
      const double v = (p_star - p) * pr;
      if (v > best_v) {
        best_v = v;
        best = p;
      }
    }
    return best;
  }
  std::vector<std::pair<double, double>> data;
  for (const auto& [p, pa] : pts) data.emplace_back(p, pa);
  const auto model = GpModel::fit(data, kernel);
  return acquisition_cei(model, lambda, p_max, p_star).value_or(p_star);
}

// ------------------------------------------------------------------- tuners

class Tuner {
 public:
  virtual ~Tuner() = default;
  virtual std::string id() const = 0;
  /// Handles one trigger; `job.last()` is the measurement that fired it.
  virtual void tune(SimulatedJob& job) = 0;
};

namespace detail {

inline int max_level(const ParallelismAssignment& a) {
  int m = 0;
  for (const auto& [id, p] : a) m = std::max(m, p);
  return m;
}

}  // namespace detail

/// Big phase when under-provisioned, then one CBO reconfiguration.
class ContTuneTuner : public Tuner {
 public:
  explicit ContTuneTuner(TunerConfig cfg, std::string id = "conttune")
      : cfg_(std::move(cfg)), id_(std::move(id)), store_(cfg_.top_k) {
    cfg_.validate();
  }

  std::string id() const override { return id_; }
  HistoryStore& store() { return store_; }
  const HistoryStore& store() const { return store_; }
  void set_store(HistoryStore s) { store_ = std::move(s); }
  const TunerConfig& config() const { return cfg_; }

  void tune(SimulatedJob& job) override {
    auto& c = job.counters();
    ++c.tunings;
    job.record_observations(store_, job.last());
    int p_max = std::max({store_.p_max(), cfg_.p_max_floor, detail::max_level(job.assignment())});
    p_max = std::min(p_max, cfg_.hard_cap);
    RateMap lambda;
    if (job.last().state == Provisioning::Under) {
      try {
        const auto big = big_phase(job, store_, p_max, cfg_.hard_cap);
        lambda = big.lambda;
        p_max = std::max(p_max, big.final_p_max);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::PMaxExceeded) throw;
        ++c.p_max_exceeded;
        return;
      }
    } else if (job.last().sla_violated) {
      // lambda-hat is throttled at the sources; propagate their arrivals.
      lambda = ds2_true_rates(job.sim().dag(), job.last().sample);
    } else if (job.last().pressure == PressureState::NonBackpressure) {
      lambda = observed_rates(job.last().sample);
    } else {
      return;
    }

    const auto s = small_phase(job.assignment(), lambda, store_, cfg_, p_max, &job.last().sample);
    if (job.apply(s.assignment, Phase::Small) != ApplyOutcome::Applied) return;
    const int fast = s.count(Provenance::FastExploitation);
    const int cons = s.count(Provenance::ConservativeExploration);
    c.fast_ops += fast;
    c.conservative_ops += cons;
    c.chi += cons;
    // One Small reconfiguration per tuning, so the fallback count within a
    // tuning is at most one.
    const int fallback_reconfigs = cons > 0 ? 1 : 0;
    job.record_observations(store_, job.last());
    if (job.last().pressure == PressureState::Backpressure && fast > 0) ++c.omega_observed;
    c.phi_observed = std::max(c.phi_observed, fallback_reconfigs);
  }

 private:
  TunerConfig cfg_;
  std::string id_;
  HistoryStore store_;
};

/// Linear scaling. Plain DS2 estimates true rates from the source rates and
/// observed selectivities; the Big variant first clears backpressure and
/// then uses lambda-hat like ContTune.
class Ds2Tuner : public Tuner {
 public:
  Ds2Tuner(TunerConfig cfg, bool with_big_phase)
      : cfg_(std::move(cfg)), big_(with_big_phase), store_(cfg_.top_k) {
    cfg_.validate();
  }

  std::string id() const override { return big_ ? "big-ds2" : "ds2"; }

  void tune(SimulatedJob& job) override {
    auto& c = job.counters();
    ++c.tunings;
    const auto& dag = job.sim().dag();
    RateMap lambda;
    if (big_) {
      job.record_observations(store_, job.last());
      if (job.last().state == Provisioning::Under) {
        int p_max =
            std::max({store_.p_max(), cfg_.p_max_floor, detail::max_level(job.assignment())});
        try {
          lambda = big_phase(job, store_, std::min(p_max, cfg_.hard_cap), cfg_.hard_cap).lambda;
        } catch (const Error& e) {
          if (e.code() != ErrorCode::PMaxExceeded) throw;
          ++c.p_max_exceeded;
          return;
        }
      } else if (job.last().sla_violated) {
        lambda = ds2_true_rates(dag, job.last().sample);
      } else if (job.last().pressure == PressureState::NonBackpressure) {
        lambda = observed_rates(job.last().sample);
      } else {
        return;
      }
    }
    // Plain DS2 iterates to its own fixed point; the Big variant follows the
    // Big-then-one-Small structure.
    const int rounds = big_ ? 1 : cfg_.max_rounds;
    for (int round = 0; round < rounds; ++round) {
      const auto& m = job.last();
      if (!big_) lambda = ds2_true_rates(dag, m.sample);
      auto next = m.assignment;
      for (auto& [id, p] : next) {
        const auto& om = m.sample.op(id);
        if (om.busy_ms <= 0.0 || om.observed_rate <= 0.0) {
          if (lambda.at(id) <= 0.0) p = 1;
          continue;
        }
        p = ds2_suggest(p, lambda.at(id), observed_pa(m.sample, id), cfg_.hard_cap);
      }
      if (job.apply(next, Phase::Small) != ApplyOutcome::Applied) break;
      c.conservative_ops += static_cast<int>(next.size());
      if (big_) {
        job.record_observations(store_, job.last());
        if (job.last().pressure == PressureState::Backpressure) break;
        if (!job.last().sla_violated) lambda = observed_rates(job.last().sample);
      }
    }
  }

 private:
  TunerConfig cfg_;
  bool big_;
  HistoryStore store_;
};

class DhalionTuner : public Tuner {
 public:
  explicit DhalionTuner(TunerConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  std::string id() const override { return "dhalion"; }

  void tune(SimulatedJob& job) override {
    ++job.counters().tunings;
    for (int round = 0; round < cfg_.max_rounds; ++round) {
      const auto& m = job.last();
      if (m.state == Provisioning::Steady && m.pressure == PressureState::NonBackpressure &&
          !m.sla_violated) {
        break;
      }
      const auto next =
          dhalion_step(job.sim().dag(), m.sample, m.assignment, job.thresholds(), cfg_.hard_cap);
      if (job.apply(next, Phase::Small) != ApplyOutcome::Applied) break;
    }
  }

 private:
  TunerConfig cfg_;
};

/// Vanilla BO: Big phase to clear backpressure, then CEI on the history of
/// the current rate bucket only, never falling back.
class CeiBoTuner : public Tuner {
 public:
  /// `bucket_width`: total source rate per bucket (the summed workload
  /// unit for synthetic traces).
  CeiBoTuner(TunerConfig cfg, double bucket_width)
      : cfg_(std::move(cfg)), width_(bucket_width), global_(cfg_.top_k) {
    cfg_.validate();
    if (!(width_ > 0.0)) throw Error(ErrorCode::ConfigError, "bucket width must be > 0");
  }

  std::string id() const override { return "cei-bo"; }

  long bucket_of(const MetricsSample& s, const LogicalDag& dag) const {
    double total = 0.0;
    for (const auto& id : dag.sources()) total += s.op(id).arrival_rate;
    return std::lround(total / width_);
  }

  std::size_t bucket_count() const { return buckets_.size(); }

  void tune(SimulatedJob& job) override {
    auto& c = job.counters();
    ++c.tunings;
    const auto& dag = job.sim().dag();
    const long key = bucket_of(job.last().sample, dag);
    auto& store = buckets_.try_emplace(key, cfg_.top_k).first->second;
    job.record_observations(global_, job.last());
    RateMap lambda;
    if (job.last().state == Provisioning::Under) {
      int p_max = std::max({global_.p_max(), cfg_.p_max_floor, detail::max_level(job.assignment())});
      try {
        lambda = big_phase(job, global_, std::min(p_max, cfg_.hard_cap), cfg_.hard_cap).lambda;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::PMaxExceeded) throw;
        ++c.p_max_exceeded;
        return;
      }
    } else if (job.last().sla_violated) {
      lambda = ds2_true_rates(dag, job.last().sample);
    } else if (job.last().pressure == PressureState::NonBackpressure) {
      lambda = observed_rates(job.last().sample);
    } else {
      return;
    }
    job.record_observations(store, job.last());
    const int p_max = std::max({global_.p_max(), cfg_.p_max_floor});
    auto next = job.assignment();
    for (auto& [id, p] : next) {
      p = std::min(cfg_.hard_cap,
                   vanilla_bo_suggest(id, lambda.at(id), store, cfg_.kernel, p_max, p));
    }
    if (job.apply(next, Phase::Small) != ApplyOutcome::Applied) return;
    c.fast_ops += static_cast<int>(next.size());
    job.record_observations(store, job.last());
    job.record_observations(global_, job.last());
  }

 private:
  TunerConfig cfg_;
  double width_;
  HistoryStore global_;
  std::map<long, HistoryStore> buckets_;
};

// --------------------------------------------------------------- epoch loop

struct EpochRecord {
  int index = 0;
  double t_start = 0.0;
  double t_end = 0.0;
  int multiplier = 0;
  double source_rate = 0.0;
  int triggers = 0;
  int reconfigurations = 0;
  int big = 0;
  int small = 0;
  int fast_ops = 0;
  int conservative_ops = 0;
  int cores_end = 0;
  Provisioning end_state = Provisioning::Steady;
  bool end_backpressured = false;
  bool end_sla_violated = false;
  ParallelismAssignment end_assignment;
};

/// Runs every epoch of `trace`: one measurement per window, a tuning
/// whenever the job is over- or under-provisioned or its sources fall
/// behind.
inline std::vector<EpochRecord> run_tuning_loop(SimulatedJob& job, Tuner& tuner,
                                                const WorkloadTrace& trace) {
  std::vector<EpochRecord> out;
  auto& sim = job.sim();
  for (std::size_t e = 0; e < trace.epochs.size(); ++e) {
    const auto& ep = trace.epochs[e];
    sim.set_source_rates(ep.rates);
    EpochRecord r;
    r.index = static_cast<int>(e);
    r.t_start = sim.clock();
    r.multiplier = ep.multiplier;
    for (const auto& [id, v] : ep.rates) r.source_rate += v;
    const auto before = job.counters();
    const double end = sim.clock() + ep.duration_s;
    while (sim.clock() + 1e-9 < end) {
      const auto& m = job.measure();
      if (m.state == Provisioning::Steady && !m.sla_violated) continue;
      ++r.triggers;
      tuner.tune(job);
    }
    const auto& after = job.counters();
    r.t_end = sim.clock();
    r.reconfigurations = after.reconfigurations - before.reconfigurations;
    r.big = after.big - before.big;
    r.small = after.small - before.small;
    r.fast_ops = after.fast_ops - before.fast_ops;
    r.conservative_ops = after.conservative_ops - before.conservative_ops;
    r.cores_end = sim.total_cores();
    r.end_state = job.last().state;
    r.end_backpressured = job.last().pressure == PressureState::Backpressure;
    r.end_sla_violated = job.last().sla_violated;
    r.end_assignment = sim.assignment();
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace conttune
