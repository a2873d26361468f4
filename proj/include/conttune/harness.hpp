#pragma once

// Experiment harness: scenario documents, tuner factory, the brute-force
// oracle, per-run reports and cross-tuner comparison.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "conttune/capacity.hpp"
#include "conttune/controller.hpp"
#include "conttune/dag.hpp"
#include "conttune/error.hpp"
#include "conttune/simulator.hpp"
#include "conttune/tuning.hpp"
#include "conttune/workloads.hpp"

namespace conttune {

inline const std::vector<std::string>& tuner_ids() {
  static const std::vector<std::string> ids{"conttune-a0", "conttune-a3", "ds2",   "big-ds2",
                                            "dhalion",     "cei-bo",      "random"};
  return ids;
}

// ------------------------------------------------------------------- oracle

/// Per operator, the smallest p in [1, p_max] whose capacity covers lambda.
inline ParallelismAssignment oracle_optimal(const LogicalDag& dag,
                                            const std::map<OperatorId, CapacityCurve>& curves,
                                            const RateMap& lambda, int p_max) {
  if (p_max < 1) throw Error(ErrorCode::NonPositiveParallelism, "p_max must be >= 1");
  ParallelismAssignment out;
  for (const auto& o : dag.operators) {
    auto c = curves.find(o.id);
    if (c == curves.end()) throw Error(ErrorCode::ConfigError, "no curve for '" + o.id + "'");
    auto l = lambda.find(o.id);
    const double rate = l == lambda.end() ? 0.0 : l->second;
    if (rate < 0.0) throw Error(ErrorCode::NegativeRate, "rate for '" + o.id + "'");
    int found = 0;
    for (int p = 1; p <= p_max; ++p) {
      if (capacity(c->second, p) >= rate) {
        found = p;
        break;
      }
    }
    if (!found) {
      throw Error(ErrorCode::Infeasible, "'" + o.id + "' needs more than p_max=" +
                                             std::to_string(p_max) + " for rate " +
                                             std::to_string(rate));
    }
    out[o.id] = found;
  }
  return out;
}

/// Oracle assignment for external source rates (selectivities at their means).
inline ParallelismAssignment oracle_for_sources(const LogicalDag& dag,
                                                const std::map<OperatorId, CapacityCurve>& curves,
                                                const RateMap& source_rates, int p_max) {
  return oracle_optimal(dag, curves, real_upstream_rates_oracle(dag, source_rates), p_max);
}

// ----------------------------------------------------------------- scenario

struct Scenario {
  std::string name = "scenario";
  LogicalDag dag;
  std::map<OperatorId, CapacityCurve> curves;
  /// Empty means every operator starts at 1.
  ParallelismAssignment initial;
  SimConfig sim;
  Thresholds thresholds;
  MeasureConfig measure;
  TunerConfig tuner;
  /// Total source rate per CEI history bucket; 0 picks the summed workload
  /// unit (or a tenth of the mean total rate for replayed traces).
  double bucket_width = 0.0;
  /// Synthetic workload parameters; the trace is built per run when
  /// `synthetic` is set, because its seed may follow the run seed.
  struct Synthetic {
    RateMap workload_unit;
    int length = 10;
    int replication = 2;
    std::optional<std::uint64_t> seed;
    double epoch_s = 600.0;
  };
  std::optional<Synthetic> synthetic;
  WorkloadTrace trace;

  WorkloadTrace trace_for(std::uint64_t run_seed) const {
    if (!synthetic) return trace;
    return synthetic_permutation(synthetic->workload_unit, synthetic->length,
                                 synthetic->replication, synthetic->seed.value_or(run_seed),
                                 synthetic->epoch_s);
  }

  ParallelismAssignment initial_assignment() const {
    return initial.empty() ? uniform_assignment(dag, 1) : initial;
  }
};

namespace detail {

inline CapacityCurve curve_from_json(const nlohmann::json& j, const std::string& path) {
  const auto family = require_field<std::string>(j, "family", path);
  const double base = require_field<double>(j, "base_rate", path);
  CapacityCurve c;
  if (family == "amdahl") {
    c = CapacityCurve::amdahl(base, optional_field<double>(j, "serial_fraction", path, 0.0));
  } else if (family == "power") {
    c = CapacityCurve::power(base, optional_field<double>(j, "exponent", path, 1.0));
  } else {
    throw Error(ErrorCode::ConfigError, path + ".family: unknown family '" + family + "'");
  }
  c.validate(path);
  return c;
}

inline nlohmann::json curve_to_json(const CapacityCurve& c) {
  if (c.family == CapacityCurve::Family::Amdahl) {
    return {{"family", "amdahl"}, {"base_rate", c.base_rate}, {"serial_fraction", c.shape}};
  }
  return {{"family", "power"}, {"base_rate", c.base_rate}, {"exponent", c.shape}};
}

inline RateMap rates_from_json(const nlohmann::json& j, const std::string& path) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, path + ": expected an object");
  RateMap out;
  for (const auto& [k, v] : j.items()) {
    if (!v.is_number()) throw Error(ErrorCode::ConfigError, path + "." + k + ": not a number");
    const double r = v.get<double>();
    if (r < 0.0) throw Error(ErrorCode::NegativeRate, path + "." + k);
    out[k] = r;
  }
  return out;
}

inline std::string resolve(const std::string& base_dir, const std::string& p) {
  namespace fs = std::filesystem;
  fs::path path(p);
  if (path.is_absolute() || base_dir.empty()) return path.string();
  return (fs::path(base_dir) / path).string();
}

}  // namespace detail

/// Parses a scenario document. Relative paths (DAG, trace) resolve against
/// `base_dir`.
inline Scenario scenario_from_json(const nlohmann::json& doc, const std::string& origin = "scenario",
                                   const std::string& base_dir = "") {
  using detail::optional_field;
  using detail::require_field;
  if (!doc.is_object()) throw Error(ErrorCode::ConfigError, origin + ": expected an object");
  Scenario s;
  s.name = optional_field<std::string>(doc, "name", origin, "scenario");

  if (!doc.contains("dag")) throw Error(ErrorCode::ConfigError, origin + ".dag: missing");
  if (doc["dag"].is_string()) {
    s.dag = load_dag_file(detail::resolve(base_dir, doc["dag"].get<std::string>()));
  } else {
    s.dag = dag_from_json(doc["dag"], origin + ".dag");
  }

  if (!doc.contains("curves") || !doc["curves"].is_object()) {
    throw Error(ErrorCode::ConfigError, origin + ".curves: missing or not an object");
  }
  for (const auto& [id, j] : doc["curves"].items()) {
    if (!s.dag.index_of(id)) {
      throw Error(ErrorCode::UnknownOperator, origin + ".curves." + id + ": not in the DAG");
    }
    s.curves[id] = detail::curve_from_json(j, origin + ".curves." + id);
  }
  for (const auto& o : s.dag.operators) {
    if (!s.curves.count(o.id)) {
      throw Error(ErrorCode::ConfigError, origin + ".curves." + o.id + ": missing");
    }
  }

  if (doc.contains("initial_parallelism")) {
    const auto& ip = doc["initial_parallelism"];
    const std::string path = origin + ".initial_parallelism";
    if (ip.is_number_integer()) {
      s.initial = uniform_assignment(s.dag, ip.get<int>());
    } else if (ip.is_object()) {
      for (const auto& [id, v] : ip.items()) {
        if (!v.is_number_integer()) {
          throw Error(ErrorCode::ConfigError, path + "." + id + ": not an integer");
        }
        s.initial[id] = v.get<int>();
      }
      check_assignment(s.dag, s.initial);
    } else {
      throw Error(ErrorCode::ConfigError, path + ": expected an integer or an object");
    }
  }

  if (doc.contains("simulator")) {
    const auto& j = doc["simulator"];
    const std::string path = origin + ".simulator";
    s.sim.dt = optional_field<double>(j, "dt", path, s.sim.dt);
    s.sim.window_s = optional_field<double>(j, "window_s", path, s.sim.window_s);
    s.sim.downtime_s = optional_field<double>(j, "downtime_s", path, s.sim.downtime_s);
    s.sim.bp_queue_threshold_s =
        optional_field<double>(j, "bp_queue_threshold_s", path, s.sim.bp_queue_threshold_s);
    s.sim.stateful_cost_follows_selectivity = optional_field<bool>(
        j, "stateful_cost_follows_selectivity", path, s.sim.stateful_cost_follows_selectivity);
    s.measure.settle_max_s = optional_field<double>(j, "settle_max_s", path, s.measure.settle_max_s);
    try {
      s.sim.validate();
    } catch (const Error& e) {
      throw Error(ErrorCode::ConfigError, path + ": " + e.what());
    }
  }

  if (doc.contains("thresholds")) {
    const auto& j = doc["thresholds"];
    const std::string path = origin + ".thresholds";
    auto& t = s.thresholds;
    t.backpressure_thr = optional_field<double>(j, "backpressure_thr", path, t.backpressure_thr);
    t.core_min_thr = optional_field<double>(j, "core_min_thr", path, t.core_min_thr);
    t.core_max_thr = optional_field<double>(j, "core_max_thr", path, t.core_max_thr);
    t.decision_thr = optional_field<double>(j, "decision_thr", path, t.decision_thr);
    s.measure.gate_exempt_under_scale_up = optional_field<bool>(
        j, "gate_exempt_under_scale_up", path, s.measure.gate_exempt_under_scale_up);
  }
  s.thresholds.validate();

  if (doc.contains("tuner")) {
    const auto& j = doc["tuner"];
    const std::string path = origin + ".tuner";
    auto& t = s.tuner;
    t.alpha = optional_field<double>(j, "alpha", path, t.alpha);
    t.top_k = optional_field<int>(j, "top_k", path, t.top_k);
    t.p_max_floor = optional_field<int>(j, "p_max_floor", path, t.p_max_floor);
    t.hard_cap = optional_field<int>(j, "hard_cap", path, t.hard_cap);
    t.max_rounds = optional_field<int>(j, "max_rounds", path, t.max_rounds);
    t.kernel.length_scale = optional_field<double>(j, "length_scale", path, t.kernel.length_scale);
    t.kernel.noise_variance =
        optional_field<double>(j, "noise_variance", path, t.kernel.noise_variance);
    t.kernel.refine_length_scale =
        optional_field<bool>(j, "refine_length_scale", path, t.kernel.refine_length_scale);
    const auto prior = optional_field<std::string>(j, "prior_mean", path, "proportional");
    if (prior == "proportional") {
      t.kernel.prior_mean = PriorMean::Proportional;
    } else if (prior == "constant") {
      t.kernel.prior_mean = PriorMean::Constant;
    } else {
      throw Error(ErrorCode::ConfigError, path + ".prior_mean: expected constant or proportional");
    }
    s.bucket_width = optional_field<double>(j, "bucket_width", path, 0.0);
  }
  s.tuner.validate();

  if (!doc.contains("workload") || !doc["workload"].is_object()) {
    throw Error(ErrorCode::ConfigError, origin + ".workload: missing or not an object");
  }
  const auto& w = doc["workload"];
  const std::string wpath = origin + ".workload";
  if (w.contains("synthetic")) {
    const auto& j = w["synthetic"];
    const std::string path = wpath + ".synthetic";
    Scenario::Synthetic syn;
    if (!j.contains("workload_unit")) {
      throw Error(ErrorCode::ConfigError, path + ".workload_unit: missing");
    }
    syn.workload_unit = detail::rates_from_json(j["workload_unit"], path + ".workload_unit");
    syn.length = optional_field<int>(j, "length", path, 10);
    syn.replication = optional_field<int>(j, "replication", path, 2);
    if (j.contains("seed")) syn.seed = require_field<std::uint64_t>(j, "seed", path);
    syn.epoch_s = optional_field<double>(j, "epoch_s", path, 600.0);
    s.synthetic = syn;
    s.trace = s.trace_for(syn.seed.value_or(1));
  } else if (w.contains("trace")) {
    s.trace = load_trace(detail::resolve(base_dir, require_field<std::string>(w, "trace", wpath)),
                         optional_field<double>(w, "epoch_s", wpath, 600.0));
  } else if (w.contains("constant")) {
    const auto& j = w["constant"];
    const std::string path = wpath + ".constant";
    if (!j.contains("rates")) throw Error(ErrorCode::ConfigError, path + ".rates: missing");
    const auto rates = detail::rates_from_json(j["rates"], path + ".rates");
    const int epochs = optional_field<int>(j, "epochs", path, 1);
    const double epoch_s = optional_field<double>(j, "epoch_s", path, 600.0);
    if (epochs < 1 || !(epoch_s > 0.0)) {
      throw Error(ErrorCode::ConfigError, path + ": epochs and epoch_s must be positive");
    }
    for (int i = 0; i < epochs; ++i) s.trace.epochs.push_back(TraceEpoch{epoch_s, rates, 0});
  } else {
    throw Error(ErrorCode::ConfigError, wpath + ": expected synthetic, trace or constant");
  }
  const auto sources = s.dag.sources();
  for (const auto& e : s.trace.epochs) {
    for (const auto& [id, r] : e.rates) {
      if (std::find(sources.begin(), sources.end(), id) == sources.end()) {
        throw Error(ErrorCode::UnknownSource, wpath + ": '" + id + "' is not a source");
      }
    }
  }
  return s;
}

inline Scenario load_scenario(const std::string& path) {
  const auto text = read_text_file(path);
  const auto base = std::filesystem::path(path).parent_path().string();
  return scenario_from_json(parse_json_text(text, path), path, base);
}

// ------------------------------------------------------------------- report

struct TuningReport {
  std::string scenario;
  std::string tuner;
  std::uint64_t seed = 0;
  int epochs = 0;
  /// Epochs in which the controller triggered at least once.
  int tunings = 0;
  int triggers = 0;
  int reconfigurations = 0;
  int reconfigs_big = 0;
  int reconfigs_small = 0;
  int gated = 0;
  int chi = 0;
  int phi_observed = 0;
  int omega_observed = 0;
  int fast_ops = 0;
  int conservative_ops = 0;
  double avg_reconfigs_per_tuning = 0.0;
  int max_cores = 0;
  double total_core_seconds = 0.0;
  /// Percent of source records that arrived while the job was down.
  double backlog_pct = 0.0;
  /// Simulated seconds spent draining after reconfigurations.
  double drain_time_s = 0.0;
  double sim_time_s = 0.0;
  int under_provisioned_epochs = 0;
  /// Epochs ending with some source consuming less than its arrivals.
  int sla_violated_epochs = 0;
  int p_max_exceeded = 0;
  /// Random search only: assignments drawn before hitting the optimum.
  long long random_draws = 0;
  std::vector<EpochRecord> epoch_records;
  ParallelismAssignment final_assignment;
};

inline nlohmann::json report_to_json(const TuningReport& r) {
  nlohmann::json j;
  j["scenario"] = r.scenario;
  j["tuner"] = r.tuner;
  j["seed"] = r.seed;
  j["epochs"] = r.epochs;
  j["tunings"] = r.tunings;
  j["triggers"] = r.triggers;
  j["reconfigurations"] = {
      {"total", r.reconfigurations}, {"big", r.reconfigs_big}, {"small", r.reconfigs_small}};
  j["gated"] = r.gated;
  j["chi"] = r.chi;
  j["phi_observed"] = r.phi_observed;
  j["omega_observed"] = r.omega_observed;
  j["fast_ops"] = r.fast_ops;
  j["conservative_ops"] = r.conservative_ops;
  j["avg_reconfigs_per_tuning"] = r.avg_reconfigs_per_tuning;
  j["max_cores"] = r.max_cores;
  j["total_core_seconds"] = r.total_core_seconds;
  j["backlog_pct"] = r.backlog_pct;
  j["drain_time_s"] = r.drain_time_s;
  j["sim_time_s"] = r.sim_time_s;
  j["under_provisioned_epochs"] = r.under_provisioned_epochs;
  j["sla_violated_epochs"] = r.sla_violated_epochs;
  j["p_max_exceeded"] = r.p_max_exceeded;
  if (r.tuner == "random") j["random_draws"] = r.random_draws;
  j["final_assignment"] = r.final_assignment;
  return j;
}

inline TuningReport report_from_json(const nlohmann::json& j, const std::string& origin = "report") {
  using detail::optional_field;
  using detail::require_field;
  TuningReport r;
  r.scenario = require_field<std::string>(j, "scenario", origin);
  r.tuner = require_field<std::string>(j, "tuner", origin);
  r.seed = optional_field<std::uint64_t>(j, "seed", origin, 0);
  r.epochs = optional_field<int>(j, "epochs", origin, 0);
  r.tunings = require_field<int>(j, "tunings", origin);
  r.avg_reconfigs_per_tuning = require_field<double>(j, "avg_reconfigs_per_tuning", origin);
  if (j.contains("reconfigurations") && j["reconfigurations"].is_object()) {
    r.reconfigurations = optional_field<int>(j["reconfigurations"], "total", origin, 0);
    r.reconfigs_big = optional_field<int>(j["reconfigurations"], "big", origin, 0);
    r.reconfigs_small = optional_field<int>(j["reconfigurations"], "small", origin, 0);
  }
  r.max_cores = optional_field<int>(j, "max_cores", origin, 0);
  r.total_core_seconds = optional_field<double>(j, "total_core_seconds", origin, 0.0);
  return r;
}

inline void write_epoch_csv(std::ostream& out, const std::vector<EpochRecord>& recs) {
  out.precision(17);
  out << "epoch,t_start,t_end,multiplier,source_rate,triggers,reconfigurations,big,small,"
         "fast_ops,conservative_ops,cores_end,end_state,end_backpressured,end_sla_violated\n";
  for (const auto& r : recs) {
    out << r.index << ',' << r.t_start << ',' << r.t_end << ',' << r.multiplier << ','
        << r.source_rate << ',' << r.triggers << ',' << r.reconfigurations << ',' << r.big << ','
        << r.small << ',' << r.fast_ops << ',' << r.conservative_ops << ',' << r.cores_end << ','
        << to_string(r.end_state) << ',' << (r.end_backpressured ? 1 : 0) << ','
        << (r.end_sla_violated ? 1 : 0) << '\n';
  }
}

// -------------------------------------------------------------- experiment

inline std::unique_ptr<Tuner> make_tuner(const std::string& id, const Scenario& s,
                                         const WorkloadTrace& trace) {
  TunerConfig cfg = s.tuner;
  if (id == "conttune-a0" || id == "conttune-a3") {
    cfg.alpha = id == "conttune-a0" ? 0.0 : 3.0;
    return std::make_unique<ContTuneTuner>(cfg, id);
  }
  if (id == "conttune") return std::make_unique<ContTuneTuner>(cfg, id);
  if (id == "ds2") return std::make_unique<Ds2Tuner>(cfg, false);
  if (id == "big-ds2") return std::make_unique<Ds2Tuner>(cfg, true);
  if (id == "dhalion") return std::make_unique<DhalionTuner>(cfg);
  if (id == "cei-bo") {
    double width = s.bucket_width;
    if (!(width > 0.0)) {
      for (const auto& [src, r] : trace.workload_unit) width += r;
    }
    if (!(width > 0.0)) {
      double mean = 0.0;
      for (const auto& e : trace.epochs) {
        for (const auto& [src, r] : e.rates) mean += r;
      }
      mean /= std::max<std::size_t>(1, trace.epochs.size());
      width = mean > 0.0 ? mean / 10.0 : 1.0;
    }
    cfg.acquisition = Acquisition::Cei;
    cfg.conservative_fallback = false;
    return std::make_unique<CeiBoTuner>(cfg, width);
  }
  throw Error(ErrorCode::UnknownTuner, "'" + id + "'");
}

struct RunArtifacts {
  TuningReport report;
  /// History of the ContTune tuner at the end of the run (empty otherwise).
  std::optional<HistoryStore> history;
};

struct RunOptions {
  /// Per-step metrics sink; may be null.
  MetricsCsvWriter* metrics = nullptr;
  /// Warm-start history for ContTune tuners.
  std::optional<HistoryStore> history;
  /// Draw cap per epoch for random search.
  long long random_draw_cap = 10'000'000;
};

namespace detail {

inline TuningReport run_random_search(const Scenario& s, const WorkloadTrace& trace,
                                      std::uint64_t seed, long long cap) {
  TuningReport r;
  std::vector<ParallelismAssignment> optima;
  int p_max = 1;
  for (const auto& e : trace.epochs) {
    optima.push_back(oracle_for_sources(s.dag, s.curves, e.rates, s.tuner.hard_cap));
    for (const auto& [id, p] : optima.back()) p_max = std::max(p_max, p);
  }
  std::vector<OperatorId> ops;
  for (const auto& o : s.dag.operators) ops.push_back(o.id);
  std::sort(ops.begin(), ops.end());
  std::mt19937_64 rng(seed);
  double t = 0.0;
  for (std::size_t i = 0; i < trace.epochs.size(); ++i) {
    long long draws = 0;
    ParallelismAssignment a;
    do {
      a = random_search_step(rng, ops, p_max);
      ++draws;
    } while (a != optima[i] && draws < cap);
    EpochRecord rec;
    rec.index = static_cast<int>(i);
    rec.t_start = t;
    t += trace.epochs[i].duration_s;
    rec.t_end = t;
    rec.multiplier = trace.epochs[i].multiplier;
    for (const auto& [id, v] : trace.epochs[i].rates) rec.source_rate += v;
    rec.triggers = 1;
    rec.reconfigurations = static_cast<int>(std::min<long long>(draws, INT32_MAX));
    rec.small = rec.reconfigurations;
    rec.end_assignment = a;
    rec.cores_end = total_parallelism(a);
    r.epoch_records.push_back(rec);
    r.random_draws += draws;
    r.max_cores = std::max(r.max_cores, rec.cores_end);
  }
  r.epochs = static_cast<int>(trace.epochs.size());
  r.tunings = r.epochs;
  r.triggers = r.epochs;
  r.reconfigurations = static_cast<int>(std::min<long long>(r.random_draws, INT32_MAX));
  r.reconfigs_small = r.reconfigurations;
  r.avg_reconfigs_per_tuning =
      static_cast<double>(r.random_draws) / std::max(1, r.tunings);
  r.sim_time_s = t;
  if (!r.epoch_records.empty()) r.final_assignment = r.epoch_records.back().end_assignment;
  return r;
}

}  // namespace detail

/// Runs one (scenario, tuner, seed) cell. Deterministic in its inputs.
inline RunArtifacts run_experiment(const Scenario& s, const std::string& tuner_id,
                                   std::uint64_t seed, const RunOptions& opt = {}) {
  const auto trace = s.trace_for(seed);
  RunArtifacts out;
  if (tuner_id == "random") {
    out.report = detail::run_random_search(s, trace, seed, opt.random_draw_cap);
  } else {
    auto tuner = make_tuner(tuner_id, s, trace);
    SimConfig sc = s.sim;
    sc.seed = seed;
    Simulator sim(s.dag, s.curves, s.initial_assignment(), sc);
    SimulatedJob job(sim, s.thresholds, s.measure);
    job.set_metrics_writer(opt.metrics);
    auto* ct = dynamic_cast<ContTuneTuner*>(tuner.get());
    if (ct && opt.history) ct->set_store(*opt.history);

    auto& r = out.report;
    r.epoch_records = run_tuning_loop(job, *tuner, trace);
    const auto& c = job.counters();
    r.epochs = static_cast<int>(trace.epochs.size());
    for (const auto& e : r.epoch_records) {
      r.tunings += e.triggers > 0;
      r.triggers += e.triggers;
      r.under_provisioned_epochs += e.end_state == Provisioning::Under;
      r.sla_violated_epochs += e.end_sla_violated;
    }
    r.reconfigurations = c.reconfigurations;
    r.reconfigs_big = c.big;
    r.reconfigs_small = c.small;
    r.gated = c.gated;
    r.chi = c.chi;
    r.phi_observed = c.phi_observed;
    r.omega_observed = c.omega_observed;
    r.fast_ops = c.fast_ops;
    r.conservative_ops = c.conservative_ops;
    r.p_max_exceeded = c.p_max_exceeded;
    r.avg_reconfigs_per_tuning =
        static_cast<double>(r.reconfigurations) / std::max(1, r.tunings);
    r.max_cores = c.max_cores;
    r.total_core_seconds = sim.total_core_seconds();
    r.backlog_pct = sim.source_records_total() > 0.0
                        ? 100.0 * sim.downtime_backlog_records() / sim.source_records_total()
                        : 0.0;
    r.drain_time_s = c.settle_s;
    r.sim_time_s = sim.clock();
    r.final_assignment = sim.assignment();
    if (ct) out.history = ct->store();
  }
  out.report.scenario = s.name;
  out.report.tuner = tuner_id;
  out.report.seed = seed;
  return out;
}

// ------------------------------------------------------------------ compare

struct CompareRow {
  std::string tuner;
  double avg_reconfigs_per_tuning = 0.0;
  int reconfigurations = 0;
  int tunings = 0;
  /// (baseline - this) / baseline, in percent.
  double reduction_pct = 0.0;
};

struct CompareTable {
  std::string scenario;
  std::string baseline;
  std::vector<CompareRow> rows;
};

/// Ranks reports of one scenario by average reconfigurations per tuning.
/// The baseline defaults to the report with the highest average.
inline CompareTable compare(const std::vector<TuningReport>& reports,
                            const std::optional<std::string>& baseline = std::nullopt) {
  if (reports.size() < 2) {
    throw Error(ErrorCode::ScenarioMismatch, "need at least two reports to compare");
  }
  for (const auto& r : reports) {
    if (r.scenario != reports.front().scenario) {
      throw Error(ErrorCode::ScenarioMismatch,
                  "'" + r.scenario + "' vs '" + reports.front().scenario + "'");
    }
  }
  const TuningReport* base = nullptr;
  if (baseline) {
    for (const auto& r : reports) {
      if (r.tuner == *baseline) base = &r;
    }
    if (!base) throw Error(ErrorCode::UnknownTuner, "no report for baseline '" + *baseline + "'");
  } else {
    base = &*std::max_element(reports.begin(), reports.end(), [](const auto& a, const auto& b) {
      return a.avg_reconfigs_per_tuning < b.avg_reconfigs_per_tuning;
    });
  }
  CompareTable t;
  t.scenario = reports.front().scenario;
  t.baseline = base->tuner;
  const double b = base->avg_reconfigs_per_tuning;
  for (const auto& r : reports) {
    CompareRow row;
    row.tuner = r.tuner;
    row.avg_reconfigs_per_tuning = r.avg_reconfigs_per_tuning;
    row.reconfigurations = r.reconfigurations;
    row.tunings = r.tunings;
    row.reduction_pct = b > 0.0 ? 100.0 * (b - r.avg_reconfigs_per_tuning) / b : 0.0;
    t.rows.push_back(row);
  }
  std::stable_sort(t.rows.begin(), t.rows.end(), [](const auto& x, const auto& y) {
    return x.avg_reconfigs_per_tuning < y.avg_reconfigs_per_tuning;
  });
  return t;
}

inline void print_compare(std::ostream& out, const CompareTable& t) {
  out << "scenario: " << t.scenario << "  baseline: " << t.baseline << '\n';
  out << std::left << std::setw(14) << "tuner" << std::right << std::setw(10) << "avg/tuning"
      << std::setw(10) << "reconfs" << std::setw(9) << "tunings" << std::setw(12)
      << "reduction%" << '\n';
  for (const auto& r : t.rows) {
    out << std::left << std::setw(14) << r.tuner << std::right << std::fixed
        << std::setprecision(3) << std::setw(10) << r.avg_reconfigs_per_tuning << std::setw(10)
        << r.reconfigurations << std::setw(9) << r.tunings << std::setprecision(2)
        << std::setw(12) << r.reduction_pct << '\n';
  }
  out.unsetf(std::ios::floatfield);
}

inline void print_report(std::ostream& out, const TuningReport& r) {
  out << std::left;
  auto row = [&](const std::string& k, const auto& v) {
    out << std::setw(26) << k << v << '\n';
  };
  row("scenario", r.scenario);
  row("tuner", r.tuner);
  row("seed", r.seed);
  row("epochs", r.epochs);
  row("tunings", r.tunings);
  row("reconfigurations", r.reconfigurations);
  row("  big / small", std::to_string(r.reconfigs_big) + " / " + std::to_string(r.reconfigs_small));
  row("avg_reconfigs_per_tuning", r.avg_reconfigs_per_tuning);
  row("chi / phi / omega", std::to_string(r.chi) + " / " + std::to_string(r.phi_observed) +
                               " / " + std::to_string(r.omega_observed));
  row("max_cores", r.max_cores);
  row("total_core_seconds", r.total_core_seconds);
  row("backlog_pct", r.backlog_pct);
  row("drain_time_s", r.drain_time_s);
  row("sla_violated_epochs", r.sla_violated_epochs);
  row("under_provisioned_epochs", r.under_provisioned_epochs);
  if (r.tuner == "random") row("random_draws", r.random_draws);
}

}  // namespace conttune
