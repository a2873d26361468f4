#include <gtest/gtest.h>

#include <random>

#include "fixtures.hpp"

using namespace conttune;
using fixtures::chain;
using fixtures::linear;

namespace {

GpModel line_model() {
  KernelConfig k;
  k.noise_variance = 0.0;
  k.prior_mean = PriorMean::Proportional;
  return GpModel::fit({{1, 100}, {4, 400}, {9, 900}}, k);
}

struct Job {
  Simulator sim;
  SimulatedJob job;
  Job(LogicalDag d, std::map<OperatorId, CapacityCurve> c, ParallelismAssignment a, RateMap r,
      Thresholds thr = {}, MeasureConfig mc = {})
      : sim(std::move(d), std::move(c), std::move(a)), job(sim, thr, mc) {
    sim.set_source_rates(r);
  }
};

// src -> op -> sink where only `op` can be a bottleneck.
Job op_bound(double rate, int p = 1, Thresholds thr = {}, MeasureConfig mc = {}) {
  auto d = fixtures::src_op_sink();
  return Job(d, linear({{"src", 1e6}, {"op", 100}, {"sink", 1e6}}), uniform_assignment(d, p),
             {{"src", rate}}, thr, mc);
}

// Three equal operators: all saturate together, so CPU reads as stressed.
Job uniform_chain(double rate, int p = 1, Thresholds thr = {}, MeasureConfig mc = {}) {
  auto d = chain({"a", "b", "c"});
  return Job(d, linear({{"a", 100}, {"b", 100}, {"c", 100}}), uniform_assignment(d, p),
             {{"a", rate}}, thr, mc);
}

}  // namespace

// ------------------------------------------------------------ acquisitions

TEST(Acquisition, SmallestFeasibleLevel) {
  const auto m = line_model();
  EXPECT_EQ(acquisition_conttune(m, 350, 10, 10), 4);
  EXPECT_FALSE(acquisition_conttune(m, 1e9, 10, 10).has_value());
}

TEST(Acquisition, IndicatorIncludesEquality) {
  const auto m = line_model();
  const double lam = m.predict(4).mean;
  EXPECT_EQ(acquisition_conttune(m, lam, 10, 10), 4);
}

TEST(Acquisition, NeverBelowLambdaOnRandomModels) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 300; ++t) {
    std::vector<std::pair<double, double>> data;
    for (int i = 0; i < 1 + static_cast<int>(u(rng) * 6); ++i) {
      const double p = 1 + static_cast<int>(u(rng) * 30);
      data.emplace_back(p, 80 * p * (0.6 + 0.8 * u(rng)));
    }
    const auto m = GpModel::fit(data, KernelConfig{});
    const double lam = 3000 * u(rng);
    const int p_star = 1 + static_cast<int>(u(rng) * 30);
    const auto p = acquisition_conttune(m, lam, 30, p_star);
    // Independent scan: the smallest level whose mean covers lambda.
    std::optional<int> want;
    for (int q = 1; q <= 30 && !want; ++q) {
      if (m.predict(q).mean >= lam) want = q;
    }
    EXPECT_EQ(p, want);
  }
}

TEST(Acquisition, CeiMatchesWithoutUncertainty) {
  KernelConfig k;
  k.noise_variance = 0.0;
  k.prior_mean = PriorMean::Proportional;
  std::vector<std::pair<double, double>> data;
  for (int p = 1; p <= 10; ++p) data.emplace_back(p, 100.0 * p);
  const auto m = GpModel::fit(data, k);
  EXPECT_EQ(acquisition_cei(m, 350, 10, 10), acquisition_conttune(m, 350, 10, 10));
  EXPECT_FALSE(acquisition_cei(m, 350, 10, 1).has_value());
}

TEST(Acquisition, CeiCanPickInfeasibleLevel) {
  KernelConfig k;
  k.length_scale = 1.0;
  k.prior_mean = PriorMean::Proportional;
  const auto m = GpModel::fit({{10, 1000}, {11, 1100}}, k);
  const auto p = acquisition_cei(m, 1000, 11, 10);
  ASSERT_TRUE(p.has_value());
  EXPECT_LT(m.predict(*p).mean, 1000.0);
  // Direct evaluation of (p_star - p) * Pr[f >= lambda] agrees.
  double best = 0;
  int arg = 0;
  for (int q = 1; q <= 11; ++q) {
    const auto pr = m.predict(q);
    const double z = (1000 - pr.mean) / std::sqrt(pr.variance);
    const double v = (10 - q) * 0.5 * std::erfc(z / std::sqrt(2.0));
    if (v > best) {
      best = v;
      arg = q;
    }
  }
  EXPECT_EQ(*p, arg);
}

TEST(LinearFallback, Examples) {
  EXPECT_EQ(ds2_suggest(2, 1000, 400), 5);
  EXPECT_EQ(ds2_suggest(2, 150, 400), 1);
  EXPECT_EQ(ds2_suggest(1, 1000, 300), 4);
  EXPECT_EQ(ds2_suggest(1, 1e9, 1, 90), 90);
  try {
    ds2_suggest(2, 10, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroProcessingAbility);
  }
}

// ---------------------------------------------------------------------- CBO

TEST(Cbo, WorkedExampleBranches) {
  HistoryStore s;
  for (int p : {1, 4, 9, 10, 15}) s.record("op", p, 100.0 * p, 0);
  TunerConfig cfg;
  cfg.alpha = 2;
  const auto fast = cbo_suggest("op", 1250, s, cfg, 15, 15);
  EXPECT_EQ(fast.p_acq, 13);
  EXPECT_EQ(fast.d_nearest, 2.0);
  EXPECT_EQ(fast.provenance, Provenance::FastExploitation);
  EXPECT_EQ(fast.p, 13);
  cfg.alpha = 1;
  const auto cons = cbo_suggest("op", 1250, s, cfg, 15, 15);
  EXPECT_EQ(cons.provenance, Provenance::ConservativeExploration);
  EXPECT_EQ(cons.p, ds2_suggest(15, 1250, 1500));
}

TEST(Cbo, ColdStartIsConservative) {
  HistoryStore s;
  TunerConfig cfg;
  const auto r = cbo_suggest("op", 1000, s, cfg, 8, 2, 400.0);
  EXPECT_EQ(r.provenance, Provenance::ConservativeExploration);
  EXPECT_EQ(r.p, 5);
}

TEST(Cbo, ParallelSmallPhaseEqualsSequential) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 20; ++t) {
    HistoryStore s;
    ParallelismAssignment cur;
    RateMap lam;
    for (int i = 0; i < 6; ++i) {
      const std::string id = "o" + std::to_string(i);
      cur[id] = 1 + static_cast<int>(u(rng) * 20);
      lam[id] = 2000 * u(rng);
      s.record(id, cur[id], 90 * cur[id], 0);
      for (int j = 0; j < 4; ++j) {
        const int p = 1 + static_cast<int>(u(rng) * 20);
        s.record(id, p, 90 * p * (0.8 + 0.4 * u(rng)), j);
      }
    }
    TunerConfig seq;
    seq.concurrent = false;
    TunerConfig par;
    par.concurrent = true;
    const auto a = small_phase(cur, lam, s, seq, 20);
    const auto b = small_phase(cur, lam, s, par, 20);
    EXPECT_EQ(a.assignment, b.assignment);
    EXPECT_EQ(a.provenance, b.provenance);
  }
}

// ------------------------------------------------------------------ Big phase

TEST(BigPhase, SufficientPMaxTakesOneReconfiguration) {
  auto j = op_bound(700);
  HistoryStore s;
  const auto r = big_phase(j.job, s, 8, 90);
  EXPECT_EQ(r.reconfigurations, 1);
  EXPECT_EQ(j.job.last().pressure, PressureState::NonBackpressure);
  EXPECT_FALSE(s.empty());
}

TEST(BigPhase, DoublesOnce) {
  auto j = op_bound(700);
  HistoryStore s;
  const auto r = big_phase(j.job, s, 4, 90);
  EXPECT_EQ(r.reconfigurations, 2);
  ASSERT_EQ(r.applied.size(), 2u);
  EXPECT_EQ(r.applied[0].at("op"), 4);
  EXPECT_EQ(r.applied[1].at("op"), 8);
  EXPECT_EQ(r.final_p_max, 8);
}

TEST(BigPhase, LogBoundFromFour) {
  auto j = op_bound(3250);  // p* = 33
  HistoryStore s;
  const auto r = big_phase(j.job, s, 4, 90);
  std::vector<int> levels;
  for (const auto& a : r.applied) levels.push_back(a.at("op"));
  EXPECT_EQ(levels, (std::vector<int>{4, 8, 16, 32, 64}));
  EXPECT_LE(r.reconfigurations, static_cast<int>(std::ceil(std::log2(33.0 / 4))) + 1);
  EXPECT_NE(j.job.last().state, Provisioning::Under);
}

TEST(BigPhase, HardCapStopsRunawayDoubling) {
  auto j = op_bound(1e5);
  HistoryStore s;
  try {
    big_phase(j.job, s, 4, 16);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PMaxExceeded);
  }
}

// ------------------------------------------------------------- job + gate

TEST(Job, MeasureUsesAlignedWindows) {
  auto j = op_bound(50);
  j.sim.advance();
  const auto& m = j.job.measure();
  EXPECT_NEAR(std::fmod(m.sample.t, 30.0), 0.0, 1e-9);
  EXPECT_DOUBLE_EQ(m.sample.duration, 30.0);
}

TEST(Job, GateAndUnderExemption) {
  Thresholds thr;
  thr.decision_thr = 0.5;
  const ParallelismAssignment plus_one{{"a", 2}, {"b", 3}, {"c", 2}};
  auto j = uniform_chain(250, 2, thr);
  j.job.measure();
  j.job.measure();
  ASSERT_EQ(j.job.last().state, Provisioning::Under);
  // +1 on a sum of 6 is below the gate but exempt: the job is under.
  EXPECT_EQ(j.job.apply(plus_one, Phase::Small), ApplyOutcome::Applied);

  MeasureConfig strict;
  strict.gate_exempt_under_scale_up = false;
  auto k = uniform_chain(250, 2, thr, strict);
  k.job.measure();
  k.job.measure();
  EXPECT_EQ(k.job.apply(plus_one, Phase::Small), ApplyOutcome::Gated);
  EXPECT_EQ(k.job.counters().gated, 1);
  EXPECT_EQ(k.job.apply(k.job.assignment(), Phase::Small), ApplyOutcome::Unchanged);
}

TEST(Job, ScaleUpIsJudgedOnTheSum) {
  EXPECT_TRUE(is_scale_up({{"a", 5}, {"b", 1}}, {{"a", 2}, {"b", 2}}));
  EXPECT_FALSE(is_scale_up({{"a", 3}, {"b", 1}}, {{"a", 2}, {"b", 2}}));
  EXPECT_FALSE(is_scale_up({{"a", 1}, {"b", 1}}, {{"a", 2}, {"b", 2}}));
}

// A source that lags by a few percent shows little blocked time but is
// flagged as falling behind.
TEST(Job, SlaFlagWithoutBackpressure) {
  auto d = chain({"src", "sink"});
  Simulator sim(d, linear({{"src", 100}, {"sink", 1e6}}), uniform_assignment(d, 1));
  sim.set_source_rates({{"src", 103}});
  SimulatedJob job(sim, Thresholds{});
  job.measure();
  const auto& m = job.measure();
  EXPECT_TRUE(m.sla_violated);
  EXPECT_LT(m.backpressure_per, 10.0);
  EXPECT_TRUE(sources_falling_behind(d, m.sample));
}

TEST(Job, ObservationsOnlyForBusyOperators) {
  auto j = op_bound(100, 2);
  const auto& m = j.job.measure();
  HistoryStore s;
  j.job.record_observations(s, m);
  EXPECT_EQ(s.levels("op"), (std::vector<int>{2}));
  EXPECT_NEAR(*s.topk_pa("op", 2), 200.0, 1e-9);
}

// ---------------------------------------------------------------- tuners

TEST(ContTune, OverProvisionedStartTakesOneSmallStep) {
  auto d = chain({"a", "b", "c"});
  Simulator sim(d, linear({{"a", 100}, {"b", 100}, {"c", 100}}), uniform_assignment(d, 10));
  sim.set_source_rates({{"a", 150}});
  SimulatedJob job(sim, Thresholds{});
  job.measure();
  ASSERT_EQ(job.last().state, Provisioning::Over);
  ContTuneTuner t(TunerConfig{});
  t.tune(job);
  EXPECT_EQ(job.counters().reconfigurations, 1);
  EXPECT_EQ(job.counters().big, 0);
  EXPECT_EQ(job.assignment(), (ParallelismAssignment{{"a", 2}, {"b", 2}, {"c", 2}}));
}

TEST(ContTune, UnchangedSuggestionCostsNothing) {
  auto j = op_bound(10, 1);
  j.job.measure();
  ASSERT_EQ(j.job.last().state, Provisioning::Over);
  ContTuneTuner t(TunerConfig{});
  t.tune(j.job);
  EXPECT_EQ(j.job.counters().reconfigurations, 0);
}

TEST(ContTune, UnderProvisionedRunsBigThenOneSmall) {
  auto j = uniform_chain(650, 1);
  j.job.measure();
  ASSERT_EQ(j.job.last().state, Provisioning::Under);
  ContTuneTuner t(TunerConfig{});
  t.tune(j.job);
  EXPECT_GE(j.job.counters().big, 1);
  EXPECT_LE(j.job.counters().small, 1);
  EXPECT_EQ(j.job.last().pressure, PressureState::NonBackpressure);
  EXPECT_GE(j.job.assignment().at("b"), 7);
}

TEST(ContTune, ReachesOracleOnLinearChain) {
  auto d = chain({"a", "b", "c"});
  const auto curves = linear({{"a", 310}, {"b", 120}, {"c", 200}});
  Simulator sim(d, curves, uniform_assignment(d, 1));
  const RateMap rate{{"a", 1500}};
  sim.set_source_rates(rate);
  Thresholds thr;
  thr.decision_thr = 0.0;
  SimulatedJob job(sim, thr);
  ContTuneTuner t(TunerConfig{});
  for (int i = 0; i < 10; ++i) {
    job.measure();
    t.tune(job);
  }
  EXPECT_EQ(job.assignment(), oracle_for_sources(d, curves, rate, 90));
}

TEST(Dhalion, ScalesBottleneckByOfferedOverProcessed) {
  const auto d = chain({"src", "op", "sink"});
  MetricsSample s;
  s.ops["src"] = {200, 0, 800};
  s.ops["src"].observed_rate = 100;
  s.ops["src"].arrival_rate = 100;
  s.ops["op"] = {0, 0, 1000};
  s.ops["op"].arrival_rate = 150;
  s.ops["op"].observed_rate = 100;
  s.ops["sink"] = {0, 900, 100};
  s.cpu_usage = 0.9;
  const auto next = dhalion_step(d, s, {{"src", 2}, {"op", 4}, {"sink", 1}}, Thresholds{});
  EXPECT_EQ(next.at("op"), 6);  // max(1.5, 1000/800) * 4
  EXPECT_EQ(next.at("src"), 2);
  EXPECT_EQ(next.at("sink"), 1);
}

TEST(Dhalion, IdleJobShrinks) {
  const auto d = chain({"src", "op", "sink"});
  MetricsSample s;
  s.ops["src"] = {0, 900, 100};
  s.ops["op"] = {0, 800, 200};
  s.ops["sink"] = {0, 950, 50};
  s.cpu_usage = 0.1;
  const ParallelismAssignment cur{{"src", 4}, {"op", 4}, {"sink", 4}};
  Thresholds exact;
  exact.decision_thr = 0.0;
  const auto one = dhalion_step(d, s, cur, exact);
  EXPECT_EQ(total_parallelism(one), 11);
  EXPECT_EQ(one.at("sink"), 3);
  const auto batched = dhalion_step(d, s, cur, Thresholds{});
  EXPECT_TRUE(should_apply(batched, cur, 0.1));
  for (const auto& [id, p] : batched) {
    EXPECT_LE(s.op(id).busy_fraction() * cur.at(id) / p, 0.8 + 1e-12);
  }
}

TEST(Dhalion, CascadeNeedsSeveralRounds) {
  auto d = chain({"src", "a", "b", "sink"});
  Simulator sim(d, linear({{"src", 1e6}, {"a", 100}, {"b", 150}, {"sink", 1e6}}),
                uniform_assignment(d, 1));
  sim.set_source_rates({{"src", 400}});
  SimulatedJob job(sim, Thresholds{});
  job.measure();
  DhalionTuner t(TunerConfig{});
  t.tune(job);
  EXPECT_GE(job.counters().reconfigurations, 2);
}

TEST(Ds2, LinearCurvesConvergeInOneRound) {
  auto d = chain({"a", "b", "c"});
  const auto curves = linear({{"a", 400}, {"b", 90}, {"c", 150}});
  Simulator sim(d, curves, uniform_assignment(d, 20));
  const RateMap rate{{"a", 1000}};
  sim.set_source_rates(rate);
  SimulatedJob job(sim, Thresholds{});
  job.measure();
  ASSERT_EQ(job.last().state, Provisioning::Over);
  Ds2Tuner t(TunerConfig{}, false);
  t.tune(job);
  EXPECT_EQ(job.counters().reconfigurations, 1);
  EXPECT_EQ(job.assignment(), oracle_for_sources(d, curves, rate, 90));
}

TEST(RandomSearch, DrawsWithinRange) {
  std::mt19937_64 rng(1);
  const std::vector<OperatorId> ops{"a", "b"};
  EXPECT_EQ(random_search_step(rng, ops, 1), (ParallelismAssignment{{"a", 1}, {"b", 1}}));
  std::vector<int> hits(6, 0);
  for (int i = 0; i < 6000; ++i) {
    const auto a = random_search_step(rng, ops, 5);
    ASSERT_GE(a.at("a"), 1);
    ASSERT_LE(a.at("a"), 5);
    ++hits[a.at("a")];
  }
  for (int p = 1; p <= 5; ++p) EXPECT_NEAR(hits[p], 1200, 150);
}

TEST(CeiBo, ColdStartFavoursSmallLevels) {
  HistoryStore empty;
  EXPECT_EQ(vanilla_bo_suggest("op", 500, empty, KernelConfig{}, 20, 10), 1);
}

// --------------------------------------------------------------- loop

TEST(Loop, SteadyTraceNeedsNoReconfiguration) {
  auto d = chain({"a", "b", "c"});
  Simulator sim(d, linear({{"a", 100}, {"b", 100}, {"c", 100}}), uniform_assignment(d, 2));
  SimulatedJob job(sim, Thresholds{});
  ContTuneTuner t(TunerConfig{});
  WorkloadTrace trace;
  trace.epochs.assign(3, TraceEpoch{600, {{"a", 120}}, 0});
  const auto recs = run_tuning_loop(job, t, trace);
  ASSERT_EQ(recs.size(), 3u);
  for (const auto& r : recs) {
    EXPECT_EQ(r.triggers, 0);
    EXPECT_EQ(r.reconfigurations, 0);
  }
}

TEST(Loop, SpikeTriggersBigAndRecovers) {
  auto j = uniform_chain(150, 2);
  ContTuneTuner t(TunerConfig{});
  WorkloadTrace trace;
  trace.epochs = {TraceEpoch{600, {{"a", 150}}, 0}, TraceEpoch{1200, {{"a", 1500}}, 0}};
  const auto recs = run_tuning_loop(j.job, t, trace);
  EXPECT_GE(recs[1].big, 1);
  EXPECT_FALSE(recs[1].end_backpressured);
  EXPECT_FALSE(recs[1].end_sla_violated);
}
