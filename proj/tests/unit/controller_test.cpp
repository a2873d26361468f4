#include <gtest/gtest.h>

#include "fixtures.hpp"

using namespace conttune;

TEST(Backpressure, PerOperatorPercent) {
  OperatorMetrics m;
  m.backpressured_ms = 200;
  m.idle_ms = 300;
  m.busy_ms = 500;
  EXPECT_DOUBLE_EQ(backpressure_per(m), 20.0);
  m.backpressured_ms = 0;
  EXPECT_DOUBLE_EQ(backpressure_per(m), 0.0);
  OperatorMetrics z;
  try {
    backpressure_per(z);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroAllTime);
  }
}

TEST(Backpressure, JobTakesWorstOperatorIncludingFeed) {
  MetricsSample s;
  s.ops["a"] = {100, 400, 500};
  s.ops["b"] = {300, 200, 500};
  EXPECT_DOUBLE_EQ(backpressure_per(s), 30.0);
  s.ops["a"].feed_blocked_ms = 600;
  EXPECT_DOUBLE_EQ(backpressure_per(s), 60.0);
}

TEST(Classify, PressureBoundary) {
  Thresholds t;
  t.backpressure_thr = 50;
  EXPECT_EQ(classify_pressure(50, t), PressureState::Backpressure);
  EXPECT_EQ(classify_pressure(49.9, t), PressureState::NonBackpressure);
  t.backpressure_thr = 1;
  EXPECT_EQ(classify_pressure(0, t), PressureState::NonBackpressure);
}

TEST(Classify, CpuBandIsInclusive) {
  Thresholds t;
  t.core_min_thr = 0.3;
  t.core_max_thr = 0.8;
  EXPECT_EQ(classify_cpu(0.1, t), CpuState::Low);
  EXPECT_EQ(classify_cpu(0.3, t), CpuState::Normal);
  EXPECT_EQ(classify_cpu(0.8, t), CpuState::Normal);
  EXPECT_EQ(classify_cpu(0.9, t), CpuState::Stress);
}

TEST(Classify, ProvisioningGrid) {
  using P = PressureState;
  using C = CpuState;
  EXPECT_EQ(provisioning_state(P::NonBackpressure, C::Low), Provisioning::Over);
  EXPECT_EQ(provisioning_state(P::NonBackpressure, C::Normal), Provisioning::Steady);
  EXPECT_EQ(provisioning_state(P::NonBackpressure, C::Stress), Provisioning::Steady);
  EXPECT_EQ(provisioning_state(P::Backpressure, C::Low), Provisioning::Steady);
  EXPECT_EQ(provisioning_state(P::Backpressure, C::Normal), Provisioning::Steady);
  EXPECT_EQ(provisioning_state(P::Backpressure, C::Stress), Provisioning::Under);
}

TEST(Gate, Examples) {
  const ParallelismAssignment ten{{"a", 5}, {"b", 5}};
  EXPECT_TRUE(should_apply({{"a", 7}, {"b", 5}}, ten, 0.1));
  EXPECT_FALSE(should_apply(ten, ten, 0.1));
  EXPECT_FALSE(should_apply({{"a", 4}, {"b", 5}}, ten, 0.2));
  // Same sum, different split: never applied.
  EXPECT_FALSE(should_apply({{"a", 9}, {"b", 1}}, ten, 0.0));
  EXPECT_THROW(should_apply({{"a", 1}}, ten, 0.1), Error);
  EXPECT_THROW(should_apply({{"a", 1}, {"c", 1}}, ten, 0.1), Error);
}

// Ratio exactly 1 + thr applies for every integer pair where it occurs.
TEST(Gate, BoundaryIsInclusiveForIntegerSums) {
  for (int cur = 1; cur <= 300; ++cur) {
    for (int next = 1; next <= 300; ++next) {
      const ParallelismAssignment c{{"x", cur}};
      const ParallelismAssignment n{{"x", next}};
      for (int pct : {0, 5, 10, 20, 50}) {
        const double thr = pct / 100.0;
        const int hi = std::max(cur, next);
        const int lo = std::min(cur, next);
        // Integer form of hi / lo >= 1 + pct / 100.
        const bool want = hi != lo && 100LL * hi >= (100LL + pct) * lo;
        ASSERT_EQ(should_apply(n, c, thr), want) << cur << "->" << next << " thr " << thr;
      }
    }
  }
}

TEST(Thresholds, Validation) {
  Thresholds t;
  EXPECT_NO_THROW(t.validate());
  t.core_min_thr = 0.9;
  EXPECT_THROW(t.validate(), Error);
  Thresholds u;
  u.decision_thr = -0.1;
  EXPECT_THROW(u.validate(), Error);
}
