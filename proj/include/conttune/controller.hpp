#pragma once

// Job-state classification from metrics and the decisionThr gate.

#include <algorithm>
#include <string>

#include "conttune/dag.hpp"
#include "conttune/error.hpp"
#include "conttune/simulator.hpp"

namespace conttune {

struct Thresholds {
  /// Percent in (0, 100].
  double backpressure_thr = 10.0;
  double core_min_thr = 0.4;
  double core_max_thr = 0.8;
  double decision_thr = 0.1;

  void validate() const {
    if (!(backpressure_thr > 0.0 && backpressure_thr <= 100.0)) {
      throw Error(ErrorCode::InvalidThresholds, "backpressureThr must lie in (0, 100]");
    }
    if (!(core_min_thr >= 0.0 && core_min_thr < core_max_thr && core_max_thr <= 1.0)) {
      throw Error(ErrorCode::InvalidThresholds, "need 0 <= coreMinThr < coreMaxThr <= 1");
    }
    if (!(decision_thr >= 0.0)) {
      throw Error(ErrorCode::InvalidThresholds, "decisionThr must be >= 0");
    }
  }
};

enum class PressureState { Backpressure, NonBackpressure };
enum class CpuState { Low, Normal, Stress };
enum class Provisioning { Over, Under, Steady };

inline std::string_view to_string(Provisioning p) {
  switch (p) {
    case Provisioning::Over: return "over";
    case Provisioning::Under: return "under";
    case Provisioning::Steady: return "steady";
  }
  return "steady";
}

/// backPressuredTimeMsPerSecond / allTime * 100 for one operator.
inline double backpressure_per(const OperatorMetrics& m) {
  const double all = m.all_time_ms();
  if (!(all > 0.0)) throw Error(ErrorCode::ZeroAllTime, "allTime is zero");
  return 100.0 * m.backpressured_ms / all;
}

/// Job-level percentage: the worst operator. A lagging source counts the
/// time its external feed is held back.
inline double backpressure_per(const MetricsSample& sample) {
  double worst = 0.0;
  for (const auto& [id, m] : sample.ops) {
    const double all = m.all_time_ms();
    if (!(all > 0.0)) throw Error(ErrorCode::ZeroAllTime, "allTime is zero for '" + id + "'");
    worst = std::max(worst, 100.0 * std::max(m.backpressured_ms, m.feed_blocked_ms) / all);
  }
  return worst;
}

inline PressureState classify_pressure(double per, const Thresholds& thr) {
  return per >= thr.backpressure_thr ? PressureState::Backpressure
                                     : PressureState::NonBackpressure;
}

inline CpuState classify_cpu(double usage, const Thresholds& thr) {
  if (usage < thr.core_min_thr) return CpuState::Low;
  if (usage > thr.core_max_thr) return CpuState::Stress;
  return CpuState::Normal;
}

/// Over: cpuLow and no backpressure. Under: backpressure and cpuStress.
/// Backpressure without CPU stress (e.g. skew or memory pressure) is left
/// alone.
inline Provisioning provisioning_state(PressureState pressure, CpuState cpu) {
  if (cpu == CpuState::Low && pressure == PressureState::NonBackpressure) {
    return Provisioning::Over;
  }
  if (cpu == CpuState::Stress && pressure == PressureState::Backpressure) {
    return Provisioning::Under;
  }
  return Provisioning::Steady;
}

inline Provisioning classify(const MetricsSample& sample, const Thresholds& thr) {
  return provisioning_state(classify_pressure(backpressure_per(sample), thr),
                            classify_cpu(sample.cpu_usage, thr));
}

/// Applies a new assignment only when the summed parallelism moves by at
/// least a factor (1 + decisionThr) in either direction.
inline bool should_apply(const ParallelismAssignment& next, const ParallelismAssignment& current,
                         double decision_thr) {
  if (next.size() != current.size()) {
    throw Error(ErrorCode::AssignmentMismatch, "assignments cover different operators");
  }
  for (const auto& [id, p] : next) {
    if (!current.count(id)) {
      throw Error(ErrorCode::AssignmentMismatch, "operator '" + id + "' missing from current");
    }
  }
  const double s_new = total_parallelism(next);
  const double s_cur = total_parallelism(current);
  // Scaled comparison keeps the boundary ratio == 1 + thr exact for the
  // ratios that can occur with integer sums.
  if (s_new < s_cur) return s_cur >= (1.0 + decision_thr) * s_new * (1.0 - 1e-12);
  if (s_new > s_cur) return s_new >= (1.0 + decision_thr) * s_cur * (1.0 - 1e-12);
  return false;
}

}  // namespace conttune
