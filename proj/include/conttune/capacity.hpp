#pragma once

#include <cmath>
#include <string>

#include "conttune/error.hpp"

namespace conttune {

/// Ground-truth processing ability of an operator as a function of its
/// parallelism. Only the simulator sees these; tuners observe PA through
/// metrics.
struct CapacityCurve {
  enum class Family { Amdahl, Power };

  Family family = Family::Amdahl;
  /// Records/s of a single instance.
  double base_rate = 1.0;
  /// Amdahl: serial fraction in [0, 1). Power: exponent in (0, 1].
  double shape = 0.0;

  static CapacityCurve amdahl(double base_rate, double serial_fraction) {
    return {Family::Amdahl, base_rate, serial_fraction};
  }
  static CapacityCurve power(double base_rate, double exponent) {
    return {Family::Power, base_rate, exponent};
  }

  void validate(const std::string& where = "curve") const {
    if (!(base_rate > 0.0) || !std::isfinite(base_rate)) {
      throw Error(ErrorCode::ConfigError, where + ".base_rate must be > 0");
    }
    if (family == Family::Amdahl && !(shape >= 0.0 && shape < 1.0)) {
      throw Error(ErrorCode::ConfigError, where + ".serial_fraction must lie in [0, 1)");
    }
    if (family == Family::Power && !(shape > 0.0 && shape <= 1.0)) {
      throw Error(ErrorCode::ConfigError, where + ".exponent must lie in (0, 1]");
    }
  }

  bool operator==(const CapacityCurve&) const = default;
};

/// Records/s the operator sustains at parallelism p.
inline double capacity(const CapacityCurve& curve, int p) {
  if (p < 1) {
    throw Error(ErrorCode::NonPositiveParallelism, "capacity() at p=" + std::to_string(p));
  }
  const double n = static_cast<double>(p);
  switch (curve.family) {
    case CapacityCurve::Family::Amdahl:
      return curve.base_rate * n / (1.0 + curve.shape * (n - 1.0));
    case CapacityCurve::Family::Power:
      return curve.base_rate * std::pow(n, curve.shape);
  }
  return 0.0;
}

}  // namespace conttune
