#pragma once

#include <map>
#include <string>
#include <vector>

#include "conttune/harness.hpp"

namespace fixtures {

using namespace conttune;

inline LogicalDag chain(const std::vector<std::string>& ids) {
  LogicalDag d;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto kind = i == 0                ? OperatorKind::Source
                      : i + 1 == ids.size() ? OperatorKind::Sink
                                            : OperatorKind::Stateless;
    d.operators.push_back({ids[i], kind, 1.0, 0.0});
    if (i > 0) d.edges.push_back({ids[i - 1], ids[i]});
  }
  return d;
}

inline LogicalDag src_op_sink() { return chain({"src", "op", "sink"}); }

// Linear curves: capacity(p) = base * p.
inline std::map<OperatorId, CapacityCurve> linear(const std::map<OperatorId, double>& base) {
  std::map<OperatorId, CapacityCurve> out;
  for (const auto& [id, b] : base) out[id] = CapacityCurve::amdahl(b, 0.0);
  return out;
}

inline std::string source_dir() { return CONTTUNE_SOURCE_DIR; }

}  // namespace fixtures
