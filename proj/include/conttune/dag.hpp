#pragma once

// Job model: logical operator graph, parallelism assignments and the derived
// physical graph (one CPU core per operator instance).

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <queue>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "conttune/error.hpp"

namespace conttune {

using OperatorId = std::string;

enum class OperatorKind { Source, Stateless, Stateful, Sink };

inline std::string_view to_string(OperatorKind kind) {
  switch (kind) {
    case OperatorKind::Source: return "source";
    case OperatorKind::Stateless: return "stateless";
    case OperatorKind::Stateful: return "stateful";
    case OperatorKind::Sink: return "sink";
  }
  return "stateless";
}

inline std::optional<OperatorKind> parse_operator_kind(std::string_view s) {
  if (s == "source") return OperatorKind::Source;
  if (s == "stateless") return OperatorKind::Stateless;
  if (s == "stateful") return OperatorKind::Stateful;
  if (s == "sink") return OperatorKind::Sink;
  return std::nullopt;
}

struct OperatorSpec {
  OperatorId id;
  OperatorKind kind = OperatorKind::Stateless;
  /// Long-run mean of output records per input record.
  double mean_selectivity = 1.0;
  /// Coefficient of variation of the per-window selectivity draw.
  double selectivity_noise_cv = 0.0;

  bool operator==(const OperatorSpec&) const = default;
};

using Edge = std::pair<OperatorId, OperatorId>;

struct LogicalDag {
  std::vector<OperatorSpec> operators;
  /// (producer, consumer) pairs.
  std::vector<Edge> edges;

  std::size_t size() const { return operators.size(); }

  std::optional<std::size_t> index_of(std::string_view id) const {
    for (std::size_t i = 0; i < operators.size(); ++i) {
      if (operators[i].id == id) return i;
    }
    return std::nullopt;
  }

  const OperatorSpec& op(std::string_view id) const {
    auto idx = index_of(id);
    if (!idx) throw Error(ErrorCode::UnknownOperator, std::string(id));
    return operators[*idx];
  }

  std::vector<OperatorId> upstream_of(std::string_view id) const {
    std::vector<OperatorId> out;
    for (const auto& [from, to] : edges) {
      if (to == id) out.push_back(from);
    }
    return out;
  }

  std::vector<OperatorId> downstream_of(std::string_view id) const {
    std::vector<OperatorId> out;
    for (const auto& [from, to] : edges) {
      if (from == id) out.push_back(to);
    }
    return out;
  }

  std::vector<OperatorId> sources() const {
    std::vector<OperatorId> out;
    for (const auto& o : operators) {
      if (o.kind == OperatorKind::Source) out.push_back(o.id);
    }
    return out;
  }

  bool operator==(const LogicalDag&) const = default;
};

/// Operator id -> level of parallelism.
using ParallelismAssignment = std::map<OperatorId, int>;

inline int total_parallelism(const ParallelismAssignment& a) {
  return std::accumulate(a.begin(), a.end(), 0,
                         [](int acc, const auto& kv) { return acc + kv.second; });
}

struct PhysicalDag {
  LogicalDag dag;
  ParallelismAssignment assignment;
  int total_cores = 0;
};

namespace detail {

// Kahn's algorithm with a min-heap on operator id so the order is unique.
// Returns the ids that could be ordered; fewer than N means a cycle.
inline std::vector<OperatorId> kahn_order(const LogicalDag& dag) {
  std::map<OperatorId, int> indegree;
  std::map<OperatorId, std::vector<OperatorId>> out;
  for (const auto& o : dag.operators) indegree[o.id] = 0;
  for (const auto& [from, to] : dag.edges) {
    if (!indegree.count(from) || !indegree.count(to)) continue;
    ++indegree[to];
    out[from].push_back(to);
  }
  std::priority_queue<OperatorId, std::vector<OperatorId>, std::greater<>> ready;
  for (const auto& [id, deg] : indegree) {
    if (deg == 0) ready.push(id);
  }
  std::vector<OperatorId> order;
  order.reserve(indegree.size());
  while (!ready.empty()) {
    OperatorId id = ready.top();
    ready.pop();
    order.push_back(id);
    for (const auto& next : out[id]) {
      if (--indegree[next] == 0) ready.push(next);
    }
  }
  return order;
}

}  // namespace detail

/// Throws Error(CyclicGraph | DanglingEdge | EmptyDag | DegreeViolation |
/// DuplicateOperator | InvalidOperator) naming the offending element.
inline void validate_dag(const LogicalDag& dag) {
  if (dag.operators.size() <= 1) {
    throw Error(ErrorCode::EmptyDag,
                "a job needs more than one operator, got " +
                    std::to_string(dag.operators.size()));
  }
  std::map<OperatorId, const OperatorSpec*> by_id;
  for (const auto& o : dag.operators) {
    if (o.id.empty()) throw Error(ErrorCode::InvalidOperator, "operator with empty id");
    if (!by_id.emplace(o.id, &o).second) {
      throw Error(ErrorCode::DuplicateOperator, "operator '" + o.id + "' declared twice");
    }
    if (!(o.mean_selectivity >= 0.0)) {
      throw Error(ErrorCode::InvalidOperator,
                  "operator '" + o.id + "': mean_selectivity must be >= 0");
    }
    if (!(o.selectivity_noise_cv >= 0.0)) {
      throw Error(ErrorCode::InvalidOperator,
                  "operator '" + o.id + "': selectivity_noise_cv must be >= 0");
    }
    if (o.kind == OperatorKind::Stateless && o.selectivity_noise_cv != 0.0) {
      throw Error(ErrorCode::InvalidOperator,
                  "operator '" + o.id + "': stateless operators have no selectivity noise");
    }
  }
  std::map<Edge, int> seen;
  for (const auto& e : dag.edges) {
    const auto& [from, to] = e;
    if (from == to) throw Error(ErrorCode::CyclicGraph, "self-loop on '" + from + "'");
    if (!by_id.count(from)) {
      throw Error(ErrorCode::DanglingEdge,
                  "edge [" + from + ", " + to + "] references unknown producer '" + from + "'");
    }
    if (!by_id.count(to)) {
      throw Error(ErrorCode::DanglingEdge,
                  "edge [" + from + ", " + to + "] references unknown consumer '" + to + "'");
    }
    if (++seen[e] > 1) {
      throw Error(ErrorCode::DanglingEdge, "duplicate edge [" + from + ", " + to + "]");
    }
  }
  auto order = detail::kahn_order(dag);
  if (order.size() != dag.operators.size()) {
    std::vector<OperatorId> stuck;
    for (const auto& o : dag.operators) {
      if (std::find(order.begin(), order.end(), o.id) == order.end()) stuck.push_back(o.id);
    }
    std::string names;
    for (const auto& s : stuck) names += (names.empty() ? "" : ", ") + s;
    throw Error(ErrorCode::CyclicGraph, "cycle through {" + names + "}");
  }
  for (const auto& o : dag.operators) {
    bool has_in = false;
    bool has_out = false;
    for (const auto& [from, to] : dag.edges) {
      has_in = has_in || to == o.id;
      has_out = has_out || from == o.id;
    }
    if (o.kind == OperatorKind::Source && has_in) {
      throw Error(ErrorCode::DegreeViolation, "source '" + o.id + "' has an incoming edge");
    }
    if (o.kind == OperatorKind::Sink && has_out) {
      throw Error(ErrorCode::DegreeViolation, "sink '" + o.id + "' has an outgoing edge");
    }
    if (o.kind != OperatorKind::Source && !has_in) {
      throw Error(ErrorCode::DegreeViolation,
                  "non-source operator '" + o.id + "' has no incoming edge");
    }
  }
}

/// Producers before consumers; ties broken by ascending operator id.
inline std::vector<OperatorId> topological_order(const LogicalDag& dag) {
  auto order = detail::kahn_order(dag);
  if (order.size() != dag.operators.size()) {
    throw Error(ErrorCode::CyclicGraph, "graph has a cycle");
  }
  return order;
}

inline void check_assignment(const LogicalDag& dag, const ParallelismAssignment& a) {
  for (const auto& o : dag.operators) {
    auto it = a.find(o.id);
    if (it == a.end()) {
      throw Error(ErrorCode::MissingAssignment, "no parallelism for operator '" + o.id + "'");
    }
    if (it->second < 1) {
      throw Error(ErrorCode::NonPositiveParallelism,
                  "operator '" + o.id + "' has parallelism " + std::to_string(it->second));
    }
  }
  for (const auto& [id, p] : a) {
    if (!dag.index_of(id)) {
      throw Error(ErrorCode::UnknownOperator, "assignment names unknown operator '" + id + "'");
    }
  }
}

inline PhysicalDag apply_parallelism(const LogicalDag& dag, const ParallelismAssignment& a) {
  check_assignment(dag, a);
  return PhysicalDag{dag, a, total_parallelism(a)};
}

inline ParallelismAssignment uniform_assignment(const LogicalDag& dag, int p) {
  ParallelismAssignment a;
  for (const auto& o : dag.operators) a[o.id] = p;
  return a;
}

// ---------------------------------------------------------------------------
// JSON document:
//   { "operators": [ {"id": "src", "kind": "source",
//                     "mean_selectivity": 1.0, "selectivity_noise_cv": 0.0}, ... ],
//     "edges": [ ["src", "map"], ... ] }

namespace detail {

inline std::string line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  std::size_t col = 1;
  for (std::size_t i = 0; i < text.size() && i + 1 < byte; ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace detail

/// Parses text into JSON; syntax errors are reported with line and column.
inline nlohmann::json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::ConfigError,
                origin + ": " + detail::line_col(text, e.byte) + ": malformed JSON");
  }
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace detail {

template <typename T>
T require_field(const nlohmann::json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw Error(ErrorCode::ConfigError, path + "." + key + ": missing");
  }
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::ConfigError, path + "." + key + ": wrong type");
  }
}

template <typename T>
T optional_field(const nlohmann::json& obj, const std::string& key, const std::string& path,
                 T fallback) {
  if (!obj.is_object() || !obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::ConfigError, path + "." + key + ": wrong type");
  }
}

}  // namespace detail

/// Builds and validates a DAG from its JSON document. Field errors cite the
/// JSON path, e.g. `operators[2].kind`.
inline LogicalDag dag_from_json(const nlohmann::json& doc, const std::string& origin = "dag") {
  LogicalDag dag;
  if (!doc.is_object()) throw Error(ErrorCode::ConfigError, origin + ": expected an object");
  if (!doc.contains("operators") || !doc["operators"].is_array()) {
    throw Error(ErrorCode::ConfigError, origin + ".operators: missing or not an array");
  }
  const auto& ops = doc["operators"];
  for (std::size_t i = 0; i < ops.size(); ++i) {
    const std::string path = origin + ".operators[" + std::to_string(i) + "]";
    OperatorSpec spec;
    spec.id = detail::require_field<std::string>(ops[i], "id", path);
    auto kind_text = detail::require_field<std::string>(ops[i], "kind", path);
    auto kind = parse_operator_kind(kind_text);
    if (!kind) {
      throw Error(ErrorCode::ConfigError, path + ".kind: unknown kind '" + kind_text + "'");
    }
    spec.kind = *kind;
    spec.mean_selectivity = detail::optional_field<double>(ops[i], "mean_selectivity", path, 1.0);
    spec.selectivity_noise_cv =
        detail::optional_field<double>(ops[i], "selectivity_noise_cv", path, 0.0);
    dag.operators.push_back(std::move(spec));
  }
  if (doc.contains("edges")) {
    const auto& edges = doc["edges"];
    if (!edges.is_array()) throw Error(ErrorCode::ConfigError, origin + ".edges: not an array");
    for (std::size_t i = 0; i < edges.size(); ++i) {
      const auto& e = edges[i];
      if (!e.is_array() || e.size() != 2 || !e[0].is_string() || !e[1].is_string()) {
        throw Error(ErrorCode::ConfigError, origin + ".edges[" + std::to_string(i) +
                                                "]: expected [from, to] operator ids");
      }
      dag.edges.emplace_back(e[0].get<std::string>(), e[1].get<std::string>());
    }
  }
  validate_dag(dag);
  return dag;
}

inline nlohmann::json dag_to_json(const LogicalDag& dag) {
  nlohmann::json doc;
  doc["operators"] = nlohmann::json::array();
  for (const auto& o : dag.operators) {
    doc["operators"].push_back({{"id", o.id},
                                {"kind", std::string(to_string(o.kind))},
                                {"mean_selectivity", o.mean_selectivity},
                                {"selectivity_noise_cv", o.selectivity_noise_cv}});
  }
  doc["edges"] = nlohmann::json::array();
  for (const auto& [from, to] : dag.edges) doc["edges"].push_back({from, to});
  return doc;
}

inline LogicalDag load_dag_file(const std::string& path) {
  auto text = read_text_file(path);
  return dag_from_json(parse_json_text(text, path), path);
}

}  // namespace conttune
