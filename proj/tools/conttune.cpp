// Command-line front end: run, compare, trace-gen, oracle.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "conttune/harness.hpp"

namespace fs = std::filesystem;
using namespace conttune;

namespace {

RateMap parse_rate_list(const std::vector<std::string>& items) {
  RateMap out;
  for (const auto& item : items) {
    std::stringstream ss(item);
    std::string part;
    while (std::getline(ss, part, ',')) {
      const auto eq = part.find('=');
      if (eq == std::string::npos || eq == 0) {
        throw Error(ErrorCode::ConfigError, "--rates: expected id=rate, got '" + part + "'");
      }
      double r = 0.0;
      try {
        std::size_t used = 0;
        r = std::stod(part.substr(eq + 1), &used);
        if (used != part.size() - eq - 1) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw Error(ErrorCode::ConfigError, "--rates: bad number in '" + part + "'");
      }
      if (r < 0.0) throw Error(ErrorCode::NegativeRate, "--rates: '" + part + "'");
      out[part.substr(0, eq)] = r;
    }
  }
  return out;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
  out << text;
}

int cmd_run(const std::string& scenario_path, const std::string& tuner, std::uint64_t seed,
            const std::string& out_dir, bool metrics, const std::string& history_in,
            double decision_thr) {
  auto s = load_scenario(scenario_path);
  if (decision_thr >= 0.0) {
    s.thresholds.decision_thr = decision_thr;
    s.thresholds.validate();
  }
  RunOptions opt;
  if (!history_in.empty()) opt.history = HistoryStore::load(history_in, s.tuner.top_k);
  std::ofstream metrics_file;
  std::unique_ptr<MetricsCsvWriter> writer;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    if (metrics) {
      metrics_file.open(fs::path(out_dir) / "metrics.csv", std::ios::binary | std::ios::trunc);
      writer = std::make_unique<MetricsCsvWriter>(metrics_file);
      opt.metrics = writer.get();
    }
  }
  const auto run = run_experiment(s, tuner, seed, opt);
  print_report(std::cout, run.report);
  if (!out_dir.empty()) {
    auto j = report_to_json(run.report);
    write_file(fs::path(out_dir) / "summary.json", j.dump(2) + "\n");
    std::ostringstream csv;
    write_epoch_csv(csv, run.report.epoch_records);
    write_file(fs::path(out_dir) / "epochs.csv", csv.str());
    if (run.history) run.history->persist((fs::path(out_dir) / "history.csv").string());
  }
  return 0;
}

int cmd_compare(const std::vector<std::string>& paths, const std::string& baseline,
                const std::string& out) {
  std::vector<TuningReport> reports;
  for (const auto& p : paths) {
    reports.push_back(report_from_json(parse_json_text(read_text_file(p), p), p));
  }
  const auto table =
      compare(reports, baseline.empty() ? std::nullopt : std::optional<std::string>(baseline));
  print_compare(std::cout, table);
  if (!out.empty()) {
    nlohmann::json j;
    j["scenario"] = table.scenario;
    j["baseline"] = table.baseline;
    j["rows"] = nlohmann::json::array();
    for (const auto& r : table.rows) {
      j["rows"].push_back({{"tuner", r.tuner},
                           {"avg_reconfigs_per_tuning", r.avg_reconfigs_per_tuning},
                           {"reconfigurations", r.reconfigurations},
                           {"tunings", r.tunings},
                           {"reduction_pct", r.reduction_pct}});
    }
    write_file(out, j.dump(2) + "\n");
  }
  return 0;
}

int cmd_trace_gen(double wu, const std::string& source, int length, int replication,
                  std::uint64_t seed, double epoch_s, const std::string& out) {
  const auto trace = synthetic_permutation({{source, wu}}, length, replication, seed, epoch_s);
  if (out.empty()) {
    write_trace(std::cout, trace);
  } else {
    std::ostringstream ss;
    write_trace(ss, trace);
    write_file(out, ss.str());
  }
  return 0;
}

int cmd_oracle(const std::string& scenario_path, const std::vector<std::string>& rate_items,
               int p_max) {
  const auto s = load_scenario(scenario_path);
  const auto rates = parse_rate_list(rate_items);
  const auto sources = s.dag.sources();
  for (const auto& [id, r] : rates) {
    if (std::find(sources.begin(), sources.end(), id) == sources.end()) {
      throw Error(ErrorCode::UnknownSource, "--rates: '" + id + "' is not a source");
    }
  }
  const int cap = p_max > 0 ? p_max : s.tuner.hard_cap;
  const auto lambda = real_upstream_rates_oracle(s.dag, rates);
  const auto best = oracle_optimal(s.dag, s.curves, lambda, cap);
  nlohmann::json j;
  for (const auto& id : topological_order(s.dag)) {
    j[id] = {{"lambda", lambda.at(id)},
             {"p", best.at(id)},
             {"capacity", capacity(s.curves.at(id), best.at(id))}};
  }
  std::cout << j.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continuous parallelism tuning for simulated stream jobs"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run one tuner over a scenario");
  std::string scenario;
  std::string tuner;
  std::uint64_t seed = 1;
  std::string out_dir;
  bool metrics = false;
  std::string history_in;
  double decision_thr = -1.0;
  run->add_option("--scenario", scenario, "Scenario JSON")->required();
  run->add_option("--tuner", tuner, "Tuner id")->required();
  run->add_option("--seed", seed, "Run seed");
  run->add_option("--out", out_dir, "Output directory for summary.json, epochs.csv");
  run->add_flag("--metrics", metrics, "Also write per-step metrics.csv");
  run->add_option("--history", history_in, "Warm-start history CSV (ContTune tuners)");
  run->add_option("--decision-thr", decision_thr, "Override thresholds.decision_thr");

  auto* cmp = app.add_subcommand("compare", "Rank run summaries of one scenario");
  std::vector<std::string> reports;
  std::string baseline;
  std::string cmp_out;
  cmp->add_option("--reports", reports, "summary.json files")->required();
  cmp->add_option("--baseline", baseline, "Tuner id used as the reduction baseline");
  cmp->add_option("--out", cmp_out, "Write the table as JSON");

  auto* tg = app.add_subcommand("trace-gen", "Emit a synthetic permutation trace as CSV");
  double wu = 0.0;
  std::string source = "source";
  int length = 10;
  int replication = 2;
  std::uint64_t tg_seed = 1;
  double epoch_s = 600.0;
  std::string tg_out;
  tg->add_option("--wu", wu, "Workload unit (records/s)")->required();
  tg->add_option("--source", source, "Source operator id");
  tg->add_option("--length", length, "Permutation length");
  tg->add_option("--replication", replication, "Repetitions of the permutation");
  tg->add_option("--seed", tg_seed, "Permutation seed");
  tg->add_option("--epoch-s", epoch_s, "Epoch duration (s)");
  tg->add_option("--out", tg_out, "Output CSV (default: stdout)");

  auto* orc = app.add_subcommand("oracle", "Minimal feasible parallelism for given source rates");
  std::string orc_scenario;
  std::vector<std::string> rates;
  int orc_pmax = 0;
  orc->add_option("--scenario", orc_scenario, "Scenario JSON")->required();
  orc->add_option("--rates", rates, "id=rate pairs, comma separated")->required();
  orc->add_option("--p-max", orc_pmax, "Upper bound (default: tuner hard cap)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*run) return cmd_run(scenario, tuner, seed, out_dir, metrics, history_in, decision_thr);
    if (*cmp) return cmd_compare(reports, baseline, cmp_out);
    if (*tg) return cmd_trace_gen(wu, source, length, replication, tg_seed, epoch_s, tg_out);
    if (*orc) return cmd_oracle(orc_scenario, rates, orc_pmax);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return is_validation_error(e.code()) ? 2 : 1;
  }
  return 0;
}
