#include "mfbo/driver.hpp"

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <nlohmann/json.hpp>

#ifndef MFBO_VERSION_STRING
#define MFBO_VERSION_STRING "0.0.0"
#endif

namespace mfbo {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::string> active_divergences(const RunConfig& rc,
                                            const BenchmarkPreset& preset) {
  std::vector<std::string> out;
  if (rc.delays.empty()) {
    std::string schedule;
    for (std::size_t i = 0; i < preset.fidelities.size(); ++i) {
      if (i) schedule += ":";
      schedule += std::to_string(static_cast<long>(preset.fidelities[i].delay));
    }
    out.push_back("default-delay-schedule " + schedule +
                  ": source evaluation times unavailable, preset default in effect");
  }
  if (rc.benchmark.rfind("Hartmann", 0) == 0)
    out.push_back("hartmann-three-fidelities: three-level schedule adopted");
  out.push_back("cost-equals-delay: per-fidelity cost defaults to its delay");
  StrategyTraits traits = strategy_traits(rc.engine.strategy);
  bool fantasies = traits.rule == FidelityRuleKind::information ||
                   traits.batching == BatchingKind::fantasies;
  if (fantasies && rc.engine.fantasy_count != 100)
    out.push_back("fantasy-count " + std::to_string(rc.engine.fantasy_count) +
                  ": source used 100");
  if (fantasies && rc.engine.fstar_count != 100)
    out.push_back("max-value-count " + std::to_string(rc.engine.fstar_count) +
                  ": source used 100");
  if (traits.batching == BatchingKind::fantasies && rc.engine.mes_screen != 3750)
    out.push_back("entropy-screen " + std::to_string(rc.engine.mes_screen) +
                  ": source used 3750");
  return out;
}

}  // namespace

int run_command(const CliOptions& opt) {
  ConfigMap cfg;
  RunConfig rc;
  BenchmarkPreset preset;
  try {
    if (opt.config_path.empty())
      throw ArgumentError("run: --config PATH is required");
    cfg = parse_config_file(opt.config_path);
    for (const std::string& o : opt.overrides) apply_override(cfg, o);
    if (!opt.seeds.empty()) cfg["run"]["seeds"] = opt.seeds;
    if (opt.jobs > 0) cfg["run"]["jobs"] = std::to_string(opt.jobs);
    if (!opt.out_dir.empty()) {
      cfg["run"]["out_dir"] = opt.out_dir;
    } else if (const char* env = std::getenv("MFABO_OUT"); env && *env) {
      cfg["run"]["out_dir"] = env;
    }
    rc = build_run_config(cfg);
    preset = build_preset(rc);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return exit_bad_config;
  }

  const std::string strategy = strategy_name(rc.engine.strategy);
  const std::string digest = config_digest(cfg);
  std::vector<RunRecord> records(rc.seeds.size());
  std::vector<std::string> io_errors(rc.seeds.size());
  try {
    fs::create_directories(rc.out_dir);
  } catch (const std::exception& ex) {
    std::cerr << "error: cannot create output directory: " << ex.what() << "\n";
    return exit_runtime_error;
  }

  std::atomic<std::size_t> cursor{0};
  auto worker = [&]() {
    while (true) {
      std::size_t i = cursor.fetch_add(1);
      if (i >= rc.seeds.size()) return;
      std::uint64_t seed = rc.seeds[i];
      try {
        records[i] = run_simulation(preset, rc.engine, seed);
        records[i].config_digest = digest;
        write_result_csv((fs::path(rc.out_dir) / result_file_name(strategy, seed)).string(),
                         records[i]);
        write_events_csv((fs::path(rc.out_dir) / events_file_name(strategy, seed)).string(),
                         records[i]);
      } catch (const std::exception& ex) {
        io_errors[i] = ex.what();
      }
    }
  };
  int jobs = std::min<int>(std::max(rc.jobs, 1), static_cast<int>(rc.seeds.size()));
  std::vector<std::thread> pool;
  for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (std::thread& th : pool) th.join();

  json manifest;
  manifest["benchmark"] = rc.benchmark;
  manifest["strategy"] = strategy;
  manifest["seeds"] = rc.seeds;
  manifest["horizon"] = rc.engine.horizon > 0 ? rc.engine.horizon : preset.horizon;
  manifest["total_space"] =
      rc.engine.total_space > 0.0 ? rc.engine.total_space : preset.total_space;
  manifest["code_version"] = MFBO_VERSION_STRING;
  manifest["config_digest"] = digest;
  json echo = json::object();
  for (const auto& [section, kv] : cfg) {
    json sec = json::object();
    for (const auto& [key, value] : kv) sec[key] = value;
    echo[section] = sec;
  }
  manifest["config"] = echo;
  manifest["divergences"] = active_divergences(rc, preset);
  json results = json::array(), events = json::array(), errors = json::object();
  bool failed = false;
  for (std::size_t i = 0; i < rc.seeds.size(); ++i) {
    results.push_back(result_file_name(strategy, rc.seeds[i]));
    events.push_back(events_file_name(strategy, rc.seeds[i]));
    std::string err = !io_errors[i].empty() ? io_errors[i] : records[i].error;
    if (!err.empty()) {
      errors[std::to_string(rc.seeds[i])] = err;
      failed = true;
    }
  }
  manifest["results"] = results;
  manifest["events"] = events;
  manifest["errors"] = errors;
  try {
    std::ofstream out(fs::path(rc.out_dir) / "manifest.json", std::ios::trunc);
    out << manifest.dump(2) << "\n";
  } catch (const std::exception& ex) {
    std::cerr << "error: cannot write manifest: " << ex.what() << "\n";
    return exit_runtime_error;
  }
  if (failed) {
    for (const auto& [seed, message] : errors.items())
      std::cerr << "seed " << seed << " failed: " << message.get<std::string>() << "\n";
    return exit_runtime_error;
  }
  return exit_ok;
}

int summarize_command(const std::string& results_dir, const std::string& out_dir,
                      int histogram_bins) {
  try {
    SummaryOptions opt;
    opt.histogram_bins = histogram_bins;
    std::string out = out_dir.empty() ? results_dir : out_dir;
    long n = summarize_directory(results_dir, out, opt);
    std::cout << "summarized " << n << " result file(s) into " << out << "\n";
    return exit_ok;
  } catch (const ArgumentError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return exit_bad_config;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return exit_runtime_error;
  }
}

int list_benchmarks_command() {
  for (const std::string& name : benchmark_names()) std::cout << name << "\n";
  return exit_ok;
}

int list_strategies_command() {
  for (const std::string& name : strategy_names()) std::cout << name << "\n";
  return exit_ok;
}

}  // namespace mfbo
