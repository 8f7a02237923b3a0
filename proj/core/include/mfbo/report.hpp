#pragma once

#include <string>

#include "mfbo/sim_engine.hpp"

namespace mfbo {

// Per-step trace: `sim_time,best_hf,regret,occupied_space,pending_low,...`.
// Missing values (no target-fidelity observation yet, unknown optimum) are
// written as empty fields; doubles round-trip exactly.
void write_result_csv(const std::string& path, const RunRecord& rec);

// Submit/arrive event log: `time,kind,query_id,fidelity,space,value`.
void write_events_csv(const std::string& path, const RunRecord& rec);

// Reads a result trace back; only step fields are populated.
RunRecord read_result_csv(const std::string& path);

// Reads an event log back; event x vectors are left empty.
std::vector<EventRecord> read_events_csv(const std::string& path);

// Canonical output names: "<strategy>__seed<k>.csv" and the events sidecar
// "events__<strategy>__seed<k>.csv".
std::string result_file_name(const std::string& strategy, std::uint64_t seed);
std::string events_file_name(const std::string& strategy, std::uint64_t seed);

struct SummaryOptions {
  int histogram_bins = 10;
};

// Scans `results_dir` for result traces, and writes into `out_dir`:
//   summary_regret.csv     strategy,sim_time,regret_q25,regret_median,regret_q75,seeds
//   summary_fidelity.csv   strategy,bin_start,bin_end,fidelity,count
// The histogram bins partition [0, max horizon] and count submitted queries
// from the event sidecars. Inputs are never modified. Returns the number of
// traces summarized; throws ArgumentError when the directory has none.
long summarize_directory(const std::string& results_dir, const std::string& out_dir,
                         const SummaryOptions& opt = {});

// Linear-interpolation quantile of a sorted sample (p in [0, 1]).
double sorted_quantile(const std::vector<double>& sorted, double p);

}  // namespace mfbo
