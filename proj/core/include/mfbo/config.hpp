#pragma once

#include <map>
#include <string>

#include "mfbo/sim_engine.hpp"

namespace mfbo {

// Parsed `key = value` text grouped under [section] headers.
using ConfigMap = std::map<std::string, std::map<std::string, std::string>>;

// Throws ArgumentError on malformed lines. Lines starting with '#' or ';'
// are comments; keys must appear under a section header.
ConfigMap parse_config_text(const std::string& text);
ConfigMap parse_config_file(const std::string& path);

// Applies one "section.key=value" override on top of a parsed config.
void apply_override(ConfigMap& cfg, const std::string& assignment);

// A fully validated run request.
struct RunConfig {
  std::string benchmark;
  std::vector<std::uint64_t> seeds = {0};
  std::string out_dir = "results";
  int jobs = 1;
  std::uint64_t objective_seed = 0;
  int battery_grid_resolution = 256;

  double budget_hf = 0.0;      // >0: replaces the preset budget
  std::vector<double> delays;  // non-empty: per-fidelity delay override
  double noise = -1.0;         // >=0: noise override for every fidelity

  EngineConfig engine;
};

// Validates the parsed text against the documented schema; unknown sections,
// unknown keys, bad numbers, and unknown benchmark/strategy names all throw
// ArgumentError with a descriptive message.
RunConfig build_run_config(const ConfigMap& cfg);

// Instantiates the benchmark and applies the problem-level overrides; the
// horizon is rederived whenever budget, delays, or capacity change.
BenchmarkPreset build_preset(const RunConfig& rc);

// Seed list syntax: "7", "0..9", or "0,2,5".
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

// Stable hex digest of the canonical serialized config.
std::string config_digest(const ConfigMap& cfg);

// Canonical `[section] key = value` serialization, sections and keys sorted.
std::string serialize_config(const ConfigMap& cfg);

}  // namespace mfbo
