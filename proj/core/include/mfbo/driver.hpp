#pragma once

#include <string>
#include <vector>

#include "mfbo/config.hpp"
#include "mfbo/report.hpp"

namespace mfbo {

// Exit codes shared by every verb: 0 success, 1 runtime failure (partial
// outputs retained), 2 invalid configuration or arguments.
constexpr int exit_ok = 0;
constexpr int exit_runtime_error = 1;
constexpr int exit_bad_config = 2;

struct CliOptions {
  std::string config_path;
  std::vector<std::string> overrides;  // "section.key=value"
  std::string seeds;                   // overrides [run] seeds when non-empty
  int jobs = 0;                        // >0 overrides [run] jobs
  std::string out_dir;                 // overrides [run] out_dir when non-empty
};

// Executes one configured experiment across its seeds; writes a result trace
// and an events sidecar per seed plus one manifest.json. The output directory
// resolves as --out, then $MFABO_OUT, then [run] out_dir.
int run_command(const CliOptions& opt);

int summarize_command(const std::string& results_dir, const std::string& out_dir = "",
                      int histogram_bins = 10);

int list_benchmarks_command();
int list_strategies_command();

}  // namespace mfbo
