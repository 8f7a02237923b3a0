#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mfbo/driver.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Asynchronous multi-fidelity batch Bayesian optimization simulator"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::simple);

  mfbo::CliOptions opt;
  std::string seed_single, seed_range;

  CLI::App* run = app.add_subcommand("run", "Execute a configured experiment sweep");
  run->add_option("--config", opt.config_path, "Path to the run configuration file");
  run->add_option("--override", opt.overrides,
                  "Config override of the form section.key=value (repeatable)");
  run->add_option("--seed", seed_single, "Run a single seed");
  run->add_option("--seeds", seed_range, "Seed list: A..B or comma-separated");
  run->add_option("--jobs", opt.jobs, "Maximum concurrent seed jobs");
  run->add_option("--out", opt.out_dir, "Output directory (beats $MFABO_OUT)");

  std::string results_dir, summary_out;
  int histogram_bins = 10;
  CLI::App* summarize = app.add_subcommand("summarize", "Aggregate result traces");
  summarize->add_option("results_dir", results_dir, "Directory holding result traces")
      ->required();
  summarize->add_option("--out", summary_out, "Directory for the summary tables");
  summarize->add_option("--bins", histogram_bins, "Fidelity-histogram interval count");

  CLI::App* lb = app.add_subcommand("list-benchmarks", "Print available benchmark names");
  CLI::App* ls = app.add_subcommand("list-strategies", "Print available strategy names");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : mfbo::exit_bad_config;
  }

  if (run->parsed()) {
    if (!seed_single.empty() && !seed_range.empty()) {
      std::cerr << "error: pass --seed or --seeds, not both\n";
      return mfbo::exit_bad_config;
    }
    opt.seeds = !seed_single.empty() ? seed_single : seed_range;
    return mfbo::run_command(opt);
  }
  if (summarize->parsed())
    return mfbo::summarize_command(results_dir, summary_out, histogram_bins);
  if (lb->parsed()) return mfbo::list_benchmarks_command();
  if (ls->parsed()) return mfbo::list_strategies_command();
  return mfbo::exit_bad_config;
}
