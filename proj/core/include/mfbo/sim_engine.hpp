#pragma once

#include <functional>
#include <optional>
#include <string>

#include "mfbo/acquisition.hpp"
#include "mfbo/batch.hpp"
#include "mfbo/benchmarks.hpp"
#include "mfbo/fidelity_select.hpp"
#include "mfbo/mf_model.hpp"

namespace mfbo {

// The ten optimization strategies the simulator dispatches between.
enum class StrategyId {
  UCB,
  MF_GP_UCB,
  MF_GP_UCB_LP,
  PLAYBOOK_UCB,
  UCB_V_LP,
  UCB_I_LP,
  TURBO_TS,
  TURBO_V_TS,
  TURBO_I_TS,
  MF_MES,
};

const std::vector<std::string>& strategy_names();
const std::string& strategy_name(StrategyId id);
std::optional<StrategyId> strategy_from_name(const std::string& name);

enum class FidelityRuleKind { target_only, variance, information };
enum class BatchingKind { random_fill, local_penalization, thompson, fantasies };

struct StrategyTraits {
  SurrogateKind model = SurrogateKind::IndependentGPs;
  FidelityRuleKind rule = FidelityRuleKind::target_only;
  BatchingKind batching = BatchingKind::random_fill;
  // True: the model ignores lower fidelities; all queries and training data
  // live on the target fidelity, relabeled as a one-fidelity problem.
  bool single_fidelity = false;
  // True: the acquisition is the combined bound min_m (ucb_m + bias_m).
  bool uses_bias_bounds = false;
};

StrategyTraits strategy_traits(StrategyId id);

// Denominator of the per-fidelity information-rate score.
enum class FidelityNormalizer { expected_delay, cost };

struct EngineConfig {
  StrategyId strategy = StrategyId::UCB;
  long horizon = 0;             // 0: preset default
  double total_space = 0.0;     // 0: preset default
  long init_design_steps = -1;  // <0: ceil(5 d / batch size)

  UCBConfig ucb;
  double gamma_init = 0.1;
  bool threshold_doubling = true;
  FidelityNormalizer normalizer = FidelityNormalizer::expected_delay;

  // Posterior-sample counts for entropy-gain scores. The source settings
  // (100 fantasies, 100 max-value samples) are reachable by override; the
  // defaults keep single-core runs tractable.
  int fantasy_count = 16;
  int fstar_count = 16;
  long fstar_grid = 1024;  // grid size for max-value draws (capped by presets)
  long mes_screen = 512;   // candidate screen for entropy-gain proposals
  MesConfig mes;

  // screen_count 0 resolves per strategy: 7500*d for independent-GP models,
  // 7500 for multi-task models.
  AcqOptConfig acq{0, 10, 75, 0.01};
  LipschitzConfig lipschitz;
  TrustRegionConfig turbo;
  long turbo_grid_cap = 0;  // >0: lowers the trust-region grid ceiling

  // Full refit cadence in arrivals; between refits new observations are
  // folded in by conditioning. Past `refit_stretch_threshold` observations
  // the cadence grows to ceil(fraction * N); `max_full_refits` > 0 freezes
  // hyperparameters after that many fits; `warm_refit_epochs` > 0 shortens
  // warm-started refits.
  int refit_every_arrivals = 20;
  double refit_stretch_fraction = 0.3;
  long refit_stretch_threshold = 400;
  int max_full_refits = 0;
  int warm_refit_epochs = 0;
  SurrogateTrainConfig train;

  // Invoked after every step with the engine's live state.
  std::function<void(const struct StepContext&)> on_step;
};

struct StepContext {
  long t = 0;
  const FidelityDataset* model_data = nullptr;
  const PendingSet* pending = nullptr;
  double occupied = 0.0;
  const MultiFidelitySurrogate* surrogate = nullptr;  // null before first fit
};

enum class EventKind { submit, arrive };

struct EventRecord {
  long time = 0;
  EventKind kind = EventKind::submit;
  long query_id = 0;
  FidelityIndex fidelity = 1;  // problem fidelity label
  Vector x;
  double value = std::numeric_limits<double>::quiet_NaN();  // arrivals only
  double space = 0.0;
};

struct StepRecord {
  long t = 0;
  double best_hf = std::numeric_limits<double>::quiet_NaN();
  double regret = std::numeric_limits<double>::quiet_NaN();
  double occupied = 0.0;
  std::vector<long> pending_by_fidelity;
};

struct RunRecord {
  std::string benchmark;
  std::string strategy;
  std::uint64_t seed = 0;
  long horizon = 0;
  double total_space = 0.0;
  int fidelity_count = 0;
  std::vector<EventRecord> events;
  std::vector<StepRecord> steps;
  FidelityDataset observed;  // problem fidelity labels
  long query_count = 0;
  bool completed = false;
  std::string error;          // non-empty when the run aborted mid-flight
  std::string config_digest;  // filled by the driver from the source config
};

// Executes the asynchronous optimization loop against the preset's simulated
// evaluation process. Deterministic given (preset, cfg, seed). Configuration
// errors throw; strategy/model errors mid-run return the partial record with
// `error` set.
RunRecord run_simulation(const BenchmarkPreset& preset, const EngineConfig& cfg,
                         std::uint64_t seed);

// Capacity admission: the selected fidelity if it fits, otherwise the
// smallest-space fidelity above it that fits (lowest index on ties), or
// nullopt when nothing fits.
std::optional<FidelityIndex> admit_query(double occupied, double capacity,
                                         FidelityIndex m,
                                         const std::vector<FidelitySpec>& specs);

// f^(m)(x) + noise * eps with eps standard normal seeded per query id.
double simulate_observation(const ObjectiveFn& objective, const Vector& x,
                            FidelityIndex m, double noise_sd,
                            std::uint64_t master_seed, long query_id);

}  // namespace mfbo
