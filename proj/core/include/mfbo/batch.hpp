#pragma once

#include "mfbo/acquisition.hpp"
#include "mfbo/mf_model.hpp"

namespace mfbo {

// --- Local penalization -----------------------------------------------------

struct PenalizerParams {
  double lipschitz = 1.0;  // > 0
  double max_estimate = 0.0;
};

struct LipschitzConfig {
  bool local = true;
  double local_halfwidth = 0.1;
  int points_per_dim = 500;  // screen size = points_per_dim * dim
  double floor = 1e-4;
};

// Exclusion-ball factor around a pending point: min{ ||x - x_j|| /
// (E[r_j] + sd_j / L), 1 } with E[r_j] = max(P - mean_j, 0) / L. A denominator
// of zero collapses the ball to the point itself.
double hard_penalizer(const Vector& x, const Vector& x_j, double mean_j, double sd_j,
                      const PenalizerParams& params);

// One penalizer per pending query, evaluated at that query's own fidelity.
struct PendingPenalty {
  Vector x;
  double mean = 0.0;
  double sd = 0.0;
  PenalizerParams params;
};

double penalty_product(const Vector& x, const std::vector<PendingPenalty>& pending);

// g(score) * penalty, with g = identity for scores guaranteed nonnegative and
// log(1 + e^z) otherwise.
double penalized_acquisition(double score, bool guaranteed_nonnegative, double penalty);

// P-hat = best observation at fidelity m; L-hat = max posterior-mean gradient
// norm over a seeded uniform screen (local box around x_j when cfg.local),
// floored at cfg.floor.
PenalizerParams estimate_penalizer_params(const MultiFidelitySurrogate& s,
                                          const FidelityDataset& data, const Vector& x_j,
                                          FidelityIndex m, const LipschitzConfig& cfg,
                                          std::uint64_t seed);

// --- Fantasy marginalization --------------------------------------------------

// Mean of a base acquisition over all fantasies in the bank.
double fantasized_acquisition(const FantasyBank& bank,
                              const std::function<double(const PosteriorQuery&)>& acq);

// Fast path for the entropy-gain score: the pair solve is shared across
// fantasies; `fstar` holds one row of max-value samples per fantasy (or a
// single shared row).
double fantasized_mes(const FantasyBank& bank, const Vector& x, FidelityIndex m,
                      const Matrix& fstar, const MesConfig& cfg = {});

// Paired max-value draws under every fantasy: shared grid factorization and
// shared standard-normal draws across fantasies; one row per fantasy.
Matrix sample_max_values_all(const FantasyBank& bank, const Matrix& grid, int count,
                             std::uint64_t seed, int cap = 2500);

// --- Thompson sampling ----------------------------------------------------------

// Argmax of one posterior draw on the grid; never consults pending queries.
AcqOptimum thompson_select(const MultiFidelitySurrogate& s, const Matrix& grid,
                           FidelityIndex m, std::uint64_t seed);

// --- Trust region ----------------------------------------------------------------

struct TrustRegionConfig {
  double edge_init = 0.8;
  double edge_min = 1.0 / 128.0;
  double edge_max = 1.6;
  int success_threshold = 3;
  int failure_threshold_min = 4;  // actual threshold: max(this, ceil(dim/batch))
  int grid_min = 2000;
  int grid_max = 5000;
  int grid_per_dim = 200;
};

struct TrustRegion {
  Vector center;
  Vector edge;  // per-dimension side lengths
  int successes = 0;
  int failures = 0;
  int restarts = 0;
};

TrustRegion make_trust_region(const Vector& center, const TrustRegionConfig& cfg = {});

// Counter/edge dynamics driven by target-fidelity observations only; success
// recenters on the new incumbent; collapse below the minimum edge restarts at
// the initial size. Pure: no hidden state.
TrustRegion turbo_update(const TrustRegion& tr, FidelityIndex m, FidelityIndex target,
                         const Vector& x, double value, double incumbent_before,
                         int batch_size, const TrustRegionConfig& cfg = {});

// Low-discrepancy grid of size min(grid_max, max(grid_min, grid_per_dim * d))
// inside tr intersected with the unit box; the region center is always row 0.
Matrix turbo_grid(const TrustRegion& tr, const TrustRegionConfig& cfg = {});

AcqOptimum turbo_propose(const TrustRegion& tr, const MultiFidelitySurrogate& s,
                         std::uint64_t seed, const TrustRegionConfig& cfg = {});

}  // namespace mfbo
