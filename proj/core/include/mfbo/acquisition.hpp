#pragma once

#include <functional>

#include "mfbo/mf_model.hpp"
#include "mfbo/sobol.hpp"

namespace mfbo {

// --- Upper confidence bounds --------------------------------------------------

struct UCBConfig {
  double beta = 4.0;
  // When set, beta grows as 2 log(d t^2 pi^2 / (6 * 0.05)) with the step count.
  bool log_schedule = false;
  double beta_at(int step, int dim) const;
};

inline double ucb(double mean, double var, double beta) {
  return mean + std::sqrt(beta * std::max(var, 0.0));
}

// Multi-fidelity bound: each lower fidelity caps the target through its bias
// bound, so the tightest (smallest) capped bound wins. `zeta[m-1]` bounds
// |f^m - f^M|; the last entry must be zero.
double mf_ucb(const PosteriorQuery& q, const Vector& x, const Vector& zeta, double beta);

// --- Max-value sampling ---------------------------------------------------------

// `count` joint posterior draws of max_x f^M(x) over the grid rows.
Vector sample_max_values(const MultiFidelitySurrogate& s, const Matrix& grid, int count,
                         std::uint64_t seed);

// --- Entropy gain of a noisy observation ---------------------------------------

struct MesConfig {
  int quad_intervals = 500;
  // Integration range is [-10^k, 10^k] with k the smallest in [-6, 2] whose
  // endpoints carry negligible integrand mass and which contains
  // mean +- 8 sd of the observable.
  int range_exp_min = -6;
  int range_exp_max = 2;
  // The gain is non-negative in exact arithmetic; by default small negative
  // quadrature residue is clamped to zero. Disable to inspect the raw value.
  bool clamp_nonnegative = true;
};

// Mutual information between the noisy observable y at (x, m) and the target
// maximum, estimated from `fstar` samples of the maximum. Takes the joint
// moments of (f^m(x), f^M(x)) so callers with shared factorizations can batch.
double mes_from_moments(double mean_m, double var_m, double noise_var, double mean_M,
                        double var_M, double cov, const Vector& fstar,
                        const MesConfig& cfg = {});

double mes(const PosteriorQuery& q, const Vector& x, FidelityIndex m,
           const Vector& fstar, const MesConfig& cfg = {});

// Cost-normalized score used for query selection; `cost` must be positive.
double mf_mes_score(const PosteriorQuery& q, const Vector& x, FidelityIndex m,
                    const Vector& fstar, double cost, const MesConfig& cfg = {});

// --- Acquisition optimization ----------------------------------------------------

// Search domain: the unit hypercube, or an explicit finite candidate set.
struct DomainSpec {
  int dim = 0;
  const Matrix* grid = nullptr;
};

struct AcqOptConfig {
  int screen_count = 7500;
  int refine_starts = 10;
  int refine_epochs = 75;
  double refine_lr = 0.01;
};

struct AcqOptimum {
  Vector x;
  double value = 0.0;
  long grid_index = -1;  // -1 when the domain is continuous
};

using AcqFn = std::function<double(const Vector&)>;
using BatchAcqFn = std::function<Vector(const Matrix&)>;

// Argmax over rows; ties resolve to the lowest index.
AcqOptimum argmax_on_grid(const Matrix& grid, const Vector& values);

// Finite domains: exhaustive evaluation. Continuous domains: low-discrepancy
// screen followed by projected gradient ascent (finite differences) from the
// best screen points; the screen winner is never discarded.
AcqOptimum optimize_acquisition(const AcqFn& f, const DomainSpec& dom,
                                const AcqOptConfig& cfg, const BatchAcqFn& batch = {});

}  // namespace mfbo
