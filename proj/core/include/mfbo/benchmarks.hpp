#pragma once

#include <functional>
#include <memory>
#include <string>

#include "mfbo/common.hpp"

namespace mfbo {

// Per-fidelity evaluation properties of a problem.
struct FidelitySpec {
  double cost = 1.0;        // C^(m), non-decreasing in m
  double space = 1.0;       // batch space charged while in flight
  double delay = 1.0;       // steps from submission to arrival (expectation)
  double noise = 0.01;      // observation noise standard deviation
  double bias_bound = 0.0;  // bound on |f^(m) - f^(M)|; zero at the target
};

// Noiseless latent objective value at (x, m); outputs are pre-scaled to
// order 1 and inputs live in the unit box (or on the preset's grid).
using ObjectiveFn = std::function<double(const Vector&, FidelityIndex)>;

struct BenchmarkPreset {
  std::string name;
  int dim = 0;
  int fidelity_count = 0;
  std::vector<FidelitySpec> fidelities;
  ObjectiveFn objective;
  std::shared_ptr<const Matrix> grid;  // non-null: domain restricted to rows
  double optimum = 0.0;
  bool optimum_known = false;
  double total_space = 4.0;   // capacity budget Lambda
  int budget_hf = 200;        // run length in high-fidelity-cost equivalents
  long horizon = 0;           // ceil(budget * delay_M * space_M / Lambda)

  double expected_delay(FidelityIndex m) const { return fidelities.at(m - 1).delay; }
};

const std::vector<std::string>& benchmark_names();

// Synthetic presets by name; BatterySurrogate draws its objective from `seed`.
BenchmarkPreset make_preset(const std::string& name, std::uint64_t seed = 0,
                            int battery_grid_resolution = 256);

// Feasible 6-D compositions: a low-discrepancy 2-D set (base_resolution raw
// points) filtered to the open simplex, closed with a third coordinate, and
// expanded over all 20 choices of 3 active coordinates.
Matrix build_constrained_grid(int base_resolution);

// Two independent random-feature draws from a fixed GP prior on the grid
// domain; index 0 is the target fidelity.
ObjectiveFn make_battery_objective(std::uint64_t seed);

long derive_horizon(double budget_hf, double delay_target, double space_target,
                    double total_space);

}  // namespace mfbo
