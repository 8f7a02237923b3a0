#pragma once

#include "mfbo/acquisition.hpp"
#include "mfbo/batch.hpp"

namespace mfbo {

// Doubling bookkeeping for the variance rule thresholds. `gamma[m-1]` guards
// fidelity m; the target fidelity entry is unused. `last_above_time[m-1]`
// holds the last step at which a query was submitted above fidelity m.
struct ThresholdState {
  Vector gamma;
  std::vector<long> last_above_time;
  bool doubling_enabled = true;
};

ThresholdState make_threshold_state(int fidelity_count, long now = 0,
                                    double gamma_init = 0.1);

// Lowest fidelity whose scaled posterior sd still exceeds its threshold;
// target fidelity otherwise.
FidelityIndex variance_rule(const PosteriorQuery& q, const Vector& x, double beta,
                            const ThresholdState& st);

// Record a submission at fidelity m: fidelities below m get fresh clocks.
void note_submission(ThresholdState& st, FidelityIndex m, long now);

// Double gamma for any fidelity that has gone without a higher-fidelity
// submission for more than delay_ratio[m-1] = E[tau^(m+1)] / E[tau^(m)] steps;
// a doubling resets that fidelity's clock.
void update_thresholds(ThresholdState& st, long now, const Vector& delay_ratio);

// Cost-weighted information rule: expected entropy gain about the target
// maximum per unit expected delay, marginalized over the pending fantasies;
// ties resolve to the highest fidelity. `fstar` holds one row of max-value
// samples per fantasy.
FidelityIndex information_rule(const FantasyBank& bank, const Vector& x,
                               const Matrix& fstar, const Vector& expected_delay,
                               const MesConfig& cfg = {});

}  // namespace mfbo
