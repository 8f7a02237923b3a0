#include "mfbo/fidelity_select.hpp"

namespace mfbo {

ThresholdState make_threshold_state(int fidelity_count, long now, double gamma_init) {
  if (fidelity_count < 1) throw ArgumentError("make_threshold_state: bad fidelity count");
  ThresholdState st;
  st.gamma = Vector::Constant(fidelity_count, gamma_init);
  st.last_above_time.assign(fidelity_count, now);
  return st;
}

FidelityIndex variance_rule(const PosteriorQuery& q, const Vector& x, double beta,
                            const ThresholdState& st) {
  int M = q.fidelity_count();
  if (st.gamma.size() < M) throw ArgumentError("variance_rule: threshold size mismatch");
  double root_beta = std::sqrt(std::max(beta, 0.0));
  for (int m = 1; m < M; ++m) {
    auto [mu, var] = q.predict(x, m);
    (void)mu;
    if (root_beta * std::sqrt(std::max(var, 0.0)) > st.gamma[m - 1]) return m;
  }
  return M;
}

void note_submission(ThresholdState& st, FidelityIndex m, long now) {
  for (int lower = 1; lower < m; ++lower) st.last_above_time[lower - 1] = now;
}

void update_thresholds(ThresholdState& st, long now, const Vector& delay_ratio) {
  if (!st.doubling_enabled) return;
  int M = static_cast<int>(st.gamma.size());
  if (delay_ratio.size() < M - 1)
    throw ArgumentError("update_thresholds: delay ratio size mismatch");
  for (int m = 1; m < M; ++m) {
    if (static_cast<double>(now - st.last_above_time[m - 1]) > delay_ratio[m - 1]) {
      st.gamma[m - 1] *= 2.0;
      st.last_above_time[m - 1] = now;
    }
  }
}

FidelityIndex information_rule(const FantasyBank& bank, const Vector& x,
                               const Matrix& fstar, const Vector& expected_delay,
                               const MesConfig& cfg) {
  int M = bank.fidelity_count();
  if (expected_delay.size() != M)
    throw ArgumentError("information_rule: delay vector size mismatch");
  if ((expected_delay.array() <= 0.0).any())
    throw ArgumentError("information_rule: delays must be positive");
  FidelityIndex pick = M;
  double best = -std::numeric_limits<double>::infinity();
  for (int m = 1; m <= M; ++m) {
    double score = fantasized_mes(bank, x, m, fstar, cfg) / expected_delay[m - 1];
    if (score >= best) {  // ties resolve upward
      best = score;
      pick = m;
    }
  }
  return pick;
}

}  // namespace mfbo
