#include "mfbo/common.hpp"

namespace mfbo {

AdamResult adam_maximize(const Vector& start, const ValueGradFn& objective,
                         const AdamConfig& cfg) {
  Vector theta = start;
  Vector grad(start.size());
  double value = objective(theta, grad);

  AdamResult best{theta, value};
  Vector m = Vector::Zero(start.size());
  Vector v = Vector::Zero(start.size());
  double b1t = 1.0, b2t = 1.0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (!grad.allFinite()) break;  // keep the best finite iterate
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
    b1t *= cfg.beta1;
    b2t *= cfg.beta2;
    double correction = std::sqrt(1.0 - b2t) / (1.0 - b1t);
    theta += cfg.learning_rate * correction *
             (m.array() / (v.array().sqrt() + cfg.epsilon)).matrix();
    value = objective(theta, grad);
    if (std::isfinite(value) && value > best.best_value) {
      best.best = theta;
      best.best_value = value;
    }
  }
  return best;
}

}  // namespace mfbo
