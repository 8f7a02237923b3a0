#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfbo {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Fidelity indices are 1-based; the highest index is the target fidelity.
using FidelityIndex = int;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Caller violated a documented precondition.
struct ArgumentError : Error {
  using Error::Error;
};
// A numerical routine could not recover (e.g. factorization failed at max jitter).
struct NumericalError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};

// A query in flight: submitted, not yet observed. Space is held until arrival.
struct PendingQuery {
  long id = 0;
  Vector x;
  FidelityIndex fidelity = 1;
  long submit_time = 0;
  long arrival_time = 0;
  double space = 1.0;
};
using PendingSet = std::vector<PendingQuery>;

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Stable sub-stream derivation: every random decision draws from its own
// generator seeded by (master, purpose tag, indices). Keeps runs reproducible
// and lets an independently coded loop replay the exact same draws.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag,
                                 std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t s = splitmix64(master ^ splitmix64(tag));
  s = splitmix64(s ^ splitmix64(a + 0x51ed2701ULL));
  return splitmix64(s ^ splitmix64(b + 0x2545f491ULL));
}

// Purpose tags for derived seeds (values arbitrary but fixed).
namespace seed_tag {
constexpr std::uint64_t init_design = 101;
constexpr std::uint64_t screen = 102;
constexpr std::uint64_t observation_noise = 103;
constexpr std::uint64_t fantasy = 104;
constexpr std::uint64_t max_value = 105;
constexpr std::uint64_t thompson = 106;
constexpr std::uint64_t random_fill = 107;
constexpr std::uint64_t train = 108;
constexpr std::uint64_t delay = 109;
constexpr std::uint64_t lipschitz = 110;
constexpr std::uint64_t objective = 111;
}  // namespace seed_tag

inline Vector uniform_vector(Rng& rng, int dim) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector v(dim);
  for (int i = 0; i < dim; ++i) v[i] = u(rng);
  return v;
}

inline Vector normal_vector(Rng& rng, int dim) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vector v(dim);
  for (int i = 0; i < dim; ++i) v[i] = n(rng);
  return v;
}

inline double norm_pdf(double z) {
  static const double inv_sqrt_2pi = 0.3989422804014327;
  return inv_sqrt_2pi * std::exp(-0.5 * z * z);
}

inline double norm_cdf(double z) { return 0.5 * std::erfc(-z * M_SQRT1_2); }

// log Phi(z), stable in the deep lower tail where Phi underflows.
inline double log_norm_cdf(double z) {
  if (z > -8.0) {
    double c = norm_cdf(z);
    if (c > 0.0) return std::log(c);
  }
  // Asymptotic expansion: Phi(z) ~ phi(z)/(-z) * (1 - 1/z^2 + 3/z^4) for z << 0.
  double z2 = z * z;
  return -0.5 * z2 - 0.5 * std::log(2.0 * M_PI) - std::log(-z) +
         std::log1p(-1.0 / z2 + 3.0 / (z2 * z2));
}

inline double softplus(double z) {
  if (z > 30.0) return z;
  if (z < -30.0) return std::exp(z);
  return std::log1p(std::exp(z));
}

// --- Shared first-order trainer -------------------------------------------
//
// Adam ascent on an unconstrained parameter vector. The objective must return
// the value to maximize and fill the gradient. The best iterate seen
// (including the start) is returned, so the result never scores below the
// initial point.

struct AdamConfig {
  double learning_rate = 0.1;
  int epochs = 75;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

using ValueGradFn = std::function<double(const Vector&, Vector&)>;

struct AdamResult {
  Vector best;
  double best_value;
};

AdamResult adam_maximize(const Vector& start, const ValueGradFn& objective,
                         const AdamConfig& cfg);

}  // namespace mfbo
