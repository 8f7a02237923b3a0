#include "mfbo/acquisition.hpp"

#include <algorithm>
#include <numeric>

namespace mfbo {

double UCBConfig::beta_at(int step, int dim) const {
  if (!log_schedule) return beta;
  double t = std::max(step, 1);
  double d = std::max(dim, 1);
  return 2.0 * std::log(d * t * t * M_PI * M_PI / (6.0 * 0.05));
}

double mf_ucb(const PosteriorQuery& q, const Vector& x, const Vector& zeta,
              double beta) {
  int M = q.fidelity_count();
  if (zeta.size() != M) throw ArgumentError("mf_ucb: zeta size mismatch");
  if (std::abs(zeta[M - 1]) > 0.0)
    throw ArgumentError("mf_ucb: target-fidelity bias bound must be zero");
  double best = std::numeric_limits<double>::infinity();
  for (int m = 1; m <= M; ++m) {
    auto [mu, var] = q.predict(x, m);
    best = std::min(best, ucb(mu, var, beta) + zeta[m - 1]);
  }
  return best;
}

Vector sample_max_values(const MultiFidelitySurrogate& s, const Matrix& grid, int count,
                         std::uint64_t seed) {
  if (count < 1) throw ArgumentError("sample_max_values: count must be >= 1");
  if (grid.rows() == 0) throw ArgumentError("sample_max_values: empty grid");
  Vector mean;
  Matrix cov;
  std::vector<FidelityIndex> fids(grid.rows(), s.fidelity_count());
  s.joint_posterior(grid, fids, mean, cov);
  Matrix L = robust_cholesky(cov, std::max(cov.diagonal().maxCoeff(), 1e-12));
  Rng rng(seed);
  Vector out(count);
  for (int k = 0; k < count; ++k) {
    Vector draw = mean + L * normal_vector(rng, static_cast<int>(grid.rows()));
    out[k] = draw.maxCoeff();
  }
  return out;
}

namespace {

// Density of the observable y at (x, m) conditioned on f^M(x) <= fstar, up to
// the truncation normalizer: phi(y; mu, s2tot) * Phi((fstar - a(y)) / b) / Z.
struct TruncatedObservable {
  double mu = 0.0;        // observable mean
  double s2tot = 1.0;     // latent variance + noise
  double a0 = 0.0;        // conditional target mean at y = mu
  double a1 = 0.0;        // d a / d y
  double b = 1.0;         // conditional target sd
  double fstar = 0.0;
  double log_z = 0.0;
  double log_norm = 0.0;  // -0.5 log(2 pi s2tot)

  double log_density(double y) const {
    double dy = y - mu;
    double lp = log_norm - 0.5 * dy * dy / s2tot - log_z;
    double gap = fstar - (a0 + a1 * dy);
    if (b > 0.0) return lp + log_norm_cdf(gap / b);
    return gap >= 0.0 ? lp : -std::numeric_limits<double>::infinity();
  }
};

double entropy_term(double log_p) {
  double p = std::exp(log_p);
  return p > 0.0 ? -p * log_p : 0.0;
}

double truncated_entropy(const TruncatedObservable& d, const MesConfig& cfg) {
  double sd = std::sqrt(d.s2tot);
  double half = std::pow(10.0, cfg.range_exp_max);
  for (int k = cfg.range_exp_min; k <= cfg.range_exp_max; ++k) {
    double cand = std::pow(10.0, k);
    if (d.mu - 8.0 * sd < -cand || d.mu + 8.0 * sd > cand) continue;
    if (std::abs(entropy_term(d.log_density(-cand))) < 1e-30 &&
        std::abs(entropy_term(d.log_density(cand))) < 1e-30) {
      half = cand;
      break;
    }
  }
  int n = cfg.quad_intervals;
  double h = 2.0 * half / n;
  double acc = 0.0;
  for (int i = 0; i <= n; ++i) {
    double g = entropy_term(d.log_density(-half + i * h));
    acc += (i == 0 || i == n) ? 0.5 * g : g;
  }
  return acc * h;
}

}  // namespace

double mes_from_moments(double mean_m, double var_m, double noise_var, double mean_M,
                        double var_M, double cov, const Vector& fstar,
                        const MesConfig& cfg) {
  if (fstar.size() == 0) throw ArgumentError("mes_from_moments: no max-value samples");
  if (noise_var < 0.0) throw ArgumentError("mes_from_moments: negative noise");
  double s2tot = std::max(var_m, 0.0) + noise_var;
  if (var_m <= 1e-15 || s2tot <= 0.0) return 0.0;
  if (var_M <= 1e-15) return 0.0;
  // Exactly zero correlation means the observation cannot move the target.
  if (cov * cov < 1e-24 * var_M * s2tot) return 0.0;

  TruncatedObservable d;
  d.mu = mean_m;
  d.s2tot = s2tot;
  d.a0 = mean_M;
  d.a1 = cov / s2tot;
  d.b = std::sqrt(std::max(var_M - cov * cov / s2tot, 0.0));
  d.log_norm = -0.5 * std::log(2.0 * M_PI * s2tot);

  double marginal = 0.5 * std::log(2.0 * M_PI * M_E * s2tot);
  double acc = 0.0;
  for (long j = 0; j < fstar.size(); ++j) {
    d.fstar = fstar[j];
    d.log_z = std::max(log_norm_cdf((fstar[j] - mean_M) / std::sqrt(var_M)), -60.0);
    acc += truncated_entropy(d, cfg);
  }
  double gain = marginal - acc / fstar.size();
  return cfg.clamp_nonnegative ? std::max(gain, 0.0) : gain;
}

double mes(const PosteriorQuery& q, const Vector& x, FidelityIndex m,
           const Vector& fstar, const MesConfig& cfg) {
  int M = q.fidelity_count();
  PairPosterior p = q.pair_posterior(x, m, M);
  return mes_from_moments(p.mean_a, p.var_a, q.noise_variance(m), p.mean_b, p.var_b,
                          p.cov, fstar, cfg);
}

double mf_mes_score(const PosteriorQuery& q, const Vector& x, FidelityIndex m,
                    const Vector& fstar, double cost, const MesConfig& cfg) {
  if (cost <= 0.0) throw ArgumentError("mf_mes_score: cost must be positive");
  return mes(q, x, m, fstar, cfg) / cost;
}

AcqOptimum argmax_on_grid(const Matrix& grid, const Vector& values) {
  if (grid.rows() == 0 || grid.rows() != values.size())
    throw ArgumentError("argmax_on_grid: size mismatch");
  long best = 0;
  for (long i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return {grid.row(best), values[best], best};
}

namespace {

// Projected gradient ascent inside [0,1]^d with central finite differences;
// probes shrink at the box boundary. Returns the best iterate seen.
std::pair<Vector, double> refine_point(const AcqFn& f, Vector x, int epochs,
                                       double lr) {
  const double h = 1e-4;
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  int d = static_cast<int>(x.size());
  Vector m = Vector::Zero(d), v = Vector::Zero(d);
  Vector best_x = x;
  double best_val = f(x);
  for (int t = 1; t <= epochs; ++t) {
    Vector g(d);
    for (int k = 0; k < d; ++k) {
      double up = std::min(h, 1.0 - x[k]);
      double down = std::min(h, x[k]);
      if (up + down < 1e-12) {
        g[k] = 0.0;
        continue;
      }
      Vector xp = x, xm = x;
      xp[k] += up;
      xm[k] -= down;
      g[k] = (f(xp) - f(xm)) / (up + down);
    }
    if (!g.allFinite()) break;
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    double c1 = 1.0 - std::pow(b1, t), c2 = 1.0 - std::pow(b2, t);
    for (int k = 0; k < d; ++k)
      x[k] = std::clamp(x[k] + lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps), 0.0, 1.0);
    double val = f(x);
    if (std::isfinite(val) && val > best_val) {
      best_val = val;
      best_x = x;
    }
  }
  return {best_x, best_val};
}

}  // namespace

AcqOptimum optimize_acquisition(const AcqFn& f, const DomainSpec& dom,
                                const AcqOptConfig& cfg, const BatchAcqFn& batch) {
  if (dom.grid != nullptr) {
    const Matrix& grid = *dom.grid;
    Vector values;
    if (batch) {
      values = batch(grid);
    } else {
      values.resize(grid.rows());
      for (long i = 0; i < grid.rows(); ++i) values[i] = f(grid.row(i));
    }
    return argmax_on_grid(grid, values);
  }

  if (dom.dim < 1) throw ArgumentError("optimize_acquisition: domain dimension < 1");
  if (cfg.screen_count < 1) throw ArgumentError("optimize_acquisition: empty screen");
  Matrix screen = sobol_grid(cfg.screen_count, dom.dim);
  Vector values;
  if (batch) {
    values = batch(screen);
  } else {
    values.resize(screen.rows());
    for (long i = 0; i < screen.rows(); ++i) values[i] = f(screen.row(i));
  }

  std::vector<long> order(screen.rows());
  std::iota(order.begin(), order.end(), 0);
  long starts = std::min<long>(std::max(cfg.refine_starts, 0), screen.rows());
  std::partial_sort(order.begin(), order.begin() + starts, order.end(),
                    [&](long a, long b) {
                      if (values[a] != values[b]) return values[a] > values[b];
                      return a < b;
                    });

  AcqOptimum best = argmax_on_grid(screen, values);
  best.grid_index = -1;
  for (long j = 0; j < starts; ++j) {
    auto [x, val] = refine_point(f, screen.row(order[j]), cfg.refine_epochs,
                                 cfg.refine_lr);
    if (val > best.value) {
      best.value = val;
      best.x = x;
    }
  }
  return best;
}

}  // namespace mfbo
