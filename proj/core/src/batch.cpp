#include "mfbo/batch.hpp"

namespace mfbo {

double hard_penalizer(const Vector& x, const Vector& x_j, double mean_j, double sd_j,
                      const PenalizerParams& params) {
  if (params.lipschitz <= 0.0) throw ArgumentError("hard_penalizer: L must be positive");
  double dist = (x - x_j).norm();
  double radius = std::max(params.max_estimate - mean_j, 0.0) / params.lipschitz;
  double denom = radius + std::max(sd_j, 0.0) / params.lipschitz;
  if (denom <= 0.0) return dist > 0.0 ? 1.0 : 0.0;
  return std::min(dist / denom, 1.0);
}

double penalty_product(const Vector& x, const std::vector<PendingPenalty>& pending) {
  double prod = 1.0;
  for (const PendingPenalty& p : pending)
    prod *= hard_penalizer(x, p.x, p.mean, p.sd, p.params);
  return prod;
}

double penalized_acquisition(double score, bool guaranteed_nonnegative, double penalty) {
  return (guaranteed_nonnegative ? score : softplus(score)) * penalty;
}

PenalizerParams estimate_penalizer_params(const MultiFidelitySurrogate& s,
                                          const FidelityDataset& data, const Vector& x_j,
                                          FidelityIndex m, const LipschitzConfig& cfg,
                                          std::uint64_t seed) {
  FidelityDataset sub = data.filter(m);
  if (sub.size() == 0)
    throw ArgumentError("estimate_penalizer_params: no observations at this fidelity");
  PenalizerParams out;
  out.max_estimate = sub.y.maxCoeff();

  int d = static_cast<int>(x_j.size());
  long n = static_cast<long>(cfg.points_per_dim) * d;
  Rng rng(seed);
  double best = 0.0;
  for (long i = 0; i < n; ++i) {
    Vector u = uniform_vector(rng, d);
    Vector p(d);
    if (cfg.local) {
      for (int k = 0; k < d; ++k) {
        double lo = std::max(x_j[k] - cfg.local_halfwidth, 0.0);
        double hi = std::min(x_j[k] + cfg.local_halfwidth, 1.0);
        p[k] = lo + u[k] * (hi - lo);
      }
    } else {
      p = u;
    }
    best = std::max(best, s.gradient_mean(p, m).norm());
  }
  out.lipschitz = std::max(best, cfg.floor);
  return out;
}

double fantasized_acquisition(const FantasyBank& bank,
                              const std::function<double(const PosteriorQuery&)>& acq) {
  double acc = 0.0;
  int S = bank.count();
  for (int s = 0; s < S; ++s) acc += acq(bank.view(s));
  return acc / S;
}

double fantasized_mes(const FantasyBank& bank, const Vector& x, FidelityIndex m,
                      const Matrix& fstar, const MesConfig& cfg) {
  int M = bank.fidelity_count();
  Matrix means;
  double var_a, var_b, cov;
  bank.pair_all(x, m, M, means, var_a, var_b, cov);
  double noise = bank.noise_variance(m);
  long S = means.rows();
  if (fstar.rows() != S && fstar.rows() != 1)
    throw ArgumentError("fantasized_mes: fstar rows must match fantasy count");
  double acc = 0.0;
  for (long s = 0; s < S; ++s) {
    Vector row = fstar.row(fstar.rows() == 1 ? 0 : s);
    acc += mes_from_moments(means(s, 0), var_a, noise, means(s, 1), var_b, cov, row, cfg);
  }
  return acc / S;
}

Matrix sample_max_values_all(const FantasyBank& bank, const Matrix& grid, int count,
                             std::uint64_t seed, int cap) {
  if (grid.rows() == 0 || grid.rows() > cap)
    throw ArgumentError("sample_max_values_all: bad grid size");
  if (count < 1) throw ArgumentError("sample_max_values_all: count must be >= 1");
  Matrix means, cov;
  bank.joint_all(grid, bank.fidelity_count(), means, cov);
  Matrix L = robust_cholesky(cov, std::max(cov.diagonal().maxCoeff(), 1e-12));
  long S = std::max<long>(means.cols(), 1);
  Rng rng(seed);
  Matrix out(bank.count(), count);
  for (int k = 0; k < count; ++k) {
    Vector z = L * normal_vector(rng, static_cast<int>(grid.rows()));
    for (long s = 0; s < out.rows(); ++s)
      out(s, k) = (means.col(std::min<long>(s, S - 1)) + z).maxCoeff();
  }
  return out;
}

AcqOptimum thompson_select(const MultiFidelitySurrogate& s, const Matrix& grid,
                           FidelityIndex m, std::uint64_t seed) {
  Vector draw = sample_on_grid(s, grid, m, seed, static_cast<int>(grid.rows()));
  return argmax_on_grid(grid, draw);
}

TrustRegion make_trust_region(const Vector& center, const TrustRegionConfig& cfg) {
  TrustRegion tr;
  tr.center = center;
  tr.edge = Vector::Constant(center.size(), cfg.edge_init);
  return tr;
}

TrustRegion turbo_update(const TrustRegion& tr, FidelityIndex m, FidelityIndex target,
                         const Vector& x, double value, double incumbent_before,
                         int batch_size, const TrustRegionConfig& cfg) {
  if (m != target) return tr;
  TrustRegion out = tr;
  int d = static_cast<int>(tr.center.size());
  int fail_threshold = std::max(
      cfg.failure_threshold_min,
      static_cast<int>(std::ceil(static_cast<double>(d) / std::max(batch_size, 1))));
  if (value > incumbent_before) {
    out.center = x;
    out.successes += 1;
    out.failures = 0;
    if (out.successes >= cfg.success_threshold) {
      out.edge = (2.0 * out.edge).cwiseMin(cfg.edge_max);
      out.successes = 0;
      out.failures = 0;
    }
  } else {
    out.failures += 1;
    out.successes = 0;
    if (out.failures >= fail_threshold) {
      out.edge = 0.5 * out.edge;
      out.successes = 0;
      out.failures = 0;
      if (out.edge.minCoeff() < cfg.edge_min) {
        out.edge = Vector::Constant(d, cfg.edge_init);
        out.restarts += 1;
      }
    }
  }
  return out;
}

Matrix turbo_grid(const TrustRegion& tr, const TrustRegionConfig& cfg) {
  int d = static_cast<int>(tr.center.size());
  if (d < 1) throw ArgumentError("turbo_grid: empty trust region");
  long n = std::min<long>(cfg.grid_max,
                          std::max<long>(cfg.grid_min, static_cast<long>(cfg.grid_per_dim) * d));
  Vector lo(d), hi(d);
  for (int k = 0; k < d; ++k) {
    lo[k] = std::max(tr.center[k] - 0.5 * tr.edge[k], 0.0);
    hi[k] = std::min(tr.center[k] + 0.5 * tr.edge[k], 1.0);
    if (hi[k] < lo[k]) throw ArgumentError("turbo_grid: region outside the domain");
  }
  Matrix pts = sobol_grid(static_cast<int>(n) - 1, d);
  Matrix out(n, d);
  out.row(0) = tr.center.cwiseMax(0.0).cwiseMin(1.0).transpose();
  for (long i = 0; i < pts.rows(); ++i)
    for (int k = 0; k < d; ++k) out(i + 1, k) = lo[k] + pts(i, k) * (hi[k] - lo[k]);
  return out;
}

AcqOptimum turbo_propose(const TrustRegion& tr, const MultiFidelitySurrogate& s,
                         std::uint64_t seed, const TrustRegionConfig& cfg) {
  Matrix grid = turbo_grid(tr, cfg);
  return thompson_select(s, grid, s.fidelity_count(), seed);
}

}  // namespace mfbo
