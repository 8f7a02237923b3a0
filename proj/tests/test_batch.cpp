#include <doctest.h>

#include <random>

#include "mfbo/batch.hpp"
#include "oracles.hpp"

using namespace mfbo;

namespace {

MultiFidelitySurrogate toy_surrogate(std::mt19937& rng, int dim = 2, int tasks = 2,
                                     int per_task = 6) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MultiTaskHyperparams hp;
  for (int w = 0; w < 2; ++w) {
    KernelParams k;
    k.output_scale = 1.0;
    k.lengthscales = Vector::Constant(dim, 0.3);
    hp.lmc.latent.push_back(k);
    Matrix A = Matrix::Constant(tasks, 1, 0.5);
    hp.lmc.task_factors.push_back(A);
    hp.lmc.task_diagonal.push_back(Vector::Constant(tasks, 0.1));
  }
  hp.noise_variance = Vector::Constant(tasks, 0.01);
  hp.mean_constant = 0.0;
  FidelityDataset data;
  data.fidelity_count = tasks;
  for (int m = 1; m <= tasks; ++m)
    for (int i = 0; i < per_task; ++i) {
      Vector x(dim);
      for (int j = 0; j < dim; ++j) x[j] = u(rng);
      data.append(x, m, std::sin(5.0 * x[0]) * 0.4 + 0.05 * m);
    }
  return MultiFidelitySurrogate::from_lmc(data, hp);
}

}  // namespace

TEST_SUITE("batch") {

TEST_CASE("exclusion factor reproduces the worked example") {
  // Pending point 0.2 away, L = 2, best-so-far 1.0, pending mean 0.7 and
  // sd 0.18: radius (1.0 - 0.7)/2 + 0.18/2 = 0.24, factor 0.2/0.24 = 5/6.
  Vector x(1), xj(1);
  x << 0.5;
  xj << 0.3;
  PenalizerParams p;
  p.lipschitz = 2.0;
  p.max_estimate = 1.0;
  double got = hard_penalizer(x, xj, 0.7, 0.18, p);
  CHECK(got == doctest::Approx(0.8333333333333334).epsilon(1e-12));
}

TEST_CASE("exclusion factor is clipped to [0,1] and grows with distance") {
  Vector xj = Vector::Constant(2, 0.5);
  PenalizerParams p;
  p.lipschitz = 1.5;
  p.max_estimate = 0.8;
  double prev = -1.0;
  for (double step = 0.0; step <= 1.0; step += 0.05) {
    Vector x = xj + Vector::Constant(2, step);
    double v = hard_penalizer(x, xj, 0.2, 0.3, p);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    CHECK(v >= prev - 1e-12);
    prev = v;
  }
  // At the pending point itself the factor vanishes.
  CHECK(hard_penalizer(xj, xj, 0.2, 0.3, p) == 0.0);
  // A pending mean at or above the incumbent estimate with zero spread
  // collapses the ball to the point: nothing else is penalized.
  PenalizerParams tight;
  tight.lipschitz = 1.5;
  tight.max_estimate = 0.8;
  Vector away = xj + Vector::Constant(2, 0.01);
  CHECK(hard_penalizer(away, xj, 5.0, 0.0, tight) == doctest::Approx(1.0));
}

TEST_CASE("penalty product multiplies per-pending factors") {
  Vector x = Vector::Constant(2, 0.1);
  std::vector<PendingPenalty> pending(2);
  for (int i = 0; i < 2; ++i) {
    pending[i].x = Vector::Constant(2, 0.3 + 0.2 * i);
    pending[i].mean = 0.5;
    pending[i].sd = 0.2;
    pending[i].params.lipschitz = 1.0;
    pending[i].params.max_estimate = 0.9;
  }
  double manual = hard_penalizer(x, pending[0].x, 0.5, 0.2, pending[0].params) *
                  hard_penalizer(x, pending[1].x, 0.5, 0.2, pending[1].params);
  CHECK(penalty_product(x, pending) == doctest::Approx(manual).epsilon(1e-14));
  CHECK(penalty_product(x, {}) == 1.0);
}

TEST_CASE("penalized acquisition soft-plusses signed scores") {
  CHECK(penalized_acquisition(2.0, true, 0.5) == doctest::Approx(1.0));
  double soft = std::log1p(std::exp(-3.0));
  CHECK(penalized_acquisition(-3.0, false, 0.5) == doctest::Approx(0.5 * soft).epsilon(1e-12));
  CHECK(penalized_acquisition(-3.0, false, 0.0) == 0.0);
  // Softplus keeps the transform positive, so penalties still bite.
  CHECK(penalized_acquisition(-30.0, false, 1.0) > 0.0);
}

TEST_CASE("penalizer parameter estimation uses best value and steepest slope") {
  std::mt19937 rng(7);
  auto s = toy_surrogate(rng);
  FidelityDataset data;
  data.fidelity_count = 2;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 8; ++i) {
    Vector x(2);
    x << u(rng), u(rng);
    data.append(x, 1 + i % 2, std::sin(5.0 * x[0]) * 0.4);
  }
  LipschitzConfig cfg;
  cfg.points_per_dim = 40;
  Vector xj = Vector::Constant(2, 0.5);
  PenalizerParams p = estimate_penalizer_params(s, data, xj, 2, cfg, 33);
  CHECK(p.max_estimate == doctest::Approx(data.filter(2).y.maxCoeff()));
  CHECK(p.lipschitz >= cfg.floor);
  // The estimate dominates the gradient norm at a few nearby probes.
  for (int rep = 0; rep < 5; ++rep) {
    Vector x = xj + Vector::Constant(2, 0.02 * rep - 0.05);
    for (int j = 0; j < 2; ++j) x[j] = std::clamp(x[j], 0.0, 1.0);
    // Local screen maximum is an estimate; allow a modest margin.
    CHECK(p.lipschitz >= 0.2 * s.gradient_mean(x, 2).norm());
  }
  CHECK(estimate_penalizer_params(s, data, xj, 2, cfg, 33).lipschitz == p.lipschitz);

  FidelityDataset empty;
  empty.fidelity_count = 2;
  CHECK_THROWS_AS(estimate_penalizer_params(s, empty, xj, 2, cfg, 33), ArgumentError);
}

TEST_CASE("fantasized entropy gain averages the per-fantasy scores") {
  std::mt19937 rng(11);
  auto s = toy_surrogate(rng);
  Matrix Xq(2, 2);
  Xq << 0.2, 0.3, 0.7, 0.6;
  std::vector<FidelityIndex> fq = {1, 2};
  FantasyBank bank = s.make_fantasies(Xq, fq, 5, 77);

  Matrix fstar(5, 3);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 3; ++j) fstar(i, j) = u(rng);

  Vector x = Vector::Constant(2, 0.45);
  double fast = fantasized_mes(bank, x, 1, fstar);
  double manual = 0.0;
  for (int sdx = 0; sdx < 5; ++sdx) {
    FantasyBank::View view(&bank, sdx);
    manual += mes(view, x, 1, fstar.row(sdx));
  }
  manual /= 5.0;
  CHECK(fast == doctest::Approx(manual).epsilon(1e-9));

  // One shared row of max-value samples is accepted too.
  Matrix shared = fstar.topRows(1);
  double with_shared = fantasized_mes(bank, x, 1, shared);
  CHECK(std::isfinite(with_shared));
  Matrix wrong = fstar.topRows(3);
  CHECK_THROWS_AS(fantasized_mes(bank, x, 1, wrong), ArgumentError);
}

TEST_CASE("per-fantasy max draws share the grid factorization and respect the cap") {
  std::mt19937 rng(13);
  auto s = toy_surrogate(rng);
  Matrix Xq(1, 2);
  Xq << 0.4, 0.4;
  std::vector<FidelityIndex> fq = {2};
  FantasyBank bank = s.make_fantasies(Xq, fq, 4, 78);
  Matrix grid(30, 2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 30; ++i) grid.row(i) << u(rng), u(rng);

  Matrix f1 = sample_max_values_all(bank, grid, 6, 211, 64);
  CHECK(f1.rows() == 4);
  CHECK(f1.cols() == 6);
  CHECK(sample_max_values_all(bank, grid, 6, 211, 64) == f1);
  CHECK_THROWS_AS(sample_max_values_all(bank, grid, 6, 211, 16), ArgumentError);
}

TEST_CASE("posterior-sample selection ignores pending queries entirely") {
  std::mt19937 rng(17);
  auto s = toy_surrogate(rng);
  Matrix grid(50, 2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 50; ++i) grid.row(i) << u(rng), u(rng);
  AcqOptimum a = thompson_select(s, grid, 2, 501);
  AcqOptimum b = thompson_select(s, grid, 2, 501);
  CHECK(a.grid_index == b.grid_index);
  CHECK(a.x == b.x);
  // Different seeds explore different rows at least sometimes.
  bool moved = false;
  for (int k = 0; k < 10 && !moved; ++k)
    moved = thompson_select(s, grid, 2, 600 + k).grid_index != a.grid_index;
  CHECK(moved);
}

TEST_CASE("trust region counters, recentering, and restarts follow the rules") {
  TrustRegionConfig cfg;
  Vector c = Vector::Constant(3, 0.5);
  TrustRegion tr = make_trust_region(c, cfg);
  CHECK(tr.edge == Vector::Constant(3, cfg.edge_init));

  Vector better = Vector::Constant(3, 0.6);

  // Non-target fidelities never touch the state.
  TrustRegion same = turbo_update(tr, 1, 2, better, 5.0, 0.0, 4, cfg);
  CHECK(same.successes == tr.successes);
  CHECK(same.failures == tr.failures);
  CHECK(same.center == tr.center);

  // Successes recenter and eventually expand.
  TrustRegion cur = tr;
  for (int k = 0; k < cfg.success_threshold; ++k)
    cur = turbo_update(cur, 2, 2, better, 1.0 + k, 0.5 + k, 4, cfg);
  CHECK(cur.center == better);
  CHECK(cur.edge[0] == doctest::Approx(std::min(2.0 * cfg.edge_init, cfg.edge_max)));
  CHECK(cur.successes == 0);  // counter resets after expansion

  // Failures shrink once the threshold is hit; threshold covers whole batches.
  int fail_threshold = std::max(cfg.failure_threshold_min,
                                static_cast<int>(std::ceil(3.0 / 4.0)));
  cur = tr;
  for (int k = 0; k < fail_threshold; ++k)
    cur = turbo_update(cur, 2, 2, better, -1.0, 0.5, 4, cfg);
  CHECK(cur.edge[0] == doctest::Approx(0.5 * cfg.edge_init));
  CHECK(cur.failures == 0);

  // Collapse restarts at the initial size and counts the restart.
  TrustRegion small = tr;
  small.edge = Vector::Constant(3, cfg.edge_min * 1.01);
  TrustRegion restarted = small;
  for (int k = 0; k < fail_threshold; ++k)
    restarted = turbo_update(restarted, 2, 2, better, -1.0, 0.5, 4, cfg);
  CHECK(restarted.edge[0] == doctest::Approx(cfg.edge_init));
  CHECK(restarted.restarts == small.restarts + 1);

  // Purity: the input state is never mutated.
  CHECK(small.edge[0] == doctest::Approx(cfg.edge_min * 1.01));
}

TEST_CASE("trust-region grid stays inside the region and leads with the center") {
  TrustRegionConfig cfg;
  cfg.grid_min = 50;
  cfg.grid_max = 120;
  cfg.grid_per_dim = 30;
  Vector c(2);
  c << 0.05, 0.9;  // near the boundary: the box clips against [0,1]
  TrustRegion tr = make_trust_region(c, cfg);
  Matrix g = turbo_grid(tr, cfg);
  CHECK(g.rows() == std::min(cfg.grid_max, std::max(cfg.grid_min, cfg.grid_per_dim * 2)));
  for (int j = 0; j < 2; ++j) CHECK(g(0, j) == std::clamp(c[j], 0.0, 1.0));
  for (long i = 0; i < g.rows(); ++i)
    for (int j = 0; j < 2; ++j) {
      CHECK(g(i, j) >= std::max(0.0, c[j] - 0.5 * tr.edge[j]) - 1e-12);
      CHECK(g(i, j) <= std::min(1.0, c[j] + 0.5 * tr.edge[j]) + 1e-12);
      CHECK(g(i, j) >= 0.0);
      CHECK(g(i, j) <= 1.0);
    }
}

TEST_CASE("trust-region proposals are deterministic and inside the region") {
  std::mt19937 rng(23);
  auto s = toy_surrogate(rng);
  TrustRegionConfig cfg;
  cfg.grid_min = 60;
  cfg.grid_max = 60;
  TrustRegion tr = make_trust_region(Vector::Constant(2, 0.5), cfg);
  AcqOptimum a = turbo_propose(tr, s, 31, cfg);
  AcqOptimum b = turbo_propose(tr, s, 31, cfg);
  CHECK(a.x == b.x);
  for (int j = 0; j < 2; ++j) {
    CHECK(a.x[j] >= 0.5 - 0.5 * tr.edge[j] - 1e-12);
    CHECK(a.x[j] <= 0.5 + 0.5 * tr.edge[j] + 1e-12);
  }
}

}  // TEST_SUITE
