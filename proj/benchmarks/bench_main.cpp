// Microbenchmarks for the hot paths: kernel evaluation, GP fitting and
// prediction, multi-task posterior draws, acquisition scoring, and the
// max-value entropy integrand. Run with --benchmark_filter=<regex> to select.
#include <benchmark/benchmark.h>

#include <cmath>

#include "mfbo/acquisition.hpp"
#include "mfbo/batch.hpp"
#include "mfbo/benchmarks.hpp"
#include "mfbo/gp.hpp"
#include "mfbo/mf_model.hpp"
#include "mfbo/sim_engine.hpp"
#include "mfbo/sobol.hpp"

namespace {

using namespace mfbo;

Matrix random_inputs(long n, int d, std::uint64_t seed) {
  Rng rng(seed);
  Matrix X(n, d);
  for (long i = 0; i < n; ++i) X.row(i) = uniform_vector(rng, d);
  return X;
}

Vector smooth_targets(const Matrix& X) {
  Vector y(X.rows());
  for (long i = 0; i < X.rows(); ++i) y[i] = std::sin(4.0 * X.row(i).sum()) * 0.4;
  return y;
}

GPHyperparams default_hp(int d) {
  GPHyperparams hp;
  hp.kernel.lengthscales = Vector::Constant(d, 0.3);
  hp.kernel.output_scale = 0.8;
  hp.noise_variance = 1e-3;
  hp.mean_constant = 0.0;
  return hp;
}

FidelityDataset random_mf_data(long n_per_fid, int d, int fids, std::uint64_t seed) {
  FidelityDataset data;
  data.fidelity_count = fids;
  for (int m = 1; m <= fids; ++m) {
    Matrix X = random_inputs(n_per_fid, d, seed + static_cast<std::uint64_t>(m));
    for (long i = 0; i < n_per_fid; ++i)
      data.append(X.row(i), m, std::sin(4.0 * X.row(i).sum()) * 0.4 + 0.05 * m);
  }
  return data;
}

void bm_rbf_gram(benchmark::State& state) {
  long n = state.range(0);
  int d = 8;
  Matrix X = random_inputs(n, d, 1);
  KernelParams kp;
  kp.lengthscales = Vector::Constant(d, 0.3);
  kp.output_scale = 1.0;
  for (auto _ : state) {
    Matrix K = rbf_gram(X, X, kp);
    benchmark::DoNotOptimize(K.data());
  }
}
BENCHMARK(bm_rbf_gram)->Arg(64)->Arg(256)->Arg(1024);

void bm_gp_fit(benchmark::State& state) {
  long n = state.range(0);
  Matrix X = random_inputs(n, 4, 2);
  Vector y = smooth_targets(X);
  TrainConfig tc;
  tc.epochs = 20;
  for (auto _ : state) {
    GPHyperparams hp = fit_hyperparameters(X, y, default_hp(4), PriorBoxes{}, tc);
    benchmark::DoNotOptimize(hp.noise_variance);
  }
}
BENCHMARK(bm_gp_fit)->Arg(32)->Arg(128)->Unit(benchmark::kMillisecond);

void bm_gp_predict_batch(benchmark::State& state) {
  long n = state.range(0);
  Matrix X = random_inputs(n, 4, 2);
  PosteriorGP gp = PosteriorGP::fit(X, smooth_targets(X), default_hp(4));
  Matrix Q = random_inputs(512, 4, 9);
  Vector mean, var;
  for (auto _ : state) {
    gp.predict_batch(Q, mean, var);
    benchmark::DoNotOptimize(mean.data());
  }
}
BENCHMARK(bm_gp_predict_batch)->Arg(64)->Arg(256)->Arg(1024);

void bm_lml_gradient(benchmark::State& state) {
  long n = state.range(0);
  Matrix X = random_inputs(n, 4, 2);
  Vector y = smooth_targets(X);
  GPHyperparams hp = default_hp(4);
  Vector grad;
  for (auto _ : state) {
    double v = log_marginal_likelihood_grad(X, y, hp, grad);
    benchmark::DoNotOptimize(v);
  }
}
BENCHMARK(bm_lml_gradient)->Arg(64)->Arg(256)->Arg(1024);

void bm_lmc_fit(benchmark::State& state) {
  long n = state.range(0);
  FidelityDataset data = random_mf_data(n, 3, 2, 5);
  SurrogateTrainConfig tc;
  tc.train.epochs = 15;
  tc.seed = 11;
  for (auto _ : state) {
    MultiFidelitySurrogate s = fit_surrogate(data, SurrogateKind::MultiTaskLMC, tc);
    benchmark::DoNotOptimize(s.fidelity_count());
  }
}
BENCHMARK(bm_lmc_fit)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void bm_joint_posterior_draw(benchmark::State& state) {
  long g = state.range(0);
  FidelityDataset data = random_mf_data(48, 3, 2, 7);
  SurrogateTrainConfig tc;
  tc.train.epochs = 5;
  tc.seed = 13;
  MultiFidelitySurrogate s = fit_surrogate(data, SurrogateKind::MultiTaskLMC, tc);
  Matrix grid = sobol_grid(static_cast<int>(g), 3);
  for (auto _ : state) {
    Vector draw = sample_on_grid(s, grid, 2, 17, static_cast<int>(g));
    benchmark::DoNotOptimize(draw.data());
  }
}
BENCHMARK(bm_joint_posterior_draw)->Arg(128)->Arg(512)->Unit(benchmark::kMillisecond);

void bm_penalty_product(benchmark::State& state) {
  long pending = state.range(0);
  PenalizerParams params;
  params.lipschitz = 4.0;
  params.max_estimate = 1.0;
  std::vector<PendingPenalty> pens;
  Rng rng(21);
  for (long j = 0; j < pending; ++j) {
    PendingPenalty p;
    p.x = uniform_vector(rng, 6);
    p.mean = 0.2;
    p.sd = 0.1;
    p.params = params;
    pens.push_back(std::move(p));
  }
  Matrix Q = random_inputs(256, 6, 23);
  for (auto _ : state) {
    double acc = 0.0;
    for (long i = 0; i < Q.rows(); ++i) acc += penalty_product(Q.row(i), pens);
    benchmark::DoNotOptimize(acc);
  }
}
BENCHMARK(bm_penalty_product)->Arg(4)->Arg(16)->Arg(64);

void bm_mes_gain(benchmark::State& state) {
  MesConfig cfg;
  cfg.quad_intervals = static_cast<int>(state.range(0));
  Vector fstar(3);
  fstar << 1.2, 1.5, 1.9;
  for (auto _ : state) {
    double g = mes_from_moments(0.3, 0.5, 1e-3, 0.4, 0.6, 0.45, fstar, cfg);
    benchmark::DoNotOptimize(g);
  }
}
BENCHMARK(bm_mes_gain)->Arg(100)->Arg(1000)->Arg(10000);

void bm_sim_run(benchmark::State& state) {
  BenchmarkPreset preset = make_preset("Currin2D");
  EngineConfig cfg;
  cfg.strategy = StrategyId::UCB_V_LP;
  cfg.horizon = 12;
  cfg.acq.screen_count = 128;
  cfg.acq.refine_starts = 1;
  cfg.acq.refine_epochs = 5;
  cfg.train.train.epochs = 10;
  cfg.refit_every_arrivals = 10;
  for (auto _ : state) {
    RunRecord rec = run_simulation(preset, cfg, 0);
    benchmark::DoNotOptimize(rec.query_count);
  }
  state.SetItemsProcessed(state.iterations() * cfg.horizon);
}
BENCHMARK(bm_sim_run)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
