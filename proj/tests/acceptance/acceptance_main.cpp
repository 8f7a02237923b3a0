// End-to-end acceptance gate. Each criterion prints one [PASS]/[FAIL] line;
// the process exits nonzero if any criterion fails. Tolerances are pinned
// here as constants next to the check that uses them.

#include <chrono>
#include <cstdio>
#include <random>
#include <sstream>

#include "mfbo/driver.hpp"
#include "oracles.hpp"

using namespace mfbo;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return sorted_quantile(v, 0.5);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

// Shared tuning for the simulation-heavy criteria: small screens and short
// warm refits keep single-core sweeps tractable without touching semantics.
EngineConfig sweep_config(StrategyId s, long horizon) {
  EngineConfig cfg;
  cfg.strategy = s;
  cfg.horizon = horizon;
  cfg.acq.screen_count = 128;
  cfg.acq.refine_starts = 1;
  cfg.acq.refine_epochs = 8;
  cfg.train.train.epochs = 12;
  cfg.warm_refit_epochs = 8;
  cfg.refit_every_arrivals = 10;
  cfg.fantasy_count = 2;
  cfg.fstar_count = 2;
  cfg.fstar_grid = 64;
  cfg.mes_screen = 64;
  cfg.mes.quad_intervals = 150;
  cfg.lipschitz.points_per_dim = 16;
  cfg.turbo_grid_cap = 400;
  return cfg;
}

// True simple regret: the incumbent is the best *observed* target-fidelity
// query, but its quality is judged by a noiseless re-evaluation.
double simple_regret(const RunRecord& rec, const BenchmarkPreset& preset) {
  int target = preset.fidelity_count;
  long best = -1;
  for (long i = 0; i < rec.observed.size(); ++i)
    if (rec.observed.fidelity[static_cast<std::size_t>(i)] == target &&
        (best < 0 || rec.observed.y[i] > rec.observed.y[best]))
      best = i;
  if (best < 0) return std::numeric_limits<double>::infinity();
  return preset.optimum - preset.objective(rec.observed.X.row(best), target);
}

// --- Criterion 1: posterior equals direct joint-Gaussian conditioning -------

Outcome criterion_posterior() {
  constexpr double tol = 1e-8;  // absolute, mean and variance alike
  std::mt19937 rng(2026);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_gp = 0.0;

  for (int rep = 0; rep < 20; ++rep) {
    int d = 1 + rep % 3;
    long n = 2 + static_cast<long>(rng() % 7);  // N <= 8
    Matrix X(n, d);
    Vector y(n);
    for (long i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) X(i, j) = u(rng);
      y[i] = std::sin(5.0 * X(i, 0)) + 0.3 * u(rng);
    }
    GPHyperparams hp;
    hp.kernel.lengthscales = Vector::Constant(d, 0.1 + 0.5 * u(rng));
    hp.kernel.output_scale = 0.3 + u(rng);
    hp.noise_variance = 0.005 + 0.05 * u(rng);
    hp.mean_constant = u(rng) - 0.5;
    PosteriorGP gp = PosteriorGP::fit(X, y, hp);

    Matrix Xs(6, d);
    for (long i = 0; i < 6; ++i)
      for (int j = 0; j < d; ++j) Xs(i, j) = u(rng);
    Matrix K_yy = oracle::rbf_gram(X, X, hp.kernel.lengthscales, hp.kernel.output_scale);
    Matrix K_sy = oracle::rbf_gram(Xs, X, hp.kernel.lengthscales, hp.kernel.output_scale);
    Matrix K_ss = oracle::rbf_gram(Xs, Xs, hp.kernel.lengthscales, hp.kernel.output_scale);
    oracle::Conditional ref =
        oracle::condition(K_yy, K_sy, K_ss, y, hp.mean_constant, hp.noise_variance);
    for (long i = 0; i < 6; ++i) {
      auto [mean, var] = gp.predict(Xs.row(i));
      worst_gp = std::max(worst_gp, std::abs(mean - ref.mean[i]));
      worst_gp = std::max(worst_gp, std::abs(var - ref.cov(i, i)));
    }
  }

  // Multi-task model against the stacked-Gram oracle.
  double worst_lmc = 0.0;
  for (int rep = 0; rep < 8; ++rep) {
    int d = 1 + rep % 2, tasks = 2 + rep % 2, latents = 2;
    MultiTaskHyperparams hp;
    Vector ell = Vector::Constant(d, 0.15 + 0.4 * u(rng));
    std::vector<Matrix> As;
    std::vector<Vector> vs;
    for (int w = 0; w < latents; ++w) {
      KernelParams k;
      k.output_scale = 1.0;
      k.lengthscales = ell;
      hp.lmc.latent.push_back(k);
      Matrix A(tasks, 1);
      for (int a = 0; a < tasks; ++a) A(a, 0) = u(rng) - 0.5;
      hp.lmc.task_factors.push_back(A);
      Vector v = Vector::Constant(tasks, 0.05 + 0.3 * u(rng));
      hp.lmc.task_diagonal.push_back(v);
      As.push_back(A);
      vs.push_back(v);
    }
    hp.noise_variance = Vector::Constant(tasks, 0.01 + 0.02 * u(rng));
    hp.mean_constant = 0.2 * (u(rng) - 0.5);

    FidelityDataset data;
    data.fidelity_count = tasks;
    long n = 4 + static_cast<long>(rng() % 5);
    for (long i = 0; i < n; ++i) {
      Vector x(d);
      for (int j = 0; j < d; ++j) x[j] = u(rng);
      data.append(x, 1 + static_cast<int>(rng() % tasks), std::cos(3.0 * x[0]) + 0.2 * u(rng));
    }
    MultiFidelitySurrogate s = MultiFidelitySurrogate::from_lmc(data, hp);

    std::vector<Vector> ells(static_cast<std::size_t>(latents), ell);
    auto kernel = [&](const Vector& a, int fa, const Vector& b, int fb) {
      return oracle::lmc_kernel(a, fa, b, fb, ells, As, vs);
    };
    for (int probe = 0; probe < 4; ++probe) {
      Vector x(d);
      for (int j = 0; j < d; ++j) x[j] = u(rng);
      int m = 1 + static_cast<int>(rng() % tasks);
      Matrix K_yy(n, n), K_sy(1, n), K_ss(1, 1);
      for (long i = 0; i < n; ++i) {
        for (long j = 0; j < n; ++j)
          K_yy(i, j) = kernel(data.X.row(i), data.fidelity[i], data.X.row(j), data.fidelity[j]);
        K_yy(i, i) += hp.noise_variance[data.fidelity[i] - 1];
        K_sy(0, i) = kernel(x, m, data.X.row(i), data.fidelity[i]);
      }
      K_ss(0, 0) = kernel(x, m, x, m);
      oracle::Conditional ref =
          oracle::condition(K_yy, K_sy, K_ss, data.y, hp.mean_constant, 0.0);
      auto [mean, var] = s.predict(x, m);
      worst_lmc = std::max(worst_lmc, std::abs(mean - ref.mean[0]));
      worst_lmc = std::max(worst_lmc, std::abs(var - ref.cov(0, 0)));
    }
  }

  Outcome out;
  out.pass = worst_gp <= tol && worst_lmc <= tol;
  out.detail = "max |err| single-task " + fmt(worst_gp) + ", multi-task " + fmt(worst_lmc) +
               " (tol " + fmt(tol) + ")";
  return out;
}

// --- Criterion 2: likelihood gradients match central differences -------------

Outcome criterion_gradients() {
  constexpr double step = 1e-5;
  constexpr double tol = 1e-4;  // relative
  std::mt19937 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    int d = 1 + rep % 3;
    long n = 4 + static_cast<long>(rng() % 5);
    Matrix X(n, d);
    Vector y(n);
    for (long i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) X(i, j) = u(rng);
      y[i] = std::sin(4.0 * X(i, 0)) + 0.5 * u(rng);
    }
    GPHyperparams hp;
    hp.kernel.lengthscales = Vector::Constant(d, 0.15 + 0.4 * u(rng));
    hp.kernel.output_scale = 0.4 + u(rng);
    hp.noise_variance = 0.01 + 0.05 * u(rng);
    hp.mean_constant = 0.4 * (u(rng) - 0.5);

    Vector grad;
    log_marginal_likelihood_grad(X, y, hp, grad);
    Vector t(d + 3);
    for (int j = 0; j < d; ++j) t[j] = std::log(hp.kernel.lengthscales[j]);
    t[d] = std::log(hp.kernel.output_scale);
    t[d + 1] = std::log(hp.noise_variance);
    t[d + 2] = hp.mean_constant;
    auto value_at = [&](const Vector& tt) {
      GPHyperparams h = hp;
      for (int j = 0; j < d; ++j) h.kernel.lengthscales[j] = std::exp(tt[j]);
      h.kernel.output_scale = std::exp(tt[d]);
      h.noise_variance = std::exp(tt[d + 1]);
      h.mean_constant = tt[d + 2];
      return log_marginal_likelihood(X, y, h);
    };
    Vector fd = oracle::fd_gradient(value_at, t, step);
    for (long j = 0; j < d + 3; ++j) {
      double rel = std::abs(grad[j] - fd[j]) / std::max(std::abs(fd[j]), 1e-6);
      worst = std::max(worst, rel);
    }
  }
  Outcome out;
  out.pass = worst <= tol;
  out.detail = "max relative gradient error " + fmt(worst) + " over 10 configs (tol " +
               fmt(tol) + ", step " + fmt(step) + ")";
  return out;
}

// --- Criterion 3: penalizing the argmax moves the argmax ---------------------

Outcome criterion_penalization() {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const long grid_n = 401;
  Matrix grid(grid_n, 1);
  for (long i = 0; i < grid_n; ++i) grid(i, 0) = static_cast<double>(i) / (grid_n - 1);

  int moved = 0, scenarios = 0, attempts = 0;
  while (scenarios < 100 && attempts < 400) {
    ++attempts;
    FidelityDataset data;
    data.fidelity_count = 1;
    long n = 4 + static_cast<long>(rng() % 7);
    double a = 2.0 + 6.0 * u(rng), b = 6.28 * u(rng);
    for (long i = 0; i < n; ++i) {
      Vector x(1);
      x << u(rng);
      data.append(x, 1, std::sin(a * x[0] + b) + 0.1 * (u(rng) - 0.5));
    }
    SurrogateTrainConfig tc;
    tc.train.epochs = 25;
    tc.seed = rng();
    MultiFidelitySurrogate s = fit_surrogate(data, SurrogateKind::IndependentGPs, tc);

    Vector base(grid_n);
    Vector mean_g(grid_n), var_g(grid_n);
    s.predict_batch(grid, 1, mean_g, var_g);
    for (long i = 0; i < grid_n; ++i) base[i] = ucb(mean_g[i], var_g[i], 4.0);
    AcqOptimum top = argmax_on_grid(grid, base);
    double second = -std::numeric_limits<double>::infinity();
    for (long i = 0; i < grid_n; ++i)
      if (i != top.grid_index) second = std::max(second, base[i]);
    if (!(top.value > second + 1e-9)) continue;  // needs a distinct leader
    ++scenarios;

    LipschitzConfig lip;
    lip.points_per_dim = 64;
    PendingPenalty pen;
    pen.x = top.x;
    auto [pm, pv] = s.predict(top.x, 1);
    pen.mean = pm;
    pen.sd = std::sqrt(std::max(pv, 0.0));
    pen.params = estimate_penalizer_params(s, data, top.x, 1, lip, rng());

    Vector scored(grid_n);
    for (long i = 0; i < grid_n; ++i) {
      double p = penalty_product(grid.row(i), {pen});
      scored[i] = penalized_acquisition(base[i], false, p);
    }
    AcqOptimum after = argmax_on_grid(grid, scored);
    if (after.grid_index != top.grid_index) ++moved;
  }
  Outcome out;
  out.pass = scenarios == 100 && moved == 100;
  out.detail = std::to_string(moved) + "/" + std::to_string(scenarios) +
               " argmaxes moved after penalization";
  return out;
}

// --- Criterion 4: capacity and conservation across the full matrix ----------

Outcome criterion_capacity_sweep() {
  const long horizon = 30;
  long runs = 0, violations = 0, failures = 0;
  std::string first_issue;
  for (const std::string& bname : benchmark_names()) {
    BenchmarkPreset preset = bname == "BatterySurrogate" ? make_preset(bname, 7, 64)
                                                         : make_preset(bname);
    for (const std::string& sname : strategy_names()) {
      StrategyId sid = *strategy_from_name(sname);
      for (std::uint64_t seed : {0, 1, 2}) {
        EngineConfig cfg = sweep_config(sid, horizon);
        long bad = 0;
        cfg.on_step = [&](const StepContext& ctx) {
          double total = 0.0;
          for (const PendingQuery& q : *ctx.pending) total += q.space;
          if (std::abs(total - ctx.occupied) > 1e-9) ++bad;
          if (ctx.occupied > preset.total_space + 1e-9) ++bad;
        };
        RunRecord rec = run_simulation(preset, cfg, seed);
        ++runs;
        for (const StepRecord& st : rec.steps)
          if (st.occupied > preset.total_space + 1e-9) ++bad;
        if (!rec.completed) {
          ++failures;
          if (first_issue.empty())
            first_issue = bname + "/" + sname + "/seed" + std::to_string(seed) + ": " +
                          rec.error;
        }
        violations += bad;
        std::fprintf(stderr, "\r  capacity sweep %ld/240 (%s, %s)          ", runs,
                     bname.c_str(), sname.c_str());
        std::fflush(stderr);
      }
    }
  }
  std::fprintf(stderr, "\r%*s\r", 70, "");
  Outcome out;
  out.pass = violations == 0 && failures == 0 && runs == 240;
  out.detail = std::to_string(runs) + " runs, " + std::to_string(violations) +
               " space violations, " + std::to_string(failures) + " aborted" +
               (first_issue.empty() ? "" : " (first: " + first_issue + ")");
  return out;
}

// --- Criterion 5: the async engine degenerates to the sequential loop --------

Outcome criterion_sequential_equivalence() {
  BenchmarkPreset p = make_preset("Currin2D");
  for (auto& f : p.fidelities) f.delay = 0.0;
  const std::uint64_t seed = 41;
  const long T = 25;

  EngineConfig cfg;
  cfg.strategy = StrategyId::UCB;
  cfg.horizon = T;
  cfg.total_space = 1.0;
  cfg.refit_every_arrivals = 1;
  cfg.acq.screen_count = 512;
  cfg.acq.refine_starts = 2;
  cfg.acq.refine_epochs = 10;
  RunRecord rec = run_simulation(p, cfg, seed);

  long init_steps = static_cast<long>(std::ceil(5.0 * p.dim / 1.0));
  std::vector<Vector> queries;
  Matrix X(0, p.dim);
  Vector y(0);
  std::optional<MultiFidelitySurrogate> model;
  GPHyperparams warm;
  bool have_warm = false;
  int fits = 0;
  double noise = p.fidelities[1].noise;
  for (long t = 1; t <= T; ++t) {
    if (t > 1) {
      long id = t - 2;
      const Vector& xq = queries[static_cast<std::size_t>(id)];
      double value = simulate_observation(p.objective, xq, 2, noise, seed, id);
      X.conservativeResize(X.rows() + 1, p.dim);
      X.row(X.rows() - 1) = xq;
      y.conservativeResize(y.size() + 1);
      y[y.size() - 1] = value;
      FidelityDataset data;
      data.fidelity_count = 1;
      data.X = X;
      data.y = y;
      data.fidelity.assign(static_cast<std::size_t>(X.rows()), 1);
      SurrogateTrainConfig tc = cfg.train;
      tc.seed = derive_seed(seed, seed_tag::train, static_cast<std::uint64_t>(fits));
      model = fit_surrogate(data, SurrogateKind::IndependentGPs, tc, nullptr,
                            have_warm ? &warm : nullptr);
      warm = model->independent_hyperparams(1);
      have_warm = true;
      ++fits;
    }
    Vector x;
    if (t <= init_steps || !model) {
      Rng prng(derive_seed(seed, seed_tag::init_design, static_cast<std::uint64_t>(t), 0));
      x = uniform_vector(prng, p.dim);
    } else {
      double beta = cfg.ucb.beta_at(static_cast<int>(t), p.dim);
      AcqFn f = [&](const Vector& z) {
        auto [mean, var] = model->predict(z, 1);
        return ucb(mean, var, beta);
      };
      BatchAcqFn fb = [&](const Matrix& Z) {
        Vector mean, var;
        model->predict_batch(Z, 1, mean, var);
        return Vector(mean + (beta * var.cwiseMax(0.0)).cwiseSqrt());
      };
      DomainSpec dom;
      dom.dim = p.dim;
      x = optimize_acquisition(f, dom, cfg.acq, fb).x;
    }
    queries.push_back(x);
  }

  std::vector<Vector> engine_queries;
  for (const EventRecord& e : rec.events)
    if (e.kind == EventKind::submit) engine_queries.push_back(e.x);

  long matched = 0;
  bool sizes_ok = engine_queries.size() == queries.size();
  if (sizes_ok)
    for (std::size_t i = 0; i < queries.size(); ++i)
      if (engine_queries[i] == queries[i]) ++matched;
  Outcome out;
  out.pass = rec.completed && sizes_ok && matched == T;
  out.detail = std::to_string(matched) + "/" + std::to_string(T) +
               " queries identical to the direct sequential loop";
  return out;
}

// --- Criterion 6: multi-fidelity batching beats the sequential baseline ------

Outcome criterion_beats_sequential() {
  constexpr double budget = 50.0;
  constexpr double wall_limit = 900.0;
  auto t0 = std::chrono::steady_clock::now();
  BenchmarkPreset p = make_preset("Currin2D");

  std::vector<double> mf, seq;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    EngineConfig a = sweep_config(StrategyId::UCB_V_LP,
                                  derive_horizon(budget, 5.0, 1.0, p.total_space));
    mf.push_back(simple_regret(run_simulation(p, a, seed), p));

    EngineConfig b = sweep_config(StrategyId::UCB, derive_horizon(budget, 5.0, 1.0, 1.0));
    b.total_space = 1.0;
    seq.push_back(simple_regret(run_simulation(p, b, seed), p));
    std::fprintf(stderr, "\r  budget-matched pair %llu/10          ",
                 static_cast<unsigned long long>(seed + 1));
    std::fflush(stderr);
  }
  std::fprintf(stderr, "\r%*s\r", 50, "");
  double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  Outcome out;
  out.pass = median(mf) <= median(seq) && elapsed < wall_limit;
  out.detail = "median regret " + fmt(median(mf)) + " (multi-fidelity batched) vs " +
               fmt(median(seq)) + " (sequential), " + fmt(elapsed) + "s";
  return out;
}

// --- Criterion 7: robust when the cheap fidelity lies -------------------------

Outcome criterion_bad_fidelity() {
  constexpr double budget = 50.0;
  BenchmarkPreset p = make_preset("BadCurrin2D");
  long horizon = derive_horizon(budget, 5.0, 1.0, p.total_space);
  std::vector<double> mf, pb;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    mf.push_back(
        simple_regret(run_simulation(p, sweep_config(StrategyId::UCB_V_LP, horizon), seed), p));
    pb.push_back(simple_regret(
        run_simulation(p, sweep_config(StrategyId::PLAYBOOK_UCB, horizon), seed), p));
    std::fprintf(stderr, "\r  adversarial pair %llu/10          ",
                 static_cast<unsigned long long>(seed + 1));
    std::fflush(stderr);
  }
  std::fprintf(stderr, "\r%*s\r", 50, "");
  Outcome out;
  out.pass = median(mf) <= 2.0 * median(pb) + 1e-12;
  out.detail = "median regret " + fmt(median(mf)) + " vs single-fidelity " + fmt(median(pb)) +
               " (factor " + fmt(median(mf) / std::max(median(pb), 1e-300)) + ", limit 2)";
  return out;
}

// --- Criterion 8: queries migrate to the target fidelity over time -----------

Outcome criterion_fidelity_migration() {
  constexpr double wall_limit = 1800.0;
  auto t0 = std::chrono::steady_clock::now();
  BenchmarkPreset p = make_preset("BatterySurrogate", 7, 64);
  const long T = 300;
  std::vector<double> deltas;
  std::string counts;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    EngineConfig cfg = sweep_config(StrategyId::UCB_V_LP, T);
    RunRecord rec = run_simulation(p, cfg, seed);
    long first = 0, last = 0;
    for (const EventRecord& e : rec.events) {
      if (e.kind != EventKind::submit || e.fidelity != 2) continue;
      if (e.time <= T / 3) ++first;
      if (e.time > 2 * T / 3) ++last;
    }
    deltas.push_back(static_cast<double>(last - first));
    counts += (seed ? ", " : "") + std::to_string(first) + "->" + std::to_string(last);
    std::fprintf(stderr, "\r  battery seed %llu/5          ",
                 static_cast<unsigned long long>(seed + 1));
    std::fflush(stderr);
  }
  std::fprintf(stderr, "\r%*s\r", 40, "");
  double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  Outcome out;
  out.pass = median(deltas) > 0.0 && elapsed < wall_limit;
  out.detail = "high-fidelity submissions first->final third per seed: " + counts + "; " +
               fmt(elapsed) + "s";
  return out;
}

// --- Criterion 9: trust regions win in 40 dimensions --------------------------

Outcome criterion_high_dim_trust_region() {
  BenchmarkPreset p = make_preset("Ackley40D");
  long horizon = derive_horizon(150.0, p.fidelities.back().delay,
                                p.fidelities.back().space, p.total_space);
  std::vector<double> tr_best, ucb_best;
  bool monotone = true;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    EngineConfig a = sweep_config(StrategyId::TURBO_V_TS, horizon);
    a.turbo_grid_cap = 1000;
    RunRecord ra = run_simulation(p, a, seed);
    double prev = -std::numeric_limits<double>::infinity();
    for (const StepRecord& st : ra.steps) {
      if (std::isnan(st.best_hf)) continue;
      if (st.best_hf < prev - 1e-12) monotone = false;
      prev = std::max(prev, st.best_hf);
    }
    tr_best.push_back(ra.steps.empty() || std::isnan(ra.steps.back().best_hf)
                          ? -std::numeric_limits<double>::infinity()
                          : ra.steps.back().best_hf);

    EngineConfig b = sweep_config(StrategyId::UCB, horizon);
    RunRecord rb = run_simulation(p, b, seed);
    ucb_best.push_back(rb.steps.empty() || std::isnan(rb.steps.back().best_hf)
                           ? -std::numeric_limits<double>::infinity()
                           : rb.steps.back().best_hf);
    std::fprintf(stderr, "\r  40-d pair %llu/5          ",
                 static_cast<unsigned long long>(seed + 1));
    std::fflush(stderr);
  }
  std::fprintf(stderr, "\r%*s\r", 40, "");
  Outcome out;
  out.pass = median(tr_best) > median(ucb_best) && monotone;
  out.detail = "median best " + fmt(median(tr_best)) + " (trust region) vs " +
               fmt(median(ucb_best)) + " (plain batched bound); incumbents " +
               (monotone ? "monotone" : "NOT monotone");
  return out;
}

// --- Criterion 10: entropy-gain quadrature matches a dense oracle ------------

Outcome criterion_entropy_gain() {
  constexpr double rel_tol = 1e-3;
  constexpr double floor = -1e-6;
  std::mt19937 rng(512);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_rel = 0.0;
  for (int rep = 0; rep < 25; ++rep) {
    double mean_m = 2.0 * u(rng) - 1.0;
    double sd_m = 0.3 + 1.2 * u(rng);
    double eta = 0.01 + 0.2 * u(rng);
    double mean_M = 2.0 * u(rng) - 1.0;
    double sd_M = 0.3 + 1.2 * u(rng);
    double rho = 1.8 * u(rng) - 0.9;
    double cov = rho * sd_m * sd_M;
    Vector fstar(1);
    fstar << mean_M + (0.3 + 2.7 * u(rng)) * sd_M;
    MesConfig cfg;
    double got = mes_from_moments(mean_m, sd_m * sd_m, eta, mean_M, sd_M * sd_M, cov, fstar, cfg);
    double ref = std::max(
        oracle::mes_quadrature(mean_m, sd_m * sd_m, eta, mean_M, sd_M * sd_M, cov, fstar), 0.0);
    double rel = std::abs(got - ref) / std::max(std::abs(ref), 1e-4);
    worst_rel = std::max(worst_rel, rel);
  }

  double worst_raw = 0.0;
  bool all_finite = true;
  for (int rep = 0; rep < 100; ++rep) {
    double mean_m = 2.0 * u(rng) - 1.0;
    double sd_m = 0.05 + 1.5 * u(rng);
    double eta = 0.001 + 0.25 * u(rng);
    double mean_M = 2.0 * u(rng) - 1.0;
    double sd_M = 0.05 + 1.5 * u(rng);
    double rho = 1.96 * u(rng) - 0.98;
    double cov = rho * sd_m * sd_M;
    Vector fstar(1);
    fstar << mean_M + (3.5 * u(rng) - 0.5) * sd_M;
    MesConfig cfg;
    cfg.clamp_nonnegative = false;
    double raw = mes_from_moments(mean_m, sd_m * sd_m, eta, mean_M, sd_M * sd_M, cov, fstar, cfg);
    if (!std::isfinite(raw)) all_finite = false;
    worst_raw = std::min(worst_raw, raw);
  }
  Outcome out;
  out.pass = worst_rel <= rel_tol && worst_raw >= floor && all_finite;
  out.detail = "max relative error " + fmt(worst_rel) + " over 25 tuples (tol " + fmt(rel_tol) +
               "); most negative raw gain " + fmt(worst_raw) + " over 100 tuples (floor " +
               fmt(floor) + ")";
  return out;
}

// --- Criterion 11: fidelity-selection invariants ------------------------------

Outcome criterion_fidelity_invariants() {
  std::mt19937 rng(2718);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  long checked = 0, broken = 0;

  MultiFidelitySurrogate s = [&] {
    MultiTaskHyperparams hp;
    for (int w = 0; w < 2; ++w) {
      KernelParams k;
      k.output_scale = 1.0;
      k.lengthscales = Vector::Constant(2, 0.25);
      hp.lmc.latent.push_back(k);
      Matrix A(3, 1);
      A << 0.55, 0.45, 0.4;
      hp.lmc.task_factors.push_back(A);
      hp.lmc.task_diagonal.push_back(Vector::Constant(3, 0.05));
    }
    hp.noise_variance = Vector::Constant(3, 0.01);
    hp.mean_constant = 0.0;
    FidelityDataset data;
    data.fidelity_count = 3;
    for (int m = 1; m <= 3; ++m)
      for (int i = 0; i < 5 + m; ++i) {
        Vector x(2);
        x << u(rng), u(rng);
        data.append(x, m, std::sin(4.0 * x[0]) * 0.4 + 0.1 * x[1]);
      }
    return MultiFidelitySurrogate::from_lmc(data, hp);
  }();

  // (a) monotone in the thresholds; (b) limits at both extremes.
  for (int rep = 0; rep < 1000; ++rep) {
    Vector x(2);
    x << u(rng), u(rng);
    FidelityIndex prev = 1;
    bool ok = true;
    for (double g : {1e-6, 0.01, 0.05, 0.2, 1.0, 1e6}) {
      FidelityIndex m = variance_rule(s, x, 4.0, make_threshold_state(3, 0, g));
      if (m < prev) ok = false;
      prev = m;
    }
    if (variance_rule(s, x, 4.0, make_threshold_state(3, 0, 1e-12)) != 1) ok = false;
    if (variance_rule(s, x, 4.0, make_threshold_state(3, 0, 1e9)) != 3) ok = false;
    ++checked;
    if (!ok) ++broken;
  }

  // (c) the information rule only sees relative delays.
  {
    Matrix Xq(2, 2);
    Xq << 0.2, 0.3, 0.7, 0.6;
    FantasyBank bank = s.make_fantasies(Xq, {1, 2}, 4, 11);
    Matrix grid = sobol_grid(48, 2);
    Matrix fstar = sample_max_values_all(bank, grid, 3, 5, 48);
    MesConfig mc;
    mc.quad_intervals = 150;
    for (int rep = 0; rep < 1000; ++rep) {
      Vector x(2);
      x << u(rng), u(rng);
      Vector delay(3);
      delay << 0.5 + 3.0 * u(rng), 1.0 + 6.0 * u(rng), 2.0 + 20.0 * u(rng);
      FidelityIndex base = information_rule(bank, x, fstar, delay, mc);
      bool ok = information_rule(bank, x, fstar, 2.0 * delay, mc) == base &&
                information_rule(bank, x, fstar, 0.25 * delay, mc) == base;
      ++checked;
      if (!ok) ++broken;
    }
  }

  // (d) threshold updates never lower a threshold.
  {
    Vector ratio(2);
    ratio << 3.0, 5.0;
    ThresholdState st = make_threshold_state(3, 0, 0.1);
    for (int stepi = 1; stepi <= 1000; ++stepi) {
      Vector before = st.gamma;
      if (u(rng) < 0.4)
        note_submission(st, 1 + static_cast<int>(rng() % 3), stepi);
      update_thresholds(st, stepi, ratio);
      ++checked;
      if ((st.gamma.array() < before.array() - 0.0).any()) ++broken;
    }
  }

  Outcome out;
  out.pass = broken == 0;
  out.detail = std::to_string(checked) + " probes, " + std::to_string(broken) + " violations";
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  struct Entry {
    int number;
    const char* name;
    Outcome (*fn)();
  };
  const Entry entries[] = {
      {1, "posterior equals direct conditioning", criterion_posterior},
      {2, "likelihood gradients match finite differences", criterion_gradients},
      {3, "penalization relocates the argmax", criterion_penalization},
      {4, "capacity and space conservation across the sweep", criterion_capacity_sweep},
      {5, "async engine reduces to the sequential loop", criterion_sequential_equivalence},
      {6, "multi-fidelity batching beats sequential", criterion_beats_sequential},
      {7, "robust to a lying low fidelity", criterion_bad_fidelity},
      {8, "queries migrate to the target fidelity", criterion_fidelity_migration},
      {9, "trust regions win in 40 dimensions", criterion_high_dim_trust_region},
      {10, "entropy gain matches dense quadrature", criterion_entropy_gain},
      {11, "fidelity-selection invariants", criterion_fidelity_invariants},
  };

  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));

  bool all_pass = true;
  for (const Entry& e : entries) {
    if (!wanted.empty() &&
        std::find(wanted.begin(), wanted.end(), e.number) == wanted.end())
      continue;
    auto t0 = std::chrono::steady_clock::now();
    Outcome r;
    try {
      r = e.fn();
    } catch (const std::exception& ex) {
      r.pass = false;
      r.detail = std::string("exception: ") + ex.what();
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] criterion %d: %s — %s (%.1fs)\n", r.pass ? "PASS" : "FAIL", e.number,
                e.name, r.detail.c_str(), secs);
    std::fflush(stdout);
    all_pass = all_pass && r.pass;
  }
  return all_pass ? 0 : 1;
}
