#include "mfbo/sim_engine.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "mfbo/sobol.hpp"

namespace mfbo {

const std::vector<std::string>& strategy_names() {
  static const std::vector<std::string> names = {
      "UCB",      "MF-GP-UCB", "MF-GP-UCB+LP", "PLAyBOOK-UCB", "UCB-V-LP",
      "UCB-I-LP", "TuRBO-TS",  "TuRBO-V-TS",   "TuRBO-I-TS",   "MF-MES"};
  return names;
}

const std::string& strategy_name(StrategyId id) {
  return strategy_names().at(static_cast<std::size_t>(id));
}

std::optional<StrategyId> strategy_from_name(const std::string& name) {
  const auto& names = strategy_names();
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<StrategyId>(i);
  return std::nullopt;
}

StrategyTraits strategy_traits(StrategyId id) {
  using K = SurrogateKind;
  using R = FidelityRuleKind;
  using B = BatchingKind;
  switch (id) {
    case StrategyId::UCB:
      return {K::IndependentGPs, R::target_only, B::random_fill, true, false};
    case StrategyId::MF_GP_UCB:
      return {K::IndependentGPs, R::variance, B::random_fill, false, true};
    case StrategyId::MF_GP_UCB_LP:
      return {K::IndependentGPs, R::variance, B::local_penalization, false, true};
    case StrategyId::PLAYBOOK_UCB:
      return {K::IndependentGPs, R::target_only, B::local_penalization, true, false};
    case StrategyId::UCB_V_LP:
      return {K::MultiTaskLMC, R::variance, B::local_penalization, false, false};
    case StrategyId::UCB_I_LP:
      return {K::MultiTaskLMC, R::information, B::local_penalization, false, false};
    case StrategyId::TURBO_TS:
      return {K::IndependentGPs, R::target_only, B::thompson, true, false};
    case StrategyId::TURBO_V_TS:
      return {K::MultiTaskLMC, R::variance, B::thompson, false, false};
    case StrategyId::TURBO_I_TS:
      return {K::MultiTaskLMC, R::information, B::thompson, false, false};
    case StrategyId::MF_MES:
      return {K::MultiTaskLMC, R::information, B::fantasies, false, false};
  }
  throw ArgumentError("strategy_traits: unknown strategy");
}

std::optional<FidelityIndex> admit_query(double occupied, double capacity,
                                         FidelityIndex m,
                                         const std::vector<FidelitySpec>& specs) {
  const double eps = 1e-9;
  auto fits = [&](FidelityIndex f) {
    return occupied + specs.at(f - 1).space <= capacity + eps;
  };
  if (fits(m)) return m;
  FidelityIndex best = 0;
  double best_space = std::numeric_limits<double>::infinity();
  for (FidelityIndex f = m + 1; f <= static_cast<FidelityIndex>(specs.size()); ++f)
    if (fits(f) && specs[f - 1].space < best_space) {
      best = f;
      best_space = specs[f - 1].space;
    }
  if (best > 0) return best;
  return std::nullopt;
}

double simulate_observation(const ObjectiveFn& objective, const Vector& x,
                            FidelityIndex m, double noise_sd,
                            std::uint64_t master_seed, long query_id) {
  double f = objective(x, m);
  if (noise_sd <= 0.0) return f;
  Rng rng(derive_seed(master_seed, seed_tag::observation_noise,
                      static_cast<std::uint64_t>(query_id)));
  return f + noise_sd * normal_vector(rng, 1)[0];
}

namespace {

struct Engine {
  const BenchmarkPreset& preset;
  const EngineConfig& cfg;
  std::uint64_t seed;
  StrategyTraits traits;
  int dim;
  int M_true;
  int M_model;
  FidelityIndex target_model;
  double capacity;
  long horizon;
  int batch_size;
  long init_steps;
  double min_space;
  Vector zeta_model;
  Vector norm_model;
  Vector delay_ratio;
  Matrix fstar_grid;

  double occupied = 0.0;
  PendingSet pending;
  FidelityDataset observed;
  FidelityDataset model_data;
  std::optional<MultiFidelitySurrogate> surrogate;
  MultiTaskHyperparams warm_lmc;
  bool have_warm_lmc = false;
  GPHyperparams warm_gp;
  bool have_warm_gp = false;
  long arrivals_since_refit = 0;
  int full_refits = 0;
  ThresholdState thresholds;
  TrustRegion tr;
  bool tr_ready = false;
  long next_id = 0;
  double best_hf = -std::numeric_limits<double>::infinity();
  bool has_hf = false;
  RunRecord rec;

  std::map<long, PenalizerParams> lip_cache;
  std::vector<PendingPenalty> step_penalties;
  bool penalties_built = false;
  std::optional<FantasyBank> slot_bank;
  Matrix slot_fstar;

  Engine(const BenchmarkPreset& p, const EngineConfig& c, std::uint64_t s)
      : preset(p), cfg(c), seed(s), traits(strategy_traits(c.strategy)) {
    dim = preset.dim;
    M_true = preset.fidelity_count;
    M_model = traits.single_fidelity ? 1 : M_true;
    target_model = M_model;
    capacity = cfg.total_space > 0.0 ? cfg.total_space : preset.total_space;
    horizon = cfg.horizon > 0 ? cfg.horizon : preset.horizon;
    const double target_space = preset.fidelities.at(M_true - 1).space;
    batch_size = std::max(1, static_cast<int>(capacity / target_space + 1e-9));
    init_steps = cfg.init_design_steps >= 0
                     ? cfg.init_design_steps
                     : static_cast<long>(std::ceil(5.0 * dim / batch_size));
    min_space = std::numeric_limits<double>::infinity();
    for (int m = traits.single_fidelity ? M_true : 1; m <= M_true; ++m)
      min_space = std::min(min_space, preset.fidelities[m - 1].space);

    zeta_model = Vector::Zero(M_model);
    norm_model = Vector::Zero(M_model);
    for (int m = 1; m <= M_model; ++m) {
      const FidelitySpec& f = preset.fidelities[to_true(m) - 1];
      zeta_model[m - 1] = f.bias_bound;
      norm_model[m - 1] =
          cfg.normalizer == FidelityNormalizer::expected_delay ? f.delay : f.cost;
    }
    zeta_model[M_model - 1] = 0.0;
    if (M_model > 1) {
      delay_ratio = Vector::Zero(M_model - 1);
      for (int m = 1; m < M_model; ++m)
        delay_ratio[m - 1] = preset.fidelities[to_true(m + 1) - 1].delay /
                             std::max(preset.fidelities[to_true(m) - 1].delay, 1e-12);
    }
    thresholds = make_threshold_state(M_model, 0, cfg.gamma_init);
    thresholds.doubling_enabled = cfg.threshold_doubling;

    observed.fidelity_count = M_true;
    model_data.fidelity_count = M_model;

    if (needs_fantasies()) {
      if (preset.grid) {
        long rows = preset.grid->rows();
        long take = std::min<long>(std::max<long>(cfg.fstar_grid, 2), rows);
        fstar_grid.resize(take, preset.grid->cols());
        for (long i = 0; i < take; ++i)
          fstar_grid.row(i) = preset.grid->row(i * rows / take);
      } else {
        fstar_grid = sobol_grid(std::max<long>(cfg.fstar_grid, 2), dim);
      }
    }

    rec.benchmark = preset.name;
    rec.strategy = strategy_name(cfg.strategy);
    rec.seed = seed;
    rec.horizon = horizon;
    rec.total_space = capacity;
    rec.fidelity_count = M_true;
  }

  FidelityIndex to_model(FidelityIndex m_true) const {
    return traits.single_fidelity ? 1 : m_true;
  }
  FidelityIndex to_true(FidelityIndex m_model) const {
    return traits.single_fidelity ? M_true : m_model;
  }
  bool needs_fantasies() const {
    return traits.rule == FidelityRuleKind::information ||
           traits.batching == BatchingKind::fantasies;
  }
  double beta_now(long t) const { return cfg.ucb.beta_at(static_cast<int>(t), dim); }

  TrustRegionConfig turbo_cfg() const {
    TrustRegionConfig tc = cfg.turbo;
    if (cfg.turbo_grid_cap > 0) {
      tc.grid_max = std::min<int>(tc.grid_max, static_cast<int>(cfg.turbo_grid_cap));
      tc.grid_min = std::min(tc.grid_min, tc.grid_max);
    }
    return tc;
  }

  AcqOptConfig acq_cfg() const {
    AcqOptConfig a = cfg.acq;
    if (a.screen_count <= 0)
      a.screen_count = traits.model == SurrogateKind::IndependentGPs ? 7500 * dim : 7500;
    return a;
  }

  bool can_fit() const {
    if (model_data.size() == 0) return false;
    if (traits.model == SurrogateKind::IndependentGPs)
      return model_data.count_at(1) > 0;
    return true;
  }

  Vector random_point(std::uint64_t point_seed) const {
    Rng rng(point_seed);
    if (preset.grid) {
      std::uniform_int_distribution<long> pick(0, preset.grid->rows() - 1);
      return preset.grid->row(pick(rng));
    }
    return uniform_vector(rng, dim);
  }

  void run() {
    for (long t = 1; t <= horizon; ++t) {
      collect_arrivals(t);
      if (traits.rule == FidelityRuleKind::variance && M_model > 1)
        update_thresholds(thresholds, t, delay_ratio);
      refresh_model();
      dispatch(t);
      check_conservation();
      log_step(t);
      if (cfg.on_step) {
        StepContext ctx;
        ctx.t = t;
        ctx.model_data = &model_data;
        ctx.pending = &pending;
        ctx.occupied = occupied;
        ctx.surrogate = surrogate ? &*surrogate : nullptr;
        cfg.on_step(ctx);
      }
    }
  }

  void collect_arrivals(long t) {
    std::vector<PendingQuery> due;
    PendingSet rest;
    rest.reserve(pending.size());
    for (const PendingQuery& q : pending)
      (q.arrival_time <= t ? due : rest).push_back(q);
    pending.swap(rest);
    std::stable_sort(due.begin(), due.end(),
                     [](const PendingQuery& a, const PendingQuery& b) {
                       return a.arrival_time < b.arrival_time;
                     });
    FidelityDataset arrivals;
    arrivals.fidelity_count = M_model;
    for (const PendingQuery& q : due) {
      double noise_sd = preset.fidelities[q.fidelity - 1].noise;
      double value =
          simulate_observation(preset.objective, q.x, q.fidelity, noise_sd, seed, q.id);
      observed.append(q.x, q.fidelity, value);
      model_data.append(q.x, to_model(q.fidelity), value);
      arrivals.append(q.x, to_model(q.fidelity), value);
      occupied -= q.space;
      EventRecord ev;
      ev.time = t;
      ev.kind = EventKind::arrive;
      ev.query_id = q.id;
      ev.fidelity = q.fidelity;
      ev.x = q.x;
      ev.value = value;
      ev.space = q.space;
      rec.events.push_back(std::move(ev));
      if (q.fidelity == M_true) {
        double incumbent_before = has_hf ? best_hf : -std::numeric_limits<double>::infinity();
        if (traits.batching == BatchingKind::thompson && tr_ready)
          tr = turbo_update(tr, to_model(q.fidelity), target_model, q.x, value,
                            incumbent_before, batch_size, turbo_cfg());
        if (!has_hf || value > best_hf) {
          best_hf = value;
          has_hf = true;
        }
      }
    }
    if (!due.empty()) {
      arrivals_since_refit += static_cast<long>(due.size());
      lip_cache.clear();
      step_arrivals = std::move(arrivals);
    } else {
      step_arrivals = FidelityDataset{};
      step_arrivals.fidelity_count = M_model;
    }
  }

  FidelityDataset step_arrivals;

  void refresh_model() {
    if (!can_fit()) return;
    long n = model_data.size();
    long cadence = cfg.refit_every_arrivals;
    if (n > cfg.refit_stretch_threshold)
      cadence = std::max(cadence,
                         static_cast<long>(std::ceil(cfg.refit_stretch_fraction * n)));
    bool frozen = cfg.max_full_refits > 0 && full_refits >= cfg.max_full_refits;
    bool want_full = !surrogate || (!frozen && arrivals_since_refit >= cadence);
    if (want_full) {
      SurrogateTrainConfig tc = cfg.train;
      tc.seed = derive_seed(seed, seed_tag::train, static_cast<std::uint64_t>(full_refits));
      if (surrogate && cfg.warm_refit_epochs > 0)
        tc.train.epochs = cfg.warm_refit_epochs;
      const MultiTaskHyperparams* wl = have_warm_lmc ? &warm_lmc : nullptr;
      const GPHyperparams* wg = have_warm_gp ? &warm_gp : nullptr;
      surrogate = fit_surrogate(model_data, traits.model, tc, wl, wg);
      if (traits.model == SurrogateKind::MultiTaskLMC) {
        warm_lmc = surrogate->lmc_hyperparams();
        have_warm_lmc = true;
      } else {
        warm_gp = surrogate->independent_hyperparams(1);
        have_warm_gp = true;
      }
      arrivals_since_refit = 0;
      ++full_refits;
      lip_cache.clear();
    } else if (step_arrivals.size() > 0) {
      surrogate = surrogate->conditioned(step_arrivals);
    }
  }

  void dispatch(long t) {
    penalties_built = false;
    step_penalties.clear();
    bool in_init = t <= init_steps || !surrogate;
    int slot = 0;
    while (occupied + min_space <= capacity + 1e-9) {
      Vector x;
      FidelityIndex m_sel_true;
      if (in_init) {
        x = random_point(derive_seed(seed, seed_tag::init_design,
                                     static_cast<std::uint64_t>(t),
                                     static_cast<std::uint64_t>(slot)));
        m_sel_true = to_true(1);
      } else {
        slot_bank.reset();
        x = propose(t, slot);
        m_sel_true = to_true(select_fidelity(t, slot, x));
      }
      auto admitted = admit_query(occupied, capacity, m_sel_true, preset.fidelities);
      if (!admitted) break;
      submit(t, x, *admitted);
      ++slot;
    }
  }

  Vector propose(long t, int slot) {
    switch (traits.batching) {
      case BatchingKind::random_fill:
        if (slot == 0) return maximize_base_acquisition(t).x;
        return random_point(derive_seed(seed, seed_tag::random_fill,
                                        static_cast<std::uint64_t>(t),
                                        static_cast<std::uint64_t>(slot)));
      case BatchingKind::local_penalization:
        return maximize_penalized_acquisition(t).x;
      case BatchingKind::thompson:
        return propose_thompson(t, slot);
      case BatchingKind::fantasies:
        return propose_entropy_gain(t, slot);
    }
    throw ArgumentError("propose: unknown batching kind");
  }

  double base_score(const Vector& x, double beta) const {
    if (traits.uses_bias_bounds) return mf_ucb(*surrogate, x, zeta_model, beta);
    auto [mean, var] = surrogate->predict(x, target_model);
    return ucb(mean, var, beta);
  }

  Vector base_scores(const Matrix& X, double beta) const {
    if (!traits.uses_bias_bounds) {
      Vector mean, var;
      surrogate->predict_batch(X, target_model, mean, var);
      return mean + (beta * var.cwiseMax(0.0)).cwiseSqrt();
    }
    Vector best;
    for (int m = 1; m <= M_model; ++m) {
      Vector mean, var;
      surrogate->predict_batch(X, m, mean, var);
      Vector ucb_m =
          mean + (beta * var.cwiseMax(0.0)).cwiseSqrt() + Vector::Constant(X.rows(), zeta_model[m - 1]);
      best = m == 1 ? ucb_m : best.cwiseMin(ucb_m);
    }
    return best;
  }

  DomainSpec domain() const {
    DomainSpec d;
    d.dim = dim;
    d.grid = preset.grid ? preset.grid.get() : nullptr;
    return d;
  }

  AcqOptimum maximize_base_acquisition(long t) {
    double beta = beta_now(t);
    AcqFn f = [&](const Vector& x) { return base_score(x, beta); };
    BatchAcqFn fb = [&](const Matrix& X) { return base_scores(X, beta); };
    return optimize_acquisition(f, domain(), acq_cfg(), fb);
  }

  PenalizerParams lip_params(const PendingQuery& q) {
    auto it = lip_cache.find(q.id);
    if (it != lip_cache.end()) return it->second;
    FidelityIndex mm = to_model(q.fidelity);
    std::uint64_t s =
        derive_seed(seed, seed_tag::lipschitz, static_cast<std::uint64_t>(q.id));
    PenalizerParams p;
    if (model_data.count_at(mm) > 0) {
      p = estimate_penalizer_params(*surrogate, model_data, q.x, mm, cfg.lipschitz, s);
    } else {
      // Nothing observed at that fidelity yet: take the slope from the lowest
      // fidelity with data and the best value seen anywhere.
      FidelityIndex alt = 1;
      while (alt <= M_model && model_data.count_at(alt) == 0) ++alt;
      p = estimate_penalizer_params(*surrogate, model_data, q.x, alt, cfg.lipschitz, s);
      p.max_estimate = model_data.y.maxCoeff();
    }
    lip_cache.emplace(q.id, p);
    return p;
  }

  PendingPenalty make_penalty(const PendingQuery& q) {
    PendingPenalty pp;
    pp.x = q.x;
    auto [mean, var] = surrogate->predict(q.x, to_model(q.fidelity));
    pp.mean = mean;
    pp.sd = std::sqrt(std::max(var, 0.0));
    pp.params = lip_params(q);
    return pp;
  }

  void build_penalties() {
    if (penalties_built) return;
    step_penalties.clear();
    step_penalties.reserve(pending.size());
    for (const PendingQuery& q : pending) step_penalties.push_back(make_penalty(q));
    penalties_built = true;
  }

  AcqOptimum maximize_penalized_acquisition(long t) {
    build_penalties();
    double beta = beta_now(t);
    AcqFn f = [&](const Vector& x) {
      return penalized_acquisition(base_score(x, beta), false,
                                   penalty_product(x, step_penalties));
    };
    BatchAcqFn fb = [&](const Matrix& X) {
      Vector scores = base_scores(X, beta);
      for (long i = 0; i < X.rows(); ++i)
        scores[i] = penalized_acquisition(scores[i], false,
                                          penalty_product(X.row(i), step_penalties));
      return scores;
    };
    return optimize_acquisition(f, domain(), acq_cfg(), fb);
  }

  void ensure_trust_region() {
    if (tr_ready) return;
    // Center on the best observation at the highest fidelity with data.
    Vector center = Vector::Constant(dim, 0.5);
    for (int m = M_model; m >= 1; --m) {
      FidelityDataset sub = model_data.filter(m);
      if (sub.size() == 0) continue;
      long best = 0;
      sub.y.maxCoeff(&best);
      center = sub.X.row(best);
      break;
    }
    tr = make_trust_region(center, turbo_cfg());
    tr_ready = true;
  }

  Matrix thompson_candidates() const {
    if (!preset.grid) return turbo_grid(tr, turbo_cfg());
    // Grid domain: restrict to the grid rows inside the trust region.
    const Matrix& g = *preset.grid;
    Vector lo = (tr.center - 0.5 * tr.edge).cwiseMax(0.0);
    Vector hi = (tr.center + 0.5 * tr.edge).cwiseMin(1.0);
    std::vector<long> keep;
    for (long i = 0; i < g.rows(); ++i) {
      bool inside = true;
      for (int k = 0; k < dim && inside; ++k)
        inside = g(i, k) >= lo[k] - 1e-12 && g(i, k) <= hi[k] + 1e-12;
      if (inside) keep.push_back(i);
    }
    Matrix rows;
    if (keep.empty()) {
      rows = g;
    } else {
      rows.resize(static_cast<long>(keep.size()), g.cols());
      for (std::size_t i = 0; i < keep.size(); ++i) rows.row(i) = g.row(keep[i]);
    }
    // The joint posterior draw is cubic in the candidate count, so oversized
    // grids are thinned by stride to the trust-region grid ceiling.
    long cap = turbo_cfg().grid_max;
    if (rows.rows() > cap) {
      Matrix thin(cap, rows.cols());
      for (long i = 0; i < cap; ++i) thin.row(i) = rows.row(i * rows.rows() / cap);
      rows = thin;
    }
    return rows;
  }

  long ts_cache_step = -1;
  Matrix ts_grid;
  Vector ts_mean;
  Matrix ts_chol;

  Vector propose_thompson(long t, int slot) {
    ensure_trust_region();
    std::uint64_t s = derive_seed(seed, seed_tag::thompson, static_cast<std::uint64_t>(t),
                                  static_cast<std::uint64_t>(slot));
    // The candidate set, trust region, and surrogate are all frozen for the
    // duration of one dispatch phase (arrivals and refits happen between
    // steps), so the joint posterior factor is built once per step and each
    // slot only pays for its own seeded draw.
    if (ts_cache_step != t) {
      ts_grid = thompson_candidates();
      std::vector<FidelityIndex> fids(static_cast<std::size_t>(ts_grid.rows()), target_model);
      Matrix cov;
      surrogate->joint_posterior(ts_grid, fids, ts_mean, cov);
      double scale = std::max(cov.diagonal().maxCoeff(), 1e-12);
      ts_chol = robust_cholesky(cov, scale);
      ts_cache_step = t;
    }
    Rng rng(s);
    Vector draw = ts_mean + ts_chol * normal_vector(rng, static_cast<int>(ts_grid.rows()));
    return argmax_on_grid(ts_grid, draw).x;
  }

  FantasyBank build_bank(long t, int slot) {
    Matrix Xq(static_cast<long>(pending.size()), dim);
    std::vector<FidelityIndex> fq(pending.size());
    for (std::size_t i = 0; i < pending.size(); ++i) {
      Xq.row(static_cast<long>(i)) = pending[i].x;
      fq[i] = to_model(pending[i].fidelity);
    }
    return surrogate->make_fantasies(
        Xq, fq, cfg.fantasy_count,
        derive_seed(seed, seed_tag::fantasy, static_cast<std::uint64_t>(t),
                    static_cast<std::uint64_t>(slot)));
  }

  void ensure_slot_bank(long t, int slot) {
    if (slot_bank) return;
    slot_bank = build_bank(t, slot);
    slot_fstar = sample_max_values_all(
        *slot_bank, fstar_grid, cfg.fstar_count,
        derive_seed(seed, seed_tag::max_value, static_cast<std::uint64_t>(t),
                    static_cast<std::uint64_t>(slot)),
        static_cast<int>(fstar_grid.rows()));
  }

  Vector propose_entropy_gain(long t, int slot) {
    ensure_slot_bank(t, slot);
    Matrix candidates;
    if (preset.grid) {
      // Large grids are thinned by stride so the per-slot scoring cost stays
      // bounded by the same knob that sizes the continuous screen.
      long rows = preset.grid->rows();
      long take = std::min<long>(std::max<long>(cfg.mes_screen, 2), rows);
      candidates.resize(take, preset.grid->cols());
      for (long i = 0; i < take; ++i) candidates.row(i) = preset.grid->row(i * rows / take);
    } else {
      Rng rng(derive_seed(seed, seed_tag::screen, static_cast<std::uint64_t>(t),
                          static_cast<std::uint64_t>(slot)));
      candidates.resize(cfg.mes_screen, dim);
      for (long i = 0; i < candidates.rows(); ++i)
        candidates.row(i) = uniform_vector(rng, dim);
    }
    Vector scores(candidates.rows());
    for (long i = 0; i < candidates.rows(); ++i)
      scores[i] =
          fantasized_mes(*slot_bank, candidates.row(i), target_model, slot_fstar, cfg.mes);
    return argmax_on_grid(candidates, scores).x;
  }

  FidelityIndex select_fidelity(long t, int slot, const Vector& x) {
    switch (traits.rule) {
      case FidelityRuleKind::target_only:
        return target_model;
      case FidelityRuleKind::variance:
        return variance_rule(*surrogate, x, beta_now(t), thresholds);
      case FidelityRuleKind::information: {
        ensure_slot_bank(t, slot);
        return information_rule(*slot_bank, x, slot_fstar, norm_model, cfg.mes);
      }
    }
    throw ArgumentError("select_fidelity: unknown rule");
  }

  void submit(long t, const Vector& x, FidelityIndex m_true) {
    const FidelitySpec& spec = preset.fidelities[m_true - 1];
    PendingQuery q;
    q.id = next_id++;
    q.x = x;
    q.fidelity = m_true;
    q.submit_time = t;
    q.arrival_time = t + std::max<long>(1, static_cast<long>(std::ceil(spec.delay - 1e-12)));
    q.space = spec.space;
    pending.push_back(q);
    occupied += spec.space;
    if (traits.rule == FidelityRuleKind::variance)
      note_submission(thresholds, to_model(m_true), t);
    if (penalties_built) step_penalties.push_back(make_penalty(pending.back()));
    EventRecord ev;
    ev.time = t;
    ev.kind = EventKind::submit;
    ev.query_id = q.id;
    ev.fidelity = m_true;
    ev.x = x;
    ev.space = spec.space;
    rec.events.push_back(std::move(ev));
    ++rec.query_count;
  }

  void check_conservation() const {
    double total = 0.0;
    for (const PendingQuery& q : pending) total += q.space;
    if (std::abs(total - occupied) > 1e-9)
      throw NumericalError("engine: batch space accounting drifted");
    if (occupied > capacity + 1e-9)
      throw NumericalError("engine: batch space exceeds capacity");
  }

  void log_step(long t) {
    StepRecord s;
    s.t = t;
    if (has_hf) {
      s.best_hf = best_hf;
      if (preset.optimum_known) s.regret = preset.optimum - best_hf;
    }
    s.occupied = occupied;
    s.pending_by_fidelity.assign(M_true, 0);
    for (const PendingQuery& q : pending) ++s.pending_by_fidelity[q.fidelity - 1];
    rec.steps.push_back(std::move(s));
  }
};

void validate_inputs(const BenchmarkPreset& preset, const EngineConfig& cfg) {
  if (preset.dim <= 0) throw ArgumentError("engine: preset dimension must be positive");
  if (preset.fidelity_count < 1 ||
      preset.fidelities.size() != static_cast<std::size_t>(preset.fidelity_count))
    throw ArgumentError("engine: malformed fidelity list");
  for (const FidelitySpec& f : preset.fidelities) {
    if (f.space <= 0.0) throw ArgumentError("engine: batch space must be positive");
    if (f.cost <= 0.0) throw ArgumentError("engine: cost must be positive");
    if (f.delay < 0.0) throw ArgumentError("engine: negative delay");
    if (f.noise < 0.0) throw ArgumentError("engine: negative noise");
  }
  if (!preset.objective) throw ArgumentError("engine: preset has no objective");
  if (preset.grid && preset.grid->rows() == 0)
    throw ArgumentError("engine: empty domain grid");
  double capacity = cfg.total_space > 0.0 ? cfg.total_space : preset.total_space;
  if (capacity < preset.fidelities.back().space)
    throw ArgumentError("engine: capacity below the target fidelity's batch space");
  long horizon = cfg.horizon > 0 ? cfg.horizon : preset.horizon;
  if (horizon < 1) throw ArgumentError("engine: horizon must be at least 1");
  if (cfg.fantasy_count < 1) throw ArgumentError("engine: fantasy count must be >= 1");
  if (cfg.fstar_count < 1) throw ArgumentError("engine: max-value count must be >= 1");
  StrategyTraits traits = strategy_traits(cfg.strategy);
  if (traits.uses_bias_bounds && !traits.single_fidelity) {
    for (int m = 0; m + 1 < preset.fidelity_count; ++m)
      if (preset.fidelities[m].bias_bound < 0.0)
        throw ArgumentError("engine: negative bias bound");
  }
}

}  // namespace

RunRecord run_simulation(const BenchmarkPreset& preset, const EngineConfig& cfg,
                         std::uint64_t seed) {
  validate_inputs(preset, cfg);
  Engine engine(preset, cfg, seed);
  try {
    engine.run();
    engine.rec.completed = true;
  } catch (const std::exception& ex) {
    engine.rec.error = ex.what();
  }
  engine.rec.observed = std::move(engine.observed);
  return std::move(engine.rec);
}

}  // namespace mfbo
