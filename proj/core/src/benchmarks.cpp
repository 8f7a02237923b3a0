#include "mfbo/benchmarks.hpp"

#include <array>
#include <cmath>

#include "mfbo/sobol.hpp"

namespace mfbo {

namespace {

// --- Currin exponential (2-D) -------------------------------------------------

double currin_high_raw(double x1, double x2) {
  double bracket = x2 <= 0.0 ? 1.0 : 1.0 - std::exp(-1.0 / (2.0 * x2));
  double num = 2300.0 * x1 * x1 * x1 + 1900.0 * x1 * x1 + 2092.0 * x1 + 60.0;
  double den = 100.0 * x1 * x1 * x1 + 500.0 * x1 * x1 + 4.0 * x1 + 20.0;
  return bracket * num / den;
}

double currin_low_raw(double x1, double x2) {
  double xp = x2 + 0.05;
  double xm = std::max(x2 - 0.05, 0.0);
  return 0.25 * (currin_high_raw(x1 + 0.05, xp) + currin_high_raw(x1 + 0.05, xm) +
                 currin_high_raw(x1 - 0.05, xp) + currin_high_raw(x1 - 0.05, xm));
}

// --- Hartmann family ------------------------------------------------------------

template <int D, int K>
double hartmann_raw(const Vector& x, const std::array<double, 4>& alpha,
                    const double (&A)[4][K], const double (&P)[4][K]) {
  double s = 0.0;
  for (int i = 0; i < 4; ++i) {
    double e = 0.0;
    for (int k = 0; k < D; ++k) {
      double d = x[k] - P[i][k];
      e += A[i][k] * d * d;
    }
    s += alpha[i] * std::exp(-e);
  }
  return s;
}

constexpr double kHart3A[4][3] = {
    {3.0, 10.0, 30.0}, {0.1, 10.0, 35.0}, {3.0, 10.0, 30.0}, {0.1, 10.0, 35.0}};
constexpr double kHart3P[4][3] = {{0.3689, 0.1170, 0.2673},
                                  {0.4699, 0.4387, 0.7470},
                                  {0.1091, 0.8732, 0.5547},
                                  {0.0381, 0.5743, 0.8828}};
constexpr double kHart6A[4][6] = {{10.0, 3.0, 17.0, 3.5, 1.7, 8.0},
                                  {0.05, 10.0, 17.0, 0.1, 8.0, 14.0},
                                  {3.0, 3.5, 1.7, 10.0, 17.0, 8.0},
                                  {17.0, 8.0, 0.05, 10.0, 0.1, 14.0}};
constexpr double kHart6P[4][6] = {{0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886},
                                  {0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991},
                                  {0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650},
                                  {0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381}};

// Fidelity m of M perturbs the mixture weights by (M - m) * 0.1 * (1,-1,1,-1).
std::array<double, 4> hartmann_alpha(FidelityIndex m, int M) {
  double shift = 0.1 * (M - m);
  return {1.0 + shift, 1.2 - shift, 3.0 + shift, 3.2 - shift};
}

// --- Park (4-D) ------------------------------------------------------------------

double park_high_raw(const Vector& x) {
  double c = (x[1] + x[2] * x[2]) * x[3];
  // (x1/2) * (sqrt(1 + c/x1^2) - 1) rewritten without the x1 = 0 singularity.
  double t1 = 0.5 * (std::sqrt(x[0] * x[0] + c) - x[0]);
  double t2 = (x[0] + 3.0 * x[3]) * std::exp(1.0 + std::sin(x[2]));
  return t1 + t2;
}

double park_low_raw(const Vector& x) {
  return (1.0 + std::sin(x[0]) / 10.0) * park_high_raw(x) - 2.0 * x[0] +
         x[1] * x[1] + x[2] * x[2] + 0.5;
}

// --- Borehole (8-D) ---------------------------------------------------------------

struct BoreholeVars {
  double rw, r, tu, hu, tl, hl, ell, kw;
};

BoreholeVars borehole_vars(const Vector& u) {
  BoreholeVars v;
  v.rw = 0.05 + u[0] * (0.15 - 0.05);
  v.r = 100.0 + u[1] * (50000.0 - 100.0);
  v.tu = 63070.0 + u[2] * (115600.0 - 63070.0);
  v.hu = 990.0 + u[3] * (1110.0 - 990.0);
  v.tl = 63.1 + u[4] * (116.0 - 63.1);
  v.hl = 700.0 + u[5] * (820.0 - 700.0);
  v.ell = 1120.0 + u[6] * (1680.0 - 1120.0);
  v.kw = 9855.0 + u[7] * (12045.0 - 9855.0);
  return v;
}

double borehole_high_raw(const Vector& u) {
  BoreholeVars v = borehole_vars(u);
  double lnr = std::log(v.r / v.rw);
  double den = lnr * (1.0 + 2.0 * v.ell * v.tu / (lnr * v.rw * v.rw * v.kw) + v.tu / v.tl);
  return 2.0 * M_PI * v.tu * (v.hu - v.hl) / den;
}

double borehole_low_raw(const Vector& u) {
  BoreholeVars v = borehole_vars(u);
  double lnr = std::log(v.r / v.rw);
  double den = lnr * (1.5 + 2.0 * v.ell * v.tu / (lnr * v.rw * v.rw * v.kw) + v.tu / v.tl);
  return 5.0 * v.tu * (v.hu - v.hl) / den;
}

// --- Ackley (40-D, maximized) -------------------------------------------------------

double ackley_high_raw(const Vector& u) {
  int d = static_cast<int>(u.size());
  double sq = 0.0, cs = 0.0;
  for (int k = 0; k < d; ++k) {
    double z = -32.768 + 65.536 * u[k];
    sq += z * z;
    cs += std::cos(2.0 * M_PI * z);
  }
  double a = 20.0, b = 0.2;
  double val = -a * std::exp(-b * std::sqrt(sq / d)) - std::exp(cs / d) + a + std::exp(1.0);
  return -val;  // maximization form: optimum 0 at the domain center
}

double ackley_low_raw(const Vector& u) {
  int d = static_cast<int>(u.size());
  return ackley_high_raw(u) + 2.5 * std::cos(2.0 * M_PI * u.sum() / std::sqrt(double(d)));
}

// --- Preset assembly -------------------------------------------------------------------

// Empirical bias bounds: 1.2 * max |f^(m) - f^(M)| over a fixed seeded screen.
void measure_bias_bounds(BenchmarkPreset& p, long screen_count, std::uint64_t seed) {
  int M = p.fidelity_count;
  std::vector<double> worst(M, 0.0);
  if (p.grid) {
    for (long i = 0; i < p.grid->rows(); ++i) {
      Vector x = p.grid->row(i);
      double hi = p.objective(x, M);
      for (int m = 1; m < M; ++m)
        worst[m - 1] = std::max(worst[m - 1], std::abs(p.objective(x, m) - hi));
    }
  } else {
    Rng rng(seed);
    for (long i = 0; i < screen_count; ++i) {
      Vector x = uniform_vector(rng, p.dim);
      double hi = p.objective(x, M);
      for (int m = 1; m < M; ++m)
        worst[m - 1] = std::max(worst[m - 1], std::abs(p.objective(x, m) - hi));
    }
  }
  for (int m = 1; m < M; ++m) p.fidelities[m - 1].bias_bound = 1.2 * worst[m - 1];
  p.fidelities[M - 1].bias_bound = 0.0;
}

void finalize(BenchmarkPreset& p) {
  p.horizon = derive_horizon(p.budget_hf, p.fidelities.back().delay,
                             p.fidelities.back().space, p.total_space);
}

std::vector<FidelitySpec> two_fidelity_specs(double noise = 0.01) {
  FidelitySpec low{1.0, 1.0, 1.0, noise, 0.0};
  FidelitySpec high{5.0, 1.0, 5.0, noise, 0.0};
  return {low, high};
}

}  // namespace

long derive_horizon(double budget_hf, double delay_target, double space_target,
                    double total_space) {
  if (total_space <= 0.0) throw ArgumentError("derive_horizon: bad capacity");
  return static_cast<long>(
      std::ceil(budget_hf * delay_target * space_target / total_space));
}

const std::vector<std::string>& benchmark_names() {
  static const std::vector<std::string> names = {
      "Currin2D",  "BadCurrin2D", "Hartmann3D", "Hartmann6D",
      "Park4D",    "Borehole8D",  "Ackley40D",  "BatterySurrogate"};
  return names;
}

Matrix build_constrained_grid(int base_resolution) {
  if (base_resolution < 2) throw ArgumentError("build_constrained_grid: resolution < 2");
  Matrix raw = sobol_grid(base_resolution, 2);
  std::vector<std::array<double, 3>> feasible;
  feasible.reserve(raw.rows());
  for (long i = 0; i < raw.rows(); ++i) {
    double a = raw(i, 0), b = raw(i, 1);
    if (a > 0.0 && b > 0.0 && a + b < 1.0) feasible.push_back({a, b, 1.0 - a - b});
  }
  // All 20 choices of 3 active coordinates out of 6, lexicographic.
  std::vector<std::array<int, 3>> patterns;
  for (int i = 0; i < 6; ++i)
    for (int j = i + 1; j < 6; ++j)
      for (int k = j + 1; k < 6; ++k) patterns.push_back({i, j, k});

  Matrix grid = Matrix::Zero(static_cast<long>(feasible.size() * patterns.size()), 6);
  long row = 0;
  for (const auto& pat : patterns)
    for (const auto& pt : feasible) {
      grid(row, pat[0]) = pt[0];
      grid(row, pat[1]) = pt[1];
      grid(row, pat[2]) = pt[2];
      ++row;
    }
  return grid;
}

ObjectiveFn make_battery_objective(std::uint64_t seed) {
  // Random-feature expansion of an RBF prior (lengthscale 0.2, unit scale):
  // sample(x) = sqrt(2/R) * sum_i w_i cos(omega_i . x + b_i).
  constexpr int R = 512;
  constexpr int D = 6;
  constexpr double ell = 0.2;
  auto draw = [&](int index) {
    Rng rng(derive_seed(seed, seed_tag::objective, static_cast<std::uint64_t>(index)));
    std::normal_distribution<double> nd(0.0, 1.0);
    std::uniform_real_distribution<double> ud(0.0, 2.0 * M_PI);
    auto omega = std::make_shared<Matrix>(R, D);
    auto phase = std::make_shared<Vector>(R);
    auto weight = std::make_shared<Vector>(R);
    for (int i = 0; i < R; ++i)
      for (int k = 0; k < D; ++k) (*omega)(i, k) = nd(rng) / ell;
    for (int i = 0; i < R; ++i) (*phase)[i] = ud(rng);
    for (int i = 0; i < R; ++i) (*weight)[i] = nd(rng);
    const double scale = std::sqrt(2.0 / static_cast<double>(R));
    return [omega, phase, weight, scale](const Vector& x) {
      Vector arg = *omega * x + *phase;
      return scale * weight->dot(arg.array().cos().matrix());
    };
  };
  auto high = draw(0);
  auto low = draw(1);
  return [high, low](const Vector& x, FidelityIndex m) {
    return m == 2 ? high(x) : low(x);
  };
}

BenchmarkPreset make_preset(const std::string& name, std::uint64_t seed,
                            int battery_grid_resolution) {
  BenchmarkPreset p;
  p.name = name;
  if (name == "Currin2D" || name == "BadCurrin2D") {
    bool adversarial = name == "BadCurrin2D";
    p.dim = 2;
    p.fidelity_count = 2;
    p.fidelities = two_fidelity_specs();
    p.objective = [adversarial](const Vector& x, FidelityIndex m) {
      double hi = currin_high_raw(x[0], x[1]) / 10.0;
      if (m == 2) return hi;
      return adversarial ? -hi : currin_low_raw(x[0], x[1]) / 10.0;
    };
    p.optimum = 1.3798722044728432;
    p.optimum_known = true;
    p.total_space = 4.0;
    p.budget_hf = 200;
  } else if (name == "Hartmann3D" || name == "Hartmann6D") {
    bool six = name == "Hartmann6D";
    p.dim = six ? 6 : 3;
    p.fidelity_count = 3;
    FidelitySpec f1{1.0, 1.0, 1.0, 0.01, 0.0};
    FidelitySpec f2{3.0, 1.0, 3.0, 0.01, 0.0};
    FidelitySpec f3{9.0, 1.0, 9.0, 0.01, 0.0};
    p.fidelities = {f1, f2, f3};
    if (six) {
      p.objective = [](const Vector& x, FidelityIndex m) {
        return hartmann_raw<6, 6>(x, hartmann_alpha(m, 3), kHart6A, kHart6P);
      };
      p.optimum = 3.3223680114154313;
    } else {
      p.objective = [](const Vector& x, FidelityIndex m) {
        return hartmann_raw<3, 3>(x, hartmann_alpha(m, 3), kHart3A, kHart3P);
      };
      p.optimum = 3.862779787332645;
    }
    p.optimum_known = true;
    p.total_space = 4.0;
    p.budget_hf = 200;
  } else if (name == "Park4D") {
    p.dim = 4;
    p.fidelity_count = 2;
    p.fidelities = two_fidelity_specs();
    p.objective = [](const Vector& x, FidelityIndex m) {
      return (m == 2 ? park_high_raw(x) : park_low_raw(x)) / 10.0;
    };
    p.optimum = 2.5589254158606547;
    p.optimum_known = true;
    p.total_space = 4.0;
    p.budget_hf = 200;
  } else if (name == "Borehole8D") {
    p.dim = 8;
    p.fidelity_count = 2;
    p.fidelities = two_fidelity_specs();
    p.objective = [](const Vector& x, FidelityIndex m) {
      return (m == 2 ? borehole_high_raw(x) : borehole_low_raw(x)) / 100.0;
    };
    p.optimum = 3.095755876604079;
    p.optimum_known = true;
    p.total_space = 4.0;
    p.budget_hf = 200;
  } else if (name == "Ackley40D") {
    p.dim = 40;
    p.fidelity_count = 2;
    p.fidelities = two_fidelity_specs();
    p.objective = [](const Vector& x, FidelityIndex m) {
      return (m == 2 ? ackley_high_raw(x) : ackley_low_raw(x)) / 10.0;
    };
    p.optimum = 0.0;
    p.optimum_known = true;
    p.total_space = 20.0;
    p.budget_hf = 500;
  } else if (name == "BatterySurrogate") {
    p.dim = 6;
    p.fidelity_count = 2;
    FidelitySpec low{1.0, 1.0, 1.0, 0.01, 0.0};
    FidelitySpec high{10.0, 2.0, 10.0, 0.01, 0.0};
    p.fidelities = {low, high};
    p.grid = std::make_shared<Matrix>(build_constrained_grid(battery_grid_resolution));
    p.objective = make_battery_objective(seed);
    double best = -std::numeric_limits<double>::infinity();
    for (long i = 0; i < p.grid->rows(); ++i)
      best = std::max(best, p.objective(p.grid->row(i), 2));
    p.optimum = best;
    p.optimum_known = true;
    p.total_space = 20.0;
    p.budget_hf = 300;
  } else {
    throw ArgumentError("make_preset: unknown benchmark '" + name + "'");
  }
  measure_bias_bounds(p, 100000, derive_seed(9001, seed_tag::objective,
                                             std::hash<std::string>{}(name)));
  finalize(p);
  return p;
}

}  // namespace mfbo
