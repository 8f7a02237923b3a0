#include "mfbo/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace mfbo {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ArgumentError("config: key '" + key + "' has non-numeric value '" + value + "'");
  }
}

long parse_long(const std::string& key, const std::string& value) {
  double v = parse_double(key, value);
  if (std::abs(v - std::round(v)) > 1e-9)
    throw ArgumentError("config: key '" + key + "' must be an integer, got '" + value + "'");
  return static_cast<long>(std::llround(v));
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw ArgumentError("config: key '" + key + "' must be a boolean, got '" + value + "'");
}

std::string join(const std::vector<std::string>& items, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

}  // namespace

ConfigMap parse_config_text(const std::string& text) {
  ConfigMap cfg;
  std::stringstream ss(text);
  std::string line;
  std::string section;
  long line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']')
        throw ArgumentError("config: unterminated section header on line " +
                            std::to_string(line_no));
      section = trim(s.substr(1, s.size() - 2));
      if (section.empty())
        throw ArgumentError("config: empty section name on line " + std::to_string(line_no));
      cfg[section];
      continue;
    }
    std::size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw ArgumentError("config: expected 'key = value' on line " + std::to_string(line_no));
    std::string key = trim(s.substr(0, eq));
    std::string value = trim(s.substr(eq + 1));
    if (key.empty())
      throw ArgumentError("config: empty key on line " + std::to_string(line_no));
    if (section.empty())
      throw ArgumentError("config: key '" + key + "' appears before any [section]");
    cfg[section][key] = value;
  }
  return cfg;
}

ConfigMap parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("config: cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

void apply_override(ConfigMap& cfg, const std::string& assignment) {
  std::size_t eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ArgumentError("override '" + assignment + "' is not of the form section.key=value");
  std::string key = trim(assignment.substr(0, eq));
  std::string value = trim(assignment.substr(eq + 1));
  std::size_t dot = key.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == key.size())
    throw ArgumentError("override '" + assignment + "' is not of the form section.key=value");
  cfg[key.substr(0, dot)][key.substr(dot + 1)] = value;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::string s = trim(text);
  if (s.empty()) throw ArgumentError("config: empty seed list");
  std::size_t dots = s.find("..");
  std::vector<std::uint64_t> seeds;
  if (dots != std::string::npos) {
    long a = parse_long("seeds", trim(s.substr(0, dots)));
    long b = parse_long("seeds", trim(s.substr(dots + 2)));
    if (a < 0 || b < a) throw ArgumentError("config: bad seed range '" + s + "'");
    for (long v = a; v <= b; ++v) seeds.push_back(static_cast<std::uint64_t>(v));
  } else {
    for (const std::string& item : split(s, ',')) {
      long v = parse_long("seeds", item);
      if (v < 0) throw ArgumentError("config: negative seed '" + item + "'");
      seeds.push_back(static_cast<std::uint64_t>(v));
    }
  }
  return seeds;
}

RunConfig build_run_config(const ConfigMap& cfg) {
  static const std::vector<std::string> sections = {"run", "problem", "tuning"};
  for (const auto& [section, kv] : cfg)
    if (std::find(sections.begin(), sections.end(), section) == sections.end())
      throw ArgumentError("config: unknown section [" + section + "]; expected [run], [problem], or [tuning]");

  RunConfig rc;
  EngineConfig& e = rc.engine;
  bool have_benchmark = false, have_strategy = false;

  auto run_it = cfg.find("run");
  if (run_it != cfg.end()) {
    for (const auto& [key, value] : run_it->second) {
      if (key == "benchmark") {
        rc.benchmark = value;
        have_benchmark = true;
      } else if (key == "strategy") {
        auto id = strategy_from_name(value);
        if (!id)
          throw ArgumentError("config: unknown strategy '" + value +
                              "'; valid strategies: " + join(strategy_names(), ", "));
        e.strategy = *id;
        have_strategy = true;
      } else if (key == "seeds" || key == "seed") {
        rc.seeds = parse_seed_list(value);
      } else if (key == "out_dir") {
        rc.out_dir = value;
      } else if (key == "jobs") {
        rc.jobs = static_cast<int>(parse_long(key, value));
        if (rc.jobs < 1) throw ArgumentError("config: jobs must be >= 1");
      } else if (key == "objective_seed") {
        rc.objective_seed = static_cast<std::uint64_t>(parse_long(key, value));
      } else {
        throw ArgumentError("config: unknown key '" + key + "' in [run]");
      }
    }
  }
  if (!have_benchmark) throw ArgumentError("config: [run] benchmark is required");
  if (!have_strategy) throw ArgumentError("config: [run] strategy is required");
  const auto& names = benchmark_names();
  if (std::find(names.begin(), names.end(), rc.benchmark) == names.end())
    throw ArgumentError("config: unknown benchmark '" + rc.benchmark +
                        "'; valid benchmarks: " + join(names, ", "));

  auto prob_it = cfg.find("problem");
  if (prob_it != cfg.end()) {
    for (const auto& [key, value] : prob_it->second) {
      if (key == "total_space") {
        e.total_space = parse_double(key, value);
        if (e.total_space < 0.0) throw ArgumentError("config: total_space must be >= 0");
      } else if (key == "budget_hf") {
        rc.budget_hf = parse_double(key, value);
        if (rc.budget_hf < 0.0) throw ArgumentError("config: budget_hf must be >= 0");
      } else if (key == "horizon") {
        e.horizon = parse_long(key, value);
        if (e.horizon < 0) throw ArgumentError("config: horizon must be >= 0");
      } else if (key == "delays") {
        rc.delays.clear();
        for (const std::string& item : split(value, ',')) {
          double d = parse_double(key, item);
          if (d < 0.0) throw ArgumentError("config: delays must be >= 0");
          rc.delays.push_back(d);
        }
        if (rc.delays.empty()) throw ArgumentError("config: empty delay list");
      } else if (key == "noise") {
        rc.noise = parse_double(key, value);
        if (rc.noise < 0.0) throw ArgumentError("config: noise must be >= 0");
      } else if (key == "battery_grid_resolution") {
        rc.battery_grid_resolution = static_cast<int>(parse_long(key, value));
        if (rc.battery_grid_resolution < 2)
          throw ArgumentError("config: battery_grid_resolution must be >= 2");
      } else {
        throw ArgumentError("config: unknown key '" + key + "' in [problem]");
      }
    }
  }

  auto tun_it = cfg.find("tuning");
  if (tun_it != cfg.end()) {
    for (const auto& [key, value] : tun_it->second) {
      if (key == "beta") {
        e.ucb.beta = parse_double(key, value);
      } else if (key == "beta_log_schedule") {
        e.ucb.log_schedule = parse_bool(key, value);
      } else if (key == "gamma_init") {
        e.gamma_init = parse_double(key, value);
      } else if (key == "threshold_doubling") {
        e.threshold_doubling = parse_bool(key, value);
      } else if (key == "normalizer") {
        if (value == "delay")
          e.normalizer = FidelityNormalizer::expected_delay;
        else if (value == "cost")
          e.normalizer = FidelityNormalizer::cost;
        else
          throw ArgumentError("config: normalizer must be 'delay' or 'cost'");
      } else if (key == "fantasy_count") {
        e.fantasy_count = static_cast<int>(parse_long(key, value));
      } else if (key == "fstar_count") {
        e.fstar_count = static_cast<int>(parse_long(key, value));
      } else if (key == "fstar_grid") {
        e.fstar_grid = parse_long(key, value);
      } else if (key == "mes_screen") {
        e.mes_screen = parse_long(key, value);
      } else if (key == "mes_quad_intervals") {
        e.mes.quad_intervals = static_cast<int>(parse_long(key, value));
      } else if (key == "acq_screen") {
        e.acq.screen_count = static_cast<int>(parse_long(key, value));
      } else if (key == "refine_starts") {
        e.acq.refine_starts = static_cast<int>(parse_long(key, value));
      } else if (key == "refine_epochs") {
        e.acq.refine_epochs = static_cast<int>(parse_long(key, value));
      } else if (key == "refine_lr") {
        e.acq.refine_lr = parse_double(key, value);
      } else if (key == "lipschitz_local") {
        e.lipschitz.local = parse_bool(key, value);
      } else if (key == "lipschitz_halfwidth") {
        e.lipschitz.local_halfwidth = parse_double(key, value);
      } else if (key == "lipschitz_points") {
        e.lipschitz.points_per_dim = static_cast<int>(parse_long(key, value));
      } else if (key == "turbo_grid_cap") {
        e.turbo_grid_cap = parse_long(key, value);
      } else if (key == "refit_every") {
        e.refit_every_arrivals = static_cast<int>(parse_long(key, value));
      } else if (key == "refit_stretch_fraction") {
        e.refit_stretch_fraction = parse_double(key, value);
      } else if (key == "refit_stretch_threshold") {
        e.refit_stretch_threshold = parse_long(key, value);
      } else if (key == "max_full_refits") {
        e.max_full_refits = static_cast<int>(parse_long(key, value));
      } else if (key == "warm_refit_epochs") {
        e.warm_refit_epochs = static_cast<int>(parse_long(key, value));
      } else if (key == "train_epochs") {
        e.train.train.epochs = static_cast<int>(parse_long(key, value));
      } else if (key == "train_lr") {
        e.train.train.learning_rate = parse_double(key, value);
      } else if (key == "init_design_steps") {
        e.init_design_steps = parse_long(key, value);
      } else {
        throw ArgumentError("config: unknown key '" + key + "' in [tuning]");
      }
    }
  }
  return rc;
}

BenchmarkPreset build_preset(const RunConfig& rc) {
  BenchmarkPreset p =
      make_preset(rc.benchmark, rc.objective_seed, rc.battery_grid_resolution);
  bool recompute_horizon = false;
  if (!rc.delays.empty()) {
    if (rc.delays.size() != static_cast<std::size_t>(p.fidelity_count))
      throw ArgumentError("config: delays lists " + std::to_string(rc.delays.size()) +
                          " values but " + p.name + " has " +
                          std::to_string(p.fidelity_count) + " fidelities");
    for (int m = 0; m < p.fidelity_count; ++m) {
      p.fidelities[m].delay = rc.delays[m];
      p.fidelities[m].cost = std::max(rc.delays[m], 1e-12);
    }
    recompute_horizon = true;
  }
  if (rc.noise >= 0.0)
    for (FidelitySpec& f : p.fidelities) f.noise = rc.noise;
  if (rc.engine.total_space > 0.0) {
    p.total_space = rc.engine.total_space;
    recompute_horizon = true;
  }
  if (rc.budget_hf > 0.0) {
    p.budget_hf = static_cast<int>(rc.budget_hf);
    recompute_horizon = true;
  }
  if (recompute_horizon)
    p.horizon = derive_horizon(rc.budget_hf > 0.0 ? rc.budget_hf : p.budget_hf,
                               p.fidelities.back().delay, p.fidelities.back().space,
                               p.total_space);
  return p;
}

std::string serialize_config(const ConfigMap& cfg) {
  std::string out;
  for (const auto& [section, kv] : cfg) {
    out += "[" + section + "]\n";
    for (const auto& [key, value] : kv) out += key + " = " + value + "\n";
  }
  return out;
}

std::string config_digest(const ConfigMap& cfg) {
  std::string text = serialize_config(cfg);
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace mfbo
