#include "mfbo/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace mfbo {

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

std::string optional_field(double v) { return std::isnan(v) ? "" : format_double(v); }

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(line);
  while (std::getline(ss, item, ',')) out.push_back(item);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

double field_or_nan(const std::string& s) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::stod(s);
}

std::string pending_column_name(int m, int fidelity_count) {
  if (m == 1) return "pending_low";
  if (m == fidelity_count) return "pending_high";
  return "pending_mid" + std::to_string(m);
}

}  // namespace

std::string result_file_name(const std::string& strategy, std::uint64_t seed) {
  return strategy + "__seed" + std::to_string(seed) + ".csv";
}

std::string events_file_name(const std::string& strategy, std::uint64_t seed) {
  return "events__" + strategy + "__seed" + std::to_string(seed) + ".csv";
}

void write_result_csv(const std::string& path, const RunRecord& rec) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ArgumentError("report: cannot write '" + path + "'");
  int M = std::max(rec.fidelity_count, 1);
  out << "sim_time,best_hf,regret,occupied_space";
  for (int m = 1; m <= M; ++m) out << "," << pending_column_name(m, M);
  out << "\n";
  for (const StepRecord& s : rec.steps) {
    out << s.t << "," << optional_field(s.best_hf) << "," << optional_field(s.regret)
        << "," << format_double(s.occupied);
    for (int m = 0; m < M; ++m)
      out << ","
          << (m < static_cast<int>(s.pending_by_fidelity.size())
                  ? s.pending_by_fidelity[m]
                  : 0);
    out << "\n";
  }
}

void write_events_csv(const std::string& path, const RunRecord& rec) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ArgumentError("report: cannot write '" + path + "'");
  out << "time,kind,query_id,fidelity,space,value\n";
  for (const EventRecord& e : rec.events) {
    out << e.time << "," << (e.kind == EventKind::submit ? "submit" : "arrive") << ","
        << e.query_id << "," << e.fidelity << "," << format_double(e.space) << ","
        << optional_field(e.value) << "\n";
  }
}

RunRecord read_result_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("report: cannot read '" + path + "'");
  RunRecord rec;
  std::string line;
  if (!std::getline(in, line))
    throw ArgumentError("report: empty result file '" + path + "'");
  auto header = split_csv_line(line);
  if (header.size() < 5 || header[0] != "sim_time")
    throw ArgumentError("report: unrecognized result header in '" + path + "'");
  rec.fidelity_count = static_cast<int>(header.size()) - 4;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw ArgumentError("report: ragged row in '" + path + "'");
    StepRecord s;
    s.t = std::stol(fields[0]);
    s.best_hf = field_or_nan(fields[1]);
    s.regret = field_or_nan(fields[2]);
    s.occupied = std::stod(fields[3]);
    for (std::size_t i = 4; i < fields.size(); ++i)
      s.pending_by_fidelity.push_back(std::stol(fields[i]));
    rec.steps.push_back(std::move(s));
  }
  rec.horizon = rec.steps.empty() ? 0 : rec.steps.back().t;
  return rec;
}

std::vector<EventRecord> read_events_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("report: cannot read '" + path + "'");
  std::vector<EventRecord> events;
  std::string line;
  if (!std::getline(in, line))
    throw ArgumentError("report: empty events file '" + path + "'");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != 6)
      throw ArgumentError("report: ragged row in '" + path + "'");
    EventRecord e;
    e.time = std::stol(fields[0]);
    e.kind = fields[1] == "submit" ? EventKind::submit : EventKind::arrive;
    e.query_id = std::stol(fields[2]);
    e.fidelity = static_cast<FidelityIndex>(std::stol(fields[3]));
    e.space = std::stod(fields[4]);
    e.value = field_or_nan(fields[5]);
    events.push_back(std::move(e));
  }
  return events;
}

double sorted_quantile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  if (sorted.size() == 1) return sorted[0];
  double pos = p * static_cast<double>(sorted.size() - 1);
  std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

namespace {

struct TraceKey {
  std::string strategy;
  std::uint64_t seed = 0;
};

// "<strategy>__seed<k>.csv" -> key; empty strategy when the name differs.
TraceKey parse_result_name(const std::string& name) {
  TraceKey key;
  if (name.size() < 5 || name.substr(name.size() - 4) != ".csv") return key;
  std::string stem = name.substr(0, name.size() - 4);
  std::size_t sep = stem.rfind("__seed");
  if (sep == std::string::npos || sep == 0) return key;
  std::string seed_text = stem.substr(sep + 6);
  if (seed_text.empty() ||
      seed_text.find_first_not_of("0123456789") != std::string::npos)
    return key;
  key.strategy = stem.substr(0, sep);
  key.seed = std::stoull(seed_text);
  return key;
}

}  // namespace

long summarize_directory(const std::string& results_dir, const std::string& out_dir,
                         const SummaryOptions& opt) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(results_dir))
    throw ArgumentError("summarize: '" + results_dir + "' is not a directory");
  if (opt.histogram_bins < 1)
    throw ArgumentError("summarize: histogram_bins must be >= 1");

  struct Trace {
    std::uint64_t seed;
    RunRecord rec;
    std::string events_path;  // empty when the sidecar is absent
  };
  std::map<std::string, std::vector<Trace>> by_strategy;
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(results_dir))
    if (entry.is_regular_file()) names.push_back(entry.path().filename().string());
  std::sort(names.begin(), names.end());
  long count = 0;
  for (const std::string& name : names) {
    if (name.rfind("events__", 0) == 0) continue;
    TraceKey key = parse_result_name(name);
    if (key.strategy.empty()) continue;
    Trace tr;
    tr.seed = key.seed;
    tr.rec = read_result_csv((fs::path(results_dir) / name).string());
    fs::path sidecar = fs::path(results_dir) / events_file_name(key.strategy, key.seed);
    if (fs::exists(sidecar)) tr.events_path = sidecar.string();
    by_strategy[key.strategy].push_back(std::move(tr));
    ++count;
  }
  if (count == 0)
    throw ArgumentError("summarize: no result files in '" + results_dir + "'");

  fs::create_directories(out_dir);

  {
    std::ofstream out(fs::path(out_dir) / "summary_regret.csv", std::ios::trunc);
    if (!out) throw ArgumentError("summarize: cannot write summary_regret.csv");
    out << "strategy,sim_time,regret_q25,regret_median,regret_q75,seeds\n";
    for (const auto& [strategy, traces] : by_strategy) {
      long horizon = 0;
      for (const Trace& tr : traces) horizon = std::max(horizon, tr.rec.horizon);
      for (long t = 1; t <= horizon; ++t) {
        std::vector<double> values;
        for (const Trace& tr : traces) {
          const auto& steps = tr.rec.steps;
          if (t <= static_cast<long>(steps.size())) {
            double r = steps[t - 1].regret;
            if (!std::isnan(r)) values.push_back(r);
          }
        }
        std::sort(values.begin(), values.end());
        out << strategy << "," << t << ",";
        if (!values.empty())
          out << format_double(sorted_quantile(values, 0.25)) << ","
              << format_double(sorted_quantile(values, 0.5)) << ","
              << format_double(sorted_quantile(values, 0.75));
        else
          out << ",,";
        out << "," << values.size() << "\n";
      }
    }
  }

  {
    std::ofstream out(fs::path(out_dir) / "summary_fidelity.csv", std::ios::trunc);
    if (!out) throw ArgumentError("summarize: cannot write summary_fidelity.csv");
    out << "strategy,bin_start,bin_end,fidelity,count\n";
    for (const auto& [strategy, traces] : by_strategy) {
      long horizon = 0;
      int M = 1;
      for (const Trace& tr : traces) {
        horizon = std::max(horizon, tr.rec.horizon);
        M = std::max(M, tr.rec.fidelity_count);
      }
      if (horizon == 0) continue;
      const int B = opt.histogram_bins;
      std::vector<std::vector<long>> counts(B, std::vector<long>(M, 0));
      for (const Trace& tr : traces) {
        if (tr.events_path.empty()) continue;
        for (const EventRecord& e : read_events_csv(tr.events_path)) {
          if (e.kind != EventKind::submit) continue;
          long bin = std::min<long>(B - 1, (e.time - 1) * B / horizon);
          bin = std::max<long>(bin, 0);
          int m = std::min(std::max(static_cast<int>(e.fidelity), 1), M);
          ++counts[bin][m - 1];
        }
      }
      for (int b = 0; b < B; ++b) {
        double lo = static_cast<double>(b) * horizon / B;
        double hi = static_cast<double>(b + 1) * horizon / B;
        for (int m = 1; m <= M; ++m)
          out << strategy << "," << format_double(lo) << "," << format_double(hi) << ","
              << m << "," << counts[b][m - 1] << "\n";
      }
    }
  }
  return count;
}

}  // namespace mfbo
