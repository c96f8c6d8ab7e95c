#pragma once

// Offline metrics: SLO violation rates, CCDFs, batch/container statistics
// from simulator results or replay run logs, plus the workload
// characterization table (response time vs. batch size). Everything here is
// pure batch computation; file layout concerns live in the CLI.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "batchgate/config.hpp"
#include "batchgate/latency_model.hpp"
#include "batchgate/monitor.hpp"

namespace batchgate {

struct CcdfPoint {
  double latency_ms;
  double fraction_exceeding;  // P(e2e > latency_ms)
};

// One point per distinct latency, ascending; fraction uses strict >, so the
// curve is the right-continuous step function of the empirical distribution.
inline std::vector<CcdfPoint> make_ccdf(std::vector<double> values) {
  std::vector<CcdfPoint> out;
  if (values.empty()) return out;
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  for (size_t i = 0; i < values.size(); ++i) {
    if (i + 1 < values.size() && values[i + 1] == values[i]) continue;  // keep last duplicate
    out.push_back(CcdfPoint{values[i], static_cast<double>(values.size() - i - 1) / n});
  }
  return out;
}

inline double ccdf_at(const std::vector<CcdfPoint>& ccdf, double x) {
  if (ccdf.empty()) return 0.0;
  if (x < ccdf.front().latency_ms) return 1.0;  // every sample exceeds x
  auto it = std::upper_bound(ccdf.begin(), ccdf.end(), x,
                             [](double v, const CcdfPoint& p) { return v < p.latency_ms; });
  return std::prev(it)->fraction_exceeding;
}

struct TimelinePoint {
  double t_ms;
  int effective_max;
  int containers;
  int in_flight;
};

struct RunMetrics {
  size_t requests = 0;
  double slo_violation_pct = 0;
  double p95_e2e_ms = 0;
  double mean_e2e_ms = 0;
  std::optional<double> avg_batch_size;  // absent for replay logs (client can't see batches)
  std::optional<double> avg_containers;  // absent for replay logs
  std::vector<CcdfPoint> ccdf;
  std::vector<TimelinePoint> timeline;
};

inline RunMetrics compute_metrics(std::vector<double> e2e, const WorkloadConfig& cfg) {
  if (e2e.empty()) throw std::invalid_argument("compute_metrics: no samples");
  RunMetrics m;
  m.requests = e2e.size();
  size_t violations = 0;
  double total = 0;
  for (double v : e2e) {
    if (v > cfg.slo_target_ms) violations++;
    total += v;
  }
  m.slo_violation_pct = 100.0 * static_cast<double>(violations) / static_cast<double>(e2e.size());
  m.mean_e2e_ms = total / static_cast<double>(e2e.size());
  m.ccdf = make_ccdf(e2e);
  m.p95_e2e_ms = nearest_rank_percentile(std::move(e2e), 95.0);
  return m;
}

// SimResult JSON (as produced by SimResult::to_json / `batchgate sim`).
// exclude_before_ms drops requests that arrived during warm-up.
inline RunMetrics compute_metrics(const nlohmann::json& sim_result, const WorkloadConfig& cfg,
                                  double exclude_before_ms = 0) {
  const auto& e2e_json = sim_result.at("e2e_ms");
  std::vector<double> e2e;
  e2e.reserve(e2e_json.size());
  if (exclude_before_ms > 0) {
    const auto& arrivals = sim_result.at("arrivals_ms");
    for (size_t i = 0; i < e2e_json.size(); ++i) {
      if (arrivals.at(i).get<double>() >= exclude_before_ms) {
        e2e.push_back(e2e_json.at(i).get<double>());
      }
    }
  } else {
    for (const auto& v : e2e_json) e2e.push_back(v.get<double>());
  }
  RunMetrics m = compute_metrics(std::move(e2e), cfg);
  const auto& summary = sim_result.at("summary");
  m.avg_batch_size = summary.at("avg_batch_size").get<double>();
  m.avg_containers = summary.at("avg_containers").get<double>();
  for (const auto& s : sim_result.at("series")) {
    m.timeline.push_back(TimelinePoint{s.at("t_ms").get<double>(),
                                       s.at("effective_max").get<int>(),
                                       s.at("containers").get<int>(),
                                       s.at("in_flight").get<int>()});
  }
  return m;
}

struct RunLogRow {
  double send_ts_ms;
  int status;
  double latency_ms;
  std::string cause;
};

inline std::vector<RunLogRow> load_run_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open run log: " + path);
  std::vector<RunLogRow> rows;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    lineno++;
    if (line.empty() || line.rfind("send_ts_ms", 0) == 0) continue;
    std::istringstream ls(line);
    std::string send, status, latency, cause;
    if (!std::getline(ls, send, ',') || !std::getline(ls, status, ',') ||
        !std::getline(ls, latency, ',')) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed run-log row");
    }
    std::getline(ls, cause);  // may legitimately be empty
    try {
      rows.push_back(RunLogRow{std::stod(send), std::stoi(status), std::stod(latency), cause});
    } catch (const std::exception&) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed run-log row");
    }
  }
  return rows;
}

// Only successful exchanges carry a meaningful end-to-end latency; failed
// sends are excluded from the latency population.
inline RunMetrics compute_metrics(const std::vector<RunLogRow>& rows, const WorkloadConfig& cfg,
                                  double exclude_before_ms = 0) {
  std::vector<double> e2e;
  e2e.reserve(rows.size());
  for (const auto& r : rows) {
    if (r.status == 200 && r.send_ts_ms >= exclude_before_ms) e2e.push_back(r.latency_ms);
  }
  return compute_metrics(std::move(e2e), cfg);
}

// ---- Workload characterization (response time vs. batch size) ----

struct CharacterizationRow {
  int bs;
  double mean_rt_ms;
  double relative_rt;             // RT(bs) / RT(1)
  double relative_per_inference;  // (RT(bs)/bs) / RT(1)
  int linear_baseline;            // a perfectly linear workload's relative RT
};

// sample_rt_ms measures one request of the given batch size; works the same
// against the latency law or a live endpoint.
inline std::vector<CharacterizationRow> characterize(
    const std::function<double(int)>& sample_rt_ms, std::vector<int> bs_list, int reps) {
  if (reps < 1) throw std::invalid_argument("characterize: repetitions must be positive");
  if (std::find(bs_list.begin(), bs_list.end(), 1) == bs_list.end()) {
    throw std::invalid_argument("characterize: bs_list must include 1 (the baseline)");
  }
  std::sort(bs_list.begin(), bs_list.end());
  bs_list.erase(std::unique(bs_list.begin(), bs_list.end()), bs_list.end());
  if (bs_list.front() < 1) throw std::invalid_argument("characterize: batch sizes must be >= 1");

  std::vector<CharacterizationRow> rows;
  double rt1 = 0;
  for (int bs : bs_list) {
    double total = 0;
    for (int i = 0; i < reps; ++i) total += sample_rt_ms(bs);
    double mean = total / reps;
    if (bs == 1) rt1 = mean;
    rows.push_back(CharacterizationRow{bs, mean, 0, 0, bs});
  }
  for (auto& r : rows) {
    r.relative_rt = r.mean_rt_ms / rt1;
    r.relative_per_inference = (r.mean_rt_ms / r.bs) / rt1;
  }
  return rows;
}

inline std::vector<CharacterizationRow> characterize(const LatencyModel& model,
                                                     std::vector<int> bs_list, int reps,
                                                     uint64_t seed) {
  std::mt19937_64 rng(seed);
  return characterize([&](int bs) { return service_time(model, bs, rng); }, std::move(bs_list),
                      reps);
}

inline void write_characterization_csv(std::ostream& out,
                                       const std::vector<CharacterizationRow>& rows) {
  out << "bs,mean_rt_ms,relative_rt,relative_per_inference,linear_baseline\n";
  for (const auto& r : rows) {
    out << r.bs << "," << r.mean_rt_ms << "," << r.relative_rt << "," << r.relative_per_inference
        << "," << r.linear_baseline << "\n";
  }
}

// ---- ON-vs-OFF comparison report ----

namespace detail {

inline std::string reduction_pct(double on, double off) {
  if (off <= 0) return "n/a";
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(1);
  s << 100.0 * (1.0 - on / off);
  return s.str();
}

inline void write_ccdf_csv(const std::filesystem::path& path, const std::vector<CcdfPoint>& ccdf) {
  std::ofstream out(path);
  out << "latency_ms,fraction_exceeding\n";
  for (const auto& p : ccdf) out << p.latency_ms << "," << p.fraction_exceeding << "\n";
}

inline void write_timeline_csv(const std::filesystem::path& path,
                               const std::vector<TimelinePoint>& timeline) {
  std::ofstream out(path);
  out << "t_ms,effective_max,containers,in_flight\n";
  for (const auto& p : timeline) {
    out << p.t_ms << "," << p.effective_max << "," << p.containers << "," << p.in_flight << "\n";
  }
}

}  // namespace detail

// Writes comparison.csv plus per-run CCDF and timeline data files (plot-ready
// CSVs; rendering is left to external tools).
inline void report(const RunMetrics& on, const RunMetrics& off,
                   const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream out(out_dir / "comparison.csv");
    out << "metric,on,off,reduction_pct\n";
    out << "slo_violation_pct," << on.slo_violation_pct << "," << off.slo_violation_pct << ","
        << detail::reduction_pct(on.slo_violation_pct, off.slo_violation_pct) << "\n";
    out << "avg_containers," << on.avg_containers.value_or(0) << ","
        << off.avg_containers.value_or(0) << ","
        << detail::reduction_pct(on.avg_containers.value_or(0), off.avg_containers.value_or(0))
        << "\n";
    out << "p95_e2e_ms," << on.p95_e2e_ms << "," << off.p95_e2e_ms << ","
        << detail::reduction_pct(on.p95_e2e_ms, off.p95_e2e_ms) << "\n";
    auto fmt_opt = [](const std::optional<double>& v) {
      return v ? std::to_string(*v) : std::string("n/a");
    };
    out << "avg_batch_size," << fmt_opt(on.avg_batch_size) << "," << fmt_opt(off.avg_batch_size)
        << ",\n";
    out << "requests," << on.requests << "," << off.requests << ",\n";
  }
  detail::write_ccdf_csv(out_dir / "ccdf_on.csv", on.ccdf);
  detail::write_ccdf_csv(out_dir / "ccdf_off.csv", off.ccdf);
  if (!on.timeline.empty()) detail::write_timeline_csv(out_dir / "timeline_on.csv", on.timeline);
  if (!off.timeline.empty()) {
    detail::write_timeline_csv(out_dir / "timeline_off.csv", off.timeline);
  }
}

}  // namespace batchgate
