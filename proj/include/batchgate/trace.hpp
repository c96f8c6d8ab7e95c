#pragma once

// Arrival-process generation: piecewise-constant rate traces (CSV rows of
// t_seconds,rate_rps; each rate holds until the next row; the final row
// marks end-of-trace) and Poisson arrival schedules derived from them.
// Within each constant-rate segment inter-arrival gaps are i.i.d.
// exponential, which is exact for a piecewise-constant inhomogeneous
// Poisson process thanks to memorylessness.

#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace batchgate {

struct RatePoint {
  double t_seconds;
  double rate_rps;
};

struct RateTrace {
  std::vector<RatePoint> points;  // t strictly increasing, rates >= 0

  double duration_seconds() const { return points.empty() ? 0.0 : points.back().t_seconds; }
  double max_rate() const {
    double m = 0;
    for (const auto& p : points) m = std::max(m, p.rate_rps);
    return m;
  }
};

struct TraceSchedule {
  std::vector<double> arrivals_ms;  // sorted, ms from start
  uint64_t seed = 0;
};

inline RateTrace constant_rate_trace(double rate_rps, double duration_seconds) {
  if (duration_seconds <= 0) throw std::invalid_argument("duration must be > 0");
  return RateTrace{{{0.0, rate_rps}, {duration_seconds, rate_rps}}};
}

inline void validate_trace(const RateTrace& trace) {
  if (trace.points.size() < 2) {
    throw std::invalid_argument("trace needs at least two points (last row marks the end)");
  }
  for (size_t i = 0; i < trace.points.size(); ++i) {
    if (trace.points[i].rate_rps < 0) throw std::invalid_argument("trace rates must be >= 0");
    if (i > 0 && trace.points[i].t_seconds <= trace.points[i - 1].t_seconds) {
      throw std::invalid_argument("trace timestamps must be strictly increasing");
    }
  }
}

// Linear rescale so the maximum rate equals max_rps; shape (pairwise rate
// ratios) is preserved.
inline RateTrace scale_trace(const RateTrace& trace, double max_rps) {
  validate_trace(trace);
  if (max_rps <= 0) throw std::invalid_argument("max_rps must be > 0");
  double current = trace.max_rate();
  if (current <= 0) throw std::invalid_argument("cannot scale an all-zero trace");
  RateTrace out = trace;
  double factor = max_rps / current;
  for (auto& p : out.points) p.rate_rps *= factor;
  return out;
}

// Poisson arrivals over the trace; deterministic for fixed (trace, seed).
inline TraceSchedule generate_arrivals(const RateTrace& trace, uint64_t seed) {
  validate_trace(trace);
  TraceSchedule schedule;
  schedule.seed = seed;
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> unit_exp(1.0);
  for (size_t i = 0; i + 1 < trace.points.size(); ++i) {
    const double rate = trace.points[i].rate_rps;
    const double seg_start = trace.points[i].t_seconds;
    const double seg_end = trace.points[i + 1].t_seconds;
    if (rate <= 0) continue;
    double t = seg_start;
    for (;;) {
      t += unit_exp(rng) / rate;
      if (t >= seg_end) break;
      schedule.arrivals_ms.push_back(t * 1000.0);
    }
  }
  return schedule;
}

inline RateTrace load_rate_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace file: " + path);
  RateTrace trace;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string t_str, rate_str;
    if (!std::getline(ss, t_str, ',') || !std::getline(ss, rate_str)) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected t_seconds,rate_rps");
    }
    if (lineno == 1 && t_str == "t_seconds") continue;  // header
    try {
      trace.points.push_back({std::stod(t_str), std::stod(rate_str)});
    } catch (const std::exception&) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed number");
    }
  }
  validate_trace(trace);
  return trace;
}

inline void save_rate_trace(const RateTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trace file: " + path);
  out << "t_seconds,rate_rps\n";
  for (const auto& p : trace.points) out << p.t_seconds << "," << p.rate_rps << "\n";
}

}  // namespace batchgate
