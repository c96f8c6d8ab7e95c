#pragma once

// Deterministic discrete-event simulator. Runs the identical monitor/
// scheduler/optimizer code as the live proxy, in virtual time, against the
// latency law and the autoscaler emulator. Events are processed in
// (time, insertion-sequence) order; identical inputs give bit-identical
// results. The upstream is unbounded by default (serverless assumption);
// an optional concurrency cap models a saturated fixed-capacity cluster.

#include <cstdint>
#include <deque>
#include <queue>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "batchgate/autoscaler.hpp"
#include "batchgate/config.hpp"
#include "batchgate/latency_model.hpp"
#include "batchgate/monitor.hpp"
#include "batchgate/optimizer.hpp"
#include "batchgate/scheduler.hpp"
#include "batchgate/trace.hpp"

namespace batchgate {

enum class SimMode { BatchingOn, BatchingOff };

inline const char* to_string(SimMode m) {
  return m == SimMode::BatchingOn ? "on" : "off";
}

struct SimOptions {
  int upstream_concurrency = 0;     // 0 = unbounded
  int target_concurrency = 1;      // autoscaler emulator target
  double autoscaler_window_ms = 60000;
  double sample_every_ms = 1000;
  // Replaces monitor-backed upstream estimates with the model's
  // deterministic mean; verification harness for the deadline-safety
  // property under noise-free latencies.
  bool oracle_estimates = false;
};

struct SimRequestRow {
  uint64_t id;
  double arrival_ms;
  double dispatch_ms;
  double completion_ms;
  double e2e_ms;
  int batch_size;
  DispatchCause cause;
};

struct SimSample {
  double t_ms;
  int effective_max;
  int containers;
  int in_flight;
};

struct SimSummary {
  size_t requests = 0;
  size_t batches = 0;
  double slo_violation_pct = 0;
  double avg_containers = 0;
  double avg_batch_size = 0;
  double p95_e2e_ms = 0;
  double mean_e2e_ms = 0;
};

struct SimResult {
  std::string mode;
  uint64_t seed = 0;
  double slo_target_ms = 0;
  SimSummary summary;
  std::vector<SimRequestRow> rows;
  std::vector<SimSample> series;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["mode"] = mode;
    j["seed"] = seed;
    j["slo_target_ms"] = slo_target_ms;
    j["summary"] = {
        {"requests", summary.requests},
        {"batches", summary.batches},
        {"slo_violation_pct", summary.slo_violation_pct},
        {"avg_containers", summary.avg_containers},
        {"avg_batch_size", summary.avg_batch_size},
        {"p95_e2e_ms", summary.p95_e2e_ms},
        {"mean_e2e_ms", summary.mean_e2e_ms},
    };
    nlohmann::json series_json = nlohmann::json::array();
    for (const auto& s : series) {
      series_json.push_back({{"t_ms", s.t_ms},
                             {"effective_max", s.effective_max},
                             {"containers", s.containers},
                             {"in_flight", s.in_flight}});
    }
    j["series"] = std::move(series_json);
    nlohmann::json e2e = nlohmann::json::array();
    nlohmann::json arrivals = nlohmann::json::array();
    for (const auto& r : rows) {
      e2e.push_back(r.e2e_ms);
      arrivals.push_back(r.arrival_ms);
    }
    j["e2e_ms"] = std::move(e2e);
    j["arrivals_ms"] = std::move(arrivals);
    return j;
  }

  void write_requests_csv(std::ostream& out) const {
    out << "request_id,arrival_ms,dispatch_ms,completion_ms,e2e_ms,batch_size,cause\n";
    for (const auto& r : rows) {
      out << r.id << "," << r.arrival_ms << "," << r.dispatch_ms << "," << r.completion_ms << ","
          << r.e2e_ms << "," << r.batch_size << "," << to_string(r.cause) << "\n";
    }
  }
};

namespace detail {

enum class EventKind { Arrival, QueueTimeout, BatchComplete, OptimizerTick, Sample };

struct SimEvent {
  double t;
  uint64_t seq;  // tiebreaker: simultaneous events resolve in insertion order
  EventKind kind;
  uint64_t arg = 0;
  bool operator>(const SimEvent& other) const {
    if (t != other.t) return t > other.t;
    return seq > other.seq;
  }
};

struct SimBatch {
  uint64_t id;
  int bs;
  double dispatch_ms;
  DispatchCause cause;
  std::vector<std::pair<uint64_t, double>> members;  // (request id, arrival_ms)
};

}  // namespace detail

inline SimResult run_sim(const WorkloadConfig& cfg, const LatencyModel& model,
                         const TraceSchedule& schedule, SimMode mode, uint64_t seed,
                         const SimOptions& opts = {}) {
  using detail::EventKind;
  using detail::SimBatch;
  using detail::SimEvent;

  std::priority_queue<SimEvent, std::vector<SimEvent>, std::greater<SimEvent>> events;
  uint64_t seq = 0;
  auto push_event = [&](double t, EventKind kind, uint64_t arg = 0) {
    events.push(SimEvent{t, seq++, kind, arg});
  };

  Monitor monitor(cfg.slo_percentile, static_cast<double>(cfg.latency_window_ms),
                  cfg.min_samples);
  BatchQueue<uint64_t> queue;
  AimdState aimd;
  int effective_max = 1;

  // Latency noise gets its own stream so toggling other components never
  // perturbs it.
  std::seed_seq noise_seed{seed, static_cast<uint64_t>(0x6e6f697365)};
  std::mt19937_64 noise_rng(noise_seed);

  Autoscaler scaler(opts.target_concurrency, opts.autoscaler_window_ms);
  int running = 0;
  std::deque<SimBatch> backlog;
  std::vector<SimBatch> batches_by_id;

  SimResult result;
  result.mode = to_string(mode);
  result.seed = seed;
  result.slo_target_ms = cfg.slo_target_ms;
  result.rows.resize(schedule.arrivals_ms.size());

  size_t arrivals_remaining = schedule.arrivals_ms.size();
  size_t total_bs = 0;

  auto active = [&] {
    return arrivals_remaining > 0 || !queue.empty() || running > 0 || !backlog.empty();
  };

  // Batch ids are assigned at dispatch; batches_by_id is appended in
  // service-start order (which can differ under a concurrency cap), so
  // completions look up their batch through batch_index_by_id.
  uint64_t next_batch_id = 0;
  std::vector<size_t> batch_index_by_id;

  auto start_service = [&](SimBatch&& batch, double now) {
    running++;
    double service = service_time(model, batch.bs, noise_rng);
    uint64_t id = batch.id;
    if (batch_index_by_id.size() <= id) batch_index_by_id.resize(id + 1);
    batch_index_by_id[id] = batches_by_id.size();
    batches_by_id.push_back(std::move(batch));
    push_event(now + service, EventKind::BatchComplete, id);
  };

  auto dispatch = [&](DispatchCause cause, double now) {
    auto entries = queue.drain();
    SimBatch batch;
    batch.id = next_batch_id++;
    batch.bs = static_cast<int>(entries.size());
    batch.dispatch_ms = now;
    batch.cause = cause;
    for (const auto& e : entries) batch.members.emplace_back(e.payload, e.arrival_ms);
    monitor.record_dispatch(cause, now);
    scaler.enter(now);  // outstanding work, queued or running
    total_bs += batch.bs;
    if (opts.upstream_concurrency > 0 && running >= opts.upstream_concurrency) {
      backlog.push_back(std::move(batch));
    } else {
      start_service(std::move(batch), now);
    }
  };

  double sim_now = 0;
  const LatencyEstimator estimator = [&](int bs) -> std::optional<double> {
    if (opts.oracle_estimates) return model.mean_ms(bs);
    return monitor.upstream_percentile(bs, sim_now);
  };

  for (size_t i = 0; i < schedule.arrivals_ms.size(); ++i) {
    push_event(schedule.arrivals_ms[i], EventKind::Arrival, i);
  }
  if (mode == SimMode::BatchingOn) {
    push_event(static_cast<double>(cfg.optimizer_interval_ms), EventKind::OptimizerTick);
  }
  if (!schedule.arrivals_ms.empty()) {
    push_event(opts.sample_every_ms, EventKind::Sample);
  }

  while (!events.empty()) {
    SimEvent ev = events.top();
    events.pop();
    const double now = ev.t;
    sim_now = now;

    switch (ev.kind) {
      case EventKind::Arrival: {
        arrivals_remaining--;
        queue.push(ev.arg, now);
        auto decision = queue.on_arrival(now, effective_max, cfg.slo_target_ms, estimator);
        if (decision.is_dispatch()) {
          dispatch(decision.cause, now);
        } else {
          push_event(decision.deadline_ms, EventKind::QueueTimeout, decision.timer_version);
        }
        break;
      }
      case EventKind::QueueTimeout: {
        if (auto decision = queue.on_timeout(now, ev.arg)) dispatch(decision->cause, now);
        break;
      }
      case EventKind::BatchComplete: {
        running--;
        scaler.exit(now);
        const SimBatch& batch = batches_by_id[batch_index_by_id[ev.arg]];
        monitor.record_upstream(batch.bs, now - batch.dispatch_ms, now);
        for (const auto& [rid, arrival] : batch.members) {
          double e2e = now - arrival;
          monitor.record_e2e(e2e, now);
          result.rows[rid] = SimRequestRow{rid,      arrival,  batch.dispatch_ms, now,
                                           e2e,      batch.bs, batch.cause};
        }
        if (!backlog.empty()) {
          SimBatch next = std::move(backlog.front());
          backlog.pop_front();
          start_service(std::move(next), now);
        }
        break;
      }
      case EventKind::OptimizerTick: {
        auto snap = monitor.snapshot(now);
        if (snap.has_evidence()) {  // hold Max_BS when traffic stopped entirely
          aimd = aimd_step(aimd, check_violation(snap, cfg), cfg, now);
          effective_max = aimd.effective_max;
          if (auto decision = queue.on_max_update(effective_max)) dispatch(decision->cause, now);
        }
        if (active()) {
          push_event(now + static_cast<double>(cfg.optimizer_interval_ms),
                     EventKind::OptimizerTick);
        }
        break;
      }
      case EventKind::Sample: {
        result.series.push_back(SimSample{now, effective_max, scaler.containers(now),
                                          running + static_cast<int>(backlog.size())});
        if (active()) push_event(now + opts.sample_every_ms, EventKind::Sample);
        break;
      }
    }
  }

  // Summary over the whole run.
  auto& sum = result.summary;
  sum.requests = result.rows.size();
  sum.batches = next_batch_id;
  if (!result.rows.empty()) {
    size_t violations = 0;
    double e2e_total = 0;
    std::vector<double> e2e;
    e2e.reserve(result.rows.size());
    for (const auto& r : result.rows) {
      if (r.e2e_ms > cfg.slo_target_ms) violations++;
      e2e_total += r.e2e_ms;
      e2e.push_back(r.e2e_ms);
    }
    sum.slo_violation_pct = 100.0 * static_cast<double>(violations) / e2e.size();
    sum.mean_e2e_ms = e2e_total / e2e.size();
    sum.p95_e2e_ms = nearest_rank_percentile(std::move(e2e), 95.0);
  }
  if (sum.batches > 0) {
    sum.avg_batch_size = static_cast<double>(total_bs) / static_cast<double>(sum.batches);
  }
  if (!result.series.empty()) {
    double c = 0;
    for (const auto& s : result.series) c += s.containers;
    sum.avg_containers = c / static_cast<double>(result.series.size());
  }
  return result;
}

struct RunComparison {
  std::optional<double> containers_reduction;  // 1 - on/off
  std::optional<double> violation_reduction;   // 1 - on/off; absent when off is 0
};

inline RunComparison compare_runs(const SimSummary& on, const SimSummary& off) {
  RunComparison cmp;
  if (off.avg_containers > 0) {
    cmp.containers_reduction = 1.0 - on.avg_containers / off.avg_containers;
  }
  if (off.slo_violation_pct > 0) {
    cmp.violation_reduction = 1.0 - on.slo_violation_pct / off.slo_violation_pct;
  }
  return cmp;
}

}  // namespace batchgate
