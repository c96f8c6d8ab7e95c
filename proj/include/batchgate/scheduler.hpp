#pragma once

// High-frequency queue scheduler. One BatchQueue per workload accumulates
// requests; the dispatch timeout is recomputed on every arrival as
//
//   dispatch_timeout = slo_target - upstream_estimate(BS + 1)
//   armed_timeout    = dispatch_timeout - elapsed_since_first_request
//
// and the batch leaves on reaching the max batch size, on timeout expiry,
// or immediately (forced) while no latency estimate exists yet. Timer
// re-arming is modeled as versioned deadlines: a fired timer carrying a
// stale version is a no-op, which realizes "cancel previous timeout"
// without cancellable OS timers.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "batchgate/types.hpp"

namespace batchgate {

struct SchedulingDecision {
  enum class Kind { Wait, Dispatch };
  Kind kind;
  double deadline_ms = 0;       // Wait only
  uint64_t timer_version = 0;   // Wait only; pass back to on_timeout
  DispatchCause cause = DispatchCause::Forced;  // Dispatch only

  static SchedulingDecision wait_until(double deadline_ms, uint64_t version) {
    return {Kind::Wait, deadline_ms, version, DispatchCause::Forced};
  }
  static SchedulingDecision dispatch_now(DispatchCause cause) {
    return {Kind::Dispatch, 0, 0, cause};
  }
  bool is_dispatch() const { return kind == Kind::Dispatch; }
};

template <typename Payload>
class BatchQueue {
 public:
  struct Entry {
    Payload payload;
    double arrival_ms;
  };

  void push(Payload payload, double now_ms) {
    if (pending_.empty()) frt_start_ = now_ms;
    pending_.push_back(Entry{std::move(payload), now_ms});
  }

  // Scheduling decision for the arrival that was just pushed.
  SchedulingDecision on_arrival(double now_ms, int max_bs, double slo_target_ms,
                                const LatencyEstimator& estimate) {
    if (pending_.empty()) throw std::logic_error("on_arrival on empty queue");
    const int bs = static_cast<int>(pending_.size());
    if (bs >= max_bs) return decide_dispatch(DispatchCause::Full);

    auto est = estimate(bs + 1);
    if (!est) return decide_dispatch(DispatchCause::Forced);  // cold start

    const double dispatch_timeout = slo_target_ms - *est;
    const double frt_elapsed = now_ms - *frt_start_;
    const double timeout = dispatch_timeout - frt_elapsed;
    if (timeout <= 0) return decide_dispatch(DispatchCause::Timeout);

    armed_deadline_ = now_ms + timeout;  // supersedes any previous deadline
    ++armed_version_;
    return SchedulingDecision::wait_until(*armed_deadline_, armed_version_);
  }

  // Timer expiry carrying the version handed out by on_arrival. Returns
  // nullopt when the signal is stale: superseded by a newer arrival's
  // re-arm, the queue already drained, or an early wakeup.
  std::optional<SchedulingDecision> on_timeout(double now_ms, uint64_t version) {
    if (pending_.empty() || !armed_deadline_ || version != armed_version_) return std::nullopt;
    if (now_ms < *armed_deadline_ - 1e-9) return std::nullopt;
    return decide_dispatch(DispatchCause::Timeout);
  }

  // Re-check against a newly published max batch size (it may have shrunk
  // while a timer was armed). Keeps dispatched sizes <= effective max.
  std::optional<SchedulingDecision> on_max_update(int max_bs) {
    if (pending_.empty() || static_cast<int>(pending_.size()) < max_bs) return std::nullopt;
    return decide_dispatch(DispatchCause::Full);
  }

  std::vector<Entry> drain() {
    if (pending_.empty()) throw std::logic_error("drain on empty queue");
    std::vector<Entry> out = std::move(pending_);
    pending_.clear();
    frt_start_.reset();
    disarm();
    return out;
  }

  int size() const { return static_cast<int>(pending_.size()); }
  bool empty() const { return pending_.empty(); }
  std::optional<double> frt_start() const { return frt_start_; }
  std::optional<double> armed_deadline() const { return armed_deadline_; }
  uint64_t armed_version() const { return armed_version_; }

 private:
  SchedulingDecision decide_dispatch(DispatchCause cause) {
    disarm();
    return SchedulingDecision::dispatch_now(cause);
  }

  void disarm() {
    armed_deadline_.reset();
    ++armed_version_;
  }

  std::vector<Entry> pending_;
  std::optional<double> frt_start_;
  std::optional<double> armed_deadline_;
  uint64_t armed_version_ = 0;
};

}  // namespace batchgate
