#pragma once

// Smart Monitor: sliding-window latency statistics for the queue scheduler
// and the batch optimizer. Upstream batch latencies are windowed per batch
// size; end-to-end response times and dispatch causes get their own windows.
// Time is an explicit parameter everywhere so the identical code runs under
// the live proxy and the discrete-event simulator.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <vector>

#include "batchgate/types.hpp"

namespace batchgate {

// Nearest-rank percentile: index ceil(p/100 * n), 1-based, on the sorted
// multiset. p in (0, 100].
inline double nearest_rank_percentile(std::vector<double> values, double p) {
  if (values.empty()) throw std::logic_error("percentile of empty set");
  std::sort(values.begin(), values.end());
  auto n = static_cast<double>(values.size());
  auto rank = static_cast<size_t>(std::ceil(p / 100.0 * n));
  rank = std::clamp<size_t>(rank, 1, values.size());
  return values[rank - 1];
}

struct MonitorSnapshot {
  std::optional<double> e2e_percentile_ms;
  std::optional<double> timeout_ratio;       // timeouts / (timeouts + fulls); forced excluded
  std::map<int, size_t> samples_by_bs;
  std::map<DispatchCause, size_t> dispatch_counts;  // windowed, forced included
  double as_of = 0;

  bool has_evidence() const { return e2e_percentile_ms || timeout_ratio; }
};

class Monitor {
 public:
  Monitor(double percentile, double window_ms, int min_samples)
      : percentile_(percentile), window_ms_(window_ms), min_samples_(min_samples) {}

  void record_upstream(int bs, double latency_ms, double now_ms) {
    if (bs < 1) throw std::invalid_argument("record_upstream: bs must be >= 1");
    std::lock_guard lk(mu_);
    auto& win = upstream_by_bs_[bs];
    win.push_back({now_ms, latency_ms});
    evict(win, now_ms);
  }

  void record_e2e(double latency_ms, double now_ms) {
    std::lock_guard lk(mu_);
    e2e_.push_back({now_ms, latency_ms});
    evict(e2e_, now_ms);
  }

  void record_dispatch(DispatchCause cause, double now_ms) {
    std::lock_guard lk(mu_);
    dispatches_.push_back({now_ms, static_cast<double>(static_cast<int>(cause))});
    evict(dispatches_, now_ms);
  }

  // Configured-percentile upstream latency estimate for batch size `bs`.
  // Trust order: exact key with >= min_samples samples; nearest trusted key
  // (ties toward the larger, slower one); nearest key with any samples at
  // all; absent only when the store holds no samples anywhere.
  std::optional<double> upstream_percentile(int bs, double now_ms) const {
    if (bs < 1) throw std::invalid_argument("upstream_percentile: bs must be >= 1");
    std::lock_guard lk(mu_);
    std::map<int, std::vector<double>> in_window;
    for (const auto& [key, win] : upstream_by_bs_) {
      auto vals = window_values(win, now_ms);
      if (!vals.empty()) in_window.emplace(key, std::move(vals));
    }
    if (in_window.empty()) return std::nullopt;

    auto trusted = [&](int key) {
      auto it = in_window.find(key);
      return it != in_window.end() && it->second.size() >= static_cast<size_t>(min_samples_);
    };
    if (trusted(bs)) return nearest_rank_percentile(in_window.at(bs), percentile_);

    auto nearest = [&](auto&& pred) -> std::optional<int> {
      std::optional<int> best;
      for (const auto& [key, vals] : in_window) {
        (void)vals;
        if (!pred(key)) continue;
        if (!best) { best = key; continue; }
        int d_new = std::abs(key - bs), d_best = std::abs(*best - bs);
        if (d_new < d_best || (d_new == d_best && key > *best)) best = key;
      }
      return best;
    };
    if (auto key = nearest(trusted)) {
      return nearest_rank_percentile(in_window.at(*key), percentile_);
    }
    auto key = nearest([](int) { return true; });
    return nearest_rank_percentile(in_window.at(*key), percentile_);
  }

  MonitorSnapshot snapshot(double now_ms) const {
    std::lock_guard lk(mu_);
    MonitorSnapshot snap;
    snap.as_of = now_ms;
    auto e2e = window_values(e2e_, now_ms);
    if (!e2e.empty()) snap.e2e_percentile_ms = nearest_rank_percentile(std::move(e2e), percentile_);
    size_t timeouts = 0, fulls = 0;
    for (const auto& rec : dispatches_) {
      if (rec.ts < now_ms - window_ms_) continue;
      auto cause = static_cast<DispatchCause>(static_cast<int>(rec.value));
      snap.dispatch_counts[cause]++;
      if (cause == DispatchCause::Timeout) timeouts++;
      if (cause == DispatchCause::Full) fulls++;
    }
    if (timeouts + fulls > 0) {
      snap.timeout_ratio = static_cast<double>(timeouts) / static_cast<double>(timeouts + fulls);
    }
    for (const auto& [key, win] : upstream_by_bs_) {
      size_t n = window_values(win, now_ms).size();
      if (n > 0) snap.samples_by_bs[key] = n;
    }
    return snap;
  }

  double window_ms() const { return window_ms_; }
  double percentile() const { return percentile_; }

 private:
  struct Sample {
    double ts;
    double value;
  };
  using Window = std::deque<Sample>;

  void evict(Window& win, double now_ms) {
    latest_ = std::max(latest_, now_ms);
    while (!win.empty() && win.front().ts < latest_ - window_ms_) win.pop_front();
  }

  // Read-only in-window filter; queries must not mutate recorded samples.
  std::vector<double> window_values(const Window& win, double now_ms) const {
    std::vector<double> out;
    out.reserve(win.size());
    for (const auto& s : win) {
      if (s.ts >= now_ms - window_ms_) out.push_back(s.value);
    }
    return out;
  }

  double percentile_;
  double window_ms_;
  int min_samples_;
  mutable std::mutex mu_;
  std::map<int, Window> upstream_by_bs_;
  Window e2e_;
  Window dispatches_;
  double latest_ = 0;
};

}  // namespace batchgate
