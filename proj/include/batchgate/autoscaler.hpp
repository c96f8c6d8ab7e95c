#pragma once

// Concurrency-based autoscaler emulation, the deployment-cost proxy:
// containers = max(1, ceil(windowed-average in-flight / target_concurrency)).
// The in-flight level is kept as a piecewise-constant step function and the
// average is time-weighted over the trailing window.

#include <algorithm>
#include <cmath>
#include <deque>
#include <mutex>
#include <stdexcept>

namespace batchgate {

class Autoscaler {
 public:
  Autoscaler(int target_concurrency, double window_ms)
      : target_(target_concurrency), window_ms_(window_ms) {
    if (target_concurrency < 1) throw std::invalid_argument("target_concurrency must be >= 1");
    if (window_ms <= 0) throw std::invalid_argument("window_ms must be > 0");
  }

  void enter(double now_ms) { change(now_ms, +1); }
  void exit(double now_ms) { change(now_ms, -1); }

  int in_flight() const {
    std::lock_guard lk(mu_);
    return level_;
  }

  double avg_in_flight(double now_ms) const {
    std::lock_guard lk(mu_);
    return windowed_average(now_ms);
  }

  int containers(double now_ms) const {
    std::lock_guard lk(mu_);
    double avg = windowed_average(now_ms);
    return std::max(1, static_cast<int>(std::ceil(avg / target_ - 1e-9)));
  }

  int target_concurrency() const { return target_; }

 private:
  struct Step {
    double ts;
    int level;  // level in effect from ts onward
  };

  void change(double now_ms, int delta) {
    std::lock_guard lk(mu_);
    level_ += delta;
    if (level_ < 0) throw std::logic_error("autoscaler in-flight went negative");
    steps_.push_back({now_ms, level_});
    // Evict steps fully outside the window, keeping one to anchor the
    // level at the window's left edge.
    double cutoff = now_ms - window_ms_;
    while (steps_.size() > 1 && steps_[1].ts <= cutoff) steps_.pop_front();
  }

  double windowed_average(double now_ms) const {
    if (steps_.empty()) return 0.0;
    const double start = now_ms - window_ms_;
    double weighted = 0.0;
    for (size_t i = 0; i < steps_.size(); ++i) {
      double seg_start = std::max(steps_[i].ts, start);
      double seg_end = (i + 1 < steps_.size()) ? steps_[i + 1].ts : now_ms;
      seg_end = std::min(seg_end, now_ms);
      if (seg_end > seg_start) weighted += steps_[i].level * (seg_end - seg_start);
    }
    // Before the first step the level was 0, which adds nothing.
    return weighted / window_ms_;
  }

  int target_;
  double window_ms_;
  mutable std::mutex mu_;
  std::deque<Step> steps_;
  int level_ = 0;
};

}  // namespace batchgate
