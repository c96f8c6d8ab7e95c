#pragma once

// Low-frequency dynamic batch optimizer: an AIMD controller over the
// maximum batch size. Healthy interval => internal max + inc_step;
// violated interval => internal max * dec_mult. The internal value is
// real-valued with a floor of 1 so consecutive decreases keep their
// multiplicative memory; the effective value is the clamped floor.

#include <algorithm>
#include <cmath>

#include "batchgate/config.hpp"
#include "batchgate/monitor.hpp"

namespace batchgate {

struct AimdState {
  double internal_max = 1.0;
  int effective_max = 1;
  double last_step_at = 0;
};

inline int effective_max_for(double internal_max, int absolute_max_batch) {
  auto floored = static_cast<int>(std::floor(internal_max));
  return std::clamp(floored, 1, absolute_max_batch);
}

// True iff the interval violated its goals: too many timeout-triggered
// dispatches, or the e2e percentile beyond safety_factor * SLO. Absent
// statistics contribute no violation.
inline bool check_violation(const MonitorSnapshot& snap, const WorkloadConfig& cfg) {
  if (snap.timeout_ratio && *snap.timeout_ratio > cfg.timeout_ratio_thresh) return true;
  if (snap.e2e_percentile_ms &&
      *snap.e2e_percentile_ms > cfg.safety_factor * cfg.slo_target_ms) {
    return true;
  }
  return false;
}

// One AIMD step; pure function of its inputs.
inline AimdState aimd_step(const AimdState& state, bool violation, const WorkloadConfig& cfg,
                           double now_ms) {
  AimdState next = state;
  if (violation) {
    next.internal_max = std::max(1.0, state.internal_max * cfg.dec_mult);
  } else {
    next.internal_max =
        std::min(static_cast<double>(cfg.absolute_max_batch), state.internal_max + cfg.inc_step);
  }
  next.effective_max = effective_max_for(next.internal_max, cfg.absolute_max_batch);
  next.last_step_at = now_ms;
  return next;
}

}  // namespace batchgate
