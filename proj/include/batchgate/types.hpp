#pragma once

#include <chrono>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>

namespace batchgate {

// All timestamps and durations are real-valued milliseconds. The control
// logic never reads a clock itself; callers pass `now` explicitly so the
// same code runs under the live proxy (steady clock) and the simulator
// (virtual clock).

// Why a batch left the queue.
enum class DispatchCause { Timeout, Full, Forced };

inline const char* to_string(DispatchCause c) {
  switch (c) {
    case DispatchCause::Timeout: return "timeout";
    case DispatchCause::Full: return "full";
    case DispatchCause::Forced: return "forced";
  }
  return "unknown";
}

inline std::optional<DispatchCause> dispatch_cause_from(const std::string& s) {
  if (s == "timeout") return DispatchCause::Timeout;
  if (s == "full") return DispatchCause::Full;
  if (s == "forced") return DispatchCause::Forced;
  return std::nullopt;
}

// Upstream latency estimate for a given batch size; absent while the
// monitor has no usable samples.
using LatencyEstimator = std::function<std::optional<double>(int bs)>;

// Milliseconds since an arbitrary fixed origin (process start), from the
// steady clock. Live drivers use this; the simulator never does.
namespace detail {
inline std::chrono::steady_clock::time_point steady_origin() {
  static const std::chrono::steady_clock::time_point origin = std::chrono::steady_clock::now();
  return origin;
}
}  // namespace detail

inline double steady_now_ms() {
  using namespace std::chrono;
  return duration<double, std::milli>(steady_clock::now() - detail::steady_origin()).count();
}

// Inverse of steady_now_ms, for waiting until a deadline expressed in ms.
inline std::chrono::steady_clock::time_point steady_time_point(double ms) {
  using namespace std::chrono;
  return detail::steady_origin() + duration_cast<steady_clock::duration>(duration<double, std::milli>(ms));
}

}  // namespace batchgate
