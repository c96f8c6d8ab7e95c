#pragma once

// Open-loop HTTP replay of a TraceSchedule: one POST per arrival timestamp,
// never delayed by earlier responses. Each request runs on its own short-
// lived thread; the driver only sleeps and launches, so send times track the
// schedule regardless of backend latency.

#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

// See proxy.hpp: the httplib default backlog (5) drops bursty connects.
#ifndef CPPHTTPLIB_LISTEN_BACKLOG
#define CPPHTTPLIB_LISTEN_BACKLOG 128
#endif
#include <httplib.h>
#include <json.hpp>

#include "batchgate/http_util.hpp"
#include "batchgate/trace.hpp"
#include "batchgate/types.hpp"

namespace batchgate {

struct ReplayRow {
  double send_ts_ms = 0;   // actual send time, relative to replay start
  int status = 0;          // 0 = transport failure
  double latency_ms = 0;
  std::string cause;       // X-Batchgate-Cause, when present
  std::optional<double> proxy_ms;      // X-Batchgate-Proxy-Ms
  std::optional<double> upstream_ms;   // X-Batchgate-Upstream-Ms
  bool ok = false;
};

struct ReplayOptions {
  double request_timeout_ms = 30000;
  double connect_timeout_ms = 2000;
};

inline ReplayRow post_once(const std::string& target_url, const std::string& body,
                           const ReplayOptions& opts = {}) {
  UrlParts url = split_url(target_url);
  httplib::Client cli(url.base);
  cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(
      std::chrono::duration<double, std::milli>(opts.connect_timeout_ms)));
  cli.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(
      std::chrono::duration<double, std::milli>(opts.request_timeout_ms)));

  ReplayRow row;
  double t0 = steady_now_ms();
  auto res = cli.Post(url.path, body, "application/json");
  row.latency_ms = steady_now_ms() - t0;
  if (res) {
    row.status = res->status;
    row.ok = res->status >= 200 && res->status < 300;
    if (res->has_header("X-Batchgate-Cause")) {
      row.cause = res->get_header_value("X-Batchgate-Cause");
    }
    if (res->has_header("X-Batchgate-Proxy-Ms")) {
      row.proxy_ms = std::stod(res->get_header_value("X-Batchgate-Proxy-Ms"));
    }
    if (res->has_header("X-Batchgate-Upstream-Ms")) {
      row.upstream_ms = std::stod(res->get_header_value("X-Batchgate-Upstream-Ms"));
    }
  }
  return row;
}

inline std::vector<ReplayRow> replay(const TraceSchedule& schedule, const std::string& target_url,
                                     const nlohmann::json& payload,
                                     const ReplayOptions& opts = {}) {
  const std::string body = payload.dump();
  std::vector<ReplayRow> rows(schedule.arrivals_ms.size());
  std::vector<std::thread> workers;
  workers.reserve(rows.size());

  const double t0 = steady_now_ms();
  for (size_t i = 0; i < schedule.arrivals_ms.size(); ++i) {
    std::this_thread::sleep_until(steady_time_point(t0 + schedule.arrivals_ms[i]));
    workers.emplace_back([&rows, &body, &target_url, &opts, t0, i] {
      double send_ts = steady_now_ms() - t0;
      ReplayRow row = post_once(target_url, body, opts);
      row.send_ts_ms = send_ts;
      rows[i] = std::move(row);
    });
  }
  for (auto& w : workers) w.join();
  return rows;
}

inline void write_run_log(std::ostream& out, const std::vector<ReplayRow>& rows) {
  out << "send_ts_ms,status,latency_ms,cause_header\n";
  for (const auto& r : rows) {
    out << r.send_ts_ms << "," << r.status << "," << r.latency_ms << "," << r.cause << "\n";
  }
}

}  // namespace batchgate
