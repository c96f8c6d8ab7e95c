#pragma once

// The HTTP data plane. Client requests are parked on their handler thread
// behind a promise while the per-workload BatchQueue accumulates the batch;
// whichever event drains the queue (max size hit, armed deadline, optimizer
// shrink, shutdown) launches one upstream POST, then the response is split
// back to every member. Queue mutations are serialized by a per-workload
// mutex; upstream batches fly concurrently and never block arrivals.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

// httplib's default listen backlog of 5 drops SYNs under connection bursts;
// the kernel then stalls those clients for a TCP retransmission timeout.
#ifndef CPPHTTPLIB_LISTEN_BACKLOG
#define CPPHTTPLIB_LISTEN_BACKLOG 128
#endif
#include <httplib.h>
#include <json.hpp>

#include "batchgate/batch_codec.hpp"
#include "batchgate/config.hpp"
#include "batchgate/http_util.hpp"
#include "batchgate/monitor.hpp"
#include "batchgate/optimizer.hpp"
#include "batchgate/scheduler.hpp"
#include "batchgate/types.hpp"

namespace batchgate {

struct ProxyOptions {
  std::vector<WorkloadConfig> workloads;
  std::string host = "127.0.0.1";
  int port = 0;  // 0 = pick a free port
};

class ProxyServer {
 public:
  explicit ProxyServer(ProxyOptions opts) : opts_(std::move(opts)) {
    if (opts_.workloads.empty()) throw std::invalid_argument("proxy: no workloads configured");
    for (auto& cfg : opts_.workloads) {
      auto rt = std::make_shared<Runtime>(cfg);
      if (runtimes_.count(cfg.name)) {
        throw std::invalid_argument("proxy: duplicate workload name: " + cfg.name);
      }
      runtimes_.emplace(cfg.name, rt);
    }

    server_.new_task_queue = [] { return new httplib::ThreadPool(64); };

    // Charclass written as [^:/] because httplib switches to path-params
    // matching whenever a pattern contains the two-character sequence "/:".
    server_.Post(R"(/v1/workloads/([^:/]+):predict)",
                 [this](const httplib::Request& req, httplib::Response& res) {
                   handle_predict(req, res);
                 });

    server_.Get("/metrics", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(metrics_json().dump(), "application/json");
    });

    server_.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("ok", "text/plain");
    });
  }

  ~ProxyServer() { stop(); }

  int start() {
    if (opts_.port == 0) {
      port_ = server_.bind_to_any_port(opts_.host);
    } else {
      if (!server_.bind_to_port(opts_.host, opts_.port)) {
        throw std::runtime_error("proxy: cannot bind " + opts_.host + ":" +
                                 std::to_string(opts_.port));
      }
      port_ = opts_.port;
    }
    if (port_ <= 0) throw std::runtime_error("proxy: bind failed on " + opts_.host);
    for (auto& [name, rt] : runtimes_) {
      rt->timer_thread = std::thread([this, rt] { timer_loop(rt); });
      rt->optimizer_thread = std::thread([this, rt] { optimizer_loop(rt); });
    }
    listen_thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  // Graceful: stop control threads, flush still-queued batches upstream with
  // cause=forced, wait for in-flight dispatches, then close the listener.
  void stop() {
    if (stopped_.exchange(true)) return;
    for (auto& [name, rt] : runtimes_) {
      rt->stopping.store(true);
      rt->timer_cv.notify_all();
      rt->pacer_cv.notify_all();
      if (rt->timer_thread.joinable()) rt->timer_thread.join();
      if (rt->optimizer_thread.joinable()) rt->optimizer_thread.join();
    }
    for (auto& [name, rt] : runtimes_) {
      std::vector<Entry> entries;
      {
        std::lock_guard lk(rt->mu);
        rt->accepting = false;
        if (!rt->queue.empty()) entries = rt->queue.drain();
      }
      if (!entries.empty()) {
        start_dispatch(rt, std::move(entries), DispatchCause::Forced, steady_now_ms());
      }
    }
    for (auto& [name, rt] : runtimes_) {
      std::unique_lock lk(rt->inflight_mu);
      rt->inflight_cv.wait_for(lk, std::chrono::milliseconds(rt->cfg.upstream_timeout_ms + 5000),
                               [&] { return rt->inflight_dispatches == 0; });
    }
    if (listen_thread_.joinable()) {
      server_.stop();
      listen_thread_.join();
    }
  }

  int port() const { return port_; }
  std::string url() const { return "http://" + opts_.host + ":" + std::to_string(port_); }

  int effective_max(const std::string& workload) const {
    return runtimes_.at(workload)->effective_max.load();
  }

  nlohmann::json metrics_json() const {
    double now = steady_now_ms();
    nlohmann::json workloads = nlohmann::json::object();
    for (const auto& [name, rt] : runtimes_) {
      workloads[name] = workload_metrics(*rt, now);
    }
    nlohmann::json j;
    j["workloads"] = workloads;
    if (runtimes_.size() == 1) {
      // Single-workload deployments read the stats without knowing the name.
      for (auto& [k, v] : workloads.begin()->items()) j[k] = v;
    }
    return j;
  }

 private:
  struct Reply {
    int status = 502;
    std::string body;
    DispatchCause cause = DispatchCause::Forced;
    int bs = 0;
    std::optional<double> upstream_ms;
  };

  struct PendingRequest {
    nlohmann::json body;
    double arrival_ms = 0;
    httplib::Headers headers;
    std::shared_ptr<std::promise<Reply>> promise;
  };

  using Entry = BatchQueue<PendingRequest>::Entry;

  struct Runtime {
    explicit Runtime(const WorkloadConfig& c)
        : cfg(c), monitor(c.slo_percentile, static_cast<double>(c.latency_window_ms), c.min_samples) {}

    WorkloadConfig cfg;
    Monitor monitor;

    std::mutex mu;  // guards queue and accepting
    BatchQueue<PendingRequest> queue;
    bool accepting = true;
    std::condition_variable timer_cv;

    std::atomic<bool> stopping{false};
    std::atomic<int> effective_max{1};
    std::atomic<double> internal_max{1.0};
    AimdState aimd;  // optimizer thread only

    std::mutex pacer_mu;  // optimizer tick pacing
    std::condition_variable pacer_cv;

    std::mutex inflight_mu;
    std::condition_variable inflight_cv;
    int inflight_dispatches = 0;

    std::thread timer_thread;
    std::thread optimizer_thread;
  };

  void handle_predict(const httplib::Request& req, httplib::Response& res) {
    const std::string name = req.matches[1];
    auto it = runtimes_.find(name);
    if (it == runtimes_.end()) {
      res.status = 404;
      res.set_content(error_body("unknown workload: " + name), "application/json");
      return;
    }
    auto rt = it->second;

    nlohmann::json body = nlohmann::json::parse(req.body, nullptr, /*allow_exceptions=*/false);
    if (!body.is_array() || body.empty()) {
      res.status = 400;
      res.set_content(R"({"error":"body must be a non-empty JSON array of instances"})",
                      "application/json");
      return;
    }

    auto promise = std::make_shared<std::promise<Reply>>();
    auto future = promise->get_future();
    const double arrival = steady_now_ms();

    std::vector<Entry> drained;
    DispatchCause cause = DispatchCause::Forced;
    {
      std::lock_guard lk(rt->mu);
      if (!rt->accepting) {
        res.status = 503;
        res.set_content(R"({"error":"shutting down"})", "application/json");
        return;
      }
      rt->queue.push(PendingRequest{std::move(body), arrival, req.headers, promise}, arrival);
      auto decision = rt->queue.on_arrival(
          arrival, rt->effective_max.load(), rt->cfg.slo_target_ms,
          [&](int bs) { return rt->monitor.upstream_percentile(bs, arrival); });
      if (decision.is_dispatch()) {
        drained = rt->queue.drain();
        cause = decision.cause;
      } else {
        rt->timer_cv.notify_all();  // new or re-armed deadline
      }
    }
    if (!drained.empty()) start_dispatch(rt, std::move(drained), cause, arrival);

    // The promise is fulfilled by whichever dispatch completes this batch;
    // the long-stop below only guards against proxy bugs, not slow upstreams.
    auto wait_ms = static_cast<int64_t>(rt->cfg.upstream_timeout_ms + rt->cfg.slo_target_ms) + 30000;
    if (future.wait_for(std::chrono::milliseconds(wait_ms)) != std::future_status::ready) {
      res.status = 504;
      res.set_content(R"({"error":"proxy gave up waiting for batch completion"})",
                      "application/json");
      return;
    }
    Reply reply = future.get();
    res.status = reply.status;
    res.set_header("X-Batchgate-Cause", to_string(reply.cause));
    res.set_header("X-Batchgate-BS", std::to_string(reply.bs));
    if (reply.upstream_ms) {
      res.set_header("X-Batchgate-Upstream-Ms", std::to_string(*reply.upstream_ms));
      double proxy_added = (steady_now_ms() - arrival) - *reply.upstream_ms;
      res.set_header("X-Batchgate-Proxy-Ms", std::to_string(proxy_added));
    }
    res.set_content(reply.body, "application/json");
  }

  // Armed-deadline watcher. Versioned deadlines make fired-but-stale wakeups
  // no-ops, so a plain condition variable stands in for cancellable timers.
  void timer_loop(std::shared_ptr<Runtime> rt) {
    std::unique_lock lk(rt->mu);
    while (!rt->stopping.load()) {
      auto deadline = rt->queue.armed_deadline();
      if (!deadline) {
        rt->timer_cv.wait(lk);
        continue;
      }
      uint64_t version = rt->queue.armed_version();
      rt->timer_cv.wait_until(lk, steady_time_point(*deadline));
      if (rt->stopping.load()) break;
      double now = steady_now_ms();
      if (auto decision = rt->queue.on_timeout(now, version)) {
        auto entries = rt->queue.drain();
        lk.unlock();
        start_dispatch(rt, std::move(entries), decision->cause, now);
        lk.lock();
      }
    }
  }

  void optimizer_loop(std::shared_ptr<Runtime> rt) {
    std::unique_lock lk(rt->pacer_mu);
    while (!rt->stopping.load()) {
      if (rt->pacer_cv.wait_for(lk, std::chrono::milliseconds(rt->cfg.optimizer_interval_ms),
                                [&] { return rt->stopping.load(); })) {
        break;
      }
      double now = steady_now_ms();
      auto snap = rt->monitor.snapshot(now);
      if (!snap.has_evidence()) continue;  // hold Max_BS while idle
      rt->aimd = aimd_step(rt->aimd, check_violation(snap, rt->cfg), rt->cfg, now);
      rt->internal_max.store(rt->aimd.internal_max);
      rt->effective_max.store(rt->aimd.effective_max);

      std::vector<Entry> drained;
      DispatchCause cause = DispatchCause::Forced;
      {
        std::lock_guard qlk(rt->mu);
        if (auto decision = rt->queue.on_max_update(rt->aimd.effective_max)) {
          drained = rt->queue.drain();
          cause = decision->cause;
        }
      }
      if (!drained.empty()) start_dispatch(rt, std::move(drained), cause, now);
    }
  }

  void start_dispatch(std::shared_ptr<Runtime> rt, std::vector<Entry> entries,
                      DispatchCause cause, double now) {
    std::vector<nlohmann::json> bodies;
    bodies.reserve(entries.size());
    for (const auto& e : entries) bodies.push_back(e.payload.body);
    BatchEnvelope env = merge_bodies(bodies);
    env.dispatch_ms = now;
    env.cause = cause;
    rt->monitor.record_dispatch(cause, now);
    {
      std::lock_guard lk(rt->inflight_mu);
      rt->inflight_dispatches++;
    }
    std::thread([rt, env = std::move(env), entries = std::move(entries)]() mutable {
      try {
        run_dispatch(*rt, env, entries);
      } catch (const std::exception& e) {
        fan_out(entries, Reply{500, error_body(std::string("dispatch failed: ") + e.what()),
                               env.cause, env.bs, std::nullopt});
      } catch (...) {
        fan_out(entries,
                Reply{500, error_body("dispatch failed"), env.cause, env.bs, std::nullopt});
      }
      {
        std::lock_guard lk(rt->inflight_mu);
        rt->inflight_dispatches--;
      }
      rt->inflight_cv.notify_all();
    }).detach();
  }

  static std::string error_body(const std::string& message) {
    return nlohmann::json{{"error", message}}.dump();
  }

  static void fan_out(const std::vector<Entry>& entries, const Reply& reply) {
    for (const auto& e : entries) {
      try {
        e.payload.promise->set_value(reply);
      } catch (const std::future_error&) {
        // a catch-all path already answered this member; keep the rest going
      }
    }
  }

  static void run_dispatch(Runtime& rt, const BatchEnvelope& env,
                           const std::vector<Entry>& entries) {
    UrlParts url = split_url(rt.cfg.upstream_url);
    httplib::Client client(url.base);
    auto timeout = std::chrono::milliseconds(rt.cfg.upstream_timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);

    httplib::Headers headers;
    for (const auto& name : rt.cfg.passthrough_headers) {
      for (const auto& e : entries) {  // oldest member that carries it wins
        auto it = e.payload.headers.find(name);
        if (it != e.payload.headers.end()) {
          headers.emplace(name, it->second);
          break;
        }
      }
    }

    const std::string body = wrap_instances(env.merged_body, rt.cfg.instances_key).dump();
    auto res = client.Post(url.path, headers, body, "application/json");
    const double completed = steady_now_ms();
    const double upstream_ms = completed - env.dispatch_ms;

    if (!res) {
      // Transport never completed: dispatch already recorded, no latency sample.
      fan_out(entries, Reply{502,
                             error_body(std::string("upstream transport error: ") +
                                        httplib::to_string(res.error())),
                             env.cause, env.bs, std::nullopt});
      return;
    }

    rt.monitor.record_upstream(env.bs, upstream_ms, completed);

    if (res->status < 200 || res->status >= 300) {
      fan_out(entries,
              Reply{502, error_body("upstream returned status " + std::to_string(res->status)),
                    env.cause, env.bs, upstream_ms});
      return;
    }

    nlohmann::json upstream = nlohmann::json::parse(res->body, nullptr, false);
    std::vector<nlohmann::json> slices;
    try {
      slices = split_response(env, unwrap_instances(upstream, rt.cfg.instances_key));
    } catch (const SplitError& e) {
      fan_out(entries, Reply{502, error_body(e.what()), env.cause, env.bs, upstream_ms});
      return;
    }

    for (size_t i = 0; i < entries.size(); ++i) {
      Reply reply{200, slices[i].dump(), env.cause, env.bs, upstream_ms};
      try {
        entries[i].payload.promise->set_value(std::move(reply));
      } catch (const std::future_error&) {
      }
      rt.monitor.record_e2e(completed - entries[i].payload.arrival_ms, completed);
    }
  }

  nlohmann::json workload_metrics(const Runtime& rt, double now) const {
    auto snap = rt.monitor.snapshot(now);
    nlohmann::json j;
    j["effective_max"] = rt.effective_max.load();
    j["internal_max"] = rt.internal_max.load();
    j["e2e_percentile_ms"] =
        snap.e2e_percentile_ms ? nlohmann::json(*snap.e2e_percentile_ms) : nlohmann::json();
    j["timeout_ratio"] =
        snap.timeout_ratio ? nlohmann::json(*snap.timeout_ratio) : nlohmann::json();
    nlohmann::json causes = nlohmann::json::object();
    for (auto cause : {DispatchCause::Timeout, DispatchCause::Full, DispatchCause::Forced}) {
      auto it = snap.dispatch_counts.find(cause);
      causes[to_string(cause)] = it == snap.dispatch_counts.end() ? 0 : it->second;
    }
    j["dispatch_counts_by_cause"] = std::move(causes);
    nlohmann::json samples = nlohmann::json::object();
    for (const auto& [bs, n] : snap.samples_by_bs) samples[std::to_string(bs)] = n;
    j["samples_by_bs"] = std::move(samples);
    return j;
  }

  ProxyOptions opts_;
  std::map<std::string, std::shared_ptr<Runtime>> runtimes_;
  httplib::Server server_;
  std::thread listen_thread_;
  std::atomic<bool> stopped_{false};
  int port_ = 0;
};

}  // namespace batchgate
