#pragma once

// Mock model-serving upstream: an HTTP server whose response time follows
// the configured latency law. Requests sleep on their own worker thread, so
// in-flight concurrency behaves like a real (elastic) serving cluster. A
// Knative-style autoscaler emulator tracks windowed concurrency as the
// deployment-cost proxy.

#include <atomic>
#include <memory>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>

// See proxy.hpp: the httplib default backlog (5) drops bursty connects.
#ifndef CPPHTTPLIB_LISTEN_BACKLOG
#define CPPHTTPLIB_LISTEN_BACKLOG 128
#endif
#include <httplib.h>
#include <json.hpp>

#include "batchgate/autoscaler.hpp"
#include "batchgate/latency_model.hpp"
#include "batchgate/types.hpp"

namespace batchgate {

struct BackendOptions {
  LatencyModel model;
  uint64_t seed = 1;
  int target_concurrency = 1;
  double autoscaler_window_ms = 60000;
  std::string host = "127.0.0.1";
  int port = 0;  // 0 = pick a free port
};

class BackendServer {
 public:
  explicit BackendServer(BackendOptions opts)
      : opts_(std::move(opts)),
        rng_(opts_.seed),
        scaler_(opts_.target_concurrency, opts_.autoscaler_window_ms) {
    server_.new_task_queue = [] { return new httplib::ThreadPool(64); };

    server_.Post("/predict", [this](const httplib::Request& req, httplib::Response& res) {
      handle_predict(req, res);
    });

    server_.Get("/stats", [this](const httplib::Request&, httplib::Response& res) {
      nlohmann::json j;
      {
        std::lock_guard<std::mutex> lk(mu_);
        double now = steady_now_ms();
        j["containers"] = scaler_.containers(now);
        j["in_flight"] = scaler_.in_flight();
      }
      j["served"] = served_.load();
      res.set_content(j.dump(), "application/json");
    });

    server_.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("ok", "text/plain");
    });
  }

  ~BackendServer() { stop(); }

  // Binds and serves on a background thread; returns the bound port.
  int start() {
    if (opts_.port == 0) {
      port_ = server_.bind_to_any_port(opts_.host);
    } else {
      if (!server_.bind_to_port(opts_.host, opts_.port)) {
        throw std::runtime_error("backend: cannot bind " + opts_.host + ":" +
                                 std::to_string(opts_.port));
      }
      port_ = opts_.port;
    }
    if (port_ <= 0) throw std::runtime_error("backend: bind failed on " + opts_.host);
    listen_thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  void stop() {
    if (listen_thread_.joinable()) {
      server_.stop();
      listen_thread_.join();
    }
  }

  int port() const { return port_; }
  std::string url() const { return "http://" + opts_.host + ":" + std::to_string(port_); }
  uint64_t served() const { return served_.load(); }

 private:
  void handle_predict(const httplib::Request& req, httplib::Response& res) {
    nlohmann::json body = nlohmann::json::parse(req.body, nullptr, /*allow_exceptions=*/false);
    if (!body.is_array() || body.empty()) {
      res.status = 400;
      res.set_content(R"({"error":"body must be a non-empty JSON array"})", "application/json");
      return;
    }
    const int bs = static_cast<int>(body.size());
    double service_ms;
    {
      std::lock_guard<std::mutex> lk(mu_);
      scaler_.enter(steady_now_ms());
      service_ms = service_time(opts_.model, bs, rng_);
    }
    std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(service_ms));
    {
      std::lock_guard<std::mutex> lk(mu_);
      scaler_.exit(steady_now_ms());
    }
    served_.fetch_add(1);
    res.set_content(body.dump(), "application/json");  // echo predictions, 1:1 with instances
  }

  BackendOptions opts_;
  std::mutex mu_;  // guards rng_ and scaler_
  std::mt19937_64 rng_;
  Autoscaler scaler_;
  std::atomic<uint64_t> served_{0};
  httplib::Server server_;
  std::thread listen_thread_;
  int port_ = 0;
};

}  // namespace batchgate
