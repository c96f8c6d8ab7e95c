// End-to-end tests over real sockets: proxy + mock backend on loopback.
// Scenarios cover batching by size and by deadline, optimizer climb, error
// mapping, instance-key wrapping, graceful shutdown, and open-loop replay.
// Timing assertions use wide margins so a loaded machine stays green.

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <catch2/catch_amalgamated.hpp>
#include <httplib.h>
#include <json.hpp>

#include "batchgate/analysis.hpp"
#include "batchgate/backend.hpp"
#include "batchgate/proxy.hpp"
#include "batchgate/replay.hpp"

using namespace batchgate;

namespace {

WorkloadConfig make_workload(const std::string& name, const std::string& upstream_url,
                             double slo_ms, int abs_max, int optimizer_interval_ms) {
  WorkloadConfig cfg;
  cfg.name = name;
  cfg.upstream_url = upstream_url;
  cfg.slo_target_ms = slo_ms;
  cfg.absolute_max_batch = abs_max;
  cfg.optimizer_interval_ms = optimizer_interval_ms;
  finalize_config(cfg);
  return cfg;
}

// Constant-time upstream regardless of batch size: fixed_fraction 1 leaves
// no per-item term, so coalescing shows up purely as fewer upstream calls.
LatencyModel constant_model(double ms) { return LatencyModel{ms, 1.0, 1.0, 0.0}; }

struct LiveReply {
  int status = 0;  // 0 = transport failure
  std::string body;
  std::string cause;
  std::string bs;
  bool have_upstream_ms = false;
  double elapsed_ms = 0;
};

LiveReply post_predict(const std::string& base_url, const std::string& workload,
                       const std::string& body_json) {
  httplib::Client cli(base_url);
  cli.set_read_timeout(std::chrono::seconds(60));
  LiveReply out;
  double t0 = steady_now_ms();
  auto res = cli.Post("/v1/workloads/" + workload + ":predict", body_json, "application/json");
  out.elapsed_ms = steady_now_ms() - t0;
  if (!res) return out;
  out.status = res->status;
  out.body = res->body;
  if (res->has_header("X-Batchgate-Cause")) out.cause = res->get_header_value("X-Batchgate-Cause");
  if (res->has_header("X-Batchgate-BS")) out.bs = res->get_header_value("X-Batchgate-BS");
  out.have_upstream_ms = res->has_header("X-Batchgate-Upstream-Ms");
  return out;
}

std::vector<LiveReply> concurrent_posts(const std::string& base_url, const std::string& workload,
                                        const std::string& body_json, int n) {
  std::vector<LiveReply> out(n);
  std::vector<std::thread> threads;
  threads.reserve(n);
  for (int i = 0; i < n; ++i) {
    threads.emplace_back([&, i] { out[i] = post_predict(base_url, workload, body_json); });
  }
  for (auto& t : threads) t.join();
  return out;
}

// Drive Max_BS up by sending full waves sized to the current limit: every
// batch dispatches full with near-zero queueing, so the controller sees a
// healthy workload and keeps widening.
bool climb_to(ProxyServer& proxy, const std::string& workload, int target, double budget_ms) {
  const double t0 = steady_now_ms();
  while (proxy.effective_max(workload) < target) {
    if (steady_now_ms() - t0 > budget_ms) return false;
    int wave = std::max(1, proxy.effective_max(workload));
    auto replies = concurrent_posts(proxy.url(), workload, "[1]", wave);
    for (const auto& r : replies) {
      if (r.status != 200) return false;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  return true;
}

nlohmann::json get_json(const std::string& base_url, const std::string& path) {
  httplib::Client cli(base_url);
  auto res = cli.Get(path);
  REQUIRE(res);
  REQUIRE(res->status == 200);
  return nlohmann::json::parse(res->body);
}

}  // namespace

TEST_CASE("single request round-trips through proxy and backend", "[live]") {
  BackendServer backend({constant_model(20.0)});
  backend.start();
  ProxyServer proxy({{make_workload("echo", backend.url() + "/predict", 500, 8, 60000)}});
  proxy.start();

  auto reply = post_predict(proxy.url(), "echo", R"([{"x":1}])");
  CHECK(reply.status == 200);
  CHECK(nlohmann::json::parse(reply.body) == nlohmann::json::parse(R"([{"x":1}])"));
  CHECK(reply.cause == "full");  // Max_BS starts at 1, so one request fills the batch
  CHECK(reply.bs == "1");
  CHECK(reply.have_upstream_ms);

  auto metrics = get_json(proxy.url(), "/metrics");
  CHECK(metrics["workloads"]["echo"]["samples_by_bs"]["1"] == 1);
  CHECK(metrics["workloads"]["echo"]["dispatch_counts_by_cause"]["full"] == 1);
  // Single-workload deployments also see the fields mirrored at top level.
  CHECK(metrics["effective_max"] == 1);

  httplib::Client cli(proxy.url());
  auto health = cli.Get("/healthz");
  REQUIRE(health);
  CHECK(health->body == "ok");
}

TEST_CASE("optimizer widens Max_BS and concurrent requests coalesce", "[live]") {
  BackendServer backend({constant_model(20.0)});
  backend.start();
  ProxyServer proxy({{make_workload("bulk", backend.url() + "/predict", 300, 8, 200)}});
  proxy.start();

  REQUIRE(climb_to(proxy, "bulk", 8, 30000));
  std::this_thread::sleep_for(std::chrono::milliseconds(50));

  uint64_t served_before = backend.served();
  auto replies = concurrent_posts(proxy.url(), "bulk", "[1]", 8);
  for (const auto& r : replies) {
    CHECK(r.status == 200);
    CHECK(r.bs == "8");
    CHECK(r.cause == "full");
    CHECK(r.body == "[1]");  // each member gets its own slice back
  }
  CHECK(backend.served() == served_before + 1);  // one upstream call for all eight
}

TEST_CASE("a partially filled batch dispatches when its deadline fires", "[live]") {
  BackendServer backend({constant_model(20.0)});
  backend.start();
  ProxyServer proxy({{make_workload("slow", backend.url() + "/predict", 300, 8, 200)}});
  proxy.start();

  REQUIRE(climb_to(proxy, "slow", 4, 20000));
  std::this_thread::sleep_for(std::chrono::milliseconds(100));

  // Three requests, then silence: nothing fills the batch, so the armed
  // deadline (SLO minus the estimated service time, ~280 ms) must fire.
  auto replies = concurrent_posts(proxy.url(), "slow", "[1]", 3);
  for (const auto& r : replies) {
    CHECK(r.status == 200);
    CHECK(r.cause == "timeout");
    CHECK(r.bs == "3");
    CHECK(r.elapsed_ms > 200.0);
    CHECK(r.elapsed_ms < 2500.0);
  }
}

TEST_CASE("malformed bodies and unknown workloads are rejected", "[live]") {
  // Upstream is never contacted on these paths, so a dead URL is fine.
  ProxyServer proxy({{make_workload("w", "http://127.0.0.1:9/predict", 500, 8, 60000)}});
  proxy.start();

  CHECK(post_predict(proxy.url(), "w", "not json").status == 400);
  CHECK(post_predict(proxy.url(), "w", "{}").status == 400);
  CHECK(post_predict(proxy.url(), "w", "[]").status == 400);
  CHECK(post_predict(proxy.url(), "nope", "[1]").status == 404);
}

TEST_CASE("unreachable upstreams map to 502 without poisoning the stats", "[live]") {
  ProxyServer proxy({{make_workload("w", "http://127.0.0.1:9/predict", 500, 8, 60000)}});
  proxy.start();

  auto reply = post_predict(proxy.url(), "w", "[1]");
  CHECK(reply.status == 502);
  CHECK(reply.body.find("transport") != std::string::npos);
  CHECK(reply.cause == "full");
  CHECK_FALSE(reply.have_upstream_ms);  // no latency was observed

  auto metrics = get_json(proxy.url(), "/metrics");
  CHECK(metrics["workloads"]["w"]["samples_by_bs"].empty());  // no bogus sample
  CHECK(metrics["workloads"]["w"]["dispatch_counts_by_cause"]["full"] == 1);
}

TEST_CASE("upstream instance-count mismatches map to 502 but keep the sample", "[live]") {
  httplib::Server stub;
  stub.Post("/predict", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("[1]", "application/json");  // always one instance
  });
  int port = stub.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread stub_thread([&] { stub.listen_after_bind(); });
  stub.wait_until_ready();

  {
    ProxyServer proxy(
        {{make_workload("w", "http://127.0.0.1:" + std::to_string(port) + "/predict", 500, 8,
                        60000)}});
    proxy.start();

    auto reply = post_predict(proxy.url(), "w", "[1,2]");  // two instances expected back
    CHECK(reply.status == 502);
    CHECK(reply.body.find("expected 2") != std::string::npos);

    // The upstream did answer, so its latency is still a valid sample.
    auto metrics = get_json(proxy.url(), "/metrics");
    CHECK(metrics["workloads"]["w"]["samples_by_bs"]["1"] == 1);
  }

  stub.stop();
  stub_thread.join();
}

TEST_CASE("instances_key wraps the upstream exchange", "[live]") {
  httplib::Server stub;
  std::mutex seen_mu;
  std::string seen_body;
  stub.Post("/predict", [&](const httplib::Request& req, httplib::Response& res) {
    {
      std::lock_guard lk(seen_mu);
      seen_body = req.body;
    }
    auto j = nlohmann::json::parse(req.body);
    res.set_content(nlohmann::json{{"instances", j.at("instances")}}.dump(), "application/json");
  });
  int port = stub.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread stub_thread([&] { stub.listen_after_bind(); });
  stub.wait_until_ready();

  {
    auto cfg = make_workload("tfs", "http://127.0.0.1:" + std::to_string(port) + "/predict", 500,
                             8, 60000);
    cfg.instances_key = "instances";
    ProxyServer proxy({{cfg}});
    proxy.start();

    auto reply = post_predict(proxy.url(), "tfs", "[7]");
    CHECK(reply.status == 200);
    CHECK(reply.body == "[7]");

    std::lock_guard lk(seen_mu);
    auto upstream_saw = nlohmann::json::parse(seen_body);
    REQUIRE(upstream_saw.is_object());
    CHECK(upstream_saw.at("instances") == nlohmann::json::array({7}));
  }

  stub.stop();
  stub_thread.join();
}

TEST_CASE("graceful shutdown flushes the queue as a forced batch", "[live]") {
  BackendServer backend({constant_model(20.0)});
  backend.start();
  ProxyServer proxy({{make_workload("w", backend.url() + "/predict", 2000, 8, 150)}});
  proxy.start();

  // One healthy optimizer tick raises Max_BS to 2 so a request can queue.
  const double t0 = steady_now_ms();
  while (proxy.effective_max("w") < 2) {
    REQUIRE(steady_now_ms() - t0 < 10000);
    auto r = post_predict(proxy.url(), "w", "[1]");
    REQUIRE(r.status == 200);
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }

  // This request queues behind a ~1980 ms deadline; shutdown must not wait
  // for it but dispatch the remainder immediately, marked forced.
  auto pending = std::async(std::launch::async,
                            [&] { return post_predict(proxy.url(), "w", "[2]"); });
  std::this_thread::sleep_for(std::chrono::milliseconds(150));
  proxy.stop();

  auto reply = pending.get();
  CHECK(reply.status == 200);
  CHECK(reply.cause == "forced");
  CHECK(reply.bs == "1");
  CHECK(reply.elapsed_ms < 1900.0);  // well before the armed deadline

  // The listener is down now; new connections fail at transport level.
  CHECK(post_predict(proxy.url(), "w", "[1]").status == 0);
}

TEST_CASE("replay is open loop and its run log round-trips", "[live]") {
  BackendServer backend({constant_model(300.0)});
  backend.start();

  TraceSchedule sched;
  for (int i = 0; i < 10; ++i) sched.arrivals_ms.push_back(50.0 * i);

  auto rows = replay(sched, backend.url() + "/predict", nlohmann::json::array({1}));
  REQUIRE(rows.size() == 10);
  for (size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].ok);
    CHECK(rows[i].status == 200);
    // Send times follow the schedule even though every response takes
    // ~300 ms: six responses are still pending when the last send goes out.
    CHECK(std::abs(rows[i].send_ts_ms - sched.arrivals_ms[i]) < 80.0);
    CHECK(rows[i].latency_ms > 290.0);
  }

  auto dir = std::filesystem::temp_directory_path() / "batchgate_live_runlog";
  std::filesystem::create_directories(dir);
  auto path = dir / "run.csv";
  {
    std::ofstream out(path);
    write_run_log(out, rows);
  }
  auto loaded = load_run_log(path.string());
  REQUIRE(loaded.size() == rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    CHECK(loaded[i].status == rows[i].status);
    CHECK(loaded[i].latency_ms == Catch::Approx(rows[i].latency_ms).margin(1e-3));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("metrics mirror appears only for single-workload deployments", "[live]") {
  auto w1 = make_workload("a", "http://127.0.0.1:9/predict", 500, 8, 60000);
  auto w2 = make_workload("b", "http://127.0.0.1:9/predict", 500, 8, 60000);

  ProxyServer single({{w1}});
  auto sj = single.metrics_json();
  CHECK(sj.contains("effective_max"));
  CHECK(sj["workloads"].size() == 1);

  ProxyServer pair({{w1, w2}});
  auto pj = pair.metrics_json();
  CHECK_FALSE(pj.contains("effective_max"));
  CHECK(pj["workloads"].size() == 2);

  CHECK_THROWS_AS(ProxyServer({{w1, w1}}), std::invalid_argument);
  CHECK_THROWS_AS(ProxyServer(ProxyOptions{}), std::invalid_argument);
}
