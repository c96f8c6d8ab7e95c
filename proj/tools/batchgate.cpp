// batchgate CLI: proxy / backend / loadgen / sim / analyze / characterize.

#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include <batchgate/batchgate.hpp>

namespace {

volatile std::sig_atomic_t g_stop = 0;
void on_signal(int) { g_stop = 1; }

void wait_for_signal() {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::pair<std::string, int> parse_listen(const std::string& listen) {
  auto colon = listen.rfind(':');
  if (colon == std::string::npos) {
    throw std::runtime_error("--listen must be host:port, got " + listen);
  }
  return {listen.substr(0, colon), std::stoi(listen.substr(colon + 1))};
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Shared --preset/--base-ms/... flags for subcommands that need a latency law.
struct ModelFlags {
  std::string preset = "mnist";
  double base_ms = -1;
  double fixed_fraction = -1;
  double exponent = -1;
  double noise_cv = -1;

  void attach(CLI::App* cmd) {
    cmd->add_option("--preset", preset, "latency preset (iris|toxic|mnist|mobilenet|resnet|onnx_resnet50)");
    cmd->add_option("--base-ms", base_ms, "response time at bs=1 (overrides preset)");
    cmd->add_option("--fixed-fraction", fixed_fraction, "per-batch overhead fraction in [0,1]");
    cmd->add_option("--exponent", exponent, "per-instance term exponent in (0,1]");
    cmd->add_option("--noise-cv", noise_cv, "lognormal noise coefficient of variation");
  }

  batchgate::LatencyModel build() const {
    auto m = batchgate::latency_preset(preset);
    if (!m) throw std::runtime_error("unknown preset: " + preset);
    if (base_ms >= 0) m->base_ms = base_ms;
    if (fixed_fraction >= 0) m->fixed_fraction = fixed_fraction;
    if (exponent >= 0) m->exponent = exponent;
    if (noise_cv >= 0) m->noise_cv = noise_cv;
    return *m;
  }
};

// Shared --trace/--max-rps/--rate/--duration flags for arrival generation.
struct TraceFlags {
  std::string trace_path;
  double max_rps = 0;
  double rate = 0;
  double duration_s = 0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--trace", trace_path, "rate trace CSV (t_seconds,rate_rps)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--max-rps", max_rps, "scale the trace so its peak rate equals this");
    cmd->add_option("--rate", rate, "constant arrival rate (rps), alternative to --trace");
    cmd->add_option("--duration", duration_s, "duration in seconds for --rate");
  }

  batchgate::RateTrace build() const {
    batchgate::RateTrace trace;
    if (!trace_path.empty()) {
      trace = batchgate::load_rate_trace(trace_path);
    } else if (rate > 0 && duration_s > 0) {
      trace = batchgate::constant_rate_trace(rate, duration_s);
    } else {
      throw std::runtime_error("need --trace or both --rate and --duration");
    }
    if (max_rps > 0) trace = batchgate::scale_trace(trace, max_rps);
    return trace;
  }
};

void write_text(const std::string& out_path, const std::string& text) {
  if (out_path.empty() || out_path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + out_path);
  out << text;
}

int run_proxy(const std::string& config_path, const std::string& listen) {
  auto [host, port] = parse_listen(listen);
  batchgate::ProxyOptions opts;
  opts.workloads = batchgate::load_workloads(read_file(config_path));
  opts.host = host;
  opts.port = port;
  batchgate::ProxyServer server(std::move(opts));
  server.start();
  std::cout << "proxy listening on " << server.url() << "\n";
  for (const auto& w : batchgate::load_workloads(read_file(config_path))) {
    std::cout << "  workload " << w.name << " -> " << w.upstream_url
              << " (slo p" << w.slo_percentile << " = " << w.slo_target_ms << "ms)\n";
  }
  wait_for_signal();
  std::cout << "shutting down\n";
  server.stop();
  return 0;
}

int run_backend(const ModelFlags& model_flags, uint64_t seed, int target_concurrency,
                const std::string& listen) {
  auto [host, port] = parse_listen(listen);
  batchgate::BackendOptions opts;
  opts.model = model_flags.build();
  opts.seed = seed;
  opts.target_concurrency = target_concurrency;
  opts.host = host;
  opts.port = port;
  batchgate::BackendServer server(std::move(opts));
  server.start();
  std::cout << "mock backend listening on " << server.url() << " (base "
            << model_flags.build().base_ms << "ms)\n";
  wait_for_signal();
  std::cout << "shutting down; served " << server.served() << " requests\n";
  server.stop();
  return 0;
}

int run_loadgen(const TraceFlags& trace_flags, uint64_t seed, const std::string& target,
                const std::string& payload_path, const std::string& out_path,
                double timeout_ms) {
  auto trace = trace_flags.build();
  auto schedule = batchgate::generate_arrivals(trace, seed);
  nlohmann::json payload = nlohmann::json::array({0});
  if (!payload_path.empty()) {
    payload = nlohmann::json::parse(read_file(payload_path));
    if (!payload.is_array() || payload.empty()) {
      throw std::runtime_error("payload must be a non-empty JSON array");
    }
  }
  std::cout << "replaying " << schedule.arrivals_ms.size() << " arrivals over "
            << trace.duration_seconds() << "s against " << target << "\n";
  batchgate::ReplayOptions opts;
  opts.request_timeout_ms = timeout_ms;
  auto rows = batchgate::replay(schedule, target, payload, opts);

  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + out_path);
  batchgate::write_run_log(out, rows);

  size_t ok = 0;
  std::vector<double> latencies;
  for (const auto& r : rows) {
    if (r.ok) {
      ok++;
      latencies.push_back(r.latency_ms);
    }
  }
  std::cout << "sent " << rows.size() << ", ok " << ok << ", failed " << (rows.size() - ok);
  if (!latencies.empty()) {
    std::cout << ", p95 latency " << batchgate::nearest_rank_percentile(latencies, 95.0) << "ms";
  }
  std::cout << "; run log: " << out_path << "\n";
  return 0;
}

struct SimFlags {
  std::string config_path;
  double slo = 500;
  int absolute_max_batch = -1;
  long optimizer_interval_ms = -1;
  int min_samples = -1;
  std::string mode = "on";
  uint64_t seed = 1;
  std::string out_path = "-";
  std::string requests_csv;
  batchgate::SimOptions opts;
};

int run_sim(const SimFlags& flags, const ModelFlags& model_flags, const TraceFlags& trace_flags,
            bool slo_given) {
  batchgate::WorkloadConfig cfg;
  if (!flags.config_path.empty()) {
    cfg = batchgate::load_config(read_file(flags.config_path));
    if (slo_given) cfg.slo_target_ms = flags.slo;
  } else {
    cfg.name = "sim";
    cfg.upstream_url = "sim://model";
    cfg.slo_target_ms = flags.slo;
    batchgate::finalize_config(cfg);
  }
  if (flags.absolute_max_batch > 0) cfg.absolute_max_batch = flags.absolute_max_batch;
  if (flags.optimizer_interval_ms > 0) cfg.optimizer_interval_ms = flags.optimizer_interval_ms;
  if (flags.min_samples > 0) cfg.min_samples = flags.min_samples;

  auto mode = flags.mode == "off" ? batchgate::SimMode::BatchingOff : batchgate::SimMode::BatchingOn;
  if (flags.mode != "on" && flags.mode != "off") {
    throw std::runtime_error("--mode must be on or off");
  }

  auto trace = trace_flags.build();
  auto schedule = batchgate::generate_arrivals(trace, flags.seed);
  auto result = batchgate::run_sim(cfg, model_flags.build(), schedule, mode, flags.seed, flags.opts);

  write_text(flags.out_path, result.to_json().dump(2) + "\n");
  if (!flags.requests_csv.empty()) {
    std::ofstream out(flags.requests_csv, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + flags.requests_csv);
    result.write_requests_csv(out);
  }
  std::cerr << "mode=" << result.mode << " requests=" << result.summary.requests
            << " batches=" << result.summary.batches << " avg_bs=" << result.summary.avg_batch_size
            << " violations=" << result.summary.slo_violation_pct << "%"
            << " avg_containers=" << result.summary.avg_containers
            << " p95=" << result.summary.p95_e2e_ms << "ms\n";
  return 0;
}

batchgate::RunMetrics load_metrics_input(const std::string& path, std::optional<double> slo,
                                         double exclude_warmup_ms) {
  batchgate::WorkloadConfig cfg;  // only slo_target_ms matters here
  if (ends_with(path, ".json")) {
    auto doc = nlohmann::json::parse(read_file(path));
    cfg.slo_target_ms = slo ? *slo : doc.at("slo_target_ms").get<double>();
    return batchgate::compute_metrics(doc, cfg, exclude_warmup_ms);
  }
  if (!slo) throw std::runtime_error("--slo is required for run-log CSV inputs");
  cfg.slo_target_ms = *slo;
  return batchgate::compute_metrics(batchgate::load_run_log(path), cfg, exclude_warmup_ms);
}

int run_analyze(const std::string& on_path, const std::string& off_path,
                std::optional<double> slo, const std::string& out_dir,
                double exclude_warmup_ms) {
  auto on = load_metrics_input(on_path, slo, exclude_warmup_ms);
  std::cout << "on:  requests=" << on.requests << " violations=" << on.slo_violation_pct
            << "% p95=" << on.p95_e2e_ms << "ms";
  if (on.avg_containers) std::cout << " avg_containers=" << *on.avg_containers;
  if (on.avg_batch_size) std::cout << " avg_bs=" << *on.avg_batch_size;
  std::cout << "\n";

  if (off_path.empty()) {
    std::filesystem::create_directories(out_dir);
    batchgate::detail::write_ccdf_csv(std::filesystem::path(out_dir) / "ccdf_on.csv", on.ccdf);
    std::cout << "wrote " << out_dir << "/ccdf_on.csv\n";
    return 0;
  }

  auto off = load_metrics_input(off_path, slo, exclude_warmup_ms);
  std::cout << "off: requests=" << off.requests << " violations=" << off.slo_violation_pct
            << "% p95=" << off.p95_e2e_ms << "ms";
  if (off.avg_containers) std::cout << " avg_containers=" << *off.avg_containers;
  if (off.avg_batch_size) std::cout << " avg_bs=" << *off.avg_batch_size;
  std::cout << "\n";

  batchgate::report(on, off, out_dir);
  std::cout << "violation reduction: "
            << batchgate::detail::reduction_pct(on.slo_violation_pct, off.slo_violation_pct)
            << "%\n";
  std::cout << "container reduction: "
            << batchgate::detail::reduction_pct(on.avg_containers.value_or(0),
                                                off.avg_containers.value_or(0))
            << "%\n";
  std::cout << "report written to " << out_dir << "/\n";
  return 0;
}

int run_characterize(const ModelFlags& model_flags, const std::string& endpoint,
                     std::vector<int> bs_list, int reps, uint64_t seed,
                     const std::string& out_path) {
  std::vector<batchgate::CharacterizationRow> rows;
  if (!endpoint.empty()) {
    rows = batchgate::characterize(
        [&](int bs) {
          nlohmann::json body = nlohmann::json::array();
          for (int i = 0; i < bs; ++i) body.push_back(0);
          auto row = batchgate::post_once(endpoint, body.dump());
          if (!row.ok) {
            throw std::runtime_error("endpoint " + endpoint + " returned status " +
                                     std::to_string(row.status));
          }
          return row.latency_ms;
        },
        std::move(bs_list), reps);
  } else {
    rows = batchgate::characterize(model_flags.build(), std::move(bs_list), reps, seed);
  }
  std::ostringstream csv;
  batchgate::write_characterization_csv(csv, rows);
  write_text(out_path, csv.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SLA-aware adaptive batching reverse proxy for ML inference backends"};
  app.require_subcommand(1);

  // proxy
  auto* proxy_cmd = app.add_subcommand("proxy", "run the batching reverse proxy");
  std::string proxy_config, proxy_listen = "127.0.0.1:8080";
  proxy_cmd->add_option("--config", proxy_config, "workload config JSON (object or array)")
      ->required()
      ->check(CLI::ExistingFile);
  proxy_cmd->add_option("--listen", proxy_listen, "host:port (default 127.0.0.1:8080)");

  // backend
  auto* backend_cmd = app.add_subcommand("backend", "run the mock model-serving upstream");
  ModelFlags backend_model;
  backend_model.attach(backend_cmd);
  uint64_t backend_seed = 1;
  int backend_target = 1;
  std::string backend_listen = "127.0.0.1:9000";
  backend_cmd->add_option("--seed", backend_seed, "latency noise seed");
  backend_cmd->add_option("--target-concurrency", backend_target, "autoscaler emulator target");
  backend_cmd->add_option("--listen", backend_listen, "host:port (default 127.0.0.1:9000)");

  // loadgen
  auto* loadgen_cmd = app.add_subcommand("loadgen", "open-loop HTTP replay of an arrival schedule");
  TraceFlags loadgen_trace;
  loadgen_trace.attach(loadgen_cmd);
  uint64_t loadgen_seed = 1;
  std::string loadgen_target, loadgen_payload, loadgen_out = "run.csv";
  double loadgen_timeout_ms = 30000;
  loadgen_cmd->add_option("--seed", loadgen_seed, "arrival schedule seed");
  loadgen_cmd->add_option("--target", loadgen_target, "URL to POST each request to")->required();
  loadgen_cmd->add_option("--payload", loadgen_payload, "JSON array payload file (default [0])")
      ->check(CLI::ExistingFile);
  loadgen_cmd->add_option("--out", loadgen_out, "run-log CSV path");
  loadgen_cmd->add_option("--timeout-ms", loadgen_timeout_ms, "per-request timeout");

  // sim
  auto* sim_cmd = app.add_subcommand("sim", "deterministic discrete-event simulation");
  SimFlags sim_flags;
  ModelFlags sim_model;
  TraceFlags sim_trace;
  sim_model.attach(sim_cmd);
  sim_trace.attach(sim_cmd);
  sim_cmd->add_option("--config", sim_flags.config_path, "workload config JSON (single object)")
      ->check(CLI::ExistingFile);
  auto* sim_slo_opt = sim_cmd->add_option("--slo", sim_flags.slo, "SLO target ms (default 500)");
  sim_cmd->add_option("--absolute-max-batch", sim_flags.absolute_max_batch,
                      "hard cap on the optimizer's max batch size");
  sim_cmd->add_option("--optimizer-interval-ms", sim_flags.optimizer_interval_ms,
                      "optimizer cadence");
  sim_cmd->add_option("--min-samples", sim_flags.min_samples, "monitor trust threshold");
  sim_cmd->add_option("--mode", sim_flags.mode, "on = adaptive batching, off = pass-through");
  sim_cmd->add_option("--seed", sim_flags.seed, "seed for arrivals and latency noise");
  sim_cmd->add_option("--out", sim_flags.out_path, "result JSON path ('-' = stdout)");
  sim_cmd->add_option("--requests-csv", sim_flags.requests_csv, "per-request CSV path");
  sim_cmd->add_option("--upstream-concurrency", sim_flags.opts.upstream_concurrency,
                      "cap on concurrent upstream batches (0 = unbounded)");
  sim_cmd->add_option("--target-concurrency", sim_flags.opts.target_concurrency,
                      "autoscaler emulator target");
  sim_cmd->add_option("--autoscaler-window-ms", sim_flags.opts.autoscaler_window_ms,
                      "autoscaler averaging window");
  sim_cmd->add_option("--sample-every-ms", sim_flags.opts.sample_every_ms,
                      "timeline sampling period");
  sim_cmd->add_flag("--oracle-estimates", sim_flags.opts.oracle_estimates,
                    "use the model's true mean latency as the scheduler's estimate");

  // analyze
  auto* analyze_cmd = app.add_subcommand("analyze", "metrics and ON-vs-OFF comparison report");
  std::string analyze_on, analyze_off, analyze_out = "report";
  double analyze_slo = 0;
  double analyze_warmup = 0;
  auto* analyze_slo_opt =
      analyze_cmd->add_option("--slo", analyze_slo, "SLO target ms (required for CSV inputs)");
  analyze_cmd->add_option("--on", analyze_on, "run with batching on (SimResult JSON or run CSV)")
      ->required()
      ->check(CLI::ExistingFile);
  analyze_cmd->add_option("--off", analyze_off, "baseline run (SimResult JSON or run CSV)")
      ->check(CLI::ExistingFile);
  analyze_cmd->add_option("--out", analyze_out, "report directory");
  analyze_cmd->add_option("--exclude-warmup-ms", analyze_warmup,
                          "drop requests that arrived before this time");

  // characterize
  auto* char_cmd = app.add_subcommand("characterize", "response time vs. batch size table");
  ModelFlags char_model;
  char_model.attach(char_cmd);
  std::string char_endpoint, char_out = "-";
  std::vector<int> char_bs = {1, 2, 4, 8, 16};
  int char_reps = 50;
  uint64_t char_seed = 1;
  char_cmd->add_option("--endpoint", char_endpoint, "probe a live /predict URL instead of the model");
  char_cmd->add_option("--bs", char_bs, "batch sizes (must include 1)")->delimiter(',');
  char_cmd->add_option("--reps", char_reps, "repetitions per batch size");
  char_cmd->add_option("--seed", char_seed, "noise seed (model mode)");
  char_cmd->add_option("--out", char_out, "output CSV path ('-' = stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(proxy_cmd)) return run_proxy(proxy_config, proxy_listen);
    if (app.got_subcommand(backend_cmd)) {
      return run_backend(backend_model, backend_seed, backend_target, backend_listen);
    }
    if (app.got_subcommand(loadgen_cmd)) {
      return run_loadgen(loadgen_trace, loadgen_seed, loadgen_target, loadgen_payload,
                         loadgen_out, loadgen_timeout_ms);
    }
    if (app.got_subcommand(sim_cmd)) {
      return run_sim(sim_flags, sim_model, sim_trace, sim_slo_opt->count() > 0);
    }
    if (app.got_subcommand(analyze_cmd)) {
      std::optional<double> slo;
      if (analyze_slo_opt->count() > 0) slo = analyze_slo;
      return run_analyze(analyze_on, analyze_off, slo, analyze_out, analyze_warmup);
    }
    if (app.got_subcommand(char_cmd)) {
      return run_characterize(char_model, char_endpoint, char_bs, char_reps, char_seed, char_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
