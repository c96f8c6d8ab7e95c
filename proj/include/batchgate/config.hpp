#pragma once

// Workload configuration: one JSON document per workload, a JSON array for
// several. Environment variables of the form BATCHGATE_<FIELD> (field name
// upper-cased) override the document for every workload.

#include <cctype>
#include <cstdlib>
#include <optional>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

namespace batchgate {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& field, const std::string& what)
      : std::runtime_error("config field '" + field + "': " + what), field(field) {}
  std::string field;
};

struct WorkloadConfig {
  std::string name;
  std::string upstream_url;
  double slo_target_ms = 0;
  double slo_percentile = 95.0;
  double safety_factor = 0.8;          // optimizer trips at safety_factor * slo_target_ms
  double timeout_ratio_thresh = 0.3;
  double inc_step = 1.0;
  double dec_mult = 0.8;
  long optimizer_interval_ms = 30000;
  long latency_window_ms = 60000;
  int min_samples = 5;
  int absolute_max_batch = 64;
  std::string merge_strategy = "json_array";
  long upstream_timeout_ms = 0;        // 0 in the document => 10 * slo_target_ms
  std::string instances_key;           // empty => bare-array wire format
  std::vector<std::string> passthrough_headers;
};

namespace detail {

inline std::optional<std::string> env_override(const std::string& field) {
  std::string key = "BATCHGATE_";
  for (char c : field) key += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (const char* v = std::getenv(key.c_str())) return std::string(v);
  return std::nullopt;
}

template <typename T>
T parse_scalar(const std::string& field, const std::string& text);

template <>
inline double parse_scalar<double>(const std::string& field, const std::string& text) {
  try {
    size_t pos = 0;
    double v = std::stod(text, &pos);
    if (pos != text.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(field, "cannot parse '" + text + "' as a number");
  }
}

template <>
inline long parse_scalar<long>(const std::string& field, const std::string& text) {
  try {
    size_t pos = 0;
    long v = std::stol(text, &pos);
    if (pos != text.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(field, "cannot parse '" + text + "' as an integer");
  }
}

template <>
inline int parse_scalar<int>(const std::string& field, const std::string& text) {
  return static_cast<int>(parse_scalar<long>(field, text));
}

template <>
inline std::string parse_scalar<std::string>(const std::string& field, const std::string& text) {
  (void)field;
  return text;
}

template <typename T>
void read_field(const nlohmann::json& doc, const std::string& field, T& out) {
  if (auto env = env_override(field)) {
    out = parse_scalar<T>(field, *env);
    return;
  }
  if (!doc.contains(field)) return;
  const nlohmann::json& value = doc.at(field);
  // get<int>() would silently truncate JSON floats; reject them up front.
  if constexpr (std::is_integral_v<T>) {
    if (!value.is_number_integer()) throw ConfigError(field, "wrong type: " + value.dump());
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!value.is_number()) throw ConfigError(field, "wrong type: " + value.dump());
  }
  try {
    out = value.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(field, "wrong type: " + value.dump());
  }
}

}  // namespace detail

inline void validate_config(const WorkloadConfig& cfg) {
  auto require = [](bool ok, const char* field, const char* what) {
    if (!ok) throw ConfigError(field, what);
  };
  require(!cfg.name.empty(), "name", "must be a non-empty identifier");
  require(!cfg.upstream_url.empty(), "upstream_url", "must be set");
  require(cfg.slo_target_ms > 0, "slo_target_ms", "must be > 0");
  require(cfg.slo_percentile > 0 && cfg.slo_percentile <= 100, "slo_percentile",
          "must be in (0, 100]");
  require(cfg.safety_factor > 0 && cfg.safety_factor <= 1, "safety_factor",
          "must be in (0, 1]");
  require(cfg.timeout_ratio_thresh >= 0 && cfg.timeout_ratio_thresh <= 1,
          "timeout_ratio_thresh", "must be in [0, 1]");
  require(cfg.inc_step > 0, "inc_step", "must be > 0");
  require(cfg.dec_mult > 0 && cfg.dec_mult < 1, "dec_mult", "must be in (0, 1)");
  require(cfg.optimizer_interval_ms > 0, "optimizer_interval_ms", "must be > 0");
  require(cfg.latency_window_ms > 0, "latency_window_ms", "must be > 0");
  require(cfg.min_samples > 0, "min_samples", "must be > 0");
  require(cfg.absolute_max_batch >= 1, "absolute_max_batch", "must be >= 1");
  require(cfg.merge_strategy == "json_array", "merge_strategy",
          "unsupported strategy (expected \"json_array\")");
  require(cfg.upstream_timeout_ms > 0, "upstream_timeout_ms", "must be > 0");
}

// Fills derived defaults (upstream_timeout_ms = 10 x SLO when unset), then
// validates. Entry point for configs assembled in code rather than parsed.
inline void finalize_config(WorkloadConfig& cfg) {
  if (cfg.upstream_timeout_ms == 0) {
    cfg.upstream_timeout_ms = static_cast<long>(10 * cfg.slo_target_ms);
  }
  validate_config(cfg);
}

// Parses and validates a single workload document (already-parsed JSON).
inline WorkloadConfig parse_workload(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("(document)", "expected a JSON object");
  WorkloadConfig cfg;
  detail::read_field(doc, "name", cfg.name);
  detail::read_field(doc, "upstream_url", cfg.upstream_url);
  detail::read_field(doc, "slo_target_ms", cfg.slo_target_ms);
  detail::read_field(doc, "slo_percentile", cfg.slo_percentile);
  detail::read_field(doc, "safety_factor", cfg.safety_factor);
  detail::read_field(doc, "timeout_ratio_thresh", cfg.timeout_ratio_thresh);
  detail::read_field(doc, "inc_step", cfg.inc_step);
  detail::read_field(doc, "dec_mult", cfg.dec_mult);
  detail::read_field(doc, "optimizer_interval_ms", cfg.optimizer_interval_ms);
  detail::read_field(doc, "latency_window_ms", cfg.latency_window_ms);
  detail::read_field(doc, "min_samples", cfg.min_samples);
  detail::read_field(doc, "absolute_max_batch", cfg.absolute_max_batch);
  detail::read_field(doc, "merge_strategy", cfg.merge_strategy);
  detail::read_field(doc, "upstream_timeout_ms", cfg.upstream_timeout_ms);
  detail::read_field(doc, "instances_key", cfg.instances_key);
  if (doc.contains("passthrough_headers")) {
    try {
      cfg.passthrough_headers = doc.at("passthrough_headers").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("passthrough_headers", "expected an array of strings");
    }
  }
  finalize_config(cfg);
  return cfg;
}

// Parses document text holding one workload object.
inline WorkloadConfig load_config(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("config parse error: ") + e.what());
  }
  return parse_workload(doc);
}

// Parses document text holding either one workload object or an array of them.
inline std::vector<WorkloadConfig> load_workloads(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("config parse error: ") + e.what());
  }
  std::vector<WorkloadConfig> out;
  if (doc.is_array()) {
    for (const auto& item : doc) out.push_back(parse_workload(item));
  } else {
    out.push_back(parse_workload(doc));
  }
  if (out.empty()) throw std::runtime_error("config parse error: empty workload list");
  return out;
}

}  // namespace batchgate
