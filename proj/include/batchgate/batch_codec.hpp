#pragma once

// Wire batching scheme (json_array strategy): request and response bodies
// are JSON arrays of instances, batching is order-preserving concatenation,
// and upstream responses must be arrays aligned 1:1 with input instances.
// An optional instances_key wraps the merged array in {"<key>": [...]} for
// backends that want a keyed object.

#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "batchgate/types.hpp"

namespace batchgate {

struct BatchEnvelope {
  nlohmann::json merged_body;   // JSON array, concatenation in arrival order
  std::vector<size_t> counts;   // per-request instance counts, sum == merged size
  double dispatch_ms = 0;
  DispatchCause cause = DispatchCause::Forced;
  int bs = 0;                   // member request count == counts.size()
};

// Concatenates already-validated JSON-array bodies. Malformed bodies are
// rejected at the proxy edge before this point.
inline BatchEnvelope merge_bodies(const std::vector<nlohmann::json>& bodies) {
  if (bodies.empty()) throw std::logic_error("merge_bodies: empty batch");
  BatchEnvelope env;
  env.merged_body = nlohmann::json::array();
  env.counts.reserve(bodies.size());
  for (const auto& body : bodies) {
    if (!body.is_array() || body.empty()) {
      throw std::logic_error("merge_bodies: body is not a non-empty JSON array");
    }
    env.counts.push_back(body.size());
    for (const auto& instance : body) env.merged_body.push_back(instance);
  }
  env.bs = static_cast<int>(bodies.size());
  return env;
}

struct SplitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Partitions a successful upstream response back into per-request slices.
// Throws SplitError on a non-array body or an instance-count mismatch; the
// caller fans the error out to every member.
inline std::vector<nlohmann::json> split_response(const BatchEnvelope& env,
                                                  const nlohmann::json& upstream_body) {
  if (!upstream_body.is_array()) {
    throw SplitError("upstream body is not a JSON array");
  }
  const size_t expected =
      std::accumulate(env.counts.begin(), env.counts.end(), static_cast<size_t>(0));
  if (upstream_body.size() != expected) {
    throw SplitError("upstream returned " + std::to_string(upstream_body.size()) +
                     " instances, expected " + std::to_string(expected));
  }
  std::vector<nlohmann::json> slices;
  slices.reserve(env.counts.size());
  size_t offset = 0;
  for (size_t count : env.counts) {
    nlohmann::json slice = nlohmann::json::array();
    for (size_t i = 0; i < count; ++i) slice.push_back(upstream_body[offset + i]);
    offset += count;
    slices.push_back(std::move(slice));
  }
  return slices;
}

// {"<key>": [...]} envelope for backends that require a keyed object;
// identity when key is empty.
inline nlohmann::json wrap_instances(const nlohmann::json& merged, const std::string& key) {
  if (key.empty()) return merged;
  return nlohmann::json{{key, merged}};
}

inline nlohmann::json unwrap_instances(const nlohmann::json& body, const std::string& key) {
  if (key.empty()) return body;
  if (!body.is_object() || !body.contains(key)) {
    throw SplitError("upstream body missing instances key '" + key + "'");
  }
  return body.at(key);
}

}  // namespace batchgate
