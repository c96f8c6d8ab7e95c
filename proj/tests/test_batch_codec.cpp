#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <string>
#include <vector>

#include <batchgate/batch_codec.hpp>

using batchgate::BatchEnvelope;
using batchgate::merge_bodies;
using batchgate::split_response;
using batchgate::SplitError;
using batchgate::unwrap_instances;
using batchgate::wrap_instances;
using nlohmann::json;

namespace {

json random_instance(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> kind(0, 4);
  std::uniform_int_distribution<int> num(-1000, 1000);
  switch (kind(rng)) {
    case 0: return json(num(rng));
    case 1: return json(num(rng) / 16.0);
    case 2: return json("s" + std::to_string(num(rng)));
    case 3: return json{{"x", num(rng)}, {"y", num(rng)}};
    default: return json::array({num(rng), num(rng)});
  }
}

std::vector<json> random_bodies(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> n_bodies(1, 8);
  std::uniform_int_distribution<int> n_instances(1, 5);
  std::vector<json> bodies;
  int n = n_bodies(rng);
  for (int i = 0; i < n; ++i) {
    json body = json::array();
    int m = n_instances(rng);
    for (int j = 0; j < m; ++j) body.push_back(random_instance(rng));
    bodies.push_back(std::move(body));
  }
  return bodies;
}

}  // namespace

TEST_CASE("merge concatenates in arrival order and records counts") {
  std::vector<json> bodies = {json::array({"a", "b"}), json::array({"c"})};
  BatchEnvelope env = merge_bodies(bodies);
  CHECK(env.merged_body == json::array({"a", "b", "c"}));
  REQUIRE(env.counts == std::vector<size_t>{2, 1});
  CHECK(env.bs == 2);
}

TEST_CASE("single-request envelope is byte-identical to the unbatched request") {
  json body = json::array({json{{"pixels", json::array({1, 2, 3})}}});
  BatchEnvelope env = merge_bodies({body});
  CHECK(env.merged_body.dump() == body.dump());
  CHECK(env.counts == std::vector<size_t>{1});
  CHECK(env.bs == 1);
}

TEST_CASE("five single-instance requests") {
  std::vector<json> bodies(5, json::array({42}));
  BatchEnvelope env = merge_bodies(bodies);
  CHECK(env.merged_body.size() == 5);
  CHECK(env.counts == std::vector<size_t>(5, 1));
  CHECK(env.bs == 5);
}

TEST_CASE("merge rejects malformed input") {
  CHECK_THROWS_AS(merge_bodies({}), std::logic_error);
  CHECK_THROWS_AS(merge_bodies({json{{"k", 1}}}), std::logic_error);   // not an array
  CHECK_THROWS_AS(merge_bodies({json::array()}), std::logic_error);   // empty array
  CHECK_THROWS_AS(merge_bodies({json::array({1}), json::array()}), std::logic_error);
}

TEST_CASE("split partitions by counts in order") {
  BatchEnvelope env = merge_bodies({json::array({"a", "b"}), json::array({"c"})});
  auto slices = split_response(env, json::array({"p", "q", "r"}));
  REQUIRE(slices.size() == 2);
  CHECK(slices[0] == json::array({"p", "q"}));
  CHECK(slices[1] == json::array({"r"}));
}

TEST_CASE("split identity case") {
  BatchEnvelope env = merge_bodies({json::array({"x"})});
  auto slices = split_response(env, json::array({"p"}));
  REQUIRE(slices.size() == 1);
  CHECK(slices[0] == json::array({"p"}));
}

TEST_CASE("split rejects mismatched and non-array upstream bodies") {
  BatchEnvelope env = merge_bodies({json::array({"a", "b"}), json::array({"c"})});
  try {
    split_response(env, json::array({"p", "q"}));
    FAIL("expected SplitError");
  } catch (const SplitError& e) {
    std::string what = e.what();
    CHECK(what.find("2") != std::string::npos);  // got
    CHECK(what.find("3") != std::string::npos);  // expected
  }
  CHECK_THROWS_AS(split_response(env, json{{"not", "array"}}), SplitError);
  CHECK_THROWS_AS(split_response(env, json("scalar")), SplitError);
}

TEST_CASE("merge then identity upstream then split is the identity") {
  std::mt19937_64 rng(1234);
  for (int trial = 0; trial < 2000; ++trial) {
    auto bodies = random_bodies(rng);
    BatchEnvelope env = merge_bodies(bodies);
    auto slices = split_response(env, env.merged_body);
    REQUIRE(slices.size() == bodies.size());
    for (size_t i = 0; i < bodies.size(); ++i) {
      REQUIRE(slices[i].dump() == bodies[i].dump());
    }
  }
}

TEST_CASE("instances_key wrapping") {
  json merged = json::array({1, 2, 3});
  CHECK(wrap_instances(merged, "") == merged);
  json wrapped = wrap_instances(merged, "instances");
  CHECK(wrapped == json{{"instances", json::array({1, 2, 3})}});
  CHECK(unwrap_instances(wrapped, "instances") == merged);
  CHECK(unwrap_instances(merged, "") == merged);
  CHECK_THROWS_AS(unwrap_instances(json{{"other", 1}}, "instances"), SplitError);
  CHECK_THROWS_AS(unwrap_instances(json::array({1}), "instances"), SplitError);
}

TEST_CASE("wrap then unwrap roundtrips under any key") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    auto bodies = random_bodies(rng);
    BatchEnvelope env = merge_bodies(bodies);
    json wire = wrap_instances(env.merged_body, "inputs");
    CHECK(unwrap_instances(wire, "inputs").dump() == env.merged_body.dump());
  }
}
