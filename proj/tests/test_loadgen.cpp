// Tests for the arrival-process generator: rate-trace validation and
// scaling, Poisson schedule statistics, CSV round-trips, and URL splitting.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "batchgate/http_util.hpp"
#include "batchgate/trace.hpp"

using namespace batchgate;

namespace {

// Unique scratch file per call; removed by the OS tempdir policy, and tests
// overwrite rather than append so stale content cannot leak between runs.
std::string scratch_path(const std::string& tag) {
  static int counter = 0;
  auto dir = std::filesystem::temp_directory_path();
  return (dir / ("batchgate_test_" + tag + "_" + std::to_string(++counter) + ".csv")).string();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  REQUIRE(out.good());
  out << text;
}

RateTrace make_trace(std::vector<RatePoint> pts) { return RateTrace{std::move(pts)}; }

}  // namespace

TEST_CASE("scale_trace rescales to the requested peak and preserves shape") {
  auto trace = make_trace({{0, 10}, {60, 50}, {120, 20}});

  SECTION("doubling") {
    auto scaled = scale_trace(trace, 100.0);
    REQUIRE(scaled.points.size() == 3);
    CHECK(scaled.points[0].rate_rps == Catch::Approx(20.0));
    CHECK(scaled.points[1].rate_rps == Catch::Approx(100.0));
    CHECK(scaled.points[2].rate_rps == Catch::Approx(40.0));
    // Timestamps untouched.
    CHECK(scaled.points[1].t_seconds == 60.0);
    CHECK(scaled.max_rate() == Catch::Approx(100.0));
  }

  SECTION("scaling to the current max is the identity") {
    auto scaled = scale_trace(trace, 50.0);
    for (size_t i = 0; i < trace.points.size(); ++i) {
      CHECK(scaled.points[i].rate_rps == Catch::Approx(trace.points[i].rate_rps));
    }
  }

  SECTION("non-integer factor") {
    auto two = make_trace({{0, 3}, {10, 7}});
    auto scaled = scale_trace(two, 30.0);
    CHECK(scaled.points[0].rate_rps == Catch::Approx(3.0 * 30.0 / 7.0));
    CHECK(scaled.points[1].rate_rps == Catch::Approx(30.0));
  }

  SECTION("ratios between points are preserved") {
    auto scaled = scale_trace(trace, 77.5);
    CHECK(scaled.points[0].rate_rps / scaled.points[1].rate_rps ==
          Catch::Approx(trace.points[0].rate_rps / trace.points[1].rate_rps));
  }

  SECTION("all-zero trace cannot be scaled") {
    auto zeros = make_trace({{0, 0}, {10, 0}});
    CHECK_THROWS_AS(scale_trace(zeros, 10.0), std::invalid_argument);
  }

  SECTION("non-positive target rejected") {
    CHECK_THROWS_AS(scale_trace(trace, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(scale_trace(trace, -5.0), std::invalid_argument);
  }
}

TEST_CASE("validate_trace rejects malformed traces") {
  CHECK_THROWS_AS(validate_trace(make_trace({})), std::invalid_argument);
  CHECK_THROWS_AS(validate_trace(make_trace({{0, 10}})), std::invalid_argument);
  CHECK_THROWS_AS(validate_trace(make_trace({{0, 10}, {0, 10}})), std::invalid_argument);
  CHECK_THROWS_AS(validate_trace(make_trace({{0, 10}, {5, 10}, {3, 10}})), std::invalid_argument);
  CHECK_THROWS_AS(validate_trace(make_trace({{0, 10}, {5, -1}})), std::invalid_argument);
  CHECK_NOTHROW(validate_trace(make_trace({{0, 0}, {5, 10}})));
}

TEST_CASE("constant_rate_trace builds a two-point trace") {
  auto trace = constant_rate_trace(12.5, 300.0);
  REQUIRE(trace.points.size() == 2);
  CHECK(trace.points[0].t_seconds == 0.0);
  CHECK(trace.points[0].rate_rps == 12.5);
  CHECK(trace.points[1].t_seconds == 300.0);
  CHECK(trace.points[1].rate_rps == 12.5);
  CHECK(trace.duration_seconds() == 300.0);
  CHECK_THROWS_AS(constant_rate_trace(10.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(constant_rate_trace(10.0, -1.0), std::invalid_argument);
}

TEST_CASE("generate_arrivals is deterministic per seed") {
  auto trace = make_trace({{0, 15}, {30, 5}, {60, 25}, {90, 25}});
  auto a = generate_arrivals(trace, 42);
  auto b = generate_arrivals(trace, 42);
  REQUIRE(a.arrivals_ms.size() == b.arrivals_ms.size());
  for (size_t i = 0; i < a.arrivals_ms.size(); ++i) {
    CHECK(a.arrivals_ms[i] == b.arrivals_ms[i]);  // bitwise, not approximate
  }
  CHECK(a.seed == 42);

  auto c = generate_arrivals(trace, 43);
  CHECK(a.arrivals_ms != c.arrivals_ms);
}

TEST_CASE("generate_arrivals respects segment boundaries and ordering") {
  auto trace = make_trace({{0, 20}, {10, 0}, {20, 20}, {30, 20}});
  auto sched = generate_arrivals(trace, 7);

  REQUIRE(!sched.arrivals_ms.empty());
  CHECK(std::is_sorted(sched.arrivals_ms.begin(), sched.arrivals_ms.end()));
  CHECK(sched.arrivals_ms.front() >= 0.0);
  CHECK(sched.arrivals_ms.back() < trace.duration_seconds() * 1000.0);

  // The zero-rate segment [10s, 20s) must contain no arrivals.
  for (double t : sched.arrivals_ms) {
    bool in_dead_zone = t >= 10000.0 && t < 20000.0;
    CHECK_FALSE(in_dead_zone);
  }
}

TEST_CASE("generate_arrivals produces Poisson counts with the right moments") {
  // rate 10 rps for 100 s => count ~ Poisson(1000): mean 1000, variance 1000.
  auto trace = constant_rate_trace(10.0, 100.0);
  const double expected = 1000.0;
  const double sd = std::sqrt(expected);

  std::vector<double> counts;
  for (uint64_t seed = 1; seed <= 100; ++seed) {
    auto sched = generate_arrivals(trace, seed);
    counts.push_back(static_cast<double>(sched.arrivals_ms.size()));
    // Any single draw outside mean +/- 5 sd indicates a broken generator,
    // not bad luck (p < 1e-6 per draw).
    CHECK(std::abs(counts.back() - expected) <= 5.0 * sd);
  }

  double mean = 0;
  for (double c : counts) mean += c;
  mean /= static_cast<double>(counts.size());
  CHECK(std::abs(mean - expected) <= 5.0 * sd / std::sqrt(100.0));

  double var = 0;
  for (double c : counts) var += (c - mean) * (c - mean);
  var /= static_cast<double>(counts.size() - 1);
  // Poisson variance equals the mean; allow a wide band for 100 samples.
  CHECK(var >= 500.0);
  CHECK(var <= 1500.0);
}

TEST_CASE("piecewise rates are honoured segment by segment") {
  // 5 rps for 200 s then 50 rps for 200 s: expect ~1000 in each half, and a
  // 10x density difference between the halves.
  auto trace = make_trace({{0, 5}, {200, 50}, {400, 50}});
  auto sched = generate_arrivals(trace, 99);
  size_t first = 0, second = 0;
  for (double t : sched.arrivals_ms) (t < 200000.0 ? first : second)++;
  CHECK(std::abs(static_cast<double>(first) - 1000.0) <= 5.0 * std::sqrt(1000.0));
  CHECK(std::abs(static_cast<double>(second) - 10000.0) <= 5.0 * std::sqrt(10000.0));
}

TEST_CASE("rate trace CSV round-trip") {
  auto trace = make_trace({{0, 8.25}, {10, 19.5}, {3600, 0}});
  auto path = scratch_path("roundtrip");
  save_rate_trace(trace, path);
  auto loaded = load_rate_trace(path);
  REQUIRE(loaded.points.size() == trace.points.size());
  for (size_t i = 0; i < trace.points.size(); ++i) {
    CHECK(loaded.points[i].t_seconds == Catch::Approx(trace.points[i].t_seconds));
    CHECK(loaded.points[i].rate_rps == Catch::Approx(trace.points[i].rate_rps));
  }
  std::remove(path.c_str());
}

TEST_CASE("load_rate_trace parsing behaviour") {
  SECTION("header and comment lines are skipped") {
    auto path = scratch_path("header");
    write_text_file(path,
                    "t_seconds,rate_rps\n"
                    "# warm-up shape\n"
                    "0,4\n"
                    "\n"
                    "60,9\n");
    auto trace = load_rate_trace(path);
    REQUIRE(trace.points.size() == 2);
    CHECK(trace.points[0].rate_rps == 4.0);
    CHECK(trace.points[1].t_seconds == 60.0);
    std::remove(path.c_str());
  }

  SECTION("malformed numbers are reported with a line number") {
    auto path = scratch_path("badnum");
    write_text_file(path, "0,4\n60,fast\n");
    try {
      load_rate_trace(path);
      FAIL("expected a parse error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }
    std::remove(path.c_str());
  }

  SECTION("missing column is reported with a line number") {
    auto path = scratch_path("badcols");
    write_text_file(path, "0,4\n60\n");
    try {
      load_rate_trace(path);
      FAIL("expected a parse error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }
    std::remove(path.c_str());
  }

  SECTION("loaded traces are validated") {
    auto path = scratch_path("badorder");
    write_text_file(path, "0,4\n60,9\n30,2\n");
    CHECK_THROWS_AS(load_rate_trace(path), std::invalid_argument);
    std::remove(path.c_str());
  }

  SECTION("missing file") {
    CHECK_THROWS_AS(load_rate_trace("/nonexistent/batchgate/trace.csv"), std::runtime_error);
  }
}

TEST_CASE("split_url splits scheme://authority from path") {
  auto p = split_url("http://127.0.0.1:9000/predict");
  CHECK(p.base == "http://127.0.0.1:9000");
  CHECK(p.path == "/predict");

  auto nested = split_url("http://svc.local/v1/workloads/mnist:predict");
  CHECK(nested.base == "http://svc.local");
  CHECK(nested.path == "/v1/workloads/mnist:predict");

  auto bare = split_url("http://backend:8500");
  CHECK(bare.base == "http://backend:8500");
  CHECK(bare.path == "/");

  CHECK_THROWS_AS(split_url("127.0.0.1:9000/predict"), std::invalid_argument);
}
