#include <doctest.h>

// Eigen before httplib: resolv.h defines _res, which Eigen uses as a name.
#include "gridcut/api_server.hpp"
#include "gridcut/case_io.hpp"

#include <httplib.h>
#include <json.hpp>

using namespace gridcut;
using json = nlohmann::json;

namespace {

Network worked_case() { return load_case(GRIDCUT_DATA_DIR "/case5_worked.json"); }

json body_of(const ApiResponse& r) { return json::parse(r.body); }

}  // namespace

TEST_CASE("state reports the base case") {
  ApiServer api(worked_case());
  const auto r = api.handle("GET", "/state");
  REQUIRE(r.status == 200);
  const auto doc = body_of(r);
  CHECK(doc["step"] == 0);
  CHECK(doc["branches"].size() == 7);
  CHECK(doc["outages"].empty());
  CHECK(doc["infeasible"].is_null());
}

TEST_CASE("outage, solve, commit round trip") {
  ApiServer api(worked_case());
  auto r = api.handle("POST", "/outage", R"({"branch": "e3"})");
  REQUIRE(r.status == 200);
  CHECK(body_of(r)["step"] == 1);
  CHECK(body_of(r)["incremental_matches_rebuild"] == true);

  r = api.handle("POST", "/solve", "");
  REQUIRE(r.status == 200);
  auto sols = body_of(r)["solutions"];
  CHECK(sols.contains("ica"));
  CHECK(sols.contains("rca"));
  CHECK(sols["ica"]["available"] == true);

  r = api.handle("POST", "/solve", R"({"modes": ["dcopf"]})");
  REQUIRE(r.status == 200);
  CHECK(body_of(r)["solutions"].contains("dcopf"));
  CHECK(body_of(api.handle("GET", "/solutions"))["solutions"].size() == 3);

  r = api.handle("POST", "/commit", R"({"mode": "ica", "expected_step": 1})");
  REQUIRE(r.status == 200);
  CHECK(body_of(r)["special"].empty());
  // Committing clears the stored solutions.
  CHECK(api.handle("POST", "/commit", R"({"mode": "ica"})").status == 409);

  r = api.handle("GET", "/cascade");
  REQUIRE(r.status == 200);
  CHECK(body_of(r)["triggers"].is_array());

  CHECK(api.handle("POST", "/reset").status == 200);
  CHECK(body_of(api.handle("GET", "/state"))["step"] == 0);
}

TEST_CASE("invalid input is rejected with 422") {
  ApiServer api(worked_case());
  CHECK(api.handle("POST", "/outage", "{").status == 422);
  CHECK(api.handle("POST", "/outage", "[1]").status == 422);
  CHECK(api.handle("POST", "/outage", "{}").status == 422);
  CHECK(api.handle("POST", "/outage", R"({"branch": "nope"})").status == 422);
  CHECK(api.handle("POST", "/outage", R"({"branch": 99})").status == 422);
  CHECK(api.handle("POST", "/outage", R"({"branch": true})").status == 422);
  CHECK(api.handle("POST", "/solve", R"({"modes": ["fast"]})").status == 422);
  CHECK(api.handle("POST", "/solve", R"({"modes": []})").status == 422);
  CHECK(api.handle("POST", "/commit", R"({"mode": "fast"})").status == 422);
  CHECK(api.handle("POST", "/commit", "{}").status == 422);
  CHECK(api.handle("POST", "/reset", R"({"expected_step": "x"})").status == 422);
  // e4 then e5 would island bus 4.
  REQUIRE(api.handle("POST", "/outage", R"({"branch": "e4"})").status == 200);
  CHECK(api.handle("POST", "/outage", R"({"branch": "e5"})").status == 422);
  // Rejected requests leave the session alone.
  CHECK(body_of(api.handle("GET", "/state"))["step"] == 1);
}

TEST_CASE("conflicting mutations get 409") {
  ApiServer api(worked_case());
  SUBCASE("stale expected_step") {
    CHECK(api.handle("POST", "/outage", R"({"branch": "e3", "expected_step": 4})").status == 409);
  }
  SUBCASE("branch already out") {
    REQUIRE(api.handle("POST", "/outage", R"({"branch": "e3"})").status == 200);
    CHECK(api.handle("POST", "/outage", R"({"branch": "e3"})").status == 409);
  }
  SUBCASE("commit without a solution") {
    CHECK(api.handle("POST", "/commit", R"({"mode": "rca"})").status == 409);
  }
  SUBCASE("another mutation in progress") {
    auto held = api.hold_mutations();
    for (const char* path : {"/outage", "/solve", "/commit", "/reset"})
      CHECK(api.handle("POST", path, R"({"branch": "e3", "mode": "ica"})").status == 409);
  }
  CHECK(body_of(api.handle("GET", "/state"))["step"].get<int>() <= 1);
}

TEST_CASE("unknown routes") {
  ApiServer api(worked_case());
  CHECK(api.handle("GET", "/nothing").status == 404);
  CHECK(api.handle("GET", "/outage").status == 405);
  CHECK(api.handle("POST", "/state").status == 405);
}

TEST_CASE("endpoints answer over HTTP") {
  ApiServer api(worked_case());
  const int port = api.start_background();
  httplib::Client client("127.0.0.1", port);
  auto res = client.Get("/state");
  REQUIRE(res);
  CHECK(res->status == 200);
  res = client.Post("/outage", R"({"branch": "e3"})", "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  res = client.Post("/outage", R"({"branch": "e3"})", "application/json");
  REQUIRE(res);
  CHECK(res->status == 409);
  res = client.Post("/commit", R"({"mode": "x"})", "application/json");
  REQUIRE(res);
  CHECK(res->status == 422);
  res = client.Post("/solve", "", "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  res = client.Post("/commit", R"({"mode": "rca"})", "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  for (const char* path : {"/solutions", "/cascade"}) {
    res = client.Get(path);
    REQUIRE(res);
    CHECK(res->status == 200);
  }
  res = client.Post("/reset", "", "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  api.stop();
}
