#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "gridcut/cascade.hpp"
#include "gridcut/case_io.hpp"
#include "gridcut/orchestrator.hpp"
#include "support/random_cases.hpp"

using namespace gridcut;
using namespace gridcut::testing;

namespace {

Network parallel_pair(double load) {
  return parse_case(R"({
    "buses": [{"id": 1}, {"id": 2}],
    "branches": [{"from": 1, "to": 2, "susceptance": 4, "rating": 50},
                 {"from": 1, "to": 2, "susceptance": 4, "rating": 50}],
    "generators": [{"bus": 1, "p": )" + std::to_string(load) + R"(, "p_max": 200}],
    "loads": [{"bus": 2, "p": )" + std::to_string(load) + R"(}]
  })",
                    CaseFormat::NativeJson);
}

Network scale_ratings(const Network& net, double factor) {
  auto branches = net.branches();
  for (auto& b : branches) b.rating *= factor;
  return Network(net.mva_base(), net.buses(), branches, net.generators(), net.loads());
}

double shed_total(const CascadeResult& r) {
  double s = 0.0;
  for (const auto& round : r.rounds) s += std::accumulate(round.island_shed.begin(), round.island_shed.end(), 0.0);
  return s;
}

}  // namespace

TEST_CASE("parallel pair at 60 percent cascades") {
  const Network net = parallel_pair(60.0);
  const auto r = simulate_cascade(net, 0);
  // Survivor carries 60 MW on a 50 MW rating, trips, and bus 2 islands without supply.
  CHECK(r.is_trigger);
  CHECK(r.dependent_trips == 1);
  REQUIRE(r.rounds.size() == 2);
  CHECK(r.rounds[0].tripped == std::vector<BranchId>{0});
  CHECK(r.rounds[1].tripped == std::vector<BranchId>{1});
  CHECK(r.rounds[1].islands == 2);
  CHECK(std::abs(r.final_unserved - 60.0) <= 1e-9);
  CHECK(r.triggers(TriggerRule::UnservedDemand));
}

TEST_CASE("lightly loaded pair does not cascade") {
  const auto r = simulate_cascade(parallel_pair(20.0), 1);
  CHECK_FALSE(r.is_trigger);
  CHECK(r.rounds.size() == 1);
  CHECK(r.dependent_trips == 0);
  CHECK(r.final_unserved == 0.0);
}

TEST_CASE("empty contingency set has no triggers") {
  CHECK(find_cascade_triggers(parallel_pair(60.0), {}).empty());
}

TEST_CASE("shed per round adds up to unserved demand") {
  std::mt19937_64 rng(5);
  int with_shed = 0;
  for (int trial = 0; trial < 40; ++trial) {
    RandomCaseSpec spec;
    spec.buses = 10;
    spec.branches = 15;
    spec.rating_lo = 20.0;
    spec.rating_hi = 80.0;
    const Network net = random_feasible_network(rng, spec);
    for (const auto& r : simulate_cascades(net, net.in_service_branches())) {
      CHECK(std::abs(shed_total(r) - r.final_unserved) <= 1e-6);
      CHECK(r.final_unserved <= net.total_demand() + 1e-6);
      with_shed += r.final_unserved > 1e-3;
    }
  }
  CHECK(with_shed > 20);
}

TEST_CASE("huge ratings remove every non-islanding trigger") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    const Network net = scale_ratings(random_feasible_network(rng, {}), 1e4);
    CHECK(find_cascade_triggers(net, screened_branches(net)).empty());
  }
}

TEST_CASE("trigger search is deterministic and thread independent") {
  std::mt19937_64 rng(13);
  RandomCaseSpec spec;
  spec.buses = 12;
  spec.branches = 18;
  spec.rating_lo = 25.0;
  spec.rating_hi = 90.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Network net = random_feasible_network(rng, spec);
    const auto all = net.in_service_branches();
    const auto lodf = compute_lodf(net, compute_ptdf(net));
    const auto serial = find_cascade_triggers(net, all, nullptr, 1);
    CHECK(find_cascade_triggers(net, all, nullptr, 4) == serial);
    CHECK(find_cascade_triggers(net, all, &lodf, 3) == serial);
    const auto strict = find_cascade_triggers(net, all, &lodf, 2, TriggerRule::UnservedDemand);
    for (BranchId k : strict) CHECK(std::find(serial.begin(), serial.end(), k) != serial.end());
    const auto a = simulate_cascades(net, all, 1);
    const auto b = simulate_cascades(net, all, 4);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].final_unserved == b[i].final_unserved);
      CHECK(a[i].dependent_trips == b[i].dependent_trips);
    }
  }
}
