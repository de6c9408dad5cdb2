#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "gridcut/case_io.hpp"
#include "gridcut/rtca.hpp"
#include "support/oracles.hpp"
#include "support/random_cases.hpp"

using namespace gridcut;

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

std::vector<RankedContingency> synthetic(int n) {
  std::vector<RankedContingency> r;
  for (int i = 0; i < n; ++i) r.push_back({i, static_cast<double>(n - i), false});
  return r;
}

}  // namespace

TEST_CASE("unloaded system has no violations") {
  const Network net = parallel_pair(0.0);
  const auto lodf = compute_lodf(net, compute_ptdf(net));
  const std::vector<double> flows(2, 0.0);
  for (const auto& c : rank_contingencies(net, flows, lodf)) CHECK(c.severity == 0.0);
  CHECK(run_rtca(net, flows, lodf, 1.0).empty());
}

TEST_CASE("parallel pair at 60 percent: both outages overload the survivor") {
  const Network net = parallel_pair(60.0);
  const auto lodf = compute_lodf(net, compute_ptdf(net));
  const auto flows = dc_power_flow(net, net.injections());
  const auto ranked = rank_contingencies(net, flows, lodf);
  REQUIRE(ranked.size() == 2);
  // Survivor carries 60 on a 50 rating: (60/50 - 1)^2 = 0.04.
  CHECK(ranked[0].severity == doctest::Approx(0.04));
  CHECK(ranked[0].branch == 0);
  const auto ev = run_rtca(net, flows, lodf, 1.0);
  CHECK(ev.outages() == std::vector<BranchId>{0, 1});
  REQUIRE(ev.contingencies[0].violations.size() == 1);
  CHECK(ev.contingencies[0].violations[0].monitored == 1);
  CHECK(std::abs(ev.contingencies[0].violations[0].post_flow) == doctest::Approx(60.0));
  CHECK(run_rtca(net, flows, lodf, 1.0, 1.25).empty());
}

TEST_CASE("top fraction rounds up") {
  CHECK(select_top_fraction(synthetic(10), 0.30).size() == 3);
  CHECK(select_top_fraction(synthetic(7), 0.30).size() == 3);
  CHECK(select_top_fraction(synthetic(1), 0.30).size() == 1);
  CHECK(select_top_fraction(synthetic(0), 0.30).empty());
  CHECK(select_top_fraction(synthetic(10), 1.0).size() == 10);
  CHECK_THROWS(select_top_fraction(synthetic(10), 0.0));
  CHECK_THROWS(select_top_fraction(synthetic(10), 1.5));
}

TEST_CASE("islanding outages are listed but never screened") {
  const Network net = parse_case(R"({
    "buses": [{"id": 1}, {"id": 2}, {"id": 3}],
    "branches": [{"from": 1, "to": 2, "susceptance": 1, "rating": 40},
                 {"from": 1, "to": 2, "susceptance": 1, "rating": 40},
                 {"from": 2, "to": 3, "susceptance": 1, "rating": 100}],
    "generators": [{"bus": 1, "p": 60, "p_max": 200}],
    "loads": [{"bus": 3, "p": 60}]
  })",
                                 CaseFormat::NativeJson);
  const auto lodf = compute_lodf(net, compute_ptdf(net));
  const auto flows = dc_power_flow(net, net.injections());
  const auto ranked = rank_contingencies(net, flows, lodf);
  CHECK(ranked[0].branch == 2);
  CHECK(ranked[0].islanding);
  CHECK(std::isinf(ranked[0].severity));
  const auto ev = run_rtca(net, flows, lodf, 1.0);
  CHECK(ev.islanding == std::vector<BranchId>{2});
  CHECK(ev.outages() == std::vector<BranchId>{0, 1});
}

TEST_CASE("screening matches independent post-outage re-solves") {
  std::mt19937_64 rng(99);
  int found = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const Network net = testing::random_network(rng, {.buses = 9, .branches = 15, .rating_lo = 20, .rating_hi = 80});
    const auto inj = net.injections();
    const auto lodf = compute_lodf(net, compute_ptdf(net));
    const auto flows = dc_power_flow(net, inj);
    const auto ev = run_rtca(net, flows, lodf, 1.0);
    std::vector<BranchId> expected;
    for (const auto& k : net.branches()) {
      if (lodf.is_islanding(k.id)) continue;
      const auto post = testing::oracle_dc_flows(apply_outage(net, k.id), inj, net.reference_bus());
      for (const auto& m : net.branches())
        if (m.id != k.id && std::abs(post[static_cast<std::size_t>(m.id)]) > m.rating + 1e-6) {
          expected.push_back(k.id);
          break;
        }
    }
    CHECK(ev.outages() == expected);
    found += static_cast<int>(expected.size());

    const auto partial = run_rtca(net, flows, lodf, 0.30);
    for (BranchId k : partial.outages()) CHECK(std::binary_search(expected.begin(), expected.end(), k));
  }
  CHECK(found > 10);
}

TEST_CASE("ranking is by descending severity with stable ties") {
  std::mt19937_64 rng(4);
  const Network net = testing::random_network(rng, {.buses = 10, .branches = 16, .rating_lo = 20, .rating_hi = 60});
  const auto lodf = compute_lodf(net, compute_ptdf(net));
  const auto ranked = rank_contingencies(net, dc_power_flow(net, net.injections()), lodf);
  for (std::size_t i = 1; i < ranked.size(); ++i) {
    CHECK(ranked[i - 1].severity >= ranked[i].severity);
    if (ranked[i - 1].severity == ranked[i].severity) CHECK(ranked[i - 1].branch < ranked[i].branch);
  }
}
