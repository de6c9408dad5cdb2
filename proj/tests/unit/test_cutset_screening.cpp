#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "gridcut/case_io.hpp"
#include "gridcut/cutset_screening.hpp"
#include "support/random_cases.hpp"

using namespace gridcut;

namespace {

Network worked_case() { return load_case(GRIDCUT_DATA_DIR "/case5_worked.json"); }

bool contains(const std::vector<BranchId>& v, BranchId id) { return std::find(v.begin(), v.end(), id) != v.end(); }

void check_same_special(const ScreeningState& a, const ScreeningState& b) {
  const auto sa = a.special(), sb = b.special();
  REQUIRE(sa.size() == sb.size());
  for (const auto& [id, r] : sa) {
    REQUIRE(sb.contains(id));
    CHECK(std::abs(*r.transfer_margin - *sb.at(id).transfer_margin) <= 1e-6);
  }
}

}  // namespace

TEST_CASE("worked case: e4 is special with a 30 MW deficit") {
  const Network net = worked_case();
  const auto fs = build_flow_state(net, net.injections());
  const BranchId e4 = *net.find_branch("e4");
  const auto r = feasibility_test(fs, e4);
  CHECK(r.is_special);
  REQUIRE(r.transfer_margin);
  CHECK(*r.transfer_margin == doctest::Approx(-30.0).epsilon(1e-12));
  for (const char* name : {"e4", "e6", "e7"}) CHECK(contains(r.k_crit, *net.find_branch(name)));

  const auto o = brute_force_cutset_oracle(net, net.injections(), e4);
  CHECK(o.is_special);
  CHECK(*o.transfer_margin == doctest::Approx(-30.0).epsilon(1e-12));
  CHECK(o.k_crit == r.k_crit);
}

TEST_CASE("zero-flow branches are never special") {
  const Network net = worked_case();
  const FlowState fs(FlowTopology::from_network(net), std::vector<double>(net.branch_count(), 0.0),
                     std::vector<double>(net.bus_count(), 0.0));
  const auto r = feasibility_test(fs, 0);
  CHECK_FALSE(r.is_special);
  CHECK_FALSE(r.transfer_margin);
  CHECK(screen_all(fs).special().empty());
}

TEST_CASE("oracle on small hand cases") {
  SUBCASE("triangle with huge ratings has no special assets") {
    const Network net = parse_case(R"({
      "buses": [{"id": 1}, {"id": 2}, {"id": 3}],
      "branches": [{"from": 1, "to": 2, "susceptance": 1, "rating": 1e5},
                   {"from": 2, "to": 3, "susceptance": 1, "rating": 1e5},
                   {"from": 1, "to": 3, "susceptance": 1, "rating": 1e5}],
      "generators": [{"bus": 1, "p": 300, "p_max": 400}],
      "loads": [{"bus": 2, "p": 100}, {"bus": 3, "p": 200}]
    })",
                                   CaseFormat::NativeJson);
    for (BranchId l = 0; l < 3; ++l) CHECK_FALSE(brute_force_cutset_oracle(net, net.injections(), l).is_special);
  }
  SUBCASE("4-bus ring with one tight two-branch cut") {
    // Bus 1 exports 100, 50 each way round the ring. Losing 1-2 leaves 1-4
    // (70) for all of it: T_m = 70 - 100 = -30 on cut {1}. Losing 2-3 pushes
    // it all over 1-4 as well, so cut {1,2} is short by the same 30.
    const Network net = parse_case(R"({
      "buses": [{"id": 1}, {"id": 2}, {"id": 3}, {"id": 4}],
      "branches": [{"from": 1, "to": 2, "susceptance": 1, "rating": 60},
                   {"from": 2, "to": 3, "susceptance": 1, "rating": 200},
                   {"from": 3, "to": 4, "susceptance": 1, "rating": 200},
                   {"from": 1, "to": 4, "susceptance": 1, "rating": 70}],
      "generators": [{"bus": 1, "p": 100, "p_max": 200}],
      "loads": [{"bus": 3, "p": 100}]
    })",
                                   CaseFormat::NativeJson);
    const auto o = brute_force_cutset_oracle(net, net.injections(), 0);
    CHECK(o.is_special);
    CHECK(*o.transfer_margin == doctest::Approx(-30.0));
    CHECK(o.k_crit == std::vector<BranchId>{0, 3});
    const auto fs = build_flow_state(net, net.injections());
    const auto r = feasibility_test(fs, 0);
    if (std::abs(fs.flow(0)) > 30.0 + 1e-6) {
      CHECK(r.is_special);
      CHECK(*r.transfer_margin == doctest::Approx(-30.0));
    }
    const auto o1 = brute_force_cutset_oracle(net, net.injections(), 1);
    CHECK(o1.is_special);
    CHECK(*o1.transfer_margin == doctest::Approx(-30.0));
    CHECK(o1.k_crit == std::vector<BranchId>{1, 3});
  }
}

TEST_CASE("FT agrees with exhaustive enumeration on random cases") {
  std::mt19937_64 rng(31337);
  int special = 0;
  for (int trial = 0; trial < 120; ++trial) {
    const int n = 4 + trial % 8;
    const Network net = testing::random_feasible_network(rng, {.buses = n, .branches = std::min(20, n + 3 + trial % 7)});
    const auto inj = net.injections();
    const auto fs = build_flow_state(net, inj);
    for (const auto& br : net.branches()) {
      const auto r = feasibility_test(fs, br.id);
      const auto o = brute_force_cutset_oracle(net, inj, br.id);
      // The oracle scans every cut; FT only sees the flow through the branch.
      // A cut that does not carry this branch's flow is never worse than 0.
      CHECK(r.is_special == o.is_special);
      if (r.is_special && o.is_special) {
        CHECK(std::abs(*r.transfer_margin - *o.transfer_margin) <= 1e-6);
        CHECK(contains(r.k_crit, br.id));
        ++special;
      }
    }
  }
  CHECK(special > 20);
}

TEST_CASE("candidate order does not change the screening") {
  std::mt19937_64 rng(8);
  const Network net = testing::random_feasible_network(rng, {.buses = 10, .branches = 16});
  const auto fs = build_flow_state(net, net.injections());
  std::vector<BranchId> ids;
  for (const auto& br : net.branches()) ids.push_back(br.id);
  const auto a = screen_all(fs, ids);
  std::shuffle(ids.begin(), ids.end(), rng);
  const auto b = screen_all(fs, ids);
  CHECK(a.results == b.results);
}

TEST_CASE("raising every rating never creates a special asset") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 30; ++trial) {
    const Network net = testing::random_feasible_network(rng, {.buses = 8, .branches = 12});
    std::vector<Branch> raised = net.branches();
    for (auto& br : raised) br.rating += 25.0;
    const Network up = ingest(net.mva_base(), net.buses(), raised, net.generators(), net.loads());
    for (const auto& br : net.branches()) {
      const bool before = brute_force_cutset_oracle(net, net.injections(), br.id).is_special;
      const bool after = brute_force_cutset_oracle(up, up.injections(), br.id).is_special;
      if (!before) CHECK_FALSE(after);
    }
  }
}

TEST_CASE("SA: shortlist after an outage matches a full rescreen") {
  std::mt19937_64 rng(2718);
  int steps = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const Network net = testing::random_feasible_network(rng, {.buses = 9, .branches = 15});
    const auto fs = build_flow_state(net, net.injections());
    const auto prev = screen_all(fs);
    for (const auto& br : net.branches()) {
      OutageUpdate up{fs, {}};
      try {
        up = update_after_outage(fs, br.id);
      } catch (const InfeasibleFlowError&) {
        continue;
      }
      const auto shortlist = shortlist_after_outage(prev, br.id, up.touched);
      for (const auto& [id, r] : prev.results)
        if (r.is_special && id != br.id) CHECK(contains(shortlist, id));
      check_same_special(rescreen(up.state, prev, shortlist), screen_all(up.state));
      ++steps;
    }
  }
  CHECK(steps > 200);
}

TEST_CASE("M-SA: shortlist after a redispatch matches a full rescreen") {
  std::mt19937_64 rng(1618);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int steps = 0;
  for (int trial = 0; trial < 120; ++trial) {
    const Network net = testing::random_feasible_network(rng, {.buses = 9, .branches = 14});
    const auto fs = build_flow_state(net, net.injections());
    const auto prev = screen_all(fs);
    CHECK(shortlist_after_redispatch(prev, {}).size() == prev.special().size());
    std::vector<double> change(net.bus_count(), 0.0);
    const auto& g = net.generators()[static_cast<std::size_t>(unit(rng) * net.generators().size())];
    const auto& ld = net.loads()[static_cast<std::size_t>(unit(rng) * net.loads().size())];
    const double amount = std::min(g.output, ld.demand) * unit(rng);
    change[static_cast<std::size_t>(g.bus)] -= amount;
    change[static_cast<std::size_t>(ld.bus)] += amount;
    RedispatchUpdate up{fs, {}};
    try {
      up = update_after_redispatch(fs, InjectionDelta::from_changes(change));
    } catch (const InfeasibleFlowError&) {
      continue;
    }
    const auto shortlist = shortlist_after_redispatch(prev, up.touched);
    check_same_special(rescreen(up.state, prev, shortlist), screen_all(up.state));
    ++steps;
  }
  CHECK(steps > 60);
}

TEST_CASE("M-SA skips branches whose reroute paths were not touched") {
  // Two independent loops joined at bus 1; a redispatch inside the right loop
  // cannot affect the left loop's reroute paths.
  const Network net = parse_case(R"({
    "buses": [{"id": 1}, {"id": 2}, {"id": 3}, {"id": 4}, {"id": 5}],
    "branches": [{"name": "a", "from": 1, "to": 2, "susceptance": 1, "rating": 100},
                 {"name": "b", "from": 2, "to": 3, "susceptance": 1, "rating": 100},
                 {"name": "c", "from": 1, "to": 3, "susceptance": 1, "rating": 100},
                 {"name": "d", "from": 1, "to": 4, "susceptance": 1, "rating": 100},
                 {"name": "e", "from": 4, "to": 5, "susceptance": 1, "rating": 100},
                 {"name": "f", "from": 1, "to": 5, "susceptance": 1, "rating": 100}],
    "generators": [{"bus": 1, "p": 60, "p_max": 200}, {"bus": 4, "p": 0, "p_max": 200}],
    "loads": [{"bus": 3, "p": 30}, {"bus": 5, "p": 30}]
  })",
                                 CaseFormat::NativeJson);
  const auto fs = build_flow_state(net, net.injections());
  const auto prev = screen_all(fs);
  std::vector<double> change(net.bus_count(), 0.0);
  change[0] = -10.0;
  change[3] = 10.0;
  const auto up = update_after_redispatch(fs, InjectionDelta::from_changes(change));
  const auto shortlist = shortlist_after_redispatch(prev, up.touched);
  CHECK_FALSE(contains(shortlist, *net.find_branch("c")));
  CHECK(contains(shortlist, *net.find_branch("d")));
}
