#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "gridcut/case_io.hpp"
#include "gridcut/flow_graph.hpp"
#include "gridcut/sensitivity.hpp"
#include "support/oracles.hpp"
#include "support/random_cases.hpp"

using namespace gridcut;

namespace {

Network worked_case() { return load_case(GRIDCUT_DATA_DIR "/case5_worked.json"); }

std::vector<bool> side_of(const Network& net, std::initializer_list<const char*> names) {
  std::vector<bool> side(net.bus_count(), false);
  for (const char* name : names) side[static_cast<std::size_t>(*net.find_bus(name))] = true;
  return side;
}

void check_invariants(const FlowState& fs) {
  CHECK(fs.worst_rating_excess() <= 1e-6);
  CHECK(fs.worst_nodal_residual() <= 1e-6);
  for (std::size_t l = 0; l < fs.branch_count(); ++l) {
    if (!fs.in_service(static_cast<BranchId>(l))) continue;
    CHECK(fs.latent_ft(static_cast<BranchId>(l)) >= -1e-6);
    CHECK(fs.latent_tf(static_cast<BranchId>(l)) >= -1e-6);
  }
}

// Smallest R_S - sum(inj, S) over bus sets S holding `src` but not `dst`.
double hand_min_cut_margin(const Network& net, const std::vector<double>& inj, BusId src, BusId dst) {
  double best = 1e300;
  const std::size_t n = net.bus_count();
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    if (!((mask >> src) & 1u) || ((mask >> dst) & 1u)) continue;
    double r = 0.0, f = 0.0;
    for (std::size_t b = 0; b < n; ++b)
      if ((mask >> b) & 1u) f += inj[b];
    for (const auto& br : net.branches())
      if (br.in_service && ((mask >> br.from) & 1u) != ((mask >> br.to) & 1u)) r += br.rating;
    best = std::min(best, r - f);
  }
  return best;
}

}  // namespace

TEST_CASE("worked case: feasible flow and the K1 transfer") {
  const Network net = worked_case();
  const auto fs = build_flow_state(net, net.injections());
  check_invariants(fs);
  const auto area1 = side_of(net, {"4", "5"});
  const auto nfa = cut_transfer(fs, area1);
  CHECK(nfa.transfer == doctest::Approx(360.0).epsilon(1e-12));
  CHECK(nfa.capacity == doctest::Approx(580.0).epsilon(1e-12));
  CHECK_FALSE(nfa.saturated());
  // Same partition on the DC flows gives the same transfer.
  const auto dc = dc_power_flow(net, net.injections());
  const FlowState dc_state(FlowTopology::from_network(net), dc, net.injections());
  CHECK(cut_transfer(dc_state, area1).transfer == doctest::Approx(360.0).epsilon(1e-12));
}

TEST_CASE("single generator, load and branch") {
  const Network net = parse_case(R"({
    "buses": [{"id": 1}, {"id": 2}],
    "branches": [{"from": 2, "to": 1, "susceptance": 1, "rating": 150}],
    "generators": [{"bus": 1, "p": 80, "p_max": 200}],
    "loads": [{"bus": 2, "p": 80}]
  })",
                                 CaseFormat::NativeJson);
  const auto fs = build_flow_state(net, net.injections());
  CHECK(fs.flow(0) == doctest::Approx(-80.0));
}

TEST_CASE("unroutable demand carries the saturated cut") {
  const Network net = parse_case(R"({
    "buses": [{"id": 1}, {"id": 2}, {"id": 3}, {"id": 4}],
    "branches": [{"from": 1, "to": 2, "susceptance": 1, "rating": 60},
                 {"from": 1, "to": 3, "susceptance": 1, "rating": 50},
                 {"from": 2, "to": 4, "susceptance": 1, "rating": 100},
                 {"from": 3, "to": 4, "susceptance": 1, "rating": 100},
                 {"from": 2, "to": 3, "susceptance": 1, "rating": 30}],
    "generators": [{"bus": 1, "p": 200, "p_max": 300}],
    "loads": [{"bus": 4, "p": 200}]
  })",
                                 CaseFormat::NativeJson);
  try {
    build_flow_state(net, net.injections());
    FAIL("expected infeasible flow");
  } catch (const InfeasibleFlowError& e) {
    const auto& cut = e.cut();
    CHECK(cut.transfer - cut.capacity ==
          doctest::Approx(-hand_min_cut_margin(net, net.injections(), 0, 3)).epsilon(1e-12));
    CHECK(cut.capacity == doctest::Approx(110.0));
    CHECK(cut.branches == std::vector<BranchId>{0, 1});
    CHECK(cut.sending_side == std::vector<BusId>{0});
  }
}

TEST_CASE("shortest unsaturated paths") {
  const Network net = parse_case(R"({
    "buses": [{"id": 1}, {"id": 2}, {"id": 3}],
    "branches": [{"from": 1, "to": 2, "susceptance": 1, "rating": 100},
                 {"from": 1, "to": 3, "susceptance": 1, "rating": 100},
                 {"from": 3, "to": 2, "susceptance": 1, "rating": 100}],
    "generators": [{"bus": 1, "p": 100, "p_max": 200}],
    "loads": [{"bus": 2, "p": 100}]
  })",
                                 CaseFormat::NativeJson);
  const auto fs = build_flow_state(net, net.injections());
  // The direct branch takes everything and is now saturated 1 -> 2.
  CHECK(fs.flow(0) == doctest::Approx(100.0));
  auto back = shortest_unsaturated_path(fs, 1, 0);
  REQUIRE(back);
  CHECK(back->steps.size() == 1);
  CHECK(back->bottleneck == doctest::Approx(200.0));
  auto detour = shortest_unsaturated_path(fs, 0, 1);
  REQUIRE(detour);
  CHECK(detour->steps.size() == 2);
  CHECK(detour->buses == std::vector<BusId>{0, 2, 1});
  CHECK(detour->bottleneck == doctest::Approx(100.0));

  const FlowState jammed(fs.topology_ptr(), {100.0, 100.0, 0.0}, {200.0, -100.0, -100.0});
  CHECK_FALSE(shortest_unsaturated_path(jammed, 0, 1).has_value());
}

TEST_CASE("UPS on the worked case: losing e4 saturates K1 by 30 MW") {
  const Network net = worked_case();
  const auto fs = build_flow_state(net, net.injections());
  const BranchId e4 = *net.find_branch("e4");
  try {
    update_after_outage(fs, e4);
    FAIL("expected reroute failure");
  } catch (const InfeasibleFlowError& e) {
    CHECK(e.cut().transfer - e.cut().capacity == doctest::Approx(30.0).epsilon(1e-12));
    const auto& b = e.cut().branches;
    CHECK(std::find(b.begin(), b.end(), *net.find_branch("e6")) != b.end());
    CHECK(std::find(b.begin(), b.end(), *net.find_branch("e7")) != b.end());
  }
}

TEST_CASE("UPS removes a zero-flow branch without rerouting") {
  const Network net = worked_case();
  const auto topo = FlowTopology::from_network(net);
  std::vector<double> flows(net.branch_count(), 0.0);
  const FlowState fs(topo, flows, std::vector<double>(net.bus_count(), 0.0));
  const auto up = update_after_outage(fs, 0);
  CHECK(up.touched.empty());
  CHECK_FALSE(up.state.in_service(0));
  CHECK_THROWS_AS(update_after_outage(up.state, 0), Error);
}

TEST_CASE("UPS matches a rebuild across every cut") {
  std::mt19937_64 rng(99);
  int compared = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const Network net = testing::random_feasible_network(rng, {.buses = 8, .branches = 13});
    const auto fs = build_flow_state(net, net.injections());
    for (const auto& br : net.branches()) {
      const Network out = apply_outage(net, br.id);
      if (validate(out).components > 1) continue;
      std::optional<FlowState> rebuilt;
      try {
        rebuilt = build_flow_state(out, out.injections());
      } catch (const InfeasibleFlowError&) {
      }
      try {
        const auto up = update_after_outage(fs, br.id);
        REQUIRE(rebuilt);
        check_invariants(up.state);
        CHECK(testing::worst_cut_transfer_gap(out, up.state.flows(), rebuilt->flows()) <= 1e-6);
        ++compared;
      } catch (const InfeasibleFlowError& e) {
        CHECK_FALSE(rebuilt);
        CHECK(e.cut().transfer > e.cut().capacity);
      }
    }
  }
  CHECK(compared > 100);
}

TEST_CASE("M-UPS: trivial deltas") {
  const Network net = worked_case();
  const auto fs = build_flow_state(net, net.injections());
  const auto same = update_after_redispatch(fs, {});
  CHECK(same.touched.empty());
  CHECK(same.state == fs);

  const Network two = parse_case(R"({
    "buses": [{"id": 1}, {"id": 2}],
    "branches": [{"from": 1, "to": 2, "susceptance": 1, "rating": 150}],
    "generators": [{"bus": 1, "p": 50, "p_max": 200}],
    "loads": [{"bus": 2, "p": 50}]
  })",
                                 CaseFormat::NativeJson);
  const auto base = build_flow_state(two, two.injections());
  InjectionDelta delta;
  delta.increases = {{0, 30.0}};
  delta.decreases = {{1, 30.0}};
  const auto up = update_after_redispatch(base, delta);
  CHECK(up.touched == std::vector<BranchId>{0});
  CHECK(up.state.flow(0) == doctest::Approx(80.0));
  InjectionDelta unbalanced;
  unbalanced.increases = {{0, 30.0}};
  CHECK_THROWS_AS(update_after_redispatch(base, unbalanced), Error);
}

TEST_CASE("M-UPS matches a rebuild across every cut") {
  std::mt19937_64 rng(123);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int compared = 0;
  for (int trial = 0; trial < 80; ++trial) {
    const Network net = testing::random_feasible_network(rng, {.buses = 7 + trial % 6, .branches = 14});
    const auto fs = build_flow_state(net, net.injections());
    // Move a random share of generation between two generator buses or onto a load.
    std::vector<double> change(net.bus_count(), 0.0);
    const auto& gens = net.generators();
    const auto& a = gens[static_cast<std::size_t>(unit(rng) * gens.size())];
    const auto& loads = net.loads();
    const auto& ld = loads[static_cast<std::size_t>(unit(rng) * loads.size())];
    const double amount = std::min(a.output, ld.demand) * unit(rng);
    change[static_cast<std::size_t>(a.bus)] -= amount;
    change[static_cast<std::size_t>(ld.bus)] += amount;
    std::vector<double> inj = net.injections();
    for (std::size_t b = 0; b < inj.size(); ++b) inj[b] += change[b];
    std::optional<FlowState> rebuilt;
    try {
      rebuilt = build_flow_state(net, inj);
    } catch (const InfeasibleFlowError&) {
      continue;
    }
    const auto up = update_after_redispatch(fs, InjectionDelta::from_changes(change));
    check_invariants(up.state);
    CHECK(testing::worst_cut_transfer_gap(net, up.state.flows(), rebuilt->flows()) <= 1e-6);
    for (std::size_t l = 0; l < fs.branch_count(); ++l) {
      const bool moved = std::abs(up.state.flows()[l] - fs.flows()[l]) > 0.0;
      if (moved) CHECK(std::binary_search(up.touched.begin(), up.touched.end(), static_cast<BranchId>(l)));
    }
    ++compared;
  }
  CHECK(compared > 40);
}

TEST_CASE("flow states are deterministic and F_K is routing-invariant") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const Network net = testing::random_feasible_network(rng, {.buses = 10, .branches = 15});
    const auto a = build_flow_state(net, net.injections());
    const auto b = build_flow_state(net, net.injections());
    CHECK(a.flows() == b.flows());
    const auto dc = dc_power_flow(net, net.injections());
    CHECK(testing::worst_cut_transfer_gap(net, a.flows(), dc) <= 1e-6);
  }
}

TEST_CASE("edge-list dump") {
  const Network net = worked_case();
  const auto fs = build_flow_state(net, net.injections());
  std::ostringstream os;
  write_edge_list_csv(os, net, fs);
  const std::string csv = os.str();
  CHECK(csv.rfind("branch,name,from,to,flow,rating,c_ft,c_tf\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 8);
}
