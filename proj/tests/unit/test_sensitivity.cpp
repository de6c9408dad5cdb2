#include <doctest.h>

#include <cmath>
#include <random>

#include "gridcut/case_io.hpp"
#include "gridcut/sensitivity.hpp"
#include "support/oracles.hpp"
#include "support/random_cases.hpp"

using namespace gridcut;

namespace {

Network two_bus() {
  return parse_case(R"({
    "buses": [{"id": 1}, {"id": 2}],
    "branches": [{"from": 1, "to": 2, "susceptance": 1, "rating": 150}],
    "generators": [{"bus": 1, "p": 100, "p_max": 200}],
    "loads": [{"bus": 2, "p": 100}]
  })",
                    CaseFormat::NativeJson);
}

Network parallel_pair(double load = 60.0) {
  return parse_case(R"({
    "buses": [{"id": 1}, {"id": 2}],
    "branches": [{"from": 1, "to": 2, "susceptance": 4, "rating": 50},
                 {"from": 1, "to": 2, "susceptance": 4, "rating": 50}],
    "generators": [{"bus": 1, "p": )" + std::to_string(load) + R"(, "p_max": 200}],
    "loads": [{"bus": 2, "p": )" + std::to_string(load) + R"(}]
  })",
                    CaseFormat::NativeJson);
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double w = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) w = std::max(w, std::abs(a[i] - b[i]));
  return w;
}

}  // namespace

TEST_CASE("DC power flow on trivial cases") {
  const Network net = two_bus();
  const auto f = dc_power_flow(net, net.injections());
  CHECK(f[0] == doctest::Approx(100.0).epsilon(1e-12));
  const std::vector<double> zero(2, 0.0);
  CHECK(dc_power_flow(net, zero)[0] == 0.0);
  CHECK_THROWS_AS(dc_power_flow(apply_outage(net, 0), net.injections()), IslandedNetworkError);
}

TEST_CASE("PTDF reference column and two-bus orientation") {
  const Network net = two_bus();
  const auto ptdf = compute_ptdf(net);
  CHECK(ptdf.reference_bus == 0);
  CHECK(ptdf(0, 0) == 0.0);
  // Injection at bus 2 withdrawn at the reference flows 2 -> 1, against the branch orientation.
  CHECK(ptdf(0, 1) == doctest::Approx(-1.0));
  const auto other = compute_ptdf(net.with_reference_bus(1));
  CHECK(other(0, 0) == doctest::Approx(1.0));
  CHECK(other(0, 1) == 0.0);
}

TEST_CASE("parallel pair: LODF of +1 and full transfer") {
  const Network net = parallel_pair(100.0);
  const auto ptdf = compute_ptdf(net);
  const auto lodf = compute_lodf(net, ptdf);
  CHECK(lodf(0, 0) == -1.0);
  CHECK(lodf(1, 0) == doctest::Approx(1.0));
  CHECK(lodf.undefined_outages.empty());
  const auto flows = dc_power_flow(net, net.injections());
  CHECK(flows[0] == doctest::Approx(50.0));
  const auto post = post_contingency_flows(flows, lodf, 0);
  CHECK(post[0] == 0.0);
  CHECK(post[1] == doctest::Approx(100.0));
  const std::vector<double> zero(2, 0.0);
  CHECK(post_contingency_flows(zero, lodf, 1) == zero);
}

TEST_CASE("bridges are the islanding outages") {
  const Network net = two_bus();
  const auto lodf = compute_lodf(net, compute_ptdf(net));
  REQUIRE(lodf.undefined_outages.size() == 1);
  CHECK(lodf.is_islanding(0));
  CHECK_THROWS_AS(post_contingency_flows(std::vector<double>{100.0}, lodf, 0), IslandedNetworkError);
  CHECK_FALSE(find_bridges(parallel_pair())[0]);
}

TEST_CASE("PTDF and LODF match independent DC re-solves on random cases") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  double worst_ptdf = 0.0, worst_lodf = 0.0, worst_balance = 0.0;
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 4 + trial % 12;
    const Network net = testing::random_network(rng, {.buses = n, .branches = n + 4 + trial % 6});
    const auto inj = net.injections();
    const auto ptdf = compute_ptdf(net);
    const auto lodf = compute_lodf(net, ptdf);
    const auto base = dc_power_flow(net, inj);
    worst_balance = std::max(worst_balance, nodal_balance_residual(net, base, inj));
    CHECK(max_abs_diff(base, testing::oracle_dc_flows(net, inj, net.reference_bus())) < 1e-8);

    std::vector<double> delta(net.bus_count());
    double sum = 0.0;
    for (auto& d : delta) sum += (d = 50.0 * unit(rng));
    delta[0] -= sum;
    std::vector<double> shifted = inj;
    for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += delta[i];
    const auto predicted = flow_change(ptdf, delta);
    const auto resolved = testing::oracle_dc_flows(net, shifted, net.reference_bus());
    for (std::size_t l = 0; l < base.size(); ++l)
      worst_ptdf = std::max(worst_ptdf, std::abs(base[l] + predicted[l] - resolved[l]));

    for (const auto& k : net.branches()) {
      if (lodf.is_islanding(k.id)) continue;
      const Network out = apply_outage(net, k.id);
      const auto post = post_contingency_flows(base, lodf, k.id);
      const auto ref = testing::oracle_dc_flows(out, inj, net.reference_bus());
      worst_lodf = std::max(worst_lodf, max_abs_diff(post, ref));
      worst_balance = std::max(worst_balance, nodal_balance_residual(out, post, inj));
    }
  }
  CHECK(worst_ptdf < 1e-8);
  CHECK(worst_lodf < 1e-8);
  CHECK(worst_balance < 1e-6);
}

TEST_CASE("PTDF entries lie in [-1, 1] and the reference column is zero") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Network net = testing::random_network(rng, {.buses = 10, .branches = 16});
    const auto ptdf = compute_ptdf(net);
    CHECK(ptdf.values.col(net.reference_bus()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(ptdf.values.cwiseAbs().maxCoeff() <= 1.0 + 1e-9);
  }
}

TEST_CASE("post-contingency flows are linear in the base flows") {
  std::mt19937_64 rng(11);
  const Network net = testing::random_network(rng, {.buses = 10, .branches = 16});
  const auto lodf = compute_lodf(net, compute_ptdf(net));
  const auto base = dc_power_flow(net, net.injections());
  std::vector<double> scaled = base;
  for (auto& f : scaled) f *= 2.5;
  for (const auto& k : net.branches()) {
    if (lodf.is_islanding(k.id)) continue;
    const auto a = post_contingency_flows(base, lodf, k.id);
    const auto b = post_contingency_flows(scaled, lodf, k.id);
    for (std::size_t l = 0; l < a.size(); ++l) CHECK(b[l] == doctest::Approx(2.5 * a[l]).epsilon(1e-12));
  }
}

TEST_CASE("sparsify rounds small entries only") {
  const Network net = parallel_pair();
  auto ptdf = compute_ptdf(net);
  ptdf.values(0, 1) = 0.015;
  const auto s = sparsify(ptdf, 0.02);
  CHECK(s.values(0, 1) == 0.0);
  CHECK(s.sparsify_threshold == 0.02);
}

TEST_CASE("island-wise power flow balances each island") {
  const Network net = parse_case(R"({
    "buses": [{"id": 1}, {"id": 2}, {"id": 3}, {"id": 4}],
    "branches": [{"from": 1, "to": 2, "susceptance": 1, "rating": 150},
                 {"from": 3, "to": 4, "susceptance": 1, "rating": 150}],
    "generators": [{"bus": 1, "p": 40, "p_max": 200}, {"bus": 3, "p": 70, "p_max": 200}],
    "loads": [{"bus": 2, "p": 40}, {"bus": 4, "p": 70}]
  })",
                                 CaseFormat::NativeJson);
  const auto f = dc_power_flow_islands(net, net.injections());
  CHECK(f[0] == doctest::Approx(40.0));
  CHECK(f[1] == doctest::Approx(70.0));
}
