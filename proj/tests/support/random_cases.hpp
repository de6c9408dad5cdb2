#pragma once

#include <algorithm>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include "gridcut/flow_graph.hpp"
#include "gridcut/network.hpp"

namespace gridcut::testing {

struct RandomCaseSpec {
  int buses = 8;
  int branches = 12;
  double rating_lo = 30.0;
  double rating_hi = 150.0;
  double gen_share = 0.4;  // fraction of buses with a generator
  double load_lo = 10.0;
  double load_hi = 60.0;
  bool allow_parallel = true;
};

inline Network random_network(std::mt19937_64& rng, const RandomCaseSpec& spec) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  const int n = spec.buses;

  std::vector<Bus> buses;
  for (int i = 0; i < n; ++i) buses.push_back({i, std::to_string(i + 1), BusKind::Transit});

  std::vector<Branch> branches;
  std::set<std::pair<int, int>> used;
  const auto add = [&](int a, int b) {
    Branch br;
    br.from = a;
    br.to = b;
    br.name = std::to_string(a + 1) + "-" + std::to_string(b + 1) + "#" + std::to_string(branches.size());
    br.susceptance = uniform(5.0, 25.0);
    br.rating = uniform(spec.rating_lo, spec.rating_hi);
    branches.push_back(br);
    used.insert({std::min(a, b), std::max(a, b)});
  };
  // Random spanning tree keeps the case connected.
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  for (int i = 1; i < n; ++i) {
    const int j = static_cast<int>(unit(rng) * i);
    add(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  int guard = 0;
  while (static_cast<int>(branches.size()) < spec.branches && guard++ < 1000) {
    const int a = static_cast<int>(unit(rng) * n), b = static_cast<int>(unit(rng) * n);
    if (a == b) continue;
    if (!spec.allow_parallel && used.contains({std::min(a, b), std::max(a, b)})) continue;
    add(a, b);
  }

  std::vector<Load> loads;
  std::vector<Generator> gens;
  std::vector<int> gen_buses;
  for (int i = 0; i < n; ++i) {
    if (unit(rng) < spec.gen_share) gen_buses.push_back(i);
  }
  if (gen_buses.empty()) gen_buses.push_back(static_cast<int>(unit(rng) * n));
  double demand = 0.0;
  for (int i = 0; i < n; ++i) {
    const bool has_gen = std::find(gen_buses.begin(), gen_buses.end(), i) != gen_buses.end();
    if (has_gen && unit(rng) < 0.7) continue;
    const double d = uniform(spec.load_lo, spec.load_hi);
    loads.push_back({i, d, 0.0, d, kDefaultShedCost});
    demand += d;
  }
  if (loads.empty()) {
    const int i = (gen_buses.front() + 1) % n;
    loads.push_back({i, spec.load_lo, 0.0, spec.load_lo, kDefaultShedCost});
    demand = spec.load_lo;
  }
  std::vector<double> share;
  for (std::size_t k = 0; k < gen_buses.size(); ++k) share.push_back(uniform(0.5, 1.5));
  const double total_share = std::accumulate(share.begin(), share.end(), 0.0);
  for (std::size_t k = 0; k < gen_buses.size(); ++k) {
    Generator g;
    g.bus = gen_buses[k];
    g.output = demand * share[k] / total_share;
    g.p_min = 0.0;
    g.p_max = g.output * uniform(1.3, 2.0) + 20.0;
    g.cost_a = 0.0;
    g.cost_b = uniform(10.0, 40.0);
    g.cost_c = uniform(0.005, 0.05);
    gens.push_back(g);
  }
  return ingest(100.0, std::move(buses), std::move(branches), std::move(gens), std::move(loads));
}

/// Random case whose base injections admit a flow within ratings; retries with
/// fresh draws until one does.
inline Network random_feasible_network(std::mt19937_64& rng, const RandomCaseSpec& spec) {
  for (;;) {
    Network net = random_network(rng, spec);
    try {
      build_flow_state(net, net.injections());
      return net;
    } catch (const InfeasibleFlowError&) {
    }
  }
}

}  // namespace gridcut::testing
