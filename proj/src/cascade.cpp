#include "gridcut/cascade.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <thread>

namespace gridcut {

namespace {

constexpr double kTripTolerance = 1e-6;  // MW above rating before a branch trips

bool overloaded(double flow, double rating) { return std::abs(flow) > rating + kTripTolerance; }

struct Dispatch {
  std::vector<double> gen;
  std::vector<double> load;
  std::vector<char> off;  // generators tripped for surplus
};

/// Outputs within [lo, hi] following alpha * weight, summing to `target`.
void scale_to(std::vector<double>& out, const std::vector<std::size_t>& idx, const std::vector<double>& weight,
              const std::vector<double>& lo, const std::vector<double>& hi, double target) {
  auto total = [&](double alpha) {
    double s = 0.0;
    for (std::size_t i : idx) s += std::clamp(alpha * weight[i], lo[i], hi[i]);
    return s;
  };
  double a = 0.0, b = 1.0;
  while (total(b) < target && b < 1e12) b *= 2.0;
  for (int it = 0; it < 200 && b - a > 1e-15 * b; ++it) {
    const double mid = 0.5 * (a + b);
    (total(mid) < target ? a : b) = mid;
  }
  for (std::size_t i : idx) out[i] = std::clamp(b * weight[i], lo[i], hi[i]);
  // Put the last rounding error on a unit with room.
  double err = target;
  for (std::size_t i : idx) err -= out[i];
  for (std::size_t i : idx) {
    const double room = err > 0.0 ? hi[i] - out[i] : lo[i] - out[i];
    const double step = err > 0.0 ? std::min(err, room) : std::max(err, room);
    out[i] += step;
    err -= step;
    if (std::abs(err) < 1e-12) break;
  }
}

/// Rebalances every island of `net`; returns shed per island.
std::vector<double> rebalance(const Network& net, Dispatch& d, const std::vector<int>& comp, int islands) {
  const auto& gens = net.generators();
  const auto& loads = net.loads();
  std::vector<std::vector<std::size_t>> g_in(static_cast<std::size_t>(islands)), l_in(static_cast<std::size_t>(islands));
  for (std::size_t g = 0; g < gens.size(); ++g) g_in[static_cast<std::size_t>(comp[static_cast<std::size_t>(gens[g].bus)])].push_back(g);
  for (std::size_t j = 0; j < loads.size(); ++j) l_in[static_cast<std::size_t>(comp[static_cast<std::size_t>(loads[j].bus)])].push_back(j);

  std::vector<double> lo(gens.size()), hi(gens.size()), weight(gens.size());
  for (std::size_t g = 0; g < gens.size(); ++g) {
    lo[g] = gens[g].p_min;
    hi[g] = gens[g].p_max;
  }
  std::vector<double> shed(static_cast<std::size_t>(islands), 0.0);
  for (int c = 0; c < islands; ++c) {
    auto& gi = g_in[static_cast<std::size_t>(c)];
    const auto& li = l_in[static_cast<std::size_t>(c)];
    double demand = 0.0, output = 0.0;
    for (std::size_t j : li) demand += d.load[j];
    std::erase_if(gi, [&](std::size_t g) { return d.off[g] != 0; });
    double cap = 0.0, floor = 0.0;
    for (std::size_t g : gi) {
      output += d.gen[g];
      cap += hi[g];
      floor += lo[g];
    }
    if (std::abs(output - demand) <= kBalanceTolerance * 1e-3) continue;
    if (cap < demand) {
      const double keep = demand > 0.0 ? cap / demand : 0.0;
      for (std::size_t j : li) {
        shed[static_cast<std::size_t>(c)] += d.load[j] * (1.0 - keep);
        d.load[j] *= keep;
      }
      for (std::size_t g : gi) d.gen[g] = hi[g];
      continue;
    }
    if (floor > demand) {
      std::sort(gi.begin(), gi.end());
      std::vector<std::size_t> running = gi;
      while (floor > demand && !running.empty()) {
        const std::size_t g = running.front();
        running.erase(running.begin());
        floor -= lo[g];
        d.gen[g] = 0.0;
        d.off[g] = 1;
      }
      gi = running;
    }
    for (std::size_t g : gi) weight[g] = d.gen[g];
    double wsum = 0.0;
    for (std::size_t g : gi) wsum += weight[g];
    if (wsum <= 0.0)
      for (std::size_t g : gi) weight[g] = hi[g];
    scale_to(d.gen, gi, weight, lo, hi, demand);
  }
  return shed;
}

std::vector<double> bus_injections(const Network& net, const Dispatch& d) {
  std::vector<double> inj(net.bus_count(), 0.0);
  for (std::size_t g = 0; g < d.gen.size(); ++g) inj[static_cast<std::size_t>(net.generators()[g].bus)] += d.gen[g];
  for (std::size_t j = 0; j < d.load.size(); ++j) inj[static_cast<std::size_t>(net.loads()[j].bus)] -= d.load[j];
  return inj;
}

template <class F>
auto run_parallel(std::size_t n, unsigned threads, F&& job) {
  using R = decltype(job(std::size_t{0}));
  std::vector<R> out(n);
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = job(i);
    return out;
  }
  std::vector<std::future<void>> workers;
  for (unsigned t = 0; t < threads; ++t)
    workers.push_back(std::async(std::launch::async, [&, t] {
      for (std::size_t i = t; i < n; i += threads) out[i] = job(i);
    }));
  for (auto& w : workers) w.get();
  return out;
}

}  // namespace

CascadeResult simulate_cascade(const Network& base, BranchId initiating) {
  CascadeResult res;
  res.initiating = initiating;
  Network net = apply_outage(base, initiating);
  Dispatch d;
  for (const auto& g : base.generators()) d.gen.push_back(g.output);
  for (const auto& l : base.loads()) d.load.push_back(l.demand);
  d.off.assign(d.gen.size(), 0);
  const double demand0 = base.total_demand();

  std::vector<BranchId> tripped{initiating};
  for (;;) {
    int islands = 0;
    const auto comp = connected_components(net, &islands);
    CascadeRound round;
    round.tripped = tripped;
    round.islands = islands;
    round.island_shed = rebalance(net, d, comp, islands);
    res.rounds.push_back(std::move(round));

    const auto flows = dc_power_flow_islands(net, bus_injections(net, d));
    tripped.clear();
    for (const auto& br : net.branches())
      if (br.in_service && overloaded(flows[static_cast<std::size_t>(br.id)], br.rating)) tripped.push_back(br.id);
    if (tripped.empty()) break;
    res.dependent_trips += static_cast<int>(tripped.size());
    for (BranchId l : tripped) net = net.with_outage(l);
  }
  double served = 0.0;
  for (double x : d.load) served += x;
  res.final_unserved = std::max(0.0, demand0 - served);
  res.is_trigger = res.final_unserved > 1e-3 || res.dependent_trips > 0;
  return res;
}

std::vector<CascadeResult> simulate_cascades(const Network& net, std::span<const BranchId> contingencies,
                                             unsigned threads) {
  return run_parallel(contingencies.size(), threads, [&](std::size_t i) { return simulate_cascade(net, contingencies[i]); });
}

std::vector<BranchId> find_cascade_triggers(const Network& net, std::span<const BranchId> contingencies,
                                            const LodfMatrix* lodf, unsigned threads, TriggerRule rule) {
  std::vector<double> flows;
  if (lodf) flows = dc_power_flow(net, net.injections());
  const auto hit = run_parallel(contingencies.size(), threads, [&](std::size_t i) -> char {
    const BranchId k = contingencies[i];
    if (lodf && !lodf->is_islanding(k)) {
      const auto post = post_contingency_flows(flows, *lodf, k);
      bool any = false;
      for (const auto& br : net.branches())
        if (br.in_service && br.id != k && overloaded(post[static_cast<std::size_t>(br.id)], br.rating)) {
          any = true;
          break;
        }
      if (!any) return 0;
    }
    return simulate_cascade(net, k).triggers(rule) ? 1 : 0;
  });
  std::vector<BranchId> out;
  for (std::size_t i = 0; i < contingencies.size(); ++i)
    if (hit[i]) out.push_back(contingencies[i]);
  return out;
}

}  // namespace gridcut
