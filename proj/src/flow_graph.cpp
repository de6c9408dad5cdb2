#include "gridcut/flow_graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>

namespace gridcut {

std::shared_ptr<const FlowTopology> FlowTopology::from_network(const Network& net) {
  auto topo = std::make_shared<FlowTopology>();
  topo->bus_count = net.bus_count();
  topo->adjacency.resize(net.bus_count());
  for (const auto& br : net.branches()) {
    topo->from.push_back(br.from);
    topo->to.push_back(br.to);
    topo->rating.push_back(br.rating);
    topo->in_service.push_back(br.in_service);
    if (!br.in_service) continue;
    topo->adjacency[static_cast<std::size_t>(br.from)].emplace_back(br.to, br.id);
    topo->adjacency[static_cast<std::size_t>(br.to)].emplace_back(br.from, br.id);
  }
  for (auto& adj : topo->adjacency) std::sort(adj.begin(), adj.end());
  return topo;
}

std::shared_ptr<const FlowTopology> FlowTopology::without(BranchId id) const {
  auto topo = std::make_shared<FlowTopology>(*this);
  topo->in_service[static_cast<std::size_t>(id)] = false;
  for (BusId b : {from[static_cast<std::size_t>(id)], to[static_cast<std::size_t>(id)]}) {
    auto& adj = topo->adjacency[static_cast<std::size_t>(b)];
    std::erase_if(adj, [id](const auto& e) { return e.second == id; });
  }
  return topo;
}

FlowState::FlowState(std::shared_ptr<const FlowTopology> topology, std::vector<double> flows,
                     std::vector<double> injections)
    : topology_(std::move(topology)), flows_(std::move(flows)), injections_(std::move(injections)) {
  if (flows_.size() != topology_->branch_count()) throw Error("flow vector size does not match branch count");
  if (injections_.size() != topology_->bus_count) throw Error("injection vector size does not match bus count");
}

double FlowState::worst_rating_excess() const {
  double worst = 0.0;
  for (std::size_t l = 0; l < flows_.size(); ++l) {
    if (!topology_->in_service[l]) continue;
    worst = std::max(worst, std::abs(flows_[l]) - topology_->rating[l]);
  }
  return worst;
}

double FlowState::worst_nodal_residual() const {
  std::vector<double> out(bus_count(), 0.0);
  for (std::size_t l = 0; l < flows_.size(); ++l) {
    if (!topology_->in_service[l]) continue;
    out[static_cast<std::size_t>(topology_->from[l])] += flows_[l];
    out[static_cast<std::size_t>(topology_->to[l])] -= flows_[l];
  }
  double worst = 0.0;
  for (std::size_t b = 0; b < out.size(); ++b) worst = std::max(worst, std::abs(injections_[b] - out[b]));
  return worst;
}

namespace detail {

double residual(const FlowTopology& topo, std::span<const double> flows, BranchId l, bool forward) {
  const auto i = static_cast<std::size_t>(l);
  return forward ? topo.rating[i] - flows[i] : topo.rating[i] + flows[i];
}

std::optional<AugmentingPath> bfs_path(const FlowTopology& topo, std::span<const double> flows,
                                       std::span<const BusId> sources, const std::vector<bool>& is_target,
                                       BranchId excluded) {
  const std::size_t n = topo.bus_count;
  std::vector<BranchId> via(n, -1);
  std::vector<BusId> prev(n, -1);
  std::vector<bool> seen(n, false);
  std::deque<BusId> queue;
  for (BusId s : sources) {
    if (seen[static_cast<std::size_t>(s)]) continue;
    seen[static_cast<std::size_t>(s)] = true;
    queue.push_back(s);
  }
  BusId hit = -1;
  while (!queue.empty() && hit < 0) {
    const BusId u = queue.front();
    queue.pop_front();
    for (const auto& [v, l] : topo.adjacency[static_cast<std::size_t>(u)]) {
      const auto vi = static_cast<std::size_t>(v);
      if (l == excluded || seen[vi]) continue;
      const bool forward = topo.from[static_cast<std::size_t>(l)] == u;
      if (residual(topo, flows, l, forward) <= kResidualFloor) continue;
      seen[vi] = true;
      via[vi] = l;
      prev[vi] = u;
      if (is_target[vi]) {
        hit = v;
        break;
      }
      queue.push_back(v);
    }
  }
  if (hit < 0) return std::nullopt;

  AugmentingPath path;
  path.bottleneck = std::numeric_limits<double>::infinity();
  for (BusId v = hit; prev[static_cast<std::size_t>(v)] >= 0; v = prev[static_cast<std::size_t>(v)]) {
    const BranchId l = via[static_cast<std::size_t>(v)];
    const bool forward = topo.to[static_cast<std::size_t>(l)] == v && topo.from[static_cast<std::size_t>(l)] == prev[static_cast<std::size_t>(v)];
    path.steps.push_back({l, forward});
    path.buses.push_back(v);
    path.bottleneck = std::min(path.bottleneck, residual(topo, flows, l, forward));
  }
  BusId first = hit;
  while (prev[static_cast<std::size_t>(first)] >= 0) first = prev[static_cast<std::size_t>(first)];
  path.buses.push_back(first);
  std::reverse(path.steps.begin(), path.steps.end());
  std::reverse(path.buses.begin(), path.buses.end());
  return path;
}

std::vector<bool> residual_reachable(const FlowTopology& topo, std::span<const double> flows,
                                     std::span<const BusId> sources, BranchId excluded) {
  std::vector<bool> seen(topo.bus_count, false);
  std::deque<BusId> queue;
  for (BusId s : sources) {
    if (seen[static_cast<std::size_t>(s)]) continue;
    seen[static_cast<std::size_t>(s)] = true;
    queue.push_back(s);
  }
  while (!queue.empty()) {
    const BusId u = queue.front();
    queue.pop_front();
    for (const auto& [v, l] : topo.adjacency[static_cast<std::size_t>(u)]) {
      if (l == excluded || seen[static_cast<std::size_t>(v)]) continue;
      const bool forward = topo.from[static_cast<std::size_t>(l)] == u;
      if (residual(topo, flows, l, forward) <= kResidualFloor) continue;
      seen[static_cast<std::size_t>(v)] = true;
      queue.push_back(v);
    }
  }
  return seen;
}

void push(std::vector<double>& flows, const AugmentingPath& path, double amount) {
  for (const auto& step : path.steps) flows[static_cast<std::size_t>(step.branch)] += step.forward ? amount : -amount;
}

}  // namespace detail

namespace {

// Cut around `side`: injections it must export against the ratings of the
// in-service branches leaving it.
SaturatedCut certify(const FlowTopology& topo, std::span<const double> inj, const std::vector<bool>& side) {
  SaturatedCut cut;
  for (std::size_t b = 0; b < side.size(); ++b) {
    if (!side[b]) continue;
    cut.sending_side.push_back(static_cast<BusId>(b));
    cut.transfer += inj[b];
  }
  for (std::size_t l = 0; l < topo.branch_count(); ++l) {
    if (!topo.in_service[l]) continue;
    if (side[static_cast<std::size_t>(topo.from[l])] == side[static_cast<std::size_t>(topo.to[l])]) continue;
    cut.branches.push_back(static_cast<BranchId>(l));
    cut.capacity += topo.rating[l];
  }
  return cut;
}

std::string describe(const SaturatedCut& cut) {
  return "cut of " + std::to_string(cut.branches.size()) + " branches must carry " + std::to_string(cut.transfer) +
         " MW against " + std::to_string(cut.capacity) + " MW of ratings";
}

std::vector<BranchId> sorted(std::set<BranchId> s) { return {s.begin(), s.end()}; }

}  // namespace

FlowState build_flow_state(const Network& net, std::span<const double> inj) {
  if (inj.size() != net.bus_count()) throw Error("injection vector size does not match bus count");
  auto topo = FlowTopology::from_network(net);
  const std::size_t n = net.bus_count();
  std::vector<double> supply(n, 0.0), demand(n, 0.0);
  for (std::size_t b = 0; b < n; ++b) {
    if (inj[b] > 0.0) supply[b] = inj[b];
    if (inj[b] < 0.0) demand[b] = -inj[b];
  }
  std::vector<double> flows(net.branch_count(), 0.0);

  std::vector<BusId> sources;
  std::vector<bool> is_sink(n, false);
  for (;;) {
    sources.clear();
    for (std::size_t b = 0; b < n; ++b) {
      if (supply[b] > kResidualFloor) sources.push_back(static_cast<BusId>(b));
      is_sink[b] = demand[b] > kResidualFloor;
    }
    if (sources.empty()) break;
    auto path = detail::bfs_path(*topo, flows, sources, is_sink, -1);
    if (!path) break;
    const auto s = static_cast<std::size_t>(path->buses.front());
    const auto t = static_cast<std::size_t>(path->buses.back());
    const double amount = std::min({path->bottleneck, supply[s], demand[t]});
    detail::push(flows, *path, amount);
    supply[s] -= amount;
    demand[t] -= amount;
  }

  const double unrouted = std::accumulate(demand.begin(), demand.end(), 0.0);
  if (unrouted > kFlowTolerance) {
    std::vector<BusId> remaining;
    for (std::size_t b = 0; b < n; ++b)
      if (supply[b] > kResidualFloor) remaining.push_back(static_cast<BusId>(b));
    auto cut = certify(*topo, inj, detail::residual_reachable(*topo, flows, remaining, -1));
    throw InfeasibleFlowError("demand cannot be routed within ratings: " + describe(cut), std::move(cut));
  }
  return FlowState(std::move(topo), std::move(flows), std::vector<double>(inj.begin(), inj.end()));
}

CutTransfer cut_transfer(const FlowState& fs, const std::vector<bool>& side_a) {
  const auto& topo = fs.topology();
  CutTransfer out;
  for (std::size_t l = 0; l < topo.branch_count(); ++l) {
    if (!topo.in_service[l]) continue;
    const bool a_from = side_a[static_cast<std::size_t>(topo.from[l])];
    const bool a_to = side_a[static_cast<std::size_t>(topo.to[l])];
    if (a_from == a_to) continue;
    out.branches.push_back(static_cast<BranchId>(l));
    out.capacity += topo.rating[l];
    out.transfer += a_from ? fs.flows()[l] : -fs.flows()[l];
  }
  return out;
}

std::optional<AugmentingPath> shortest_unsaturated_path(const FlowState& fs, BusId src, BusId dst) {
  if (src == dst) throw Error("path endpoints must differ");
  std::vector<bool> target(fs.bus_count(), false);
  target[static_cast<std::size_t>(dst)] = true;
  const BusId sources[] = {src};
  return detail::bfs_path(fs.topology(), fs.flows(), sources, target, -1);
}

OutageUpdate update_after_outage(const FlowState& fs, BranchId id) {
  if (id < 0 || static_cast<std::size_t>(id) >= fs.branch_count()) throw Error("unknown branch " + std::to_string(id));
  if (!fs.in_service(id)) throw Error("branch " + std::to_string(id) + " is already out of service");
  auto topo = fs.topology().without(id);
  std::vector<double> flows = fs.flows();
  const double f = flows[static_cast<std::size_t>(id)];
  flows[static_cast<std::size_t>(id)] = 0.0;
  std::set<BranchId> touched;
  double remaining = std::abs(f);
  if (remaining > kResidualFloor) {
    touched.insert(id);
    const BusId src = f > 0 ? topo->from[static_cast<std::size_t>(id)] : topo->to[static_cast<std::size_t>(id)];
    const BusId dst = f > 0 ? topo->to[static_cast<std::size_t>(id)] : topo->from[static_cast<std::size_t>(id)];
    std::vector<bool> target(topo->bus_count, false);
    target[static_cast<std::size_t>(dst)] = true;
    const BusId sources[] = {src};
    while (remaining > kResidualFloor) {
      auto path = detail::bfs_path(*topo, flows, sources, target, -1);
      if (!path) break;
      const double amount = std::min(path->bottleneck, remaining);
      detail::push(flows, *path, amount);
      remaining -= amount;
      for (const auto& step : path->steps) touched.insert(step.branch);
    }
    if (remaining > kFlowTolerance) {
      auto cut = certify(*topo, fs.injections(), detail::residual_reachable(*topo, flows, sources, -1));
      throw InfeasibleFlowError("outage of branch " + std::to_string(id) + " cannot be rerouted: " + describe(cut),
                                std::move(cut));
    }
  }
  return {FlowState(std::move(topo), std::move(flows), fs.injections()), sorted(std::move(touched))};
}

InjectionDelta InjectionDelta::from_changes(std::span<const double> per_bus, double floor) {
  InjectionDelta d;
  for (std::size_t b = 0; b < per_bus.size(); ++b) {
    if (per_bus[b] > floor) d.increases.emplace_back(static_cast<BusId>(b), per_bus[b]);
    if (per_bus[b] < -floor) d.decreases.emplace_back(static_cast<BusId>(b), -per_bus[b]);
  }
  return d;
}

RedispatchUpdate update_after_redispatch(const FlowState& fs, const InjectionDelta& delta) {
  auto up = delta.increases;
  auto down = delta.decreases;
  double sum_up = 0.0, sum_down = 0.0;
  for (const auto& [b, a] : up) {
    if (!(a > 0.0)) throw Error("injection increases must be positive");
    sum_up += a;
  }
  for (const auto& [b, a] : down) {
    if (!(a > 0.0)) throw Error("injection decreases must be positive");
    sum_down += a;
  }
  if (std::abs(sum_up - sum_down) > kFlowTolerance) throw Error("injection delta is not balanced");
  std::sort(up.begin(), up.end());
  std::sort(down.begin(), down.end());

  std::vector<double> inj = fs.injections();
  for (const auto& [b, a] : up) inj[static_cast<std::size_t>(b)] += a;
  for (const auto& [b, a] : down) inj[static_cast<std::size_t>(b)] -= a;

  const auto& topo = fs.topology();
  std::vector<double> flows = fs.flows();
  std::set<BranchId> touched;
  std::vector<bool> target(topo.bus_count, false);
  std::size_t i = 0, j = 0;
  const auto advance = [&] {
    while (i < up.size() && up[i].second <= kResidualFloor) ++i;
    while (j < down.size() && down[j].second <= kResidualFloor) ++j;
  };
  advance();
  while (i < up.size() && j < down.size()) {
    // Current pair first; when it has no unsaturated path, any remaining
    // source/sink pair may still carry the delta.
    std::fill(target.begin(), target.end(), false);
    target[static_cast<std::size_t>(down[j].first)] = true;
    const BusId pair_src[] = {up[i].first};
    auto path = detail::bfs_path(topo, flows, pair_src, target, -1);
    if (!path) {
      std::vector<BusId> srcs;
      for (std::size_t k = i; k < up.size(); ++k)
        if (up[k].second > kResidualFloor) srcs.push_back(up[k].first);
      std::fill(target.begin(), target.end(), false);
      for (std::size_t k = j; k < down.size(); ++k)
        if (down[k].second > kResidualFloor) target[static_cast<std::size_t>(down[k].first)] = true;
      path = detail::bfs_path(topo, flows, srcs, target, -1);
      if (!path) break;
    }
    const BusId s = path->buses.front(), t = path->buses.back();
    auto& su = std::find_if(up.begin(), up.end(), [s](const auto& e) { return e.first == s; })->second;
    auto& td = std::find_if(down.begin(), down.end(), [t](const auto& e) { return e.first == t; })->second;
    const double amount = std::min({path->bottleneck, su, td});
    detail::push(flows, *path, amount);
    su -= amount;
    td -= amount;
    for (const auto& step : path->steps) touched.insert(step.branch);
    advance();
  }
  double left = 0.0;
  for (const auto& e : down) left += e.second;
  if (left > kFlowTolerance) {
    std::vector<BusId> srcs;
    for (const auto& [b, a] : up)
      if (a > kResidualFloor) srcs.push_back(b);
    auto cut = certify(topo, inj, detail::residual_reachable(topo, flows, srcs, -1));
    throw InfeasibleFlowError("redispatch cannot be absorbed by the flow graph: " + describe(cut), std::move(cut));
  }
  return {FlowState(fs.topology_ptr(), std::move(flows), std::move(inj)), sorted(std::move(touched))};
}

void write_edge_list_csv(std::ostream& out, const Network& net, const FlowState& fs) {
  out << "branch,name,from,to,flow,rating,c_ft,c_tf\n";
  for (const auto& br : net.branches()) {
    if (!fs.in_service(br.id)) continue;
    out << br.id << ',' << br.name << ',' << net.bus(br.from).name << ',' << net.bus(br.to).name << ','
        << fs.flow(br.id) << ',' << br.rating << ',' << fs.latent_ft(br.id) << ',' << fs.latent_tf(br.id) << '\n';
  }
}

}  // namespace gridcut
