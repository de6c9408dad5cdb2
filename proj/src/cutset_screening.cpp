#include "gridcut/cutset_screening.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <set>

namespace gridcut {

SpecialAssetSet ScreeningState::special() const {
  SpecialAssetSet out;
  for (const auto& [id, r] : results)
    if (r.is_special) out.emplace(id, r);
  return out;
}

FtResult feasibility_test(const FlowState& fs, BranchId id) {
  if (id < 0 || static_cast<std::size_t>(id) >= fs.branch_count()) throw Error("unknown branch " + std::to_string(id));
  if (!fs.in_service(id)) throw Error("branch " + std::to_string(id) + " is out of service");
  FtResult r;
  r.branch = id;
  const double f = fs.flow(id);
  r.flow = std::abs(f);
  if (r.flow <= kSaturationTolerance) {
    r.indirect_capacity = r.flow;
    return r;
  }

  const auto& topo = fs.topology();
  const BusId src = f > 0 ? topo.from[static_cast<std::size_t>(id)] : topo.to[static_cast<std::size_t>(id)];
  const BusId dst = f > 0 ? topo.to[static_cast<std::size_t>(id)] : topo.from[static_cast<std::size_t>(id)];
  std::vector<double> flows = fs.flows();
  std::vector<bool> target(topo.bus_count, false);
  target[static_cast<std::size_t>(dst)] = true;
  const BusId sources[] = {src};
  std::set<BranchId> witness;
  double routed = 0.0;
  while (routed < r.flow) {
    auto path = detail::bfs_path(topo, flows, sources, target, id);
    if (!path) break;
    const double amount = std::min(path->bottleneck, r.flow - routed);
    detail::push(flows, *path, amount);
    routed += amount;
    for (const auto& step : path->steps) witness.insert(step.branch);
  }
  r.indirect_capacity = std::min(routed, r.flow);
  r.witness.assign(witness.begin(), witness.end());
  if (r.indirect_capacity >= r.flow - kSaturationTolerance) return r;

  r.is_special = true;
  r.transfer_margin = r.indirect_capacity - r.flow;
  const auto side = detail::residual_reachable(topo, flows, sources, id);
  for (std::size_t b = 0; b < side.size(); ++b)
    if (side[b]) r.sending_side.push_back(static_cast<BusId>(b));
  for (std::size_t l = 0; l < topo.branch_count(); ++l) {
    if (!topo.in_service[l]) continue;
    if (side[static_cast<std::size_t>(topo.from[l])] != side[static_cast<std::size_t>(topo.to[l])])
      r.k_crit.push_back(static_cast<BranchId>(l));
  }
  return r;
}

FtResult brute_force_cutset_oracle(const Network& net, std::span<const double> inj, BranchId id) {
  const std::size_t n = net.bus_count();
  if (n > 20) throw Error("cut-set enumeration limited to 20 buses");
  const auto& tested = net.branch(id);
  if (!tested.in_service) throw Error("branch " + std::to_string(id) + " is out of service");

  std::vector<const Branch*> rest;
  for (const auto& br : net.branches())
    if (br.in_service && br.id != id) rest.push_back(&br);

  // Connectivity of the buses selected by `mask` using branches inside it.
  const auto connected = [&](std::uint32_t mask) {
    if (mask == 0) return false;
    std::uint32_t seen = mask & (~mask + 1);
    for (bool grew = true; grew;) {
      grew = false;
      for (const Branch* br : rest) {
        const std::uint32_t a = 1u << br->from, b = 1u << br->to;
        if (!(mask & a) || !(mask & b)) continue;
        if (((seen & a) != 0) != ((seen & b) != 0)) {
          seen |= a | b;
          grew = true;
        }
      }
    }
    return seen == mask;
  };

  FtResult r;
  r.branch = id;
  const std::uint32_t all = (1u << n) - 1;
  const std::uint32_t u = 1u << tested.from, v = 1u << tested.to;
  double worst = std::numeric_limits<double>::infinity();
  std::vector<BranchId> worst_cut;
  std::uint32_t worst_mask = 0;
  for (std::uint32_t mask = 0; mask <= all; ++mask) {
    if (!(mask & u) || (mask & v)) continue;
    if (!connected(mask) || !connected(all & ~mask)) continue;
    double transfer = 0.0, capacity = 0.0;
    for (std::size_t b = 0; b < n; ++b)
      if (mask & (1u << b)) transfer += inj[b];
    std::vector<BranchId> cut{id};
    for (const Branch* br : rest) {
      if (((mask >> br->from) & 1u) == ((mask >> br->to) & 1u)) continue;
      capacity += br->rating;
      cut.push_back(br->id);
    }
    std::sort(cut.begin(), cut.end());
    const double margin = capacity - std::abs(transfer);
    if (margin < worst || (margin == worst && cut < worst_cut)) {
      worst = margin;
      worst_cut = std::move(cut);
      worst_mask = transfer >= 0 ? mask : all & ~mask;
    }
  }
  if (worst < -kSaturationTolerance) {
    r.is_special = true;
    r.transfer_margin = worst;
    r.k_crit = std::move(worst_cut);
    for (std::size_t b = 0; b < n; ++b)
      if (worst_mask & (1u << b)) r.sending_side.push_back(static_cast<BusId>(b));
  }
  return r;
}

ScreeningState screen_all(const FlowState& fs, std::span<const BranchId> candidates) {
  ScreeningState out;
  for (BranchId id : candidates) {
    if (!fs.in_service(id)) continue;
    out.results.emplace(id, feasibility_test(fs, id));
  }
  return out;
}

ScreeningState screen_all(const FlowState& fs) {
  std::vector<BranchId> all;
  for (std::size_t l = 0; l < fs.branch_count(); ++l)
    if (fs.in_service(static_cast<BranchId>(l))) all.push_back(static_cast<BranchId>(l));
  return screen_all(fs, all);
}

namespace {

std::vector<BranchId> overlap_shortlist(const ScreeningState& prev, const std::set<BranchId>& moved) {
  std::set<BranchId> out(moved.begin(), moved.end());
  for (const auto& [id, r] : prev.results) {
    if (r.is_special) {
      out.insert(id);
      continue;
    }
    for (BranchId w : r.witness) {
      if (moved.contains(w)) {
        out.insert(id);
        break;
      }
    }
  }
  return {out.begin(), out.end()};
}

}  // namespace

std::vector<BranchId> shortlist_after_outage(const ScreeningState& prev, BranchId outaged,
                                             std::span<const BranchId> rerouted) {
  std::set<BranchId> moved(rerouted.begin(), rerouted.end());
  moved.insert(outaged);
  auto out = overlap_shortlist(prev, moved);
  std::erase(out, outaged);
  return out;
}

std::vector<BranchId> shortlist_after_redispatch(const ScreeningState& prev, std::span<const BranchId> touched) {
  return overlap_shortlist(prev, std::set<BranchId>(touched.begin(), touched.end()));
}

ScreeningState rescreen(const FlowState& fs, const ScreeningState& prev, std::span<const BranchId> shortlist) {
  ScreeningState out = screen_all(fs, shortlist);
  for (const auto& [id, r] : prev.results) {
    if (!fs.in_service(id) || out.results.contains(id)) continue;
    out.results.emplace(id, r);
  }
  return out;
}

}  // namespace gridcut
