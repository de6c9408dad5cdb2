#include "gridcut/rtca.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gridcut {

std::vector<BranchId> ViolationList::outages() const {
  std::vector<BranchId> out;
  for (const auto& c : contingencies) out.push_back(c.outage);
  return out;
}

std::vector<RankedContingency> rank_contingencies(const Network& net, std::span<const double> flows,
                                                  const LodfMatrix& lodf, double overload_factor) {
  std::vector<RankedContingency> ranked;
  for (const auto& k : net.branches()) {
    if (!k.in_service) continue;
    RankedContingency rc{k.id, 0.0, lodf.is_islanding(k.id)};
    if (rc.islanding) {
      rc.severity = std::numeric_limits<double>::infinity();
    } else {
      const double fk = flows[static_cast<std::size_t>(k.id)];
      for (const auto& l : net.branches()) {
        if (!l.in_service || l.id == k.id) continue;
        const double fc = flows[static_cast<std::size_t>(l.id)] + lodf(l.id, k.id) * fk;
        const double excess = std::abs(fc) / (overload_factor * l.rating) - 1.0;
        if (excess > 0.0) rc.severity += excess * excess;
      }
    }
    ranked.push_back(rc);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.severity > b.severity; });
  return ranked;
}

std::vector<RankedContingency> select_top_fraction(const std::vector<RankedContingency>& ranked, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw Error("top fraction must lie in (0, 1]");
  // Guard against 0.3 * 10 = 3.0000000000000004 rounding up to 4.
  const auto count = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(ranked.size()) - 1e-9));
  return {ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(std::min(count, ranked.size()))};
}

ViolationList screen_post_contingency(const Network& net, std::span<const double> flows, const LodfMatrix& lodf,
                                      std::span<const BranchId> outages, double overload_factor) {
  ViolationList out;
  std::vector<BranchId> sorted(outages.begin(), outages.end());
  std::sort(sorted.begin(), sorted.end());
  for (BranchId k : sorted) {
    if (!net.branch(k).in_service) continue;
    if (lodf.is_islanding(k)) {
      out.islanding.push_back(k);
      continue;
    }
    const auto post = post_contingency_flows(flows, lodf, k);
    CriticalContingency cc{k, {}};
    for (const auto& l : net.branches()) {
      if (!l.in_service || l.id == k) continue;
      const double fc = post[static_cast<std::size_t>(l.id)];
      if (std::abs(fc) > overload_factor * l.rating) cc.violations.push_back({l.id, fc, l.rating});
    }
    if (!cc.violations.empty()) out.contingencies.push_back(std::move(cc));
  }
  return out;
}

ViolationList run_rtca(const Network& net, std::span<const double> flows, const LodfMatrix& lodf, double fraction,
                       double overload_factor) {
  const auto top = select_top_fraction(rank_contingencies(net, flows, lodf, overload_factor), fraction);
  std::vector<BranchId> outages;
  for (const auto& rc : top) outages.push_back(rc.branch);
  return screen_post_contingency(net, flows, lodf, outages, overload_factor);
}

}  // namespace gridcut
