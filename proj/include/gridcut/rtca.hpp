#pragma once

#include <span>
#include <vector>

#include "gridcut/network.hpp"
#include "gridcut/sensitivity.hpp"

namespace gridcut {

struct RankedContingency {
  BranchId branch = 0;
  double severity = 0.0;  // sum over monitored branches of max(0, |f_c|/rating - 1)^2
  bool islanding = false; // LODF undefined; ranked first, never screened
};

struct Violation {
  BranchId monitored = 0;
  double post_flow = 0.0;  // MW
  double rating = 0.0;     // MW
};

struct CriticalContingency {
  BranchId outage = 0;
  std::vector<Violation> violations;
};

/// E_v with its violations, ordered by outage branch id.
struct ViolationList {
  std::vector<CriticalContingency> contingencies;
  std::vector<BranchId> islanding;  // requested outages skipped because they island

  std::vector<BranchId> outages() const;
  std::size_t size() const noexcept { return contingencies.size(); }
  bool empty() const noexcept { return contingencies.empty(); }
};

/// Ranks every in-service branch outage, most severe first; ties by branch id.
std::vector<RankedContingency> rank_contingencies(const Network& net, std::span<const double> flows,
                                                  const LodfMatrix& lodf, double overload_factor = 1.0);

/// The ceil(fraction * N) most severe entries.
std::vector<RankedContingency> select_top_fraction(const std::vector<RankedContingency>& ranked, double fraction = 0.30);

/// Post-contingency overload screening of `outages` with LODF flows.
ViolationList screen_post_contingency(const Network& net, std::span<const double> flows, const LodfMatrix& lodf,
                                      std::span<const BranchId> outages, double overload_factor = 1.0);

/// Ranking, top-fraction selection and screening in one pass.
ViolationList run_rtca(const Network& net, std::span<const double> flows, const LodfMatrix& lodf,
                       double fraction = 0.30, double overload_factor = 1.0);

}  // namespace gridcut
