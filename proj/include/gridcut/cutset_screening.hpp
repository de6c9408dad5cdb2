#pragma once

#include <map>
#include <optional>
#include <span>
#include <vector>

#include "gridcut/flow_graph.hpp"
#include "gridcut/network.hpp"

namespace gridcut {

/// Saturation tolerance: a branch is special iff indirect capacity < |f| - this.
inline constexpr double kSaturationTolerance = 1e-6;

struct FtResult {
  BranchId branch = 0;
  bool is_special = false;
  double flow = 0.0;               // |f_l| at test time, MW
  double indirect_capacity = 0.0;  // reroutable flow; capped at |f_l| when not special
  std::optional<double> transfer_margin;  // T_m, present iff special
  std::vector<BranchId> k_crit;           // limiting cut incl. the tested branch, iff special
  std::vector<BusId> sending_side;        // side of k_crit holding the flow's sending end
  std::vector<BranchId> witness;          // branches carrying the reroute flow

  bool operator==(const FtResult&) const = default;
};

/// Special assets keyed by branch id.
using SpecialAssetSet = std::map<BranchId, FtResult>;

/// FT verdicts for every screened in-service branch.
struct ScreeningState {
  std::map<BranchId, FtResult> results;

  SpecialAssetSet special() const;
};

/// Max-flow from the flow's sending end to its receiving end over latent
/// capacities, with the tested branch removed.
FtResult feasibility_test(const FlowState& fs, BranchId id);

/// Exhaustive bipartition check for small networks (<= 20 buses). Uses only
/// injections: a cut's post-outage transfer is fixed by the buses it encloses.
FtResult brute_force_cutset_oracle(const Network& net, std::span<const double> inj, BranchId id);

/// Runs FT over `candidates` (in-service ones only).
ScreeningState screen_all(const FlowState& fs, std::span<const BranchId> candidates);
/// Runs FT over every in-service branch.
ScreeningState screen_all(const FlowState& fs);

/// Branches whose verdict may have changed after the outage of `outaged`,
/// whose flow was rerouted over `rerouted` (from UPS).
std::vector<BranchId> shortlist_after_outage(const ScreeningState& prev, BranchId outaged,
                                             std::span<const BranchId> rerouted);

/// Branches whose verdict may have changed after a redispatch that moved flow
/// on `touched` (from M-UPS).
std::vector<BranchId> shortlist_after_redispatch(const ScreeningState& prev, std::span<const BranchId> touched);

/// Re-screens `shortlist` on `fs` and carries the other verdicts over; entries
/// for branches no longer in service are dropped.
ScreeningState rescreen(const FlowState& fs, const ScreeningState& prev, std::span<const BranchId> shortlist);

}  // namespace gridcut
