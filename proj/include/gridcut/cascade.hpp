#pragma once

#include <span>
#include <vector>

#include "gridcut/network.hpp"
#include "gridcut/sensitivity.hpp"

namespace gridcut {

struct CascadeRound {
  std::vector<BranchId> tripped;    // round 1 holds the initiating outage
  int islands = 1;                  // connected components after the trips
  std::vector<double> island_shed;  // MW shed while rebalancing, per island
};

/// What makes a contingency count as triggering.
enum class TriggerRule {
  AnyEffect,       // unserved demand or any dependent trip
  UnservedDemand,  // the cascade ends with unserved demand
};

struct CascadeResult {
  BranchId initiating = 0;
  std::vector<CascadeRound> rounds;
  int dependent_trips = 0;
  double final_unserved = 0.0;  // MW
  bool is_trigger = false;      // unserved demand or any dependent trip

  bool triggers(TriggerRule rule) const {
    return rule == TriggerRule::AnyEffect ? is_trigger : final_unserved > 1e-3;
  }
};

/// Quasi-static DC cascade: trip, rebalance every island, re-solve, trip
/// every overloaded branch at once; repeat until nothing trips.
///
/// Island rebalance: generators move proportionally to their output (or to
/// p_max when the island has no output) within [p_min, p_max]. Short of
/// capacity, load is shed pro rata. Above demand at p_min, generators trip in
/// ascending order until the rest can follow.
CascadeResult simulate_cascade(const Network& net, BranchId initiating);

/// Triggering subset of `contingencies`, in input order. Outages that
/// neither island nor overload anything per `lodf` are settled without a
/// simulation. Runs on up to `threads` workers (0 = hardware concurrency).
std::vector<BranchId> find_cascade_triggers(const Network& net, std::span<const BranchId> contingencies,
                                            const LodfMatrix* lodf = nullptr, unsigned threads = 0,
                                            TriggerRule rule = TriggerRule::AnyEffect);

/// Results for every contingency, in input order.
std::vector<CascadeResult> simulate_cascades(const Network& net, std::span<const BranchId> contingencies,
                                             unsigned threads = 0);

}  // namespace gridcut
