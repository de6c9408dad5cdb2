#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "gridcut/network.hpp"
#include "gridcut/sensitivity.hpp"

namespace gridcut {

/// Residual capacity below which a direction counts as saturated (MW).
inline constexpr double kResidualFloor = 1e-9;
/// Tolerance on flow-state invariants (MW).
inline constexpr double kFlowTolerance = 1e-6;

/// Topology and ratings shared by flow states of one network snapshot.
struct FlowTopology {
  std::size_t bus_count = 0;
  std::vector<BusId> from, to;
  std::vector<double> rating;
  std::vector<bool> in_service;
  /// In-service neighbours per bus, ordered by (neighbour bus, branch id).
  std::vector<std::vector<std::pair<BusId, BranchId>>> adjacency;

  static std::shared_ptr<const FlowTopology> from_network(const Network& net);
  std::shared_ptr<const FlowTopology> without(BranchId id) const;
  std::size_t branch_count() const noexcept { return from.size(); }
};

/// A flow solution on the network graph together with its latent capacities:
/// c_FT = rating - f, c_TF = rating + f. Value type; operations return new
/// states.
class FlowState {
 public:
  FlowState(std::shared_ptr<const FlowTopology> topology, std::vector<double> flows, std::vector<double> injections);

  const FlowTopology& topology() const noexcept { return *topology_; }
  const std::shared_ptr<const FlowTopology>& topology_ptr() const noexcept { return topology_; }
  const std::vector<double>& flows() const noexcept { return flows_; }
  const std::vector<double>& injections() const noexcept { return injections_; }
  double flow(BranchId l) const { return flows_[static_cast<std::size_t>(l)]; }
  double latent_ft(BranchId l) const { return topology_->rating[static_cast<std::size_t>(l)] - flow(l); }
  double latent_tf(BranchId l) const { return topology_->rating[static_cast<std::size_t>(l)] + flow(l); }
  bool in_service(BranchId l) const { return topology_->in_service[static_cast<std::size_t>(l)]; }
  std::size_t bus_count() const noexcept { return topology_->bus_count; }
  std::size_t branch_count() const noexcept { return flows_.size(); }

  /// Worst rating excess, max(|f| - rating), over in-service branches.
  double worst_rating_excess() const;
  /// Worst nodal imbalance between injections and net outgoing flow.
  double worst_nodal_residual() const;

  bool operator==(const FlowState& other) const {
    return flows_ == other.flows_ && injections_ == other.injections_;
  }

 private:
  std::shared_ptr<const FlowTopology> topology_;
  std::vector<double> flows_;
  std::vector<double> injections_;
};

struct PathStep {
  BranchId branch = 0;
  bool forward = true;  // traversed from the branch's from-bus to its to-bus
};

struct AugmentingPath {
  std::vector<PathStep> steps;
  std::vector<BusId> buses;  // buses visited, source first
  double bottleneck = 0.0;
};

/// A cut whose required transfer exceeds its rating sum.
struct SaturatedCut {
  std::vector<BusId> sending_side;
  std::vector<BranchId> branches;
  double transfer = 0.0;  // F_K, MW from the sending side
  double capacity = 0.0;  // R_K, MW
};

class InfeasibleFlowError : public Error {
 public:
  InfeasibleFlowError(const std::string& what, SaturatedCut cut) : Error(what), cut_(std::move(cut)) {}
  const SaturatedCut& cut() const noexcept { return cut_; }

 private:
  SaturatedCut cut_;
};

/// Feasible flow that routes every source to every sink within ratings, built
/// with shortest augmenting paths from a virtual super-source. Throws
/// InfeasibleFlowError with the saturated cut when demand cannot be routed.
FlowState build_flow_state(const Network& net, std::span<const double> inj);

struct CutTransfer {
  double transfer = 0.0;  // F_K, signed flow from side A to side B
  double capacity = 0.0;  // R_K
  std::vector<BranchId> branches;
  bool saturated() const noexcept { return transfer > capacity; }
};

/// `side_a[b]` is true for buses on side A.
CutTransfer cut_transfer(const FlowState& fs, const std::vector<bool>& side_a);

std::optional<AugmentingPath> shortest_unsaturated_path(const FlowState& fs, BusId src, BusId dst);

struct OutageUpdate {
  FlowState state;
  std::vector<BranchId> touched;  // branches whose flow changed, sorted
};

/// Removes a branch and reroutes its flow along successive shortest
/// unsaturated paths. Throws InfeasibleFlowError when the flow cannot be
/// rerouted.
OutageUpdate update_after_outage(const FlowState& fs, BranchId id);

/// Balanced change of bus injections: increases and decreases, MW > 0.
struct InjectionDelta {
  std::vector<std::pair<BusId, double>> increases;
  std::vector<std::pair<BusId, double>> decreases;

  bool empty() const noexcept { return increases.empty() && decreases.empty(); }
  /// Builds the delta from a per-bus change vector, dropping |x| <= floor.
  static InjectionDelta from_changes(std::span<const double> per_bus, double floor = kResidualFloor);
};

struct RedispatchUpdate {
  FlowState state;
  std::vector<BranchId> touched;  // union of all path branches, sorted
};

/// Absorbs an injection change by pushing flow from increased to decreased
/// buses along shortest unsaturated paths.
RedispatchUpdate update_after_redispatch(const FlowState& fs, const InjectionDelta& delta);

/// Edge list of the flow and latent-capacity graphs:
/// branch,name,from,to,flow,rating,c_ft,c_tf.
void write_edge_list_csv(std::ostream& out, const Network& net, const FlowState& fs);

namespace detail {

double residual(const FlowTopology& topo, std::span<const double> flows, BranchId l, bool forward);

/// Breadth-first search over unsaturated directions from `sources` (seeded
/// in the given order), skipping `excluded` (may be -1). Returns the path to
/// the first discovered bus with `is_target` set; the bottleneck covers the
/// branch residuals only.
std::optional<AugmentingPath> bfs_path(const FlowTopology& topo, std::span<const double> flows,
                                       std::span<const BusId> sources, const std::vector<bool>& is_target,
                                       BranchId excluded);

/// Buses reachable from `sources` over unsaturated directions.
std::vector<bool> residual_reachable(const FlowTopology& topo, std::span<const double> flows,
                                     std::span<const BusId> sources, BranchId excluded);

void push(std::vector<double>& flows, const AugmentingPath& path, double amount);

}  // namespace detail

}  // namespace gridcut
