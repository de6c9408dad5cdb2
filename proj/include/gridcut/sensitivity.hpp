#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "gridcut/network.hpp"

namespace gridcut {

/// Per-branch MW flows indexed by branch id; out-of-service branches read 0.
using BranchFlows = std::vector<double>;
/// Per-bus net injection (generation minus demand), MW.
using InjectionVector = std::vector<double>;

class IslandedNetworkError : public Error {
 public:
  using Error::Error;
};

class SingularSystemError : public Error {
 public:
  using Error::Error;
};

struct PtdfMatrix {
  Eigen::MatrixXd values;  // branch x bus
  BusId reference_bus = 0;
  double sparsify_threshold = 0.0;  // 0 when no entries were rounded off

  double operator()(BranchId l, BusId i) const { return values(l, i); }
  /// Flow change on `l` for a transfer injected at `from` and withdrawn at `to`.
  double transfer(BranchId l, BusId from, BusId to) const { return values(l, from) - values(l, to); }
};

struct LodfMatrix {
  Eigen::MatrixXd values;                  // monitored branch x outaged branch
  std::vector<BranchId> undefined_outages;  // outages that island the network
  std::vector<bool> islanding;              // per branch id

  double operator()(BranchId l, BranchId k) const { return values(l, k); }
  bool is_islanding(BranchId k) const { return islanding[static_cast<std::size_t>(k)]; }
};

/// DC power flow on a connected in-service network. Injections must balance.
BranchFlows dc_power_flow(const Network& net, std::span<const double> inj);

/// DC power flow island by island; each island must balance on its own. The
/// island slack is its lowest-id generator bus, else its lowest-id bus.
BranchFlows dc_power_flow_islands(const Network& net, std::span<const double> inj);

/// Largest |injection - net outgoing flow| over all buses, MW.
double nodal_balance_residual(const Network& net, std::span<const double> flows, std::span<const double> inj);

PtdfMatrix compute_ptdf(const Network& net);

/// Rounds entries with magnitude below `threshold` to zero.
PtdfMatrix sparsify(PtdfMatrix ptdf, double threshold = 0.02);

LodfMatrix compute_lodf(const Network& net, const PtdfMatrix& ptdf);

/// Post-contingency flows for the outage of `k`; the flow on `k` reads 0.
BranchFlows post_contingency_flows(std::span<const double> flows, const LodfMatrix& lodf, BranchId k);

/// Bridges of the in-service graph (parallel circuits are never bridges).
std::vector<bool> find_bridges(const Network& net);

/// Flow change per branch for a per-bus injection change (any balance is
/// absorbed at the reference bus).
BranchFlows flow_change(const PtdfMatrix& ptdf, std::span<const double> delta_inj);

}  // namespace gridcut
