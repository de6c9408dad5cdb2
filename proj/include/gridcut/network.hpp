#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gridcut {

using BusId = int;
using BranchId = int;

/// Numerical floor used for power-balance checks (MW).
inline constexpr double kBalanceTolerance = 1e-6;

/// Default load-shed cost when the case does not provide one ($/MW).
inline constexpr double kDefaultShedCost = 10'000.0;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Case text could not be read. Carries the offending line (1-based, 0 if
/// unknown) and field name.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, std::string field, const std::string& what);

  std::size_t line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

/// Case data is well-formed but violates a modelling rule.
class ValidationError : public Error {
 public:
  using Error::Error;
};

enum class BusKind { Transit, Generator, Load, Both };

struct Bus {
  BusId id = 0;
  std::string name;  // label from the source file
  BusKind kind = BusKind::Transit;
};

struct Branch {
  BranchId id = 0;
  std::string name;
  BusId from = 0;
  BusId to = 0;
  double susceptance = 0.0;  // per-unit on the network MVA base
  double rating = 0.0;       // MW, symmetric
  bool in_service = true;

  double max_flow() const noexcept { return rating; }
  double min_flow() const noexcept { return -rating; }
  BusId other_end(BusId bus) const noexcept { return bus == from ? to : from; }
};

struct Generator {
  BusId bus = 0;
  double output = 0.0;  // MW
  double p_min = 0.0;
  double p_max = 0.0;
  double cost_a = 0.0;  // $
  double cost_b = 0.0;  // $/MW
  double cost_c = 0.0;  // $/MW^2

  double cost(double p) const noexcept { return cost_a + cost_b * p + cost_c * p * p; }
  double marginal_cost(double p) const noexcept { return cost_b + 2.0 * cost_c * p; }
};

struct Load {
  BusId bus = 0;
  double demand = 0.0;  // MW
  double d_min = 0.0;
  double d_max = 0.0;
  double shed_cost = kDefaultShedCost;  // $/MW
};

/// Immutable network snapshot. Every "mutation" returns a new snapshot.
class Network {
 public:
  Network() = default;
  Network(double mva_base, std::vector<Bus> buses, std::vector<Branch> branches,
          std::vector<Generator> generators, std::vector<Load> loads,
          std::optional<BusId> reference_bus = std::nullopt);

  double mva_base() const noexcept { return mva_base_; }
  const std::vector<Bus>& buses() const noexcept { return buses_; }
  const std::vector<Branch>& branches() const noexcept { return branches_; }
  const std::vector<Generator>& generators() const noexcept { return generators_; }
  const std::vector<Load>& loads() const noexcept { return loads_; }
  const Bus& bus(BusId id) const { return buses_.at(static_cast<std::size_t>(id)); }
  const Branch& branch(BranchId id) const { return branches_.at(static_cast<std::size_t>(id)); }

  std::size_t bus_count() const noexcept { return buses_.size(); }
  std::size_t branch_count() const noexcept { return branches_.size(); }

  BusId reference_bus() const noexcept { return reference_bus_; }
  /// True when the reference bus was given explicitly rather than derived.
  bool reference_overridden() const noexcept { return reference_overridden_; }

  /// Factor applied to generator outputs at ingestion to close the base
  /// imbalance (1.0 when none was needed).
  double generation_scale() const noexcept { return generation_scale_; }

  std::vector<BranchId> in_service_branches() const;
  std::size_t in_service_count() const;

  /// Net injection per bus (generation minus demand), MW.
  std::vector<double> injections() const;
  double total_generation() const;
  double total_demand() const;
  double generation_cost() const;

  std::optional<BranchId> find_branch(std::string_view name) const;
  std::optional<BusId> find_bus(std::string_view name) const;
  /// Accepts a branch name, or a numeric branch id.
  BranchId resolve_branch(std::string_view name_or_id) const;

  /// Snapshot with one more branch out of service.
  Network with_outage(BranchId id) const;
  /// Snapshot with new generator outputs and load demands (same order as
  /// generators()/loads()).
  Network with_dispatch(std::span<const double> gen_output, std::span<const double> demand) const;
  Network with_reference_bus(BusId bus) const;
  Network with_generation_scale(double scale) const;

 private:
  void derive_kinds();

  double mva_base_ = 100.0;
  std::vector<Bus> buses_;
  std::vector<Branch> branches_;
  std::vector<Generator> generators_;
  std::vector<Load> loads_;
  BusId reference_bus_ = 0;
  bool reference_overridden_ = false;
  double generation_scale_ = 1.0;
};

/// Returns a new snapshot with `id` out of service. Throws on unknown or
/// already-outaged branches.
Network apply_outage(const Network& net, BranchId id);

struct ValidationReport {
  bool ok = true;
  std::size_t components = 0;
  std::vector<std::vector<BusId>> islands;  // only filled when components > 1
  double total_generation = 0.0;
  double total_demand = 0.0;
  double imbalance = 0.0;         // generation minus demand, MW
  double generation_scale = 1.0;  // ingestion balancing factor
  std::vector<std::string> findings;
  std::vector<std::string> warnings;
};

ValidationReport validate(const Network& net);

/// Connected components of the in-service graph; component index per bus.
std::vector<int> connected_components(const Network& net, int* count = nullptr);

/// Builds a network from raw case records: remaps nothing (ids must already be
/// contiguous), applies load defaults, checks the shed-cost floor and closes
/// any base imbalance by scaling generator outputs.
Network ingest(double mva_base, std::vector<Bus> buses, std::vector<Branch> branches,
               std::vector<Generator> generators, std::vector<Load> loads,
               std::optional<BusId> reference_bus = std::nullopt);

std::string_view to_string(BusKind kind);

}  // namespace gridcut
